"""Command line interface.

Subcommands: synth, train, segment, eval, retarget, retrieve,
retrieve-eval, diff-reports. Every run writes its resolved
configuration, seed, tool version and wall time into the output
directory. Options may come from an INI config file (section named
after the subcommand); command-line flags win.

Exit codes: 0 success, 1 contract violation, 2 I/O failure,
3 evaluation completed with missing pairs.

Set FGSEG_THREADS to cap BLAS threading (read before numpy loads).
"""

import argparse
import configparser
import os
import sys
import time

from . import __version__


def _setup_threads():
    n = os.environ.get("FGSEG_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _load_config(argv):
    """Pre-scan for --config and return {section: {key: value}}."""
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    with open(path) as f:
        parser.read_file(f)
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _build_parser(file_cfg, registry):
    p = argparse.ArgumentParser(prog="fgseg", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"fgseg {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        sp.add_argument("--config", help="INI config file; flags override it")
        sp.add_argument("--seed", type=int, help="master seed (default 0)")
        defaults = {k.replace("-", "_"): v for k, v in file_cfg.get(name, {}).items()}
        sp.set_defaults(**defaults)
        registry[name] = sp
        return sp

    sp = add("synth", help="generate a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int)
    sp.add_argument("--size", type=int)
    sp.add_argument("--separation", type=float)
    sp.add_argument("--min-shapes", type=int)
    sp.add_argument("--max-shapes", type=int)
    sp.add_argument("--families", help="comma list: rectangle,ellipse,triangle,ring")
    sp.add_argument("--backgrounds", help="comma list: flat,gradient,noise,stripes")
    sp.add_argument("--classes", type=int,
                    help="emit a class-labeled benchmark with this many classes")
    sp.add_argument("--per-class", type=int)

    sp = add("train", help="train a network on a dataset directory")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--preset", choices=("toy", "paper"))
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--base-lr", type=float)
    sp.add_argument("--lr-decay-factor", type=float)
    sp.add_argument("--lr-decay-every", type=int)
    sp.add_argument("--crop-size", type=int)
    sp.add_argument("--loss-reduction", choices=("mean", "sum"))
    sp.add_argument("--resume", help="weight archive to continue from")

    sp = add("segment", help="segment one image")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--image", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--prob", action="store_true", help="also write the probability map")
    sp.add_argument("--activation", action="store_true", help="also write the heatmap")
    sp.add_argument("--gt", help="ground-truth mask; reports IoU on stdout")

    sp = add("eval", help="evaluate predicted masks against ground truth")
    sp.add_argument("--pred", required=True, help="directory of predicted masks")
    sp.add_argument("--gt", required=True, help="directory of ground-truth masks")
    sp.add_argument("--mode", required=True, choices=("seg", "corloc", "separability"))
    sp.add_argument("--out", required=True)
    sp.add_argument("--gt-boxes", help="corloc: box manifest (id x0 y0 x1 y1 per line)")
    sp.add_argument("--images", help="separability: directory of source images")
    sp.add_argument("--baseline", action="append", default=None,
                    help="separability: NAME=DIR of baseline masks (repeatable)")
    sp.add_argument("--bucket-width", type=float)

    sp = add("retarget", help="content-aware retargeting of one image")
    sp.add_argument("--image", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--weights", help="segment first, then carve")
    sp.add_argument("--mask", help="use this foreground mask instead of a network")
    sp.add_argument("--fraction", help="scale both dims, e.g. 2/3 or 0.66")
    sp.add_argument("--width", type=int)
    sp.add_argument("--height", type=int)
    sp.add_argument("--baseline", action="store_true", help="plain gradient energy, no boost")
    sp.add_argument("--side-by-side", action="store_true",
                    help="also write an original|carved comparison image")

    sp = add("retrieve", help="rank a dataset's images against a query image")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--index", required=True, help="index directory (built if missing)")
    sp.add_argument("--query", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("-k", type=int, default=5)
    sp.add_argument("--mode", choices=("FULL", "FG", "FF"))

    sp = add("retrieve-eval", help="mAP over a class-labeled dataset")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", choices=("FULL", "FG", "FF"))

    sp = add("diff-reports", help="per-group score gains between two reports")
    sp.add_argument("report_a")
    sp.add_argument("report_b")
    sp.add_argument("--out", required=True)
    return p


def _write_run_info(out_dir, args, started, seed):
    os.makedirs(out_dir, exist_ok=True)
    resolved = {k: v for k, v in sorted(vars(args).items())
                if k not in ("command", "config") and v is not None}
    cp = configparser.ConfigParser()
    cp[args.command] = {k: str(v) for k, v in resolved.items()}
    with open(os.path.join(out_dir, "config-resolved.ini"), "w") as f:
        cp.write(f)
    with open(os.path.join(out_dir, "run.txt"), "w") as f:
        f.write(f"command {args.command}\n")
        f.write(f"seed {seed}\n")
        f.write(f"version {__version__}\n")
        f.write(f"wall_time_sec {time.monotonic() - started:.3f}\n")


def _parse_fraction(text):
    # exact rational arithmetic: floor(2/3 * 99) must be 66, which float
    # parsing misses by one ulp
    from fractions import Fraction
    return Fraction(text)


def cmd_synth(args):
    from . import data

    seed = args.seed or 0
    if args.classes:
        samples, classes = data.generate_class_dataset(
            num_classes=args.classes, per_class=args.per_class or 20,
            size=args.size or 64, seed=seed)
    else:
        spec = data.SyntheticSpec(
            size=args.size or 64,
            min_shapes=args.min_shapes or 1,
            max_shapes=args.max_shapes or 3,
            families=tuple((args.families or ",".join(data.SHAPE_FAMILIES)).split(",")),
            backgrounds=tuple((args.backgrounds
                               or ",".join(data.BACKGROUND_FAMILIES)).split(",")),
            separation=1.0 if args.separation is None else args.separation,
            count=200 if args.count is None else args.count,
            seed=seed)
        samples, classes = data.generate_synthetic_dataset(spec), None
    data.save_dataset(samples, args.out, classes=classes)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_train(args):
    from . import data, weights
    from .net import build_network, preset_config
    from .train import TrainConfig, format_loss_line, train

    seed = args.seed or 0
    samples, _ = data.load_dataset(args.dataset)
    preset = args.preset or "toy"
    cfg = TrainConfig(
        batch_size=args.batch_size or 10,
        base_lr=args.base_lr or 0.001,
        lr_decay_factor=args.lr_decay_factor or 0.1,
        lr_decay_every=args.lr_decay_every or 2000,
        total_iterations=args.iterations or 10000,
        crop_size=args.crop_size or (65 if preset == "toy" else 321),
        loss_reduction=args.loss_reduction or "mean",
        seed=seed)

    start_iter = 0
    if args.resume:
        net, meta = weights.load_weights(args.resume, preset=preset)
        start_iter = int(meta.get("iteration", 0))
    else:
        net = build_network(preset_config(preset), seed=seed)

    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "loss.txt")
    with open(log_path, "a" if args.resume else "w") as logf:
        def stream(entry):
            logf.write(format_loss_line(entry) + "\n")
        train(net, samples, cfg, start_iteration=start_iter, on_iteration=stream)
    weights.save_weights(net, os.path.join(args.out, "weights"),
                         meta={"iteration": cfg.total_iterations, "seed": seed},
                         include_velocity=True)
    print(f"trained {preset} for {cfg.total_iterations - start_iter} iterations; "
          f"archive at {os.path.join(args.out, 'weights')}")
    return 0


def _load_net(path):
    from . import weights
    net, _ = weights.load_weights(path)
    return net


def cmd_segment(args):
    from . import data, imgio, metrics, postprocess
    from .net import activation_map, predict_objectness

    net = _load_net(args.weights)
    img01 = imgio.read_rgb(args.image)
    image = data.normalize_image(img01)
    probs = predict_objectness(net, image)
    mask = postprocess.threshold_map(probs)
    os.makedirs(args.out, exist_ok=True)
    imgio.write_binary_mask(os.path.join(args.out, "mask.png"), mask)
    if args.prob:
        imgio.write_gray(os.path.join(args.out, "prob.png"),
                         (probs * 255).round().astype("uint8"))
    if args.activation:
        heat = activation_map(net, image)
        imgio.write_gray(os.path.join(args.out, "activation.png"),
                         (heat * 255).round().astype("uint8"))
    if args.gt:
        gt = imgio.read_binary_mask(args.gt)
        print(f"jaccard {metrics.jaccard(mask, gt):.4f}")
    return 0


def _mask_stems(d):
    return {os.path.splitext(f)[0]: os.path.join(d, f)
            for f in sorted(os.listdir(d)) if f.endswith(".png")}


def _gt_box_manifest(path):
    from .postprocess import BBox
    boxes = {}
    with open(path) as f:
        for ln in f:
            parts = ln.split()
            if not parts:
                continue
            name, coords = parts[0], [int(x) for x in parts[1:5]]
            boxes.setdefault(name, []).append(BBox(*coords))
    return boxes


def cmd_eval(args):
    from . import imgio, metrics, postprocess
    from .errors import IncompleteEvalError

    pred = _mask_stems(args.pred)
    gt = _mask_stems(args.gt)
    names = sorted(set(pred) | set(gt))
    missing = [n for n in names if n not in pred or n not in gt]
    for n in missing:
        print(f"missing pair: {n}", file=sys.stderr)
    common = [n for n in names if n in pred and n in gt]

    if args.mode == "seg":
        rep = metrics.EvalReport("jaccard")
        for n in common:
            rep.add(n, metrics.jaccard(imgio.read_binary_mask(pred[n]),
                                       imgio.read_binary_mask(gt[n])))
    elif args.mode == "corloc":
        gt_boxes = _gt_box_manifest(args.gt_boxes) if args.gt_boxes else None
        rep = metrics.EvalReport("corloc")
        for n in common:
            pbox = postprocess.tight_bbox(imgio.read_binary_mask(pred[n]))
            if gt_boxes is not None:
                gboxes = gt_boxes.get(n, [])
            else:
                labels, areas = postprocess.connected_components(
                    imgio.read_binary_mask(gt[n]))
                gboxes = [postprocess.tight_bbox(labels == k + 1)
                          for k in range(len(areas))]
            hit = pbox is not None and gboxes and metrics.corloc(pbox, gboxes)
            rep.add(n, 1.0 if hit else 0.0)
    else:
        rep = _separability_eval(args, common, pred, gt)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.txt"), "w") as f:
        f.write(rep.to_text())
    print(f"{rep.metric} aggregate {rep.aggregate:.4f} over {len(rep.entries)} entries")
    if missing:
        raise IncompleteEvalError(missing)
    return 0


def _separability_eval(args, common, pred, gt):
    from . import data, imgio, metrics

    if not args.images:
        raise ValueError("separability mode needs --images")
    baselines = {}
    for spec_item in args.baseline or []:
        name, d = spec_item.split("=", 1)
        baselines[name] = _mask_stems(d)

    seps, ours, base_scores = [], [], {n: [] for n in baselines}
    rep = metrics.EvalReport("separability")
    width = args.bucket_width or 0.1
    usable = []
    for n in common:
        img = imgio.read_rgb(os.path.join(args.images, n + ".png"))
        gmask = imgio.read_binary_mask(gt[n])
        if not gmask.any() or gmask.all():
            continue
        usable.append(n)
        s = metrics.separability(img, gmask)
        seps.append(s)
        ours.append(metrics.jaccard(imgio.read_binary_mask(pred[n]), gmask))
        for bname, stems in baselines.items():
            base_scores[bname].append(
                metrics.jaccard(imgio.read_binary_mask(stems[n]), gmask))
        bucket = min(int(s / width), int(1.0 / width) - 1)
        rep.add(n, s, f"b{bucket * width:.1f}")
    if baselines:
        rows = metrics.separability_report(seps, ours, base_scores, width)
        for r in rows:
            rep.add(f"bucket[{r.lo:.1f},{r.hi:.1f})", r.min_gain,
                    f"maxgain={r.max_gain:.4f};n={r.count}")
    return rep


def cmd_retarget(args):
    from . import data, imgio, postprocess
    from .errors import ContractError
    from .net import predict_objectness
    from .retarget import retarget

    img01 = imgio.read_rgb(args.image)
    h, w = img01.shape[1], img01.shape[2]
    if args.fraction:
        f = _parse_fraction(args.fraction)
        if not 0 < f <= 1:
            raise ContractError(f"fraction must be in (0, 1], got {args.fraction}")
        tw, th = int(w * f), int(h * f)
    elif args.width or args.height:
        tw, th = args.width or w, args.height or h
    else:
        raise ContractError("need --fraction or --width/--height")

    mask = None
    if args.mask:
        mask = imgio.read_binary_mask(args.mask)
    elif args.weights and not args.baseline:
        net = _load_net(args.weights)
        probs = predict_objectness(net, data.normalize_image(img01))
        mask = postprocess.largest_foreground(postprocess.threshold_map(probs))

    carved = retarget(img01, mask, tw, th, boost=not args.baseline)
    os.makedirs(args.out, exist_ok=True)
    imgio.write_rgb(os.path.join(args.out, "carved.png"), carved)
    if args.side_by_side:
        import numpy as np
        canvas = np.zeros((3, max(h, carved.shape[1]), w + 1 + carved.shape[2]),
                          dtype=img01.dtype)
        canvas[:, :h, :w] = img01
        canvas[:, : carved.shape[1], w + 1 :] = carved
        imgio.write_rgb(os.path.join(args.out, "comparison.png"), canvas)
    print(f"carved {w}x{h} -> {carved.shape[2]}x{carved.shape[1]}")
    return 0


def _index_for(args, net, mode):
    from . import data, retrieval

    manifest = os.path.join(args.index, "manifest.txt")
    if os.path.exists(manifest):
        idx = retrieval.load_index(args.index)
        if idx.mode != mode:
            from .errors import ContractError
            raise ContractError(f"index mode {idx.mode} does not match requested {mode}")
        return idx
    samples, classes = data.load_dataset(args.dataset)
    idx = retrieval.build_index(net, samples, classes or ["-"] * len(samples), mode)
    retrieval.save_index(idx, args.index)
    return idx


def cmd_retrieve(args):
    from . import data, imgio, retrieval

    mode = args.mode or "FG"
    net = _load_net(args.weights)
    idx = _index_for(args, net, mode)
    query01 = imgio.read_rgb(args.query)
    qvec, _ = retrieval.represent(net, data.normalize_image(query01), mode)
    ranked = retrieval.rank_scored(qvec, idx)
    k = args.k
    if k > len(ranked):
        print(f"warning: k={k} larger than index ({len(ranked)}); returning all",
              file=sys.stderr)
        k = len(ranked)
    os.makedirs(args.out, exist_ok=True)
    lines = [f"{name} {sim:.6f}" for name, sim in ranked[:k]]
    with open(os.path.join(args.out, "results.txt"), "w") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))
    for ln in lines:
        print(ln)
    return 0


def cmd_retrieve_eval(args):
    from . import data, metrics, retrieval
    from .errors import ContractError

    mode = args.mode or "FG"
    net = _load_net(args.weights)
    samples, classes = data.load_dataset(args.dataset)
    if classes is None:
        raise ContractError(f"dataset {args.dataset} has no class labels")
    result = retrieval.evaluate_retrieval(net, samples, classes, mode)
    rep = metrics.EvalReport(f"retrieval-{mode}")
    for qid, ap in sorted(result.query_aps.items()):
        rep.add(qid, ap, dict(zip([s.name for s in samples], classes))[qid])
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.txt"), "w") as f:
        f.write(rep.to_text())
        f.write(f"# map {result.map_score:.6f} skipped {result.skipped} "
                f"fallback_rate {result.fallback_rate:.4f}\n")
    print(f"mAP({mode}) = {result.map_score:.4f} "
          f"(fallback rate {result.fallback_rate:.2%}, {result.skipped} skipped)")
    return 0


def cmd_diff_reports(args):
    from . import metrics

    with open(args.report_a) as f:
        rep_a = metrics.EvalReport.from_text(f.read())
    with open(args.report_b) as f:
        rep_b = metrics.EvalReport.from_text(f.read())
    b_scores = {name: (score, group) for name, score, group in rep_b.entries}
    groups = {}
    for name, score, group in rep_a.entries:
        if name in b_scores:
            groups.setdefault(group, []).append(score - b_scores[name][0])
    lines = [f"# fgseg-diff {rep_a.metric} vs {rep_b.metric}"]
    for group in sorted(groups):
        vals = groups[group]
        lines.append(f"{group} {sum(vals) / len(vals):+.6f} n={len(vals)}")
    lines.append(f"# aggregate {rep_a.aggregate - rep_b.aggregate:+.6f}")
    text = "\n".join(lines) + "\n"
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "diff.txt"), "w") as f:
        f.write(text)
    print(text, end="")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "segment": cmd_segment,
    "eval": cmd_eval,
    "retarget": cmd_retarget,
    "retrieve": cmd_retrieve,
    "retrieve-eval": cmd_retrieve_eval,
    "diff-reports": cmd_diff_reports,
}


def _coerce_config_values(parser, args):
    """Config-file defaults arrive as strings; cast them like CLI values."""
    for action in parser._actions:
        val = getattr(args, action.dest, None)
        if not isinstance(val, str):
            continue
        if action.const is True:  # store_true flags
            setattr(args, action.dest, val.strip().lower() in ("1", "true", "yes", "on"))
        elif action.type not in (None, str):
            setattr(args, action.dest, action.type(val))


def main(argv=None):
    _setup_threads()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        file_cfg = _load_config(argv)
    except OSError as e:
        print(f"fgseg: cannot read config: {e}", file=sys.stderr)
        return 2
    registry = {}
    args = _build_parser(file_cfg, registry).parse_args(argv)
    _coerce_config_values(registry[args.command], args)

    from .errors import ContractError, IncompleteEvalError, TrainingDiverged
    from .weights import WeightArchiveError

    started = time.monotonic()
    try:
        code = _COMMANDS[args.command](args)
    except (ContractError, TrainingDiverged, ValueError) as e:
        print(f"fgseg: {e}", file=sys.stderr)
        return 1
    except (OSError, WeightArchiveError) as e:
        print(f"fgseg: {e}", file=sys.stderr)
        return 2
    except IncompleteEvalError as e:
        print(f"fgseg: {e}", file=sys.stderr)
        code = 3
    out_dir = getattr(args, "out", None)
    if out_dir and code in (0, 3):
        _write_run_info(out_dir, args, started, getattr(args, "seed", 0) or 0)
    return code


if __name__ == "__main__":
    sys.exit(main())
