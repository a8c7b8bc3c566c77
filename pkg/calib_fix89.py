import time

import numpy as np

from fgseg.baselines import color_threshold_mask
from fgseg.data import (SyntheticSpec, denormalize_image,
                        generate_class_dataset, generate_synthetic_dataset)
from fgseg.metrics import jaccard, separability, separability_report
from fgseg.net import build_network, predict_objectness, toy_config
from fgseg.postprocess import threshold_map
from fgseg.retrieval import evaluate_retrieval
from fgseg.train import TrainConfig, train

SIZE = 49
TEXTURED = ("gradient", "noise", "stripes")


def mixed(size, seed, families, levels, count_per_level, **kw):
    out = []
    for i, sep in enumerate(levels):
        spec = SyntheticSpec(size=size, count=count_per_level, seed=seed * 100 + i,
                             families=families, backgrounds=TEXTURED,
                             separation=sep, **kw)
        out.extend(generate_synthetic_dataset(spec))
    return out


def pred_mask(net, s):
    return threshold_map(predict_objectness(net, s.image))


def run(seed, iters, lr, batch, decay_at):
    t0 = time.time()
    train_set = mixed(SIZE, 500 + seed,
                      ("rectangle", "ellipse", "triangle", "ring"),
                      levels=(1.0, 0.7, 0.45, 0.25), count_per_level=30,
                      min_shapes=1, max_shapes=2,
                      min_extent=0.16, max_extent=0.32)
    net = build_network(toy_config(), seed=seed)
    cfg = TrainConfig(total_iterations=iters, crop_size=SIZE, seed=seed,
                      base_lr=lr, batch_size=batch, lr_decay_every=decay_at)
    net, log = train(net, train_set, cfg)
    t_train = time.time() - t0
    train_miou = float(np.mean([jaccard(pred_mask(net, s), s.label == 1)
                                for s in train_set[:40]]))

    bench, classes = generate_class_dataset(num_classes=10, per_class=20,
                                            size=SIZE, seed=700 + seed)
    maps = {}
    fb = 0.0
    t1 = time.time()
    for mode in ("FULL", "FG", "FF"):
        r = evaluate_retrieval(net, bench, classes, mode)
        maps[mode] = r.map_score
        if mode == "FG":
            fb = r.fallback_rate
    ok8 = maps["FF"] >= maps["FULL"] and maps["FG"] >= maps["FULL"] - 0.02
    print(f"seed{seed} it={iters} lr={lr} b={batch}: train_mIoU={train_miou:.3f} "
          f"FULL={maps['FULL']:.3f} FG={maps['FG']:.3f} FF={maps['FF']:.3f} "
          f"fb={fb:.0%} ok8={ok8} (train {t_train:.0f}s eval {time.time()-t1:.0f}s)",
          flush=True)

    eval_set = []
    for i, sep in enumerate(np.linspace(0.0, 1.0, 12)):
        spec = SyntheticSpec(size=SIZE, count=10, seed=9000 + seed * 50 + i,
                             backgrounds=TEXTURED, separation=float(sep),
                             min_shapes=1, max_shapes=2,
                             min_extent=0.16, max_extent=0.32)
        eval_set.extend(generate_synthetic_dataset(spec))
    seps, ours, base = [], [], []
    for s in eval_set:
        gt = s.label == 1
        raw = denormalize_image(s.image)
        seps.append(separability(raw, gt))
        ours.append(jaccard(pred_mask(net, s), gt))
        base.append(jaccard(color_threshold_mask(raw), gt))
    rows = separability_report(seps, ours, {"ct": base})
    desc = " ".join(f"[{r.lo:.1f}:{r.count}:{r.min_gain:+.2f}]" for r in rows)
    nonneg = all(r.min_gain >= 0 for r in rows)
    trend = rows[0].min_gain > rows[-1].min_gain
    print(f"  C9: nonneg={nonneg} trend={trend} {desc}", flush=True)


run(0, iters=1000, lr=0.02, batch=8, decay_at=750)
run(1, iters=1000, lr=0.02, batch=8, decay_at=750)
