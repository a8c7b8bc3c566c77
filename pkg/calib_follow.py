"""Dry run of acceptance criteria 4, 8, 9 across all five seeds."""

import time

import numpy as np

from fgseg.baselines import color_threshold_mask, constant_foreground_mask
from fgseg.data import (SyntheticSpec, denormalize_image,
                        generate_class_dataset, generate_synthetic_dataset)
from fgseg.metrics import jaccard, separability, separability_report
from fgseg.net import build_network, predict_objectness, toy_config
from fgseg.postprocess import threshold_map
from fgseg.retrieval import evaluate_retrieval
from fgseg.train import TrainConfig, train

SIZE = 49
TEXTURED = ("gradient", "noise", "stripes")


def train_toy(dataset, seed, iters, lr, size=SIZE):
    net = build_network(toy_config(), seed=seed)
    cfg = TrainConfig(total_iterations=iters, crop_size=size, seed=seed,
                      base_lr=lr, lr_decay_every=max(iters * 2 // 3, 1))
    net, _ = train(net, dataset, cfg)
    return net


def mixed(size, seed, families, levels=(1.0, 0.6, 0.3, 0.1), count_per_level=25,
          **kw):
    out = []
    for i, sep in enumerate(levels):
        spec = SyntheticSpec(size=size, count=count_per_level, seed=seed * 100 + i,
                             families=families, backgrounds=TEXTURED,
                             separation=sep, min_shapes=1, max_shapes=2, **kw)
        out.extend(generate_synthetic_dataset(spec))
    return out


def pred_mask(net, s):
    return threshold_map(predict_objectness(net, s.image))


def miou(net, samples):
    return float(np.mean([jaccard(pred_mask(net, s), s.label == 1) for s in samples]))


def crit4(seed):
    t0 = time.time()
    train_set = mixed(SIZE, 300 + seed, ("rectangle",))
    eval_set = mixed(SIZE, 800 + seed, ("ellipse",), count_per_level=10)
    net = train_toy(train_set, seed, 700, 0.01)
    ours = miou(net, eval_set)
    const = float(np.mean([
        jaccard(constant_foreground_mask(s.label.shape), s.label == 1)
        for s in eval_set]))
    ok = ours >= 0.50 and ours - const >= 0.15
    print(f"C4 seed{seed}: ours={ours:.3f} const={const:.3f} ok={ok} "
          f"({time.time()-t0:.0f}s)", flush=True)
    return ok


def crit89(seed):
    t0 = time.time()
    train_set = mixed(SIZE, 500 + seed, ("rectangle", "ellipse", "triangle", "ring"))
    net = train_toy(train_set, seed, 650, 0.01)
    t1 = time.time()
    bench, classes = generate_class_dataset(num_classes=10, per_class=20,
                                            size=SIZE, seed=700 + seed)
    maps = {}
    fb = 0.0
    for mode in ("FULL", "FG", "FF"):
        r = evaluate_retrieval(net, bench, classes, mode)
        maps[mode] = r.map_score
        if mode == "FG":
            fb = r.fallback_rate
    ok8 = maps["FF"] >= maps["FULL"] and maps["FG"] >= maps["FULL"] - 0.02
    print(f"C8 seed{seed}: FULL={maps['FULL']:.3f} FG={maps['FG']:.3f} "
          f"FF={maps['FF']:.3f} fb={fb:.0%} ok={ok8} "
          f"(train {t1-t0:.0f}s, eval {time.time()-t1:.0f}s)", flush=True)

    eval_set = []
    for i, sep in enumerate(np.linspace(0.0, 1.0, 12)):
        spec = SyntheticSpec(size=SIZE, count=10, seed=9000 + seed * 50 + i,
                             backgrounds=TEXTURED, separation=float(sep),
                             min_shapes=1, max_shapes=2)
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
    print(f"C9 seed{seed}: nonneg={nonneg} trend={trend} {desc}", flush=True)
    return ok8, nonneg and trend


for seed in range(5):
    crit4(seed)
for seed in range(5):
    crit89(seed)
