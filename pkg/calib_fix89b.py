import sys
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


def pred_mask(net, s):
    return threshold_map(predict_objectness(net, s.image))


def run(seed):
    t0 = time.time()
    train_set = []
    for i, sep in enumerate((1.0, 0.7, 0.45, 0.25)):
        spec = SyntheticSpec(size=SIZE, count=30, seed=(500 + seed) * 100 + i,
                             backgrounds=TEXTURED, separation=sep,
                             min_shapes=1, max_shapes=2,
                             min_extent=0.22, max_extent=0.38, object_noise=0.10)
        train_set.extend(generate_synthetic_dataset(spec))
    net = build_network(toy_config(), seed=seed)
    cfg = TrainConfig(total_iterations=1100, crop_size=SIZE, seed=seed,
                      base_lr=0.02, batch_size=8, lr_decay_every=800)
    net, _ = train(net, train_set, cfg)
    t_train = time.time() - t0

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
    print(f"seed{seed}: FULL={maps['FULL']:.3f} FG={maps['FG']:.3f} "
          f"FF={maps['FF']:.3f} fb={fb:.0%} ok8={ok8} "
          f"(train {t_train:.0f}s eval {time.time()-t1:.0f}s)", flush=True)

    eval_set = []
    for i, sep in enumerate(np.linspace(0.15, 1.0, 14)):
        spec = SyntheticSpec(size=SIZE, count=12, seed=(9000 + seed) * 100 + i,
                             backgrounds=TEXTURED, separation=float(sep),
                             min_shapes=1, max_shapes=1,
                             min_extent=0.22, max_extent=0.38, object_noise=0.10)
        eval_set.extend(generate_synthetic_dataset(spec))
    seps, ours, base = [], [], []
    for s in eval_set:
        gt = s.label == 1
        raw = denormalize_image(s.image)
        seps.append(separability(raw, gt))
        ours.append(jaccard(pred_mask(net, s), gt))
        base.append(jaccard(color_threshold_mask(raw), gt))
    rows = separability_report(seps, ours, {"ct": base}, bucket_width=0.2)
    desc = " ".join(f"[{r.lo:.1f}:{r.count}:{r.min_gain:+.2f}]" for r in rows)
    nonneg = all(r.min_gain >= 0 for r in rows)
    trend = rows[0].min_gain > rows[-1].min_gain
    print(f"  C9: net_mean={np.mean(ours):.3f} base_mean={np.mean(base):.3f} "
          f"nonneg={nonneg} trend={trend} {desc}", flush=True)


for seed in [int(a) for a in sys.argv[1:]] or [0]:
    run(seed)
