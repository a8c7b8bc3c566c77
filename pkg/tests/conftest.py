"""Shared heavyweight fixtures: trained networks are expensive on CPU, so
the five seeded benchmark runs are built once per session and reused by
the acceptance criteria and the trained-model property tests."""

import numpy as np
import pytest

from fgseg.data import SyntheticSpec, generate_class_dataset, generate_synthetic_dataset
from fgseg.net import build_network, toy_config
from fgseg.train import TrainConfig, train

SEEDS = (0, 1, 2, 3, 4)
TRAIN_SIZE = 49
BENCH_ITERS = 650
BENCH_LR = 0.01
TEXTURED = ("gradient", "noise", "stripes")


def train_toy(dataset, seed, iters, lr, size=TRAIN_SIZE):
    net = build_network(toy_config(), seed=seed)
    cfg = TrainConfig(total_iterations=iters, crop_size=size, seed=seed,
                      base_lr=lr, lr_decay_every=max(iters * 2 // 3, 1))
    net, _ = train(net, dataset, cfg)
    return net


def mixed_separation_dataset(size, seed, families,
                             levels=(1.0, 0.6, 0.3, 0.1), count_per_level=25):
    out = []
    for i, sep in enumerate(levels):
        spec = SyntheticSpec(size=size, count=count_per_level, seed=seed * 100 + i,
                             families=families, backgrounds=TEXTURED,
                             separation=sep, min_shapes=1, max_shapes=2)
        out.extend(generate_synthetic_dataset(spec))
    return out


@pytest.fixture(scope="session")
def benchmark_runs():
    """Per seed: a toy net trained on mixed synthetic data plus the
    10-class, 200-image retrieval benchmark."""
    runs = []
    for seed in SEEDS:
        train_set = mixed_separation_dataset(
            TRAIN_SIZE, 500 + seed,
            families=("rectangle", "ellipse", "triangle", "ring"))
        net = train_toy(train_set, seed, BENCH_ITERS, BENCH_LR)
        bench, classes = generate_class_dataset(num_classes=10, per_class=20,
                                                size=TRAIN_SIZE, seed=700 + seed)
        runs.append({"seed": seed, "net": net, "bench": bench, "classes": classes})
    return runs
