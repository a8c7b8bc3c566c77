"""Properties that only hold for a trained model, sharing the session's
trained networks: activation heatmaps concentrating on objects, and
foreground-cropped features beating whole-image features at matching
the same object across backgrounds."""

import numpy as np

from fgseg.data import generate_class_dataset
from fgseg.net import activation_map
from fgseg.retrieval import extract_features
from fgseg.postprocess import tight_bbox


def test_activation_map_concentrates_on_foreground(benchmark_runs):
    run = benchmark_runs[0]
    inside_wins = 0
    for s in run["bench"][:50]:
        heat = activation_map(run["net"], s.image)
        fg = s.label == 1
        inside_wins += heat[fg].mean() > heat[~fg].mean()
    # statistical, not per-image: objects light up more often than not
    assert inside_wins >= 35, f"heatmap brighter inside fg on only {inside_wins}/50"


def test_fg_crop_features_more_background_invariant(benchmark_runs):
    # pairs of images with the same object class but different backgrounds:
    # cropped-foreground descriptors should match better than whole-image ones
    run = benchmark_runs[0]
    net = run["net"]
    samples, classes = generate_class_dataset(num_classes=10, per_class=10,
                                              size=49, seed=4242)
    by_class = {}
    for s, c in zip(samples, classes):
        by_class.setdefault(c, []).append(s)

    fg_sims, full_sims = [], []
    for c, members in by_class.items():
        for a, b in zip(members[0::2], members[1::2]):
            full_a = extract_features(net, a.image)
            full_b = extract_features(net, b.image)
            box_a = tight_bbox(a.label == 1)
            box_b = tight_bbox(b.label == 1)
            fg_a = extract_features(net, a.image, box_a)
            fg_b = extract_features(net, b.image, box_b)
            full_sims.append(float(full_a @ full_b))
            fg_sims.append(float(fg_a @ fg_b))
    assert np.mean(fg_sims) > np.mean(full_sims), (
        f"fg {np.mean(fg_sims):.3f} vs full {np.mean(full_sims):.3f}")
