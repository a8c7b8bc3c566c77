"""Reference segmenters used as comparison points in evaluations."""

import numpy as np


def color_threshold_mask(image):
    """Pure color-cue segmenter in the frequency-tuned-saliency mold:
    per-pixel distance from the image's mean color, thresholded at the
    per-image mean distance.

    image is (3, h, w) float in [0, 1]. No spatial reasoning, no
    component cleanup; exactly as strong as color separation allows.
    """
    img = np.asarray(image, dtype=np.float64)
    mean = img.mean(axis=(1, 2))
    dist = np.sqrt(((img - mean[:, None, None]) ** 2).sum(axis=0))
    return dist > dist.mean()


def constant_foreground_mask(shape):
    """The degenerate all-foreground predictor."""
    return np.ones(shape, dtype=bool)
