"""Segmentation, localization, retrieval and separability metrics."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


def jaccard(pred, gt):
    """Intersection over union of two boolean masks.

    Both empty counts as 1.0 (a perfect prediction of an empty truth);
    exactly one empty is 0.0.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ContractError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


def box_iou(a, b):
    """IoU of two inclusive-coordinate boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def corloc(pred_box, gt_boxes, threshold=0.5):
    """True iff the predicted box overlaps any ground-truth box with
    IoU strictly greater than the threshold (the PASCAL criterion)."""
    return any(box_iou(pred_box, g) > threshold for g in gt_boxes)


def average_precision(ranked_relevance):
    """AP of a ranked boolean relevance list: mean of precision@k over
    the relevant positions k."""
    flags = [bool(r) for r in ranked_relevance]
    if not any(flags):
        raise ContractError("average_precision undefined with zero relevant items")
    hits = 0
    precisions = []
    for k, rel in enumerate(flags, start=1):
        if rel:
            hits += 1
            precisions.append(hits / k)
    return float(np.mean(precisions))


def mean_ap(aps):
    aps = list(aps)
    if not aps:
        raise ContractError("mean_ap of an empty list")
    return float(np.mean(aps))


def color_histogram(image, mask, bins_per_channel=10):
    """Concatenated per-channel histogram (3 x bins) of the masked pixels,
    L1-normalized. image is (3, h, w) float in [0, 1]."""
    counts = []
    for c in range(3):
        vals = image[c][mask]
        idx = np.minimum((vals * bins_per_channel).astype(np.intp), bins_per_channel - 1)
        counts.append(np.bincount(idx, minlength=bins_per_channel))
    hist = np.concatenate(counts).astype(np.float64)
    return hist / hist.sum()


def separability(image, gt_mask):
    """Cosine distance between foreground and background color histograms.

    0 means identical color distributions (foreground blends in); values
    approach 1 as the distributions stop sharing histogram bins.
    """
    gt_mask = np.asarray(gt_mask, dtype=bool)
    if not gt_mask.any() or gt_mask.all():
        raise ContractError("separability needs at least one fg and one bg pixel")
    fg = color_histogram(image, gt_mask)
    bg = color_histogram(image, ~gt_mask)
    cos = float(np.dot(fg, bg) / (np.linalg.norm(fg) * np.linalg.norm(bg)))
    return 1.0 - cos


@dataclass
class BucketGain:
    lo: float
    hi: float
    count: int
    min_gain: float
    max_gain: float


def separability_report(sep_scores, ours, baselines, bucket_width=0.1):
    """Bucket images by separability score and report, per bucket, the min
    and max over baselines of (our mean score - baseline mean score).

    sep_scores, ours: parallel per-image lists; baselines: name -> list.
    Empty buckets are omitted. Returns a list of BucketGain rows.
    """
    sep_scores = np.asarray(sep_scores, dtype=float)
    ours = np.asarray(ours, dtype=float)
    if not baselines:
        raise ContractError("need at least one baseline")
    for name, vals in baselines.items():
        if len(vals) != len(ours):
            raise ContractError(f"baseline {name!r} scored {len(vals)} of {len(ours)} images")
    edges = np.arange(0.0, 1.0 + bucket_width, bucket_width)
    rows = []
    for b in range(len(edges) - 1):
        lo, hi = float(edges[b]), float(edges[b + 1])
        sel = (sep_scores >= lo) & ((sep_scores < hi) | (b == len(edges) - 2))
        if not sel.any():
            continue
        gains = [float(ours[sel].mean() - np.asarray(vals, dtype=float)[sel].mean())
                 for vals in baselines.values()]
        rows.append(BucketGain(lo, hi, int(sel.sum()), min(gains), max(gains)))
    return rows


@dataclass
class EvalReport:
    """Per-image scores plus a recomputable aggregate."""

    metric: str
    entries: list = field(default_factory=list)  # (id, score, group)

    def add(self, name, score, group="-"):
        self.entries.append((name, float(score), group))

    @property
    def aggregate(self):
        if not self.entries:
            return 0.0
        return float(np.mean([s for _, s, _ in self.entries]))

    def to_text(self):
        lines = [f"# fgseg-report {self.metric}"]
        for name, score, group in self.entries:
            lines.append(f"{name} {score:.6f} {group}")
        lines.append(f"# aggregate {self.aggregate:.6f} count {len(self.entries)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# fgseg-report"):
            raise ContractError("not an eval report")
        rep = cls(metric=lines[0].split()[-1])
        for ln in lines[1:]:
            if ln.startswith("#"):
                continue
            name, score, group = ln.split()
            rep.add(name, float(score), group)
        return rep
