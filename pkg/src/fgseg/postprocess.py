"""From probability maps to hard masks, regions and boxes."""

from typing import NamedTuple, Optional

import numpy as np

from .errors import ContractError


class BBox(NamedTuple):
    """Inclusive pixel coordinates, x along columns, y along rows."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    @property
    def width(self):
        return self.x_max - self.x_min + 1

    @property
    def height(self):
        return self.y_max - self.y_min + 1

    @property
    def area(self):
        return self.width * self.height


def threshold_map(prob_map):
    """Hard foreground decision: probability strictly greater than 0.5."""
    return np.asarray(prob_map) > 0.5


def connected_components(mask, connectivity=8):
    """Label connected regions of a boolean mask.

    Returns (labels, areas): labels is int32 (h, w) with 0 for background
    and regions numbered 1..K in raster order of first appearance;
    areas[k-1] is the pixel count of region k. Classic two-pass labeling
    with union-find over provisional labels.
    """
    mask = np.asarray(mask, dtype=bool)
    if connectivity not in (4, 8):
        raise ContractError(f"connectivity must be 4 or 8, got {connectivity}")
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    parent = [0]

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    if connectivity == 4:
        neigh = ((-1, 0), (0, -1))
    else:
        neigh = ((-1, -1), (-1, 0), (-1, 1), (0, -1))

    next_label = 1
    for i in range(h):
        for j in range(w):
            if not mask[i, j]:
                continue
            best = 0
            for di, dj in neigh:
                ni, nj = i + di, j + dj
                if 0 <= ni < h and 0 <= nj < w and mask[ni, nj]:
                    lbl = labels[ni, nj]
                    if best == 0 or lbl < best:
                        best = lbl
            if best == 0:
                parent.append(next_label)
                labels[i, j] = next_label
                next_label += 1
            else:
                labels[i, j] = best
                for di, dj in neigh:
                    ni, nj = i + di, j + dj
                    if 0 <= ni < h and 0 <= nj < w and mask[ni, nj]:
                        ra, rb = find(best), find(labels[ni, nj])
                        if ra != rb:
                            parent[max(ra, rb)] = min(ra, rb)

    # Second pass: resolve to roots, then compact to 1..K in raster order.
    remap = {}
    out = np.zeros((h, w), dtype=np.int32)
    for i in range(h):
        for j in range(w):
            if mask[i, j]:
                root = find(labels[i, j])
                if root not in remap:
                    remap[root] = len(remap) + 1
                out[i, j] = remap[root]
    k = len(remap)
    areas = np.bincount(out.ravel(), minlength=k + 1)[1:].astype(np.int64)
    return out, areas


def largest_foreground(mask, min_area_frac=0.06, connectivity=8):
    """Largest connected region if it covers more than min_area_frac of the
    image (strictly), else None. Area ties go to the smallest label."""
    mask = np.asarray(mask, dtype=bool)
    labels, areas = connected_components(mask, connectivity)
    if len(areas) == 0:
        return None
    best = int(np.argmax(areas))  # first max == smallest label
    if areas[best] > min_area_frac * mask.shape[0] * mask.shape[1]:
        return labels == best + 1
    return None


def tight_bbox(mask) -> Optional[BBox]:
    """Smallest box containing every true pixel; None for an empty mask."""
    rows, cols = np.nonzero(np.asarray(mask, dtype=bool))
    if rows.size == 0:
        return None
    return BBox(int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max()))
