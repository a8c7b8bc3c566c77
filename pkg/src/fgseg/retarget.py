"""Seam-carving retargeting with optional foreground-boosted energy.

Plain carving uses the gradient magnitude of the luminance as pixel
energy. The foreground-aware variant rescales the energy e inside a
foreground mask to (e + 1) * 2, making object pixels expensive to
remove. One seam (a monotone 8-connected path, one pixel per row or per
column) is removed at a time and the energy is recomputed after every
removal; the mask is carved alongside the image so the boost follows
the surviving foreground pixels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class Seam:
    orientation: str      # "vertical" removes one pixel per row
    indices: np.ndarray   # column index per row (or row per column)


def luminance(image):
    r, g, b = image[0], image[1], image[2]
    return LUMA[0] * r + LUMA[1] * g + LUMA[2] * b


def gradient_energy(image):
    """|d/dx| + |d/dy| of the luminance, central differences with
    replicated borders. image is (3, h, w) float in [0, 1]."""
    lum = luminance(np.asarray(image, dtype=np.float64))
    padded = np.pad(lum, 1, mode="edge")
    dx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    dy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return np.abs(dx) + np.abs(dy)


def boost_foreground(energy, fg_mask):
    """(e + 1) * 2 on foreground pixels, unchanged elsewhere."""
    energy = np.asarray(energy)
    fg_mask = np.asarray(fg_mask, dtype=bool)
    if energy.shape != fg_mask.shape:
        raise ContractError(f"energy {energy.shape} vs mask {fg_mask.shape}")
    return np.where(fg_mask, (energy + 1.0) * 2.0, energy)


def min_seam(energy, orientation="vertical"):
    """Minimum-cost monotone seam by dynamic programming.

    M(i, j) = e(i, j) + min(M(i-1, j-1), M(i-1, j), M(i-1, j+1)); cost
    ties break toward the smaller column index at every choice point.
    """
    if orientation not in ("vertical", "horizontal"):
        raise ContractError(f"bad orientation {orientation!r}")
    e = np.asarray(energy, dtype=np.float64)
    if orientation == "horizontal":
        e = e.T
    h, w = e.shape
    if w < 2:
        raise ContractError("seam needs at least 2 pixels of free dimension")

    cost = e[0].copy()
    parent = np.zeros((h, w), dtype=np.int8)
    inf = np.inf
    for i in range(1, h):
        left = np.concatenate(([inf], cost[:-1]))
        right = np.concatenate((cost[1:], [inf]))
        stacked = np.stack((left, cost, right))           # offsets -1, 0, +1
        choice = np.argmin(stacked, axis=0)               # first min -> smaller index
        parent[i] = choice - 1
        cost = e[i] + stacked[choice, np.arange(w)]

    j = int(np.argmin(cost))
    path = np.empty(h, dtype=np.int64)
    path[h - 1] = j
    for i in range(h - 1, 0, -1):
        j += int(parent[i, j])
        path[i - 1] = j
    return Seam(orientation, path)


def seam_cost(energy, seam):
    e = np.asarray(energy, dtype=np.float64)
    if seam.orientation == "horizontal":
        e = e.T
    return float(e[np.arange(e.shape[0]), seam.indices].sum())


def remove_seam(arr, seam):
    """Drop one pixel per row (vertical) or per column (horizontal) from the
    last two axes of arr, preserving the order of the remaining pixels."""
    arr = np.asarray(arr)
    h, w = arr.shape[-2], arr.shape[-1]
    idx = seam.indices
    if seam.orientation == "vertical":
        if len(idx) != h or idx.min() < 0 or idx.max() >= w:
            raise ContractError(f"seam does not fit image of size {h}x{w}")
        if w < 2:
            raise ContractError("cannot remove a seam from a 1-pixel-wide image")
        keep = np.ones((h, w), dtype=bool)
        keep[np.arange(h), idx] = False
        return arr[..., keep].reshape(arr.shape[:-2] + (h, w - 1))
    moved = np.moveaxis(arr, -1, -2)
    out = remove_seam(moved, Seam("vertical", idx))
    return np.moveaxis(out, -1, -2)


def _carve_once(image, fg, orientation, boost):
    e = gradient_energy(image)
    if boost and fg is not None and fg.any():
        e = boost_foreground(e, fg)
    s = min_seam(e, orientation)
    image = remove_seam(image, s)
    if fg is not None:
        fg = remove_seam(fg, s)
    return image, fg


def retarget(image, fg_mask, target_w, target_h, boost=True, return_mask=False):
    """Carve the image down to target_w x target_h (vertical seams first,
    then horizontal). fg_mask, if given, boosts energy (unless boost is
    False) and is carved alongside."""
    image = np.asarray(image)
    h, w = image.shape[-2], image.shape[-1]
    if not (1 <= target_w <= w and 1 <= target_h <= h):
        raise ContractError(
            f"targets {target_w}x{target_h} invalid for {w}x{h} image")
    fg = None if fg_mask is None else np.asarray(fg_mask, dtype=bool)
    if fg is not None and fg.shape != (h, w):
        raise ContractError(f"mask shape {fg.shape} does not match image {h}x{w}")

    while image.shape[-1] > target_w:
        image, fg = _carve_once(image, fg, "vertical", boost)
    while image.shape[-2] > target_h:
        image, fg = _carve_once(image, fg, "horizontal", boost)
    if return_mask:
        return image, fg
    return image
