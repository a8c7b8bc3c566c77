"""PNG image I/O (8-bit RGB and 8-bit single channel) via Pillow.

In-memory conventions: RGB images are float32 arrays (3, h, w) with
values in [0, 1]; masks are bool (h, w); raw label maps are uint8 (h, w).
"""

import numpy as np
from PIL import Image


def read_rgb(path):
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def write_rgb(path, img):
    arr = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def read_gray(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_gray(path, arr):
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="L").save(path, format="PNG")


def read_binary_mask(path):
    """Mask PNG (0 = background, nonzero = foreground) as bool (h, w)."""
    return read_gray(path) > 0


def write_binary_mask(path, mask):
    write_gray(path, np.where(mask, 255, 0).astype(np.uint8))
