"""Dataset ingestion, preprocessing and the synthetic shape corpus.

Training samples pair a mean-subtracted float image with a per-pixel
label map over {0 background, 1 object, 255 ignore}. Class-annotated
segmentation masks (values 0..20 plus a 255 boundary band) collapse to
this alphabet by fusing every class into a single "object" label.

The synthetic generator renders flat-colored shapes (rectangles,
ellipses, triangles, rings) over flat, gradient, noise or striped
backgrounds, together with exact ground-truth masks. A color-separation
parameter controls how distinct the shape colors are from the
background palette: at 0 the shape fill is drawn from the palette
itself, so only texture contrast distinguishes it.

On-disk layout (written by save_dataset, read by load_dataset):

    dataset/
      manifest.txt          # <id> <image path> <mask path> [<class>]
      images/<id>.png       # 8-bit RGB
      masks/<id>.png        # 8-bit single channel {0,1,255} or {0..20,255}
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import imgio, ops
from .errors import ContractError
from .rng import stream_rng

IGNORE = ops.IGNORE_LABEL
DEFAULT_MEANS = (0.5, 0.5, 0.5)

SHAPE_FAMILIES = ("rectangle", "ellipse", "triangle", "ring")
BACKGROUND_FAMILIES = ("flat", "gradient", "noise", "stripes")


@dataclass
class LabeledSample:
    image: np.ndarray   # float32 (3, h, w), mean-subtracted
    label: np.ndarray   # uint8 (h, w) over {0, 1, IGNORE}
    name: str = ""


def normalize_image(img01, means=DEFAULT_MEANS):
    """Mean-subtract a (3, h, w) float image with values in [0, 1]."""
    m = np.asarray(means, dtype=np.float32).reshape(3, 1, 1)
    return img01.astype(np.float32) - m


def denormalize_image(img, means=DEFAULT_MEANS):
    m = np.asarray(means, dtype=np.float32).reshape(3, 1, 1)
    return np.clip(img + m, 0.0, 1.0)


def binarize_mask(class_mask):
    """Collapse a {0..20, 255} class mask to {0, 1, 255}: any class -> object."""
    class_mask = np.asarray(class_mask)
    valid = (class_mask <= 20) | (class_mask == IGNORE)
    if not valid.all():
        raise ContractError(
            f"mask values outside {{0..20,{IGNORE}}}: {np.unique(class_mask[~valid])}")
    out = np.where(class_mask == IGNORE, IGNORE, (class_mask > 0).astype(np.uint8))
    return out.astype(np.uint8)


def resize_image(img, out_h, out_w):
    return ops.bilinear_resize(img, out_h, out_w)


def resize_label_nearest(label, out_h, out_w):
    """Corner-aligned nearest-neighbor resize; preserves the label alphabet."""
    h, w = label.shape
    ri = np.floor(np.linspace(0.0, h - 1, out_h) + 0.5).astype(np.intp)
    ci = np.floor(np.linspace(0.0, w - 1, out_w) + 0.5).astype(np.intp)
    return label[np.ix_(ri, ci)]


def augment_mirror(sample, rng, prob=0.5):
    """With probability prob, flip image and label together (horizontally)."""
    if rng.random() >= prob:
        return sample
    return LabeledSample(image=sample.image[:, :, ::-1].copy(),
                         label=sample.label[:, ::-1].copy(),
                         name=sample.name)


@dataclass(frozen=True)
class SyntheticSpec:
    size: int = 64
    min_shapes: int = 1
    max_shapes: int = 3
    families: tuple = SHAPE_FAMILIES
    backgrounds: tuple = BACKGROUND_FAMILIES
    separation: float = 1.0     # 0: fill colors drawn from the bg palette
    min_extent: float = 0.10    # shape half-extent as a fraction of size
    max_extent: float = 0.26
    object_noise: float = 0.0   # per-pixel jitter on shape fills
    count: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.size < 8 or self.count < 0:
            raise ContractError(f"invalid synthetic spec: size={self.size} count={self.count}")
        if not 0.0 <= self.separation <= 1.0:
            raise ContractError(f"separation must be in [0,1], got {self.separation}")
        if not 0.0 < self.min_extent <= self.max_extent <= 0.45:
            raise ContractError(
                f"extents must satisfy 0 < min <= max <= 0.45, got "
                f"{self.min_extent}/{self.max_extent}")
        bad = set(self.families) - set(SHAPE_FAMILIES)
        bad |= set(self.backgrounds) - set(BACKGROUND_FAMILIES)
        if bad:
            raise ContractError(f"unknown families: {sorted(bad)}")


def _render_background(kind, palette, size, rng):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / max(size - 1, 1)
    c0 = palette[rng.integers(len(palette))]
    c1 = palette[rng.integers(len(palette))]
    if kind == "flat":
        return np.tile(c0[:, None, None], (1, size, size)).astype(np.float32)
    if kind == "gradient":
        theta = rng.uniform(0, 2 * np.pi)
        t = xx * np.cos(theta) + yy * np.sin(theta)
        t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
        return (c0[:, None, None] * (1 - t) + c1[:, None, None] * t).astype(np.float32)
    if kind == "noise":
        amp = rng.uniform(0.06, 0.16)
        noise = rng.uniform(-amp, amp, size=(3, size, size)).astype(np.float32)
        return np.clip(c0[:, None, None] + noise, 0.0, 1.0)
    if kind == "stripes":
        theta = rng.uniform(0, 2 * np.pi)
        width = rng.integers(3, 9)
        phase = (xx * np.cos(theta) + yy * np.sin(theta)) * (size - 1)
        band = (np.floor(phase / width).astype(np.int64) % 2).astype(np.float32)
        return (c0[:, None, None] * (1 - band) + c1[:, None, None] * band).astype(np.float32)
    raise ContractError(f"unknown background kind {kind!r}")


def _shape_mask(kind, size, rng, min_extent=0.10, max_extent=0.26):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    lo = max(0.22, min_extent)
    for _ in range(32):
        cx = rng.uniform(lo, 1.0 - lo) * size
        cy = rng.uniform(lo, 1.0 - lo) * size
        rx = rng.uniform(min_extent, max_extent) * size
        ry = rng.uniform(min_extent, max_extent) * size
        if kind == "rectangle":
            m = (np.abs(xx - cx) <= rx) & (np.abs(yy - cy) <= ry)
        elif kind == "ellipse":
            m = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        elif kind == "ring":
            rr = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
            m = (rr <= 1.0) & (rr >= rng.uniform(0.45, 0.7))
        elif kind == "triangle":
            ang = rng.uniform(0, 2 * np.pi) + np.array([0.0, 2.1, 4.2]) \
                + rng.uniform(-0.4, 0.4, size=3)
            vx = cx + np.cos(ang) * rx
            vy = cy + np.sin(ang) * ry
            m = np.ones((size, size), dtype=bool)
            for i in range(3):
                j = (i + 1) % 3
                cross = (vx[j] - vx[i]) * (yy - vy[i]) - (vy[j] - vy[i]) * (xx - vx[i])
                m &= cross <= 0 if _signed_area(vx, vy) < 0 else cross >= 0
        else:
            raise ContractError(f"unknown shape kind {kind!r}")
        if m.sum() >= 4:
            return m
    raise RuntimeError(f"could not sample a non-degenerate {kind}")


def _signed_area(vx, vy):
    return (vx[0] * (vy[1] - vy[2]) + vx[1] * (vy[2] - vy[0])
            + vx[2] * (vy[0] - vy[1])) / 2.0


def _quantize(img01):
    # Match the PNG round trip so in-memory and on-disk datasets agree.
    return np.round(np.clip(img01, 0.0, 1.0) * 255.0).astype(np.float32) / 255.0


def render_sample(spec, index):
    """Render sample `index` of the spec; deterministic per (seed, index)."""
    rng = stream_rng(spec.seed, "data", index)
    size = spec.size
    palette = rng.uniform(0.0, 1.0, size=(4, 3)).astype(np.float32)
    bg_kind = spec.backgrounds[rng.integers(len(spec.backgrounds))]
    img = _render_background(bg_kind, palette, size, rng)
    gt = np.zeros((size, size), dtype=bool)
    n_shapes = int(rng.integers(spec.min_shapes, spec.max_shapes + 1))
    for _ in range(n_shapes):
        kind = spec.families[rng.integers(len(spec.families))]
        m = _shape_mask(kind, size, rng, spec.min_extent, spec.max_extent)
        base = palette[rng.integers(len(palette))]
        distinct = rng.uniform(0.0, 1.0, size=3).astype(np.float32)
        fill = (1.0 - spec.separation) * base + spec.separation * distinct
        paint = np.tile(fill[:, None], (1, int(m.sum())))
        if spec.object_noise > 0:
            paint = paint + rng.uniform(-spec.object_noise, spec.object_noise,
                                        size=paint.shape).astype(np.float32)
        img[:, m] = np.clip(paint, 0.0, 1.0)
        gt |= m
    assert gt.any() and not gt.all()
    label = gt.astype(np.uint8)
    return LabeledSample(image=normalize_image(_quantize(img)),
                         label=label, name=f"synth-{index:05d}")


def generate_synthetic_dataset(spec):
    """Render the whole corpus; same spec (incl. seed) -> identical samples."""
    return [render_sample(spec, i) for i in range(spec.count)]


def generate_class_dataset(num_classes=10, per_class=20, size=64, seed=0,
                           families=SHAPE_FAMILIES, color_jitter=0.04,
                           min_extent=0.14, max_extent=0.26):
    """Class-labeled retrieval benchmark: one object per image, fixed
    (shape family, fill color, size band) per class, randomized backgrounds.

    Returns (samples, class_labels) with parallel ordering.
    """
    proto_rng = stream_rng(seed, "data", 10**9)
    protos = []
    for k in range(num_classes):
        protos.append({
            "family": families[k % len(families)],
            "color": proto_rng.uniform(0.0, 1.0, size=3).astype(np.float32),
            "extent": proto_rng.uniform(min_extent, max_extent),
        })
    samples, labels = [], []
    for k, proto in enumerate(protos):
        for j in range(per_class):
            rng = stream_rng(seed, "data", k * per_class + j)
            palette = rng.uniform(0.0, 1.0, size=(4, 3)).astype(np.float32)
            bg_kind = BACKGROUND_FAMILIES[rng.integers(len(BACKGROUND_FAMILIES))]
            img = _render_background(bg_kind, palette, size, rng)
            geom = stream_rng(seed, "data", 2 * 10**9 + k * per_class + j)
            m = _shape_mask_fixed(proto["family"], size, proto["extent"], geom)
            fill = np.clip(proto["color"] + geom.uniform(
                -color_jitter, color_jitter, size=3).astype(np.float32), 0.0, 1.0)
            img[:, m] = fill[:, None]
            name = f"c{k:02d}-{j:03d}"
            samples.append(LabeledSample(image=normalize_image(_quantize(img)),
                                         label=m.astype(np.uint8), name=name))
            labels.append(f"class{k:02d}")
    return samples, labels


def _shape_mask_fixed(kind, size, extent, rng):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    for _ in range(32):
        cx = rng.uniform(0.25, 0.75) * size
        cy = rng.uniform(0.25, 0.75) * size
        rx = extent * size * rng.uniform(0.85, 1.15)
        ry = extent * size * rng.uniform(0.85, 1.15)
        if kind == "rectangle":
            m = (np.abs(xx - cx) <= rx) & (np.abs(yy - cy) <= ry)
        elif kind == "ellipse":
            m = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        elif kind == "ring":
            rr = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
            m = (rr <= 1.0) & (rr >= 0.55)
        else:
            ang = rng.uniform(0, 2 * np.pi) + np.array([0.0, 2.1, 4.2])
            vx = cx + np.cos(ang) * rx
            vy = cy + np.sin(ang) * ry
            m = np.ones((size, size), dtype=bool)
            for i in range(3):
                j = (i + 1) % 3
                cross = (vx[j] - vx[i]) * (yy - vy[i]) - (vy[j] - vy[i]) * (xx - vx[i])
                m &= cross <= 0 if _signed_area(vx, vy) < 0 else cross >= 0
        if m.sum() >= 4:
            return m
    raise RuntimeError(f"could not sample a non-degenerate {kind}")


def save_dataset(samples, path, classes=None, means=DEFAULT_MEANS):
    """Write samples (and optional class labels) in the on-disk layout."""
    os.makedirs(os.path.join(path, "images"), exist_ok=True)
    os.makedirs(os.path.join(path, "masks"), exist_ok=True)
    lines = []
    for i, s in enumerate(samples):
        img_rel = os.path.join("images", f"{s.name}.png")
        mask_rel = os.path.join("masks", f"{s.name}.png")
        imgio.write_rgb(os.path.join(path, img_rel), denormalize_image(s.image, means))
        imgio.write_gray(os.path.join(path, mask_rel), s.label)
        cls = f" {classes[i]}" if classes else ""
        lines.append(f"{s.name} {img_rel} {mask_rel}{cls}")
    with open(os.path.join(path, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))


def load_dataset(path, means=DEFAULT_MEANS):
    """Read a dataset directory; returns (samples, classes-or-None).

    Masks holding class labels (values 2..20) are collapsed via
    binarize_mask; {0,1,255} masks pass through unchanged.
    """
    mpath = os.path.join(path, "manifest.txt")
    samples, classes = [], []
    with open(mpath) as f:
        for ln in f:
            parts = ln.split()
            if not parts:
                continue
            if len(parts) not in (3, 4):
                raise ContractError(f"{mpath}: bad manifest line {ln!r}")
            name, img_rel, mask_rel = parts[:3]
            img01 = imgio.read_rgb(os.path.join(path, img_rel))
            raw = imgio.read_gray(os.path.join(path, mask_rel))
            label = binarize_mask(raw)
            samples.append(LabeledSample(image=normalize_image(img01, means),
                                         label=label, name=name))
            classes.append(parts[3] if len(parts) == 4 else None)
    has_classes = any(c is not None for c in classes)
    return samples, (classes if has_classes else None)
