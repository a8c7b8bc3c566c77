"""Object-aware image retrieval.

Descriptors come from the segmentation network itself: the activation
of its last shared feature conv, spatially average-pooled and
L2-normalized. Three representations are supported: FULL (whole
image), FG (tight box around the largest surviving foreground region,
falling back to FULL when the area rule rejects everything), and FF
(FULL and the FG-path vector concatenated, re-normalized). Ranking is
by cosine similarity, which for unit vectors is a dot product.

Index directory layout: manifest.txt (mode, dim, count, one
``entry <id> <class>`` line per record, in order) + vectors.bin
(count * dim little-endian float32, row-major, same order).
"""

import os
from dataclasses import dataclass

import numpy as np

from . import data, ops, postprocess
from .errors import ContractError
from .net import predict_objectness

MODES = ("FULL", "FG", "FF")


def _unit(v):
    n = float(np.linalg.norm(v))
    if n == 0.0:
        return np.full(v.shape, 1.0 / np.sqrt(v.size), dtype=np.float32)
    return (v / n).astype(np.float32)


def extract_features(net, image, region=None):
    """Pooled feature vector of the image (or of a crop around region).

    image is (3, h, w) float32, normalized like the training data.
    The crop is resized to the network's canonical eval size first.
    """
    if region is not None:
        h, w = image.shape[1], image.shape[2]
        if not (0 <= region.x_min <= region.x_max < w
                and 0 <= region.y_min <= region.y_max < h):
            raise ContractError(f"region {region} outside {w}x{h} image")
        image = image[:, region.y_min : region.y_max + 1,
                      region.x_min : region.x_max + 1]
    size = net.config.eval_size
    image = ops.bilinear_resize(image, size, size)
    _, tapped = net.forward(image[None], taps=(net.config.feature_tap,))
    feat = tapped[net.config.feature_tap][0]
    return _unit(feat.mean(axis=(1, 2)))


def foreground_region(net, image):
    """Tight box of the largest surviving foreground region, or None."""
    probs = predict_objectness(net, image)
    mask = postprocess.threshold_map(probs)
    region = postprocess.largest_foreground(mask)
    if region is None:
        return None
    return postprocess.tight_bbox(region)


def represent(net, image, mode):
    """Descriptor under the given mode; returns (vector, used_fallback)."""
    if mode not in MODES:
        raise ContractError(f"mode must be one of {MODES}, got {mode!r}")
    full = extract_features(net, image)
    if mode == "FULL":
        return full, False
    box = foreground_region(net, image)
    fallback = box is None
    fg = full if fallback else extract_features(net, image, box)
    if mode == "FG":
        return fg, fallback
    return _unit(np.concatenate([full, fg])), fallback


@dataclass
class RetrievalIndex:
    mode: str
    ids: list
    classes: list
    vectors: np.ndarray   # (n, dim) float32, unit rows
    fallbacks: int = 0

    @property
    def dim(self):
        return self.vectors.shape[1]


def build_index(net, samples, classes, mode):
    """Index a list of LabeledSamples with parallel class labels."""
    vecs, fallbacks = [], 0
    for s in samples:
        v, fb = represent(net, s.image, mode)
        vecs.append(v)
        fallbacks += int(fb)
    return RetrievalIndex(mode=mode, ids=[s.name for s in samples],
                          classes=list(classes), vectors=np.stack(vecs),
                          fallbacks=fallbacks)


def rank_scored(query, index, exclude=None):
    """(id, cosine similarity) pairs, best first; ties by ascending id."""
    query = np.asarray(query, dtype=np.float32)
    if query.shape != (index.dim,):
        raise ContractError(
            f"query dim {query.shape} does not match index dim {index.dim}")
    sims = index.vectors @ query
    order = sorted(range(len(index.ids)),
                   key=lambda i: (-float(sims[i]), index.ids[i]))
    return [(index.ids[i], float(sims[i])) for i in order if index.ids[i] != exclude]


def rank(query, index, exclude=None):
    """Ranked id list (descending cosine similarity, query excluded)."""
    return [i for i, _ in rank_scored(query, index, exclude)]


@dataclass
class RetrievalEval:
    mode: str
    map_score: float
    per_class: dict
    query_aps: dict
    skipped: int
    fallback_rate: float


def evaluate_retrieval(net, samples, classes, mode):
    """Query every image against the rest; relevant = same class.

    Queries whose class has no other member are skipped (and counted).
    Returns mAP, per-class mean AP, per-query APs and the FG fallback rate.
    """
    from .metrics import average_precision, mean_ap

    index = build_index(net, samples, classes, mode)
    by_id = dict(zip(index.ids, index.classes))
    counts = {}
    for c in index.classes:
        counts[c] = counts.get(c, 0) + 1

    query_aps, skipped = {}, 0
    for qid, qvec, qcls in zip(index.ids, index.vectors, index.classes):
        if counts[qcls] < 2:
            skipped += 1
            continue
        ranked = rank(qvec, index, exclude=qid)
        query_aps[qid] = average_precision([by_id[r] == qcls for r in ranked])

    per_class = {}
    for qid, ap in query_aps.items():
        per_class.setdefault(by_id[qid], []).append(ap)
    per_class = {c: mean_ap(v) for c, v in sorted(per_class.items())}
    return RetrievalEval(mode=mode, map_score=mean_ap(list(query_aps.values())),
                         per_class=per_class, query_aps=query_aps, skipped=skipped,
                         fallback_rate=index.fallbacks / max(len(index.ids), 1))


def save_index(index, path):
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "vectors.bin"), "wb") as f:
        f.write(np.ascontiguousarray(index.vectors, dtype="<f4").tobytes())
    lines = [f"fgseg-index 1", f"mode {index.mode}", f"dim {index.dim}",
             f"count {len(index.ids)}"]
    for i, c in zip(index.ids, index.classes):
        lines.append(f"entry {i} {c}")
    with open(os.path.join(path, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


def load_index(path):
    with open(os.path.join(path, "manifest.txt")) as f:
        lines = [ln.split() for ln in f if ln.strip()]
    if not lines or lines[0] != ["fgseg-index", "1"]:
        raise ContractError(f"{path}: not a retrieval index")
    head = {p[0]: p[1] for p in lines[1:4]}
    mode, dim, count = head["mode"], int(head["dim"]), int(head["count"])
    ids = [p[1] for p in lines[4:]]
    classes = [p[2] for p in lines[4:]]
    if len(ids) != count:
        raise ContractError(f"{path}: manifest count {count} but {len(ids)} entries")
    with open(os.path.join(path, "vectors.bin"), "rb") as f:
        vecs = np.frombuffer(f.read(), dtype="<f4").reshape(count, dim)
    return RetrievalIndex(mode=mode, ids=ids, classes=classes,
                          vectors=vecs.astype(np.float32))
