"""Mini-batch SGD training loop.

Each iteration samples a batch with replacement, mirrors with
probability 0.5, resizes to the training crop (bilinear image, nearest
label), downsamples labels to the logit grid, and takes one SGD step
with a step-decayed learning rate. All randomness comes from named
streams indexed by iteration, so a run resumed from an archive at
iteration i replays exactly the same batches, flips and dropout masks
as an uninterrupted run.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import data, ops
from .errors import ContractError, TrainingDiverged
from .rng import stream_rng


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 10
    base_lr: float = 0.001
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 2000
    total_iterations: int = 10000
    mirror_prob: float = 0.5
    momentum: float = 0.9
    weight_decay: float = 5e-4
    crop_size: int = 321
    loss_reduction: str = "mean"   # "sum" is the literal per-pixel total
    seed: int = 0


def lr_schedule(cfg, iteration):
    """Step decay: base_lr * factor^(iteration // every)."""
    if iteration < 0:
        raise ContractError(f"iteration must be >= 0, got {iteration}")
    return cfg.base_lr * cfg.lr_decay_factor ** (iteration // cfg.lr_decay_every)


@dataclass(frozen=True)
class LossEntry:
    iteration: int
    lr: float
    loss: float


def _prepared(sample, crop):
    if sample.image.shape[1:] == (crop, crop):
        return sample
    return data.LabeledSample(
        image=data.resize_image(sample.image, crop, crop),
        label=data.resize_label_nearest(sample.label, crop, crop),
        name=sample.name)


def train(net, dataset, cfg, start_iteration=0, on_iteration=None):
    """Run (total_iterations - start_iteration) steps; returns (net, loss log).

    on_iteration, if given, is called with each LossEntry as it is
    produced (the CLI streams the loss log to disk through it).
    """
    if not dataset:
        raise ContractError("dataset is empty")
    crop = cfg.crop_size
    lh, lw = net.config.output_size(crop, crop)
    if lh < 1 or lw < 1:
        raise ContractError(f"crop size {crop} too small for this network")

    # Augmentation is flip-or-identity, so both variants of every sample can
    # be prepared once up front; per-iteration work is then pure indexing.
    # Flip happens before the resize, matching the per-step pipeline order.
    plain = [_prepared(s, crop) for s in dataset]
    flipped = [_prepared(data.LabeledSample(image=s.image[:, :, ::-1].copy(),
                                            label=s.label[:, ::-1].copy(),
                                            name=s.name), crop)
               for s in dataset]
    small_labels = [data.resize_label_nearest(s.label, lh, lw) for s in plain]
    small_flipped = [data.resize_label_nearest(s.label, lh, lw) for s in flipped]

    log = []
    for it in range(start_iteration, cfg.total_iterations):
        ids = stream_rng(cfg.seed, "sample", it).integers(0, len(dataset), cfg.batch_size)
        aug = stream_rng(cfg.seed, "augment", it)
        flip = aug.random(cfg.batch_size) < cfg.mirror_prob
        batch = np.stack([(flipped if f else plain)[i].image for i, f in zip(ids, flip)])
        labels = np.stack([(small_flipped if f else small_labels)[i]
                           for i, f in zip(ids, flip)])

        drop_rng = stream_rng(cfg.seed, "dropout", it)
        logits, cache = net.forward_cache(batch, train_mode=True, rng=drop_rng)
        loss, lgrad = ops.softmax_xent(logits, labels, cfg.loss_reduction)
        lr = lr_schedule(cfg, it)
        if not np.isfinite(loss):
            raise TrainingDiverged(it, lr, ids, loss)
        wg, bg, _ = net.backward(cache, lgrad)
        net.sgd_step(wg, bg, lr, cfg.momentum, cfg.weight_decay)

        entry = LossEntry(it, lr, loss)
        log.append(entry)
        if on_iteration is not None:
            on_iteration(entry)
    return net, log


def format_loss_line(entry):
    return f"{entry.iteration} {entry.lr:.10g} {entry.loss:.9e}"
