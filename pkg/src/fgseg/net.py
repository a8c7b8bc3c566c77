"""Two-class foreground/background segmentation network.

Builds the fixed layer stacks (presets "paper" and "toy"), runs forward
inference to a per-pixel objectness probability map at input resolution,
and exposes the intermediate taps used for activation heatmaps and
retrieval features.

Presets share the same recipe: stacks of 3x3 convolutions (each followed
by relu) with 3x3 max pools between stacks. Pools that keep stride 1
preserve resolution, and the convolutions after them use dilated kernels
to keep the receptive field growing. The classifier head ends in a 1x1
convolution with 2 output channels ("background", "object").
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ContractError
from .rng import stream_rng

CONV, POOL, DROPOUT = "conv", "pool", "dropout"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    channels: int = 0      # conv output channels
    kernel: int = 0        # conv/pool kernel size
    stride: int = 1        # pool stride (convs here are always stride 1)
    pad: int = 0
    dilation: int = 1
    relu: bool = False
    rate: float = 0.0      # dropout rate


def _conv(channels, kernel=3, dilation=1, relu=True):
    # 3x3 convs pad to preserve size (pad = dilation); 1x1 convs pad 0.
    pad = ((kernel - 1) // 2) * dilation
    return LayerSpec(CONV, channels=channels, kernel=kernel, pad=pad,
                     dilation=dilation, relu=relu)


def _pool(stride):
    return LayerSpec(POOL, kernel=3, stride=stride, pad=1)


def _dropout(rate):
    return LayerSpec(DROPOUT, rate=rate)


@dataclass(frozen=True)
class NetworkConfig:
    preset: str
    layers: tuple
    in_channels: int = 3
    eval_size: int = 321        # canonical square input for feature extraction
    activation_tap: int = -1    # layer index of the last pooling stage
    feature_tap: int = -1       # layer index of the last shared feature conv

    def __post_init__(self):
        convs = [l for l in self.layers if l.kind == CONV]
        if not convs or convs[-1].channels != 2 or convs[-1].relu:
            raise ContractError("final layer must be a linear conv emitting 2 channels")
        if self.layers[-1].kind != CONV:
            raise ContractError("network must end with its classifier conv")

    def output_size(self, h, w):
        """Spatial size of the logit map for an h x w input."""
        for l in self.layers:
            if l.kind == CONV:
                h = ops.conv_out_size(h, l.kernel, 1, l.pad, l.dilation)
                w = ops.conv_out_size(w, l.kernel, 1, l.pad, l.dilation)
            elif l.kind == POOL:
                h = ops.pool_out_size(h, l.kernel, l.stride, l.pad)
                w = ops.pool_out_size(w, l.kernel, l.stride, l.pad)
        return h, w

    def param_count(self):
        total, c = 0, self.in_channels
        for l in self.layers:
            if l.kind == CONV:
                total += l.channels * c * l.kernel * l.kernel + l.channels
                c = l.channels
        return total


def paper_config():
    """Full-size preset: 16 convs, output stride 8 (321 -> 41)."""
    layers = (
        _conv(64), _conv(64), _pool(2),
        _conv(128), _conv(128), _pool(2),
        _conv(256), _conv(256), _conv(256), _pool(2),
        _conv(512), _conv(512), _conv(512), _pool(1),
        _conv(512, dilation=2), _conv(512, dilation=2), _conv(512, dilation=2), _pool(1),
        _conv(1024, dilation=12), _dropout(0.5),
        _conv(1024, kernel=1), _dropout(0.5),
        _conv(2, kernel=1, relu=False),
    )
    return NetworkConfig("paper", layers, eval_size=321,
                         activation_tap=17, feature_tap=20)


def toy_config():
    """Desk-scale preset: 9 convs, output stride 4, trains in minutes on CPU."""
    layers = (
        _conv(16), _conv(16), _pool(2),
        _conv(32), _conv(32), _pool(2),
        _conv(64), _conv(64), _conv(64, dilation=2), _pool(1),
        _conv(64, dilation=12), _dropout(0.5),
        _conv(2, kernel=1, relu=False),
    )
    return NetworkConfig("toy", layers, eval_size=65,
                         activation_tap=9, feature_tap=10)


_PRESETS = {"paper": paper_config, "toy": toy_config}


def preset_config(name):
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ContractError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")


class Network:
    """A built layer stack with its parameters and optimizer state.

    In eval mode the network is effectively immutable and safe for
    concurrent forward calls; training-mode calls mutate RNG and
    parameters and require exclusive access.
    """

    def __init__(self, config):
        self.config = config
        self.weights = [None] * len(config.layers)
        self.biases = [None] * len(config.layers)
        self.w_vel = [None] * len(config.layers)
        self.b_vel = [None] * len(config.layers)

    def conv_layers(self):
        return [i for i, l in enumerate(self.config.layers) if l.kind == CONV]

    def _conv_params(self, i, dtype):
        l = self.config.layers[i]
        return ops.ConvParams(self.weights[i].astype(dtype, copy=False),
                              self.biases[i].astype(dtype, copy=False),
                              stride=1, pad=l.pad, dilation=l.dilation)

    def forward(self, x, train_mode=False, rng=None, taps=()):
        """Run the stack; returns logits, or (logits, {tap_index: activation})."""
        out, _ = self._forward_impl(x, train_mode, rng, set(taps), keep_cache=False)
        if taps:
            return out[0], out[1]
        return out[0]

    def forward_cache(self, x, train_mode, rng):
        """Forward pass retaining everything backward() needs."""
        out, cache = self._forward_impl(x, train_mode, rng, set(), keep_cache=True)
        return out[0], cache

    def _forward_impl(self, x, train_mode, rng, taps, keep_cache):
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ContractError(
                f"input must be (n,{self.config.in_channels},h,w), got {x.shape}")
        if train_mode and rng is None:
            raise ContractError("train-mode forward needs an explicit rng for dropout")
        a = x
        cache = []
        tapped = {}
        for i, l in enumerate(self.config.layers):
            if l.kind == CONV:
                pre = ops.conv2d(a, self._conv_params(i, a.dtype))
                post = ops.relu(pre) if l.relu else pre
                if keep_cache:
                    cache.append((CONV, i, a, pre if l.relu else None))
                a = post
            elif l.kind == POOL:
                out, idx = ops.maxpool(a, l.kernel, l.stride, l.pad)
                if keep_cache:
                    cache.append((POOL, i, a.shape, idx))
                a = out
            else:
                a, mask = ops.dropout(a, l.rate, train_mode, rng)
                if keep_cache:
                    cache.append((DROPOUT, i, mask, l.rate))
            if i in taps:
                tapped[i] = a
        result = (a, tapped) if taps else (a, None)
        return result, cache

    def backward(self, cache, logit_grad):
        """Adjoint pass; returns (weight_grads, bias_grads, input_grad)."""
        wg = [None] * len(self.config.layers)
        bg = [None] * len(self.config.layers)
        g = logit_grad
        for entry in reversed(cache):
            kind, i = entry[0], entry[1]
            l = self.config.layers[i]
            if kind == CONV:
                _, _, inp, pre = entry
                if l.relu:
                    g = ops.relu_backward(pre, g)
                g, wg[i], bg[i] = ops.conv2d_backward(inp, self._conv_params(i, g.dtype), g)
            elif kind == POOL:
                _, _, shape, idx = entry
                g = ops.maxpool_backward(shape, idx, g, l.kernel, l.stride, l.pad)
            else:
                _, _, mask, rate = entry
                g = ops.dropout_backward(mask, rate, g)
        return wg, bg, g

    def sgd_step(self, weight_grads, bias_grads, lr, momentum=0.9, weight_decay=5e-4):
        for i in self.conv_layers():
            ops.sgd_update(self.weights[i], weight_grads[i].astype(self.weights[i].dtype),
                           self.w_vel[i], lr, momentum, weight_decay)
            ops.sgd_update(self.biases[i], bias_grads[i].astype(self.biases[i].dtype),
                           self.b_vel[i], lr, momentum, 0.0)

    def astype(self, dtype):
        """Copy of this network with parameters cast (float64 for grad checks)."""
        net = Network(self.config)
        for i in self.conv_layers():
            net.weights[i] = self.weights[i].astype(dtype)
            net.biases[i] = self.biases[i].astype(dtype)
            net.w_vel[i] = self.w_vel[i].astype(dtype)
            net.b_vel[i] = self.b_vel[i].astype(dtype)
        return net


def build_network(config, rng=None, seed=0):
    """Allocate and randomly initialize a network (He-normal weights, zero bias)."""
    if rng is None:
        rng = stream_rng(seed, "init")
    net = Network(config)
    c = config.in_channels
    for i, l in enumerate(config.layers):
        if l.kind != CONV:
            continue
        fan_in = c * l.kernel * l.kernel
        std = np.sqrt(2.0 / fan_in)
        net.weights[i] = (rng.standard_normal(
            (l.channels, c, l.kernel, l.kernel)) * std).astype(np.float32)
        net.biases[i] = np.zeros(l.channels, dtype=np.float32)
        net.w_vel[i] = np.zeros_like(net.weights[i])
        net.b_vel[i] = np.zeros_like(net.biases[i])
        c = l.channels
    return net


def softmax_channels(logits):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def predict_objectness(net, image):
    """Foreground probability map at image resolution.

    image: (3, h, w) float32, already normalized like the training data.
    Returns an (h, w) float32 map in [0, 1].
    """
    if image.ndim != 3:
        raise ContractError(f"image must be (c,h,w), got {image.shape}")
    h, w = image.shape[1], image.shape[2]
    logits = net.forward(image[None])
    probs = softmax_channels(logits)[0, 1]
    return ops.bilinear_resize(probs, h, w).astype(np.float32)


def activation_map(net, image):
    """Channel-summed response after the last pooling stage, min-max normalized.

    Returns an (h, w) float32 heatmap in [0, 1] at image resolution
    (all zeros when the response is constant).
    """
    if image.ndim != 3:
        raise ContractError(f"image must be (c,h,w), got {image.shape}")
    h, w = image.shape[1], image.shape[2]
    _, tapped = net.forward(image[None], taps=(net.config.activation_tap,))
    heat = tapped[net.config.activation_tap][0].sum(axis=0)
    heat = ops.bilinear_resize(heat, h, w)
    lo, hi = float(heat.min()), float(heat.max())
    if hi - lo <= 0:
        return np.zeros((h, w), dtype=np.float32)
    return ((heat - lo) / (hi - lo)).astype(np.float32)
