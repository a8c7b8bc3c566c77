"""Dense 4-D tensor layer ops with hand-written backward passes.

Activations and parameters are plain numpy arrays. A "tensor" is a
float array of shape (batch, channels, rows, cols); float32 is used for
training and inference, float64 for gradient checking. Every op here is
a pure function of its arguments (dropout takes its RNG explicitly), so
identical inputs and seeds give bit-identical outputs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

IGNORE_LABEL = 255


@dataclass
class ConvParams:
    """Convolution parameters: weights (out_c, in_c, k, k), bias (out_c,)."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    pad: int = 0
    dilation: int = 1

    def __post_init__(self):
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise ContractError(f"weights must be (out_c, in_c, k, k), got {self.weights.shape}")
        if self.weights.shape[2] % 2 == 0:
            raise ContractError(f"kernel size must be odd, got {self.weights.shape[2]}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ContractError(
                f"bias shape {self.bias.shape} does not match out_c {self.weights.shape[0]}"
            )
        if self.stride < 1 or self.dilation < 1 or self.pad < 0:
            raise ContractError(
                f"invalid stride/pad/dilation: {self.stride}/{self.pad}/{self.dilation}"
            )


def conv_out_size(in_size, kernel, stride, pad, dilation):
    eff = (kernel - 1) * dilation + 1
    return (in_size + 2 * pad - eff) // stride + 1


def _check_conv(x, p):
    if x.ndim != 4:
        raise ContractError(f"conv input must be 4-D (n,c,h,w), got {x.shape}")
    oc, ic, k, _ = p.weights.shape
    if x.shape[1] != ic:
        raise ContractError(f"conv input has {x.shape[1]} channels, weights expect {ic}")
    eff = (k - 1) * p.dilation + 1
    if eff > x.shape[2] + 2 * p.pad or eff > x.shape[3] + 2 * p.pad:
        raise ContractError(
            f"effective kernel {eff} exceeds padded input "
            f"{x.shape[2] + 2 * p.pad}x{x.shape[3] + 2 * p.pad}"
        )


def conv2d(x, p):
    """2-D cross-correlation with stride, zero padding and dilation.

    Output spatial size is floor((in + 2*pad - ((k-1)*dilation + 1)) / stride) + 1.
    """
    _check_conv(x, p)
    n, c, h, w = x.shape
    oc, _, k, _ = p.weights.shape
    s, d = p.stride, p.dilation
    oh = conv_out_size(h, k, s, p.pad, d)
    ow = conv_out_size(w, k, s, p.pad, d)

    xp = np.pad(x, ((0, 0), (0, 0), (p.pad, p.pad), (p.pad, p.pad))) if p.pad else x
    weights = p.weights.astype(x.dtype, copy=False)
    if c <= 4:
        # Narrow inputs: one batched GEMM over the patch matrix beats tap loops.
        sn, sc, sh, sw = xp.strides
        view = np.lib.stride_tricks.as_strided(
            xp, shape=(n, c, k, k, oh, ow),
            strides=(sn, sc, sh * d, sw * d, sh * s, sw * s), writeable=False)
        cols = np.ascontiguousarray(view).reshape(n, c * k * k, oh * ow)
        out = np.matmul(weights.reshape(oc, c * k * k), cols).reshape(n, oc, oh, ow)
    else:
        acc = np.zeros((n, oh, ow, oc), dtype=x.dtype)
        for u in range(k):
            for v in range(k):
                tap = xp[:, :, u * d : u * d + s * (oh - 1) + 1 : s,
                         v * d : v * d + s * (ow - 1) + 1 : s]
                acc += np.tensordot(tap, weights[:, :, u, v], axes=([1], [1]))
        out = np.ascontiguousarray(acc.transpose(0, 3, 1, 2))
    out += p.bias.astype(x.dtype)[:, None, None]
    return out


def conv2d_backward(x, p, out_grad):
    """Adjoint of conv2d: gradients w.r.t. input, weights and bias."""
    _check_conv(x, p)
    n, c, h, w = x.shape
    oc, _, k, _ = p.weights.shape
    s, d = p.stride, p.dilation
    oh = conv_out_size(h, k, s, p.pad, d)
    ow = conv_out_size(w, k, s, p.pad, d)
    if out_grad.shape != (n, oc, oh, ow):
        raise ContractError(
            f"out_grad shape {out_grad.shape} does not match conv output {(n, oc, oh, ow)}"
        )

    xp = np.pad(x, ((0, 0), (0, 0), (p.pad, p.pad), (p.pad, p.pad))) if p.pad else x
    dw = np.empty_like(p.weights, dtype=out_grad.dtype)
    for u in range(k):
        for v in range(k):
            rs = slice(u * d, u * d + s * (oh - 1) + 1, s)
            cs = slice(v * d, v * d + s * (ow - 1) + 1, s)
            dw[:, :, u, v] = np.tensordot(out_grad, xp[:, :, rs, cs],
                                          axes=([0, 2, 3], [0, 2, 3]))
    db = out_grad.sum(axis=(0, 2, 3))

    back_pad = (k - 1) * d - p.pad
    if s == 1 and back_pad >= 0:
        # Stride-1 input grad is itself a convolution: correlate the padded
        # out_grad with the spatially flipped, channel-swapped kernel.
        wt = np.ascontiguousarray(p.weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dx = conv2d(out_grad, ConvParams(wt.astype(out_grad.dtype, copy=False),
                                         np.zeros(c, dtype=out_grad.dtype),
                                         stride=1, pad=back_pad, dilation=d))
    else:
        dxp = np.zeros_like(xp)
        for u in range(k):
            for v in range(k):
                rs = slice(u * d, u * d + s * (oh - 1) + 1, s)
                cs = slice(v * d, v * d + s * (ow - 1) + 1, s)
                t = np.tensordot(out_grad, p.weights[:, :, u, v].astype(out_grad.dtype),
                                 axes=([1], [0]))
                dxp[:, :, rs, cs] += t.transpose(0, 3, 1, 2)
        dx = dxp[:, :, p.pad : p.pad + h, p.pad : p.pad + w] if p.pad else dxp
        dx = np.ascontiguousarray(dx)
    return dx, dw, db


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, out_grad):
    """Masks out_grad where input <= 0 (subgradient 0 at the kink)."""
    return np.where(x > 0, out_grad, 0)


def pool_out_size(in_size, kernel, stride, pad):
    # ceil mode: the last window may extend past the padded input.
    return -((in_size + 2 * pad - kernel) // -stride) + 1


def _check_pool(h, w, kernel, stride, pad):
    if kernel <= pad:
        raise ContractError(f"pool window k={kernel} lies entirely in padding (pad={pad})")
    for size, name in ((h, "rows"), (w, "cols")):
        oh = pool_out_size(size, kernel, stride, pad)
        if (oh - 1) * stride - pad >= size:
            raise ContractError(f"last pool window over {name} lies entirely in padding")


def maxpool(x, kernel, stride, pad):
    """Max pooling with ceil-mode output sizing; padded cells count as -inf.

    Returns (output, argmax_indices) where indices are flat row*w + col
    positions into each input plane; ties go to the lowest flat index.
    """
    n, c, h, w = x.shape
    _check_pool(h, w, kernel, stride, pad)
    oh = pool_out_size(h, kernel, stride, pad)
    ow = pool_out_size(w, kernel, stride, pad)

    ph = max(pad, (oh - 1) * stride + kernel - h - pad)
    pw = max(pad, (ow - 1) * stride + kernel - w - pad)
    xp = np.full((n, c, h + pad + ph, w + pad + pw), -np.inf, dtype=x.dtype)
    xp[:, :, pad : pad + h, pad : pad + w] = x

    taps = np.stack([
        xp[:, :, u : u + stride * (oh - 1) + 1 : stride, v : v + stride * (ow - 1) + 1 : stride]
        for u in range(kernel) for v in range(kernel)
    ])
    win = np.argmax(taps, axis=0)  # first max == lowest (row, col) == lowest flat index
    out = np.max(taps, axis=0)

    base_r = np.arange(oh)[:, None] * stride - pad
    base_c = np.arange(ow)[None, :] * stride - pad
    rows = base_r + win // kernel
    cols = base_c + win % kernel
    indices = rows * w + cols
    return out, indices


def maxpool_backward(input_shape, indices, out_grad, kernel, stride, pad):
    """Routes out_grad back to the argmax positions recorded by maxpool."""
    n, c, h, w = input_shape
    oh, ow = out_grad.shape[2], out_grad.shape[3]
    dx = np.zeros((n, c, h, w), dtype=out_grad.dtype)
    start_r = np.arange(oh) * stride - pad
    start_c = np.arange(ow) * stride - pad
    for u in range(kernel):
        for v in range(kernel):
            rows = start_r + u
            cols = start_c + v
            ri = np.nonzero((rows >= 0) & (rows < h))[0]
            ci = np.nonzero((cols >= 0) & (cols < w))[0]
            if ri.size == 0 or ci.size == 0:
                continue
            rsel = slice(ri[0], ri[-1] + 1)
            csel = slice(ci[0], ci[-1] + 1)
            tap_flat = rows[rsel, None] * w + cols[None, csel]
            hit = indices[:, :, rsel, csel] == tap_flat
            dx[:, :, rows[ri[0]] : rows[ri[-1]] + 1 : stride,
               cols[ci[0]] : cols[ci[-1]] + 1 : stride] += np.where(
                hit, out_grad[:, :, rsel, csel], 0)
    return dx


def dropout(x, rate, train_mode, rng):
    """Inverted dropout: zero with probability rate, scale survivors by 1/(1-rate).

    Eval mode is the identity. Returns (output, keep_mask).
    """
    if not 0 <= rate < 1:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if not train_mode or rate == 0:
        return x, np.ones(x.shape, dtype=bool)
    keep = rng.random(x.shape) >= rate
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    return np.where(keep, x * scale, 0).astype(x.dtype, copy=False), keep


def dropout_backward(keep_mask, rate, out_grad):
    scale = np.asarray(1.0 / (1.0 - rate), dtype=out_grad.dtype)
    return np.where(keep_mask, out_grad * scale, 0)


def _axis_lerp(x, out_len, axis):
    in_len = x.shape[axis]
    if out_len == in_len:
        return x
    xm = np.moveaxis(x, axis, 0)
    if in_len == 1:
        out = np.broadcast_to(xm[:1], (out_len,) + xm.shape[1:])
        return np.moveaxis(out.copy(), 0, axis)
    pos = np.linspace(0.0, in_len - 1, out_len)
    i0 = np.minimum(pos.astype(np.intp), in_len - 2)
    t = (pos - i0).astype(x.dtype).reshape((-1,) + (1,) * (x.ndim - 1))
    a = xm[i0]
    b = xm[i0 + 1]
    out = a + t * (b - a)
    return np.moveaxis(out, 0, axis)


def bilinear_resize(x, out_h, out_w):
    """Corner-aligned bilinear resize over the last two axes.

    The first/last output samples coincide with the first/last input
    pixels, so identity resizes and constant maps are exact.
    """
    if out_h < 1 or out_w < 1:
        raise ContractError(f"output size must be >= 1, got {out_h}x{out_w}")
    x = _axis_lerp(x, out_h, x.ndim - 2)
    return _axis_lerp(x, out_w, x.ndim - 1)


def _axis_lerp_adjoint(g, in_len, axis):
    out_len = g.shape[axis]
    if out_len == in_len:
        return g
    gm = np.moveaxis(g, axis, 0)
    dx = np.zeros((in_len,) + gm.shape[1:], dtype=g.dtype)
    if in_len == 1:
        dx[0] = gm.sum(axis=0)
        return np.moveaxis(dx, 0, axis)
    pos = np.linspace(0.0, in_len - 1, out_len)
    i0 = np.minimum(pos.astype(np.intp), in_len - 2)
    t = (pos - i0).astype(g.dtype).reshape((-1,) + (1,) * (g.ndim - 1))
    np.add.at(dx, i0, (1 - t) * gm)
    np.add.at(dx, i0 + 1, t * gm)
    return np.moveaxis(dx, 0, axis)


def bilinear_resize_backward(input_shape, out_grad):
    """Adjoint of bilinear_resize for an input of the given shape."""
    h, w = input_shape[-2], input_shape[-1]
    g = _axis_lerp_adjoint(out_grad, w, out_grad.ndim - 1)
    return _axis_lerp_adjoint(g, h, g.ndim - 2)


def softmax_xent(logits, labels, reduction="mean"):
    """Per-pixel 2-way softmax cross-entropy with an ignore label.

    logits: (n, 2, h, w); labels: (n, h, w) over {0, 1, IGNORE_LABEL}.
    Returns (loss, logit_grad). Ignored pixels contribute zero loss and
    zero gradient; "mean" divides by the number of contributing pixels.
    """
    if reduction not in ("mean", "sum"):
        raise ContractError(f"unknown reduction {reduction!r}")
    if logits.ndim != 4 or logits.shape[1] != 2:
        raise ContractError(f"logits must be (n,2,h,w), got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],) + logits.shape[2:]:
        raise ContractError(
            f"labels shape {labels.shape} does not match logits spatial {logits.shape}"
        )
    bad = ~np.isin(labels, (0, 1, IGNORE_LABEL))
    if bad.any():
        raise ContractError(f"labels contain values outside {{0,1,{IGNORE_LABEL}}}: "
                            f"{np.unique(labels[bad])}")

    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    logp = z - np.log(denom)
    probs = ez / denom

    contributing = labels != IGNORE_LABEL
    count = int(contributing.sum())
    safe = np.where(contributing, labels, 0).astype(np.intp)
    picked = np.take_along_axis(logp, safe[:, None], axis=1)[:, 0]
    total = -picked[contributing].sum(dtype=np.float64)

    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, safe[:, None], 1.0, axis=1)
    grad = (probs - onehot) * contributing[:, None].astype(logits.dtype)

    if count == 0:
        return 0.0, np.zeros_like(logits)
    if reduction == "mean":
        return float(total / count), (grad / np.asarray(count, dtype=logits.dtype))
    return float(total), grad


def sgd_update(param, grad, velocity, lr, momentum=0.9, weight_decay=5e-4):
    """In-place SGD with momentum: v = m*v + g + wd*p; p -= lr*v."""
    if param.shape != grad.shape or param.shape != velocity.shape:
        raise ContractError(
            f"param/grad/velocity shapes differ: {param.shape}/{grad.shape}/{velocity.shape}"
        )
    velocity *= momentum
    velocity += grad
    if weight_decay:
        velocity += np.asarray(weight_decay, dtype=param.dtype) * param
    param -= np.asarray(lr, dtype=param.dtype) * velocity
