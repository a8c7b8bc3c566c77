"""Finite-difference verification of analytic gradients.

The scalar objective is L(x) = <out_grad, f(x)>. Central differences
(f(x+eps) - f(x-eps)) / 2eps are compared per coordinate against the
analytic gradient on a random sample of coordinates. Run everything in
float64: single precision drowns the differences in roundoff.
"""

import numpy as np


def numeric_grad_at(f, x, out_grad, flat_index, eps):
    xp = x.copy()
    xp.flat[flat_index] += eps
    lp = float(np.sum(out_grad * f(xp)))
    xp.flat[flat_index] -= 2 * eps
    lm = float(np.sum(out_grad * f(xp)))
    return (lp - lm) / (2 * eps)


def grad_check(f, x, out_grad, analytic_grad, eps=1e-4, max_samples=200,
               rng=None, checkable=None):
    """Max relative error of analytic_grad vs central finite differences.

    f maps an array like x to an array like out_grad. checkable, if
    given, is a bool mask of coordinates eligible for checking (used to
    exclude relu kinks). Errors below an absolute floor of 1e-6 are
    compared absolutely, otherwise relative to max(|numeric|, |analytic|).
    """
    x = np.asarray(x, dtype=np.float64)
    out_grad = np.asarray(out_grad, dtype=np.float64)
    coords = np.arange(x.size)
    if checkable is not None:
        coords = coords[np.asarray(checkable).ravel()]
    if coords.size == 0:
        return 0.0
    if max_samples is not None and coords.size > max_samples:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(coords, size=max_samples, replace=False)

    worst = 0.0
    for idx in coords:
        num = numeric_grad_at(f, x, out_grad, idx, eps)
        ana = float(analytic_grad.flat[idx])
        scale = max(abs(num), abs(ana))
        err = abs(num - ana) if scale < 1e-6 else abs(num - ana) / scale
        worst = max(worst, err)
    return worst
