import numpy as np

from fgseg import ops
from fgseg.gradcheck import grad_check
from fgseg.ops import ConvParams

TOL = 1e-4


def test_linear_op_error_at_machine_eps():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 2, 4, 4))
    p = ConvParams(rng.standard_normal((3, 2, 1, 1)), rng.standard_normal(3))
    og = rng.standard_normal((1, 3, 4, 4))
    dx, _, _ = ops.conv2d_backward(x, p, og)
    err = grad_check(lambda a: ops.conv2d(a, p), x, og, dx, max_samples=None)
    assert err < 1e-8


def test_conv_input_grad_dilated_matches_spec_tolerance():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 2, 4, 4))
    p = ConvParams(rng.standard_normal((2, 2, 3, 3)), rng.standard_normal(2),
                   pad=2, dilation=2)
    og = rng.standard_normal(ops.conv2d(x, p).shape)
    dx, _, _ = ops.conv2d_backward(x, p, og)
    err = grad_check(lambda a: ops.conv2d(a, p), x, og, dx, max_samples=None)
    assert err < 1e-5


def test_conv_weight_and_bias_grads():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((2, 3, 3, 3))
    b = rng.standard_normal(2)
    p = ConvParams(w, b, pad=1)
    og = rng.standard_normal(ops.conv2d(x, p).shape)
    _, dw, db = ops.conv2d_backward(x, p, og)

    def f_w(wv):
        return ops.conv2d(x, ConvParams(wv, b, pad=1))

    def f_b(bv):
        return ops.conv2d(x, ConvParams(w, bv, pad=1))

    assert grad_check(f_w, w, og, dw, max_samples=None) < TOL
    assert grad_check(f_b, b, og, db, max_samples=None) < TOL


def test_relu_with_kink_excluded():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 5, 5))
    og = rng.standard_normal(x.shape)
    ana = ops.relu_backward(x, og)
    checkable = np.abs(x) > 10 * 1e-4
    err = grad_check(lambda a: ops.relu(a), x, og, ana,
                     max_samples=None, checkable=checkable)
    assert err < TOL


def test_maxpool_grad():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((1, 2, 7, 7))
    _, idx = ops.maxpool(x, 3, 2, 1)
    og = rng.standard_normal(ops.maxpool(x, 3, 2, 1)[0].shape)
    ana = ops.maxpool_backward(x.shape, idx, og, 3, 2, 1)
    err = grad_check(lambda a: ops.maxpool(a, 3, 2, 1)[0], x, og, ana, max_samples=None)
    assert err < TOL


def test_bilinear_grad():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((1, 2, 5, 6))
    og = rng.standard_normal((1, 2, 9, 4))
    ana = ops.bilinear_resize_backward(x.shape, og)
    err = grad_check(lambda a: ops.bilinear_resize(a, 9, 4), x, og, ana, max_samples=None)
    assert err < TOL


def test_softmax_xent_grad_fd():
    rng = np.random.default_rng(6)
    logits = rng.standard_normal((1, 2, 2, 2))
    labels = np.array([[[0, 1], [255, 1]]])
    _, ana = ops.softmax_xent(logits, labels, "mean")

    def f(lv):
        return np.array(ops.softmax_xent(lv, labels, "mean")[0])

    err = grad_check(f, logits, np.ones(1), ana, max_samples=None)
    assert err < 1e-6


def test_conv_relu_pool_xent_stack():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1, 3, 9, 9))
    p1 = ConvParams(rng.standard_normal((4, 3, 3, 3)) * 0.5, rng.standard_normal(4), pad=1)
    p2 = ConvParams(rng.standard_normal((2, 4, 1, 1)) * 0.5, rng.standard_normal(2))
    labels = rng.integers(0, 2, size=(1, 5, 5))

    def loss_of(xv):
        a = ops.conv2d(xv, p1)
        r = ops.relu(a)
        pooled, _ = ops.maxpool(r, 3, 2, 1)
        logits = ops.conv2d(pooled, p2)
        return np.array(ops.softmax_xent(logits, labels)[0])

    a = ops.conv2d(x, p1)
    r = ops.relu(a)
    pooled, idx = ops.maxpool(r, 3, 2, 1)
    logits = ops.conv2d(pooled, p2)
    _, lgrad = ops.softmax_xent(logits, labels)
    g, _, _ = ops.conv2d_backward(pooled, p2, lgrad)
    g = ops.maxpool_backward(r.shape, idx, g, 3, 2, 1)
    g = ops.relu_backward(a, g)
    dx, _, _ = ops.conv2d_backward(x, p1, g)

    checkable = np.ones(x.shape, dtype=bool)  # relu kinks at conv outputs, not x
    err = grad_check(loss_of, x, np.ones(1), dx, max_samples=150,
                     rng=np.random.default_rng(0), checkable=checkable)
    assert err < TOL
