import numpy as np
import pytest

from gradcheck import numeric_grad, rel_error
from sefdm_cnn.cnn import layers

TOL = 1e-4


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def check(forward, backward, inputs, rng, wrt):
    """Compare analytic gradients of sum(out * R) against finite differences."""
    out = forward()
    r = rng.standard_normal(out.shape)
    analytic = backward(r)
    for name, arr in wrt.items():
        num = numeric_grad(lambda: np.sum(forward() * r), arr)
        assert rel_error(analytic[name], num) < TOL, name


@pytest.mark.parametrize("k", [1, 3, 4, 7])
def test_conv_gradients(rng, k):
    x = rng.standard_normal((2, 9, 3))
    w = rng.standard_normal((k, 3, 4))
    b = rng.standard_normal(4)

    def fwd():
        return layers.conv_forward(x, w, b)[0]

    def bwd(dout):
        dx, dw, db = layers.conv_backward(dout, layers.conv_forward(x, w, b)[1])
        return {"x": dx, "w": dw, "b": db}
    check(fwd, bwd, None, rng, {"x": x, "w": w, "b": b})


def test_conv_matches_direct_correlation(rng):
    x = rng.standard_normal((1, 10, 2))
    w = rng.standard_normal((3, 2, 1))
    out = layers.conv_forward(x, w, np.zeros(1))[0][0, :, 0]
    xp = np.pad(x[0], ((1, 1), (0, 0)))
    expect = [np.sum(xp[i:i + 3] * w[:, :, 0]) for i in range(10)]
    assert np.allclose(out, expect)


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((3, 16, 1))
    out = layers.conv_forward(x, np.ones((1, 1, 1)), np.zeros(1))[0]
    assert np.array_equal(out, x)


def test_batchnorm_gradients(rng):
    x = rng.standard_normal((3, 5, 4)) * 3 + 1
    g = rng.standard_normal(4)
    b = rng.standard_normal(4)

    def fwd():
        return layers.batchnorm_forward(x, g, b, 1e-5)[0]

    def bwd(dout):
        dx, dg, db = layers.batchnorm_backward(dout, layers.batchnorm_forward(x, g, b, 1e-5)[1])
        return {"x": dx, "g": dg, "b": db}
    check(fwd, bwd, None, rng, {"x": x, "g": g, "b": b})


def test_batchnorm_normalises(rng):
    x = rng.standard_normal((16, 32, 5)) * 4 + 7
    y, cache = layers.batchnorm_forward(x, np.ones(5), np.zeros(5), 1e-5)
    xhat = cache[0]
    assert np.allclose(xhat.mean(axis=(0, 1)), 0, atol=1e-6)
    assert np.allclose(xhat.var(axis=(0, 1)), 1, atol=1e-4)


def test_maxpool_gradients_and_window_property(rng):
    x = rng.standard_normal((2, 9, 3))

    def fwd():
        return layers.maxpool_forward(x, 2)[0]

    def bwd(dout):
        return {"x": layers.maxpool_backward(dout, layers.maxpool_forward(x, 2)[1])}
    check(fwd, bwd, None, rng, {"x": x})
    out = fwd()
    windows = x[:, :8].reshape(2, 4, 2, 3)
    assert np.all(out[:, :, None, :] >= windows)


def test_maxpool_ties_route_to_lowest_index():
    x = np.ones((1, 4, 1))
    out, cache = layers.maxpool_forward(x, 2)
    dx = layers.maxpool_backward(np.ones_like(out), cache)
    assert list(dx[0, :, 0]) == [1, 0, 1, 0]


def test_global_avgpool(rng):
    x = rng.standard_normal((2, 6, 3))
    out, shape = layers.global_avgpool_forward(x)
    assert np.allclose(out, x.mean(axis=1))

    def fwd():
        return layers.global_avgpool_forward(x)[0]

    def bwd(dout):
        return {"x": layers.global_avgpool_backward(dout, x.shape)}
    check(fwd, bwd, None, rng, {"x": x})


def test_relu_gradients(rng):
    x = rng.standard_normal((2, 7, 3))
    x[np.abs(x) < 1e-3] = 0.5

    def fwd():
        return layers.relu_forward(x)[0]

    def bwd(dout):
        return {"x": layers.relu_backward(dout, layers.relu_forward(x)[1])}
    check(fwd, bwd, None, rng, {"x": x})


def test_dense_gradients(rng):
    x = rng.standard_normal((4, 6))
    w = rng.standard_normal((6, 3))
    b = rng.standard_normal(3)

    def fwd():
        return layers.dense_forward(x, w, b)[0]

    def bwd(dout):
        dx, dw, db = layers.dense_backward(dout, x, w)
        return {"x": dx, "w": dw, "b": db}
    check(fwd, bwd, None, rng, {"x": x, "w": w, "b": b})


def test_dropout_gradient_with_fixed_mask(rng):
    x = rng.standard_normal((4, 10))

    def fwd():
        return layers.dropout_forward(x, 0.5, np.random.default_rng(3))[0]

    def bwd(dout):
        return {"x": layers.dropout_backward(dout, layers.dropout_forward(x, 0.5, np.random.default_rng(3))[1])}
    check(fwd, bwd, None, rng, {"x": x})


def test_dropout_statistics(rng):
    x = np.ones((10**4, 8))
    y, mask = layers.dropout_forward(x, 0.5, rng)
    assert y.mean() == pytest.approx(1.0, rel=0.02)
    assert set(np.unique(mask)) == {0.0, 2.0}
    same, none = layers.dropout_forward(x, 0.5, None)
    assert same is x and none is None


def test_cross_entropy_values():
    loss, _ = layers.cross_entropy(np.zeros((3, 4)), np.array([0, 1, 3]))
    assert loss == pytest.approx(np.log(4), abs=1e-12)
    logits = np.zeros((2, 4))
    logits[[0, 1], [2, 1]] = 1e6
    assert layers.cross_entropy(logits, np.array([2, 1]))[0] == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_gradient(rng):
    logits = rng.standard_normal((5, 4))
    labels = rng.integers(0, 4, 5)
    _, grad = layers.cross_entropy(logits, labels)
    num = numeric_grad(lambda: layers.cross_entropy(logits, labels)[0], logits)
    assert rel_error(grad, num) < 1e-6
    p = layers.softmax(logits)
    onehot = np.eye(4)[labels]
    assert np.allclose(grad, (p - onehot) / 5)


def test_softmax_shift_invariance(rng):
    z = rng.standard_normal((3, 7))
    p = layers.softmax(z)
    assert np.allclose(p.sum(axis=1), 1, atol=1e-12)
    assert np.allclose(layers.softmax(z + 123.4), p, atol=1e-12)
