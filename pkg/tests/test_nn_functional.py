import numpy as np
import pytest

import gradchecks
from oracles import (central_diff, conv2d_loops, conv_transpose2d_loops, dense_loops, max_rel_err,
                     maxpool_loops)
from recurrct.errors import ValidationError
from recurrct.nn import functional as F
from recurrct.nn import losses
from recurrct.nn.layers import (Conv2d, ConvTranspose2d, Dense, Flatten, MaxPool2, ReLU, Sequential,
                                Sigmoid, layer_from_spec)
from recurrct.rng import SplitMix64


# ------------------------------------------------------------ worked values

def test_conv_identity_kernel(rng):
    x = rng.normal(size=(1, 3, 3))
    assert np.array_equal(F.conv2d(x, np.ones((1, 1, 1, 1)), np.zeros(1)), x)


def test_conv_sum_of_ones():
    out = F.conv2d(np.ones((1, 4, 4)), np.ones((1, 1, 2, 2)), np.zeros(1), stride=2)
    assert out.tolist() == [[[4.0, 4.0], [4.0, 4.0]]]


def test_conv_matches_loops(rng):
    x = rng.normal(size=(2, 8, 8))
    w, b = rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    for s, p in ((1, 0), (1, 1), (2, 1), (3, 2)):
        assert np.allclose(F.conv2d(x, w, b, s, p), conv2d_loops(x, w, b, s, p), atol=1e-10, rtol=0)


def test_conv_batched_equals_per_sample(rng, monkeypatch):
    x = rng.normal(size=(5, 2, 9, 9))
    w, b = rng.normal(size=(4, 2, 3, 3)), rng.normal(size=4)
    whole = F.conv2d(x, w, b, 2, 1)
    # one-sample chunks; BLAS may round differently for a different GEMM shape
    monkeypatch.setattr(F, "COL_LIMIT", 1)
    chunked = F.conv2d(x, w, b, 2, 1)
    assert np.allclose(whole, chunked, atol=1e-12, rtol=0)
    for i in range(5):
        assert np.allclose(whole[i], conv2d_loops(x[i], w, b, 2, 1), atol=1e-10, rtol=0)


def test_conv_errors(rng):
    with pytest.raises(ValidationError):
        F.conv2d(rng.normal(size=(2, 5, 5)), rng.normal(size=(1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(ValidationError):
        F.conv2d(rng.normal(size=(1, 2, 2)), rng.normal(size=(1, 1, 3, 3)), np.zeros(1))
    with pytest.raises(ValidationError):
        F.conv2d(rng.normal(size=(1, 5, 5)), rng.normal(size=(2, 1, 3, 3)), np.zeros(1))


def test_transpose_identity(rng):
    x = rng.normal(size=(1, 4, 5))
    assert np.array_equal(F.conv_transpose2d(x, np.ones((1, 1, 1, 1)), np.zeros(1)), x)


def test_transpose_replicates_blocks():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    out = F.conv_transpose2d(x, np.ones((1, 1, 2, 2)), np.zeros(1), stride=2)
    assert out.tolist() == [[[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]]


def test_transpose_matches_scatter_loops(rng):
    for _ in range(10):
        c, o = rng.integers(1, 4, size=2)
        k, s = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        p = int(rng.integers(0, k))
        x = rng.normal(size=(c, 4, 5))
        w, b = rng.normal(size=(c, o, k, k)), rng.normal(size=o)
        assert np.allclose(F.conv_transpose2d(x, w, b, s, p), conv_transpose2d_loops(x, w, b, s, p),
                           atol=1e-10, rtol=0)


def test_transpose_output_size():
    assert F.conv_transpose_out_size(14, 2, 2, 0) == 28
    assert F.conv_transpose_out_size(5, 3, 2, 1) == 9


def test_adjoint_identity(rng):
    assert gradchecks.adjoint_gap(rng, n=20) < 1e-9


def test_maxpool_examples(rng):
    out, arg = F.maxpool2(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    assert out.tolist() == [[[4.0]]] and arg.tolist() == [[[3]]]
    assert np.all(F.maxpool2(np.full((2, 4, 6), 7.0))[0] == 7.0)
    x = rng.normal(size=(1, 6, 6))
    assert np.array_equal(F.maxpool2(x)[0], maxpool_loops(x))


def test_maxpool_routes_to_first_maximum():
    x = np.full((1, 2, 2), 1.0)
    _, arg = F.maxpool2(x)
    g = F.maxpool2_backward(np.array([[[5.0]]]), arg)
    assert g.tolist() == [[[5.0, 0.0], [0.0, 0.0]]]


def test_maxpool_odd_extent():
    with pytest.raises(ValidationError, match="even"):
        F.maxpool2(np.zeros((1, 3, 4)))


def test_dense_examples(rng):
    x = rng.normal(size=6)
    assert np.array_equal(F.dense(x, np.eye(6), np.zeros(6)), x)
    assert F.dense(np.array([2.0, 3.0]), np.array([[1.0, 1.0]]), np.array([0.5])).tolist() == [5.5]
    w, b, v = rng.normal(size=(5, 8)), rng.normal(size=5), rng.normal(size=8)
    assert np.allclose(F.dense(v, w, b), dense_loops(v, w, b), atol=1e-12, rtol=0)
    with pytest.raises(ValidationError):
        F.dense(np.ones(3), np.ones((2, 4)), np.zeros(2))


def test_sigmoid_extremes():
    y = F.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert y.tolist() == [0.0, 0.5, 1.0]


# -------------------------------------------------------- gradient checks

@pytest.mark.parametrize("name", sorted(gradchecks.ALL))
def test_finite_difference(name):
    assert gradchecks.ALL[name](np.random.default_rng(7), n=10) < 1e-3


def test_cross_entropy_gradient_tight(rng):
    assert gradchecks.cross_entropy(rng, n=10) < 1e-6


def test_transpose_backward_on_strided_input(rng):
    # batch-first inputs reach the channel-major kernels as transposed views
    x, w, b = rng.normal(size=(3, 2, 4, 4)), rng.normal(size=(2, 3, 2, 2)), rng.normal(size=3)
    g = rng.normal(size=(3, 3, 8, 8))
    gx, _, _ = F.conv_transpose2d_backward(g, x, w, 2, 0)
    num = central_diff(lambda z: np.vdot(F.conv_transpose2d(z, w, b, 2, 0), g), x, 1e-5)
    assert max_rel_err(gx, num) < 1e-6


# ----------------------------------------------------------- Sequential

def small_net():
    net = Sequential([Conv2d(2, 3, 3, 1, 1), ReLU(), MaxPool2(), ConvTranspose2d(3, 2, 2, 2), Sigmoid(),
                      Conv2d(2, 2, 3, 2, 1), ReLU(), Flatten(), Dense(2 * 3 * 3, 4), ReLU(), Dense(4, 2)],
                     input_shape=(2, 6, 6))
    net.init(SplitMix64(3))
    return net


def test_network_shape_chain():
    assert small_net().shape_chain() == [(2, 6, 6), (3, 6, 6), (3, 6, 6), (3, 3, 3), (2, 6, 6), (2, 6, 6),
                                         (2, 3, 3), (2, 3, 3), (18,), (4,), (4,), (2,)]


def test_network_gradients_every_layer_kind(rng):
    net = small_net()
    assert net.n_params() <= 1000
    x = rng.normal(size=(3, 2, 6, 6))
    y = np.array([0, 1, 1])

    def loss_at(params):
        net.set_params(params)
        return losses.cross_entropy(net.forward(x), y)

    base = [p.copy() for p in net.params()]
    _, g = losses.cross_entropy_grad(net.forward(x), y)
    gx = net.backward(g)
    analytic = [a.copy() for a in net.grads()]
    worst = 0.0
    for k, p in enumerate(base):
        def f(z, k=k):
            params = [q.copy() for q in base]
            params[k] = z
            return loss_at(params)
        worst = max(worst, max_rel_err(analytic[k], central_diff(f, p, 1e-5)))
    net.set_params(base)
    num_x = central_diff(lambda z: losses.cross_entropy(net.forward(z), y), x, 1e-5)
    assert worst < 1e-3
    assert max_rel_err(gx, num_x) < 1e-3


def test_dense_cross_entropy_closed_form(rng):
    net = Sequential([Dense(5, 2)], input_shape=(5,))
    net.init(SplitMix64(11))
    x = rng.normal(size=(1, 5))
    logits = net.forward(x)
    _, g = losses.cross_entropy_grad(logits, np.array([1]))
    net.backward(g)
    p = losses.softmax(logits[0])
    expected = np.outer(p - np.array([0.0, 1.0]), x[0])
    assert np.allclose(net.grads()[0], expected, atol=1e-10, rtol=0)


def test_zero_upstream_gradient(rng):
    net = small_net()
    out = net.forward(rng.normal(size=(2, 2, 6, 6)))
    net.backward(np.zeros_like(out))
    assert all(not g.any() for g in net.grads())


def test_backward_before_forward():
    with pytest.raises(RuntimeError, match="before forward"):
        small_net().backward(np.zeros((1, 2)))


def test_forward_is_deterministic(rng):
    net = small_net()
    x = rng.normal(size=(4, 2, 6, 6))
    assert np.array_equal(net.forward(x), net.forward(x))


def test_specs_round_trip():
    net = small_net()
    rebuilt = Sequential([layer_from_spec(s) for s in net.specs()], input_shape=(2, 6, 6))
    assert rebuilt.specs() == net.specs()
    with pytest.raises(ValidationError):
        layer_from_spec({"kind": "Softplus"})


def test_bad_chain_rejected():
    with pytest.raises(ValidationError):
        Sequential([Conv2d(1, 2, 3, 1, 0), MaxPool2()], input_shape=(1, 7, 7))
