import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfmlab import nn
from cfmlab.nn import ParamStore, Tensor, adam_step, grad_check

SEEDS = range(20)


def fd_grad(fn, x, h=1e-5):
    """Independent central-difference gradient of scalar fn(ndarray)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = fn(x)
        x[idx] = orig - h
        fm = fn(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def max_rel(a, b):
    return float(nn.relative_error(a, b).max())


# -- dense ------------------------------------------------------------------
def test_dense_identity():
    y = nn.dense(Tensor([[1.0, 2.0]]), Tensor(np.eye(2)), Tensor([0.0, 0.0]))
    np.testing.assert_array_equal(y.data, [[1.0, 2.0]])


def test_dense_forced():
    y = nn.dense(Tensor([[1.0, 0.0]]), Tensor([[2.0, 3.0], [5.0, 7.0]]), Tensor([1.0, 1.0]))
    np.testing.assert_array_equal(y.data, [[3.0, 4.0]])


def test_dense_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        nn.dense(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))), Tensor(np.zeros(2)))


def test_dense_weight_grad_is_column_broadcast_of_x():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 4))
    W = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    b = Tensor(np.zeros(5), requires_grad=True)
    nn.dense(Tensor(x), W, b).sum().backward()
    expected = np.repeat(x.sum(axis=0)[:, None], 5, axis=1)
    np.testing.assert_allclose(W.grad, expected, rtol=1e-12)
    Wd = W.data.copy()
    fd = fd_grad(lambda w: float((x @ w).sum()), Wd)
    assert max_rel(W.grad, fd) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_dense_grads_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    B, i, o = rng.integers(1, 5, size=3)
    x, W, b = rng.normal(size=(B, i)), rng.normal(size=(i, o)), rng.normal(size=o)
    r = rng.normal(size=(B, o))
    tx, tW, tb = (Tensor(a.copy(), requires_grad=True) for a in (x, W, b))
    (nn.dense(tx, tW, tb) * Tensor(r)).sum().backward()
    assert max_rel(tx.grad, fd_grad(lambda v: float(((v @ W + b) * r).sum()), x.copy())) < 1e-4
    assert max_rel(tW.grad, fd_grad(lambda v: float(((x @ v + b) * r).sum()), W.copy())) < 1e-4
    assert max_rel(tb.grad, fd_grad(lambda v: float(((x @ W + v) * r).sum()), b.copy())) < 1e-4


# -- conv -------------------------------------------------------------------
def naive_conv(x, k, stride, pad):
    """Loop-based cross-correlation oracle."""
    B, C, H, W = x.shape
    F, _, kk, _ = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (H + 2 * pad - kk) // stride + 1
    wo = (W + 2 * pad - kk) // stride + 1
    out = np.zeros((B, F, ho, wo))
    for b in range(B):
        for f in range(F):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[b, :, i * stride : i * stride + kk, j * stride : j * stride + kk]
                    out[b, f, i, j] = np.sum(patch * k[f])
    return out


def test_conv_identity_kernel():
    x = np.random.default_rng(1).normal(size=(2, 1, 5, 5))
    y = nn.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), stride=1, pad=0)
    np.testing.assert_array_equal(y.data, x)


def test_conv_ones():
    y = nn.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert y.shape == (1, 1, 1, 1)
    assert y.data.item() == 9.0


def test_conv_nonpositive_output():
    with pytest.raises(ValueError, match="not positive"):
        nn.conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 4, 4))), stride=1, pad=0)


@pytest.mark.parametrize("k,stride,pad", [(3, 1, 1), (4, 2, 1), (3, 2, 0), (1, 1, 0)])
def test_conv_matches_naive(k, stride, pad):
    rng = np.random.default_rng(k * 10 + stride)
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, k, k))
    np.testing.assert_allclose(nn.conv2d(Tensor(x), Tensor(w), stride=stride, pad=pad).data,
                               naive_conv(x, w, stride, pad), rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_grads_match_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    k, stride = [(3, 1), (4, 2)][seed % 2]
    C, F = rng.integers(1, 3, size=2)
    x = rng.normal(size=(2, C, 6, 6))
    w = rng.normal(size=(F, C, k, k))
    b = rng.normal(size=F)
    tx, tw, tb = (Tensor(a.copy(), requires_grad=True) for a in (x, w, b))
    y = nn.conv2d(tx, tw, tb, stride=stride, pad=1)
    r = rng.normal(size=y.shape)
    (y * Tensor(r)).sum().backward()

    def loss(xx, ww, bb):
        return float(((naive_conv(xx, ww, stride, 1) + bb[None, :, None, None]) * r).sum())

    assert max_rel(tx.grad, fd_grad(lambda v: loss(v, w, b), x.copy())) < 1e-4
    assert max_rel(tw.grad, fd_grad(lambda v: loss(x, v, b), w.copy())) < 1e-4
    assert max_rel(tb.grad, fd_grad(lambda v: loss(x, w, v), b.copy())) < 1e-4


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_transpose_is_adjoint_and_grads(seed):
    rng = np.random.default_rng(200 + seed)
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(2, 3, 4, 4))
    y = rng.normal(size=(2, 2, 4, 4))
    # <conv(x), y> == <x, conv_T(y)>
    lhs = np.sum(nn.conv2d(Tensor(x), Tensor(w), stride=2, pad=1).data * y)
    ct = nn.conv_transpose2d(Tensor(y), Tensor(w), stride=2, pad=1)
    assert ct.shape == x.shape
    assert abs(lhs - np.sum(x * ct.data)) < 1e-9 * max(1.0, abs(lhs))

    b = rng.normal(size=3)
    ty, tw, tb = (Tensor(a.copy(), requires_grad=True) for a in (y, w, b))
    (nn.conv_transpose2d(ty, tw, tb, stride=2, pad=1) * Tensor(x)).sum().backward()

    def loss(yy, ww, bb):
        return float((nn.conv_transpose2d(Tensor(yy), Tensor(ww), Tensor(bb), stride=2, pad=1).data * x).sum())

    assert max_rel(ty.grad, fd_grad(lambda v: loss(v, w, b), y.copy())) < 1e-4
    assert max_rel(tw.grad, fd_grad(lambda v: loss(y, v, b), w.copy())) < 1e-4
    assert max_rel(tb.grad, fd_grad(lambda v: loss(y, w, v), b.copy())) < 1e-4


# -- leaky relu ---------------------------------------------------------------
@pytest.mark.parametrize("x,expected", [(2.0, 2.0), (-1.0, -0.01), (0.0, 0.0)])
def test_leaky_relu_values(x, expected):
    assert nn.leaky_relu(Tensor(np.array([x])), 0.01).data[0] == pytest.approx(expected, abs=0)


def test_leaky_relu_gradient_convention():
    t = Tensor(np.array([2.0, -1.0, 0.0]), requires_grad=True)
    nn.leaky_relu(t, 0.01).sum().backward()
    np.testing.assert_array_equal(t.grad, [1.0, 0.01, 0.01])


def test_leaky_relu_slope_validated():
    with pytest.raises(ValueError):
        nn.leaky_relu(Tensor([1.0]), 1.5)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.floats(0.001, 0.999))
def test_leaky_relu_is_max(xs, slope):
    x = np.array(xs)
    np.testing.assert_array_equal(nn.leaky_relu(Tensor(x), slope).data, np.where(x > 0, x, slope * x))


# -- misc ops ------------------------------------------------------------------
@pytest.mark.parametrize("seed", SEEDS)
def test_composite_ops_gradcheck(seed):
    rng = np.random.default_rng(300 + seed)
    store = ParamStore(np.float64)
    store.add("a", rng.normal(size=(3, 4)))
    store.add("b", rng.normal(size=(4,)))

    def f(p):
        a, b = p["a"], p["b"]
        z = nn.concat([a * b, (a - b) ** 2], axis=1)
        return nn.logsumexp(z, axis=1).mean() + nn.exp(a * 0.1).sum() + nn.log(b * b + 1.0).sum()

    assert grad_check(f, store) < 1e-4


def test_logsumexp_permutation_bit_identical():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 64)) * 10
    a = nn.logsumexp(Tensor(x), axis=1).data
    b = nn.logsumexp(Tensor(x[:, rng.permutation(64)]), axis=1).data
    assert a.tobytes() == b.tobytes()


def test_nonfinite_is_hard_error():
    with pytest.raises(nn.NonFiniteError), np.errstate(invalid="ignore"):
        nn.log(Tensor(np.array([-1.0])))


def test_forward_deterministic():
    rng = np.random.default_rng(5)
    x, w = rng.normal(size=(2, 3, 8, 8)), rng.normal(size=(4, 3, 4, 4))
    a = nn.conv2d(Tensor(x), Tensor(w), stride=2, pad=1).data
    b = nn.conv2d(Tensor(x), Tensor(w), stride=2, pad=1).data
    assert a.tobytes() == b.tobytes()


# -- adam ----------------------------------------------------------------------
def test_adam_zero_grads_identity():
    store = ParamStore(np.float64)
    store.add("w", np.array([1.0, -2.0]))
    before = store["w"].data.copy()
    for _ in range(50):
        store.zero_grad()
        adam_step(store)
    np.testing.assert_array_equal(store["w"].data, before)
    assert store.step == 50


def test_adam_first_step_is_lr():
    store = ParamStore(np.float64)
    store.add("w", np.array(0.0))
    store["w"].grad = np.array(1.0)
    adam_step(store, lr=0.1)
    assert store["w"].data == pytest.approx(-0.1, abs=1e-8)
    np.testing.assert_array_equal(store["w"].grad, 0.0)


def test_adam_uninitialized_grad():
    store = ParamStore()
    store.add("w", np.zeros(3))
    with pytest.raises(RuntimeError, match="uninitialized"):
        adam_step(store)


def test_adam_quadratic_matches_scalar_oracle():
    # pure-python Adam on f(w)=w^2, 100 steps, lr 1e-2 -> 0.2244460452318788
    store = ParamStore(np.float64)
    store.add("w", np.array(1.0))
    for _ in range(100):
        (store["w"] * store["w"]).backward()
        adam_step(store, lr=1e-2)
    w = float(store["w"].data)
    assert abs(w) < 0.5
    assert w == pytest.approx(0.2244460452318788, abs=1e-12)


def test_paramstore_duplicate_names():
    store = ParamStore()
    store.add("w", np.zeros(1))
    with pytest.raises(KeyError):
        store.add("w", np.zeros(1))


# -- grad_check ----------------------------------------------------------------
def test_grad_check_sum_of_squares():
    store = ParamStore(np.float64)
    store.add("p", np.random.default_rng(0).normal(size=(4, 3)))
    assert grad_check(lambda p: (p["p"] * p["p"]).sum(), store, h=1e-5) < 1e-6


def test_grad_check_constant_function():
    store = ParamStore(np.float64)
    store.add("p", np.ones(3))
    assert grad_check(lambda p: Tensor(np.array(3.0)), store) == 0.0


def test_glorot_bounds():
    rng = np.random.default_rng(0)
    store = ParamStore()
    nn.init_dense(store, rng, "fc", 10, 6)
    lim = math.sqrt(6 / 16)
    assert np.abs(store["fc.W"].data).max() <= lim
    assert not store["fc.b"].data.any()
