from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgrgen.tensor import (
    DoubleBackward,
    EmptyMask,
    Rng,
    ShapeMismatch,
    Tensor,
    add,
    backward,
    causal_dilated_conv1d,
    concat,
    concat_channels,
    cross_entropy,
    dropout,
    getitem,
    log_softmax,
    matmul,
    mean_all,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    sum_all,
    tanh,
)
from oracles import check_grads

SEEDS = (0, 1, 2)
TOL = 1e-4


def leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)


def weighted(y, rng):
    """Scalar loss with a fixed random cotangent so every output matters."""
    w = Tensor(rng.normal(size=y.shape), dtype=np.float64)
    return sum_all(mul(y, w))


# ------------------------------------------------------------ forward values


def test_identity_matmul():
    a = np.arange(6.0).reshape(2, 3)
    out = matmul(Tensor(np.eye(2)), Tensor(a))
    np.testing.assert_array_equal(out.data, a)
    assert matmul(Tensor([[3.0]]), Tensor([[4.0]])).data[0, 0] == 12.0


def test_conv_direct_example():
    x = Tensor(np.array([1.0, 2.0, 3.0, 4.0])[:, None])
    w = Tensor(np.ones((2, 1, 1)))
    y = causal_dilated_conv1d(x, w, Tensor(np.zeros(1)), dilation=2)
    np.testing.assert_array_equal(y.data[:, 0], [1.0, 2.0, 4.0, 6.0])


@pytest.mark.parametrize("d", [1, 2, 3, 7])
def test_conv_identity_kernel(d):
    x = np.random.default_rng(d).normal(size=(5, 3))
    w = np.zeros((2, 3, 3))
    w[0] = np.eye(3)
    y = causal_dilated_conv1d(Tensor(x), Tensor(w), Tensor(np.zeros(3)), d)
    np.testing.assert_array_equal(y.data, x)


def test_conv_matches_direct_definition():
    rng = np.random.default_rng(4)
    x, w, b = rng.normal(size=(2, 9, 3)), rng.normal(size=(3, 3, 4)), rng.normal(size=4)
    d = 2
    y = causal_dilated_conv1d(Tensor(x), Tensor(w), Tensor(b), d).data
    expected = np.zeros((2, 9, 4))
    for n in range(2):
        for t in range(9):
            expected[n, t] = b
            for k in range(3):
                if t - k * d >= 0:
                    expected[n, t] += x[n, t - k * d] @ w[k]
    np.testing.assert_allclose(y, expected, rtol=1e-12, atol=1e-12)


def test_elementwise_values():
    assert sigmoid(Tensor([0.0])).data[0] == 0.5
    assert tanh(Tensor([0.0])).data[0] == 0.0
    np.testing.assert_array_equal(relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])


def test_concat_shapes():
    a, b = Tensor(np.zeros((7, 256))), Tensor(np.zeros((7, 512)))
    assert concat_channels(a, b).shape == (7, 768)
    with pytest.raises(ShapeMismatch):
        concat_channels(Tensor(np.zeros((6, 2))), Tensor(np.zeros((7, 2))))


def test_cross_entropy_uniform_is_log_v():
    for V in (2, 5, 31):
        loss = cross_entropy(Tensor(np.zeros((3, V))), np.zeros(3, dtype=int))
        assert loss.item() == pytest.approx(math.log(V), rel=1e-6)


def test_cross_entropy_margin_limit():
    losses = []
    for margin in (1.0, 5.0, 20.0, 50.0):
        z = np.zeros((1, 4))
        z[0, 2] = margin
        losses.append(cross_entropy(Tensor(z, dtype=np.float64), [2]).item())
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-20


def test_cross_entropy_mask():
    z = np.random.default_rng(0).normal(size=(2, 3, 5))
    t = np.array([[1, 2, 0], [4, 4, 0]])
    mask = np.array([[True, True, False], [True, False, False]])
    full = -log_softmax(Tensor(z)).data
    expected = (full[0, 0, 1] + full[0, 1, 2] + full[1, 0, 4]) / 3
    assert cross_entropy(Tensor(z), t, mask).item() == pytest.approx(expected, rel=1e-6)
    with pytest.raises(EmptyMask):
        cross_entropy(Tensor(z), t, np.zeros_like(mask))
    with pytest.raises(ShapeMismatch):
        cross_entropy(Tensor(z), t[:, :2])


def test_dropout_eval_identity():
    x = Tensor(np.ones((4, 4)))
    assert dropout(x, 0.5, train=False, rng=None) is x


def test_dropout_train_keeps_expectation():
    x = Tensor(np.ones(200_000))
    y = dropout(x, 0.5, train=True, rng=Rng(0))
    assert set(np.unique(y.data)) <= {0.0, 2.0}
    assert abs(y.data.mean() - 1.0) < 0.02


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(ShapeMismatch):
        add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


# ----------------------------------------------------------------- gradients


def test_product_rule():
    x, y = Tensor([3.0], requires_grad=True), Tensor([5.0], requires_grad=True)
    backward(sum_all(mul(x, y)))
    assert x.grad[0] == 5.0 and y.grad[0] == 3.0


OPS = {
    "add": lambda r, p: add(p[0], p[1]),
    "sub": lambda r, p: sub(p[0], p[1]),
    "mul": lambda r, p: mul(p[0], p[1]),
    "broadcast_add": lambda r, p: add(p[0], getitem(p[1], (0,))),
    "matmul": lambda r, p: matmul(p[0], reshape(p[1], (4, 3))),
    "sigmoid": lambda r, p: sigmoid(p[0]),
    "tanh": lambda r, p: tanh(p[0]),
    "relu": lambda r, p: relu(p[0]),
    "softmax": lambda r, p: softmax(p[0]),
    "log_softmax": lambda r, p: log_softmax(p[0]),
    "stack": lambda r, p: stack([p[0], p[1]], axis=1),
    "concat": lambda r, p: concat([p[0], p[1]], axis=-1),
    "slice": lambda r, p: getitem(p[0], (slice(1, 3), slice(None, None, 2))),
    "mean": lambda r, p: reshape(mean_all(mul(p[0], p[1])), (1,)),
}


@pytest.mark.parametrize("name", sorted(OPS))
@pytest.mark.parametrize("seed", SEEDS)
def test_op_gradients(name, seed):
    rng = np.random.default_rng(seed)
    params = [leaf(rng, 3, 4), leaf(rng, 3, 4)]
    w_rng = np.random.default_rng(100 + seed)
    probe = OPS[name](rng, params)
    w = Tensor(w_rng.normal(size=probe.shape), dtype=np.float64)
    err = check_grads(lambda: sum_all(mul(OPS[name](rng, params), w)), params)
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("dilation", [1, 2, 4])
def test_conv_gradients(seed, dilation):
    rng = np.random.default_rng(seed)
    x, w, b = leaf(rng, 2, 7, 3), leaf(rng, 2, 3, 4), leaf(rng, 4)
    cot = Tensor(rng.normal(size=(2, 7, 4)), dtype=np.float64)
    err = check_grads(lambda: sum_all(mul(causal_dilated_conv1d(x, w, b, dilation), cot)), [x, w, b])
    assert err < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_cross_entropy_gradients(seed):
    rng = np.random.default_rng(seed)
    z = leaf(rng, 2, 5, 6)
    t = rng.integers(0, 6, size=(2, 5))
    mask = rng.random((2, 5)) < 0.7
    mask[0, 0] = True
    assert check_grads(lambda: cross_entropy(z, t, mask), [z]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_dropout_gradient_with_fixed_mask(seed):
    rng = np.random.default_rng(seed)
    x = leaf(rng, 4, 5)
    err = check_grads(lambda: sum_all(mul(dropout(x, 0.3, True, Rng(seed)), x)), [x])
    assert err < TOL


def test_masked_positions_get_no_gradient():
    z = Tensor(np.random.default_rng(0).normal(size=(1, 3, 4)), requires_grad=True)
    backward(cross_entropy(z, [[0, 1, 2]], [[True, False, True]]))
    assert np.all(z.grad[0, 1] == 0.0)


def test_conv_is_causal():
    rng = np.random.default_rng(0)
    T = 12
    x = Tensor(rng.normal(size=(T, 2)), requires_grad=True)
    w, b = Tensor(rng.normal(size=(2, 2, 3))), Tensor(rng.normal(size=3))
    for t in range(T):
        x.grad = None
        y = causal_dilated_conv1d(x, w, b, 3)
        backward(sum_all(getitem(y, (t,))))
        assert np.all(x.grad[t + 1 :] == 0.0)
        assert np.any(x.grad[t] != 0.0)


def test_double_backward_raises():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = sum_all(mul(x, x))
    backward(loss)
    with pytest.raises(DoubleBackward):
        backward(loss)


def test_gradients_accumulate_and_repeat():
    rng = np.random.default_rng(3)
    x = leaf(rng, 3, 3)
    backward(sum_all(tanh(matmul(x, x))))
    first = x.grad.copy()
    x.grad = None
    backward(sum_all(tanh(matmul(x, x))))
    np.testing.assert_array_equal(x.grad, first)
    backward(sum_all(tanh(matmul(x, x))))
    np.testing.assert_allclose(x.grad, 2 * first)


def test_shared_subexpression_visited_once():
    x = Tensor([2.0], requires_grad=True)
    y = mul(x, x)
    backward(sum_all(add(y, y)))
    assert x.grad[0] == 8.0


def test_long_chain_backward_is_iterative():
    x = Tensor([0.5], requires_grad=True)
    y = x
    for _ in range(5000):
        y = add(y, 0.0)
    backward(sum_all(y))
    assert x.grad[0] == 1.0


# ---------------------------------------------------------------------- rng


def test_rng_streams_are_reproducible_and_independent():
    a, b = Rng(5, 1), Rng(5, 1)
    np.testing.assert_array_equal(a.random(10), b.random(10))
    assert not np.array_equal(Rng(5, 1).random(10), Rng(5, 2).random(10))
    assert not np.array_equal(Rng(5, 1).random(10), Rng(6, 1).random(10))


@given(st.integers(0, 2**32 - 1), st.integers(0, 1000))
@settings(max_examples=50)
def test_rng_permutation_is_permutation(seed, stream):
    p = Rng(seed, stream).permutation(17)
    assert sorted(p.tolist()) == list(range(17))
