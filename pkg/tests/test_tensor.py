import numpy as np
import pytest

from domainsense import Tensor, bce_with_logits, concat, sigmoid_array
from oracles import central_difference


def grads_match(build, x0, rtol=1e-5, atol=1e-7):
    """Compare the graph gradient of a scalar loss against central differences."""
    t = Tensor(x0.copy(), requires_grad=True)
    build(t).backward()
    ad = t.grad.copy()
    fd = central_difference(lambda arr: float(build(Tensor(arr)).data), x0.copy())
    np.testing.assert_allclose(ad, fd, rtol=rtol, atol=atol)


RNG = np.random.default_rng(42)


def away_from_zero(shape, low=0.2, high=1.5):
    signs = RNG.choice([-1.0, 1.0], size=shape)
    return RNG.uniform(low, high, size=shape) * signs


def test_add_broadcast_grad():
    b = Tensor(RNG.normal(size=(1, 4)))
    grads_match(lambda t: (t + b).sum(), RNG.normal(size=(3, 4)))
    # and with respect to the broadcast side
    a = RNG.normal(size=(3, 4))
    grads_match(lambda t: (Tensor(a) + t * 2.0).sum(), RNG.normal(size=(1, 4)))


def test_mul_div_grad():
    other = RNG.normal(size=(2, 5)) + 3.0
    grads_match(lambda t: (t * Tensor(other)).sum(), RNG.normal(size=(2, 5)))
    grads_match(lambda t: (t / Tensor(other)).sum(), RNG.normal(size=(2, 5)))
    grads_match(lambda t: (Tensor(other) / (t * t + 1.0)).sum(), RNG.normal(size=(2, 5)))


def test_rsub_rmul_radd():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = 3.0 - x
    assert np.allclose(y.data, [2.0, 1.0])
    (2.0 * y + 1.0).sum().backward()
    assert np.allclose(x.grad, [-2.0, -2.0])


def test_matmul_grad_2d_and_batched():
    b = RNG.normal(size=(4, 3))
    grads_match(lambda t: ((t @ Tensor(b)) * 0.5).sum(), RNG.normal(size=(2, 4)))
    lhs = RNG.normal(size=(5, 4))
    grads_match(lambda t: (Tensor(lhs) @ t).sum(), RNG.normal(size=(4, 3)))
    # batched: (B, n, d) @ (B, d, k)
    rhs = RNG.normal(size=(3, 4, 2))
    grads_match(lambda t: (t @ Tensor(rhs)).sum(), RNG.normal(size=(3, 5, 4)))
    # broadcast stack: (B, n, d) @ (d, k)
    w = RNG.normal(size=(4, 2))
    grads_match(lambda t: (t @ Tensor(w)).sum(), RNG.normal(size=(3, 5, 4)))
    stack = RNG.normal(size=(3, 5, 4))
    grads_match(lambda t: (Tensor(stack) @ t).sum(), w)


def test_relu_grad_and_kink():
    grads_match(lambda t: t.relu().sum(), away_from_zero((3, 4)))
    x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    x.relu().sum().backward()
    assert x.grad.tolist() == [0.0, 0.0, 1.0]  # subgradient 0 at the kink


def test_elu_grad_and_values():
    grads_match(lambda t: t.elu().sum(), away_from_zero((4, 3)))
    x = Tensor(np.array([-2.0, 0.0, 1.5]))
    v = x.elu().data
    assert np.allclose(v, [np.expm1(-2.0), 0.0, 1.5])


def test_softplus_grad_and_stability():
    grads_match(lambda t: t.softplus().sum(), RNG.normal(size=(3, 3)))
    big = Tensor(np.array([800.0, -800.0]))
    v = big.softplus().data
    assert np.isfinite(v).all()
    assert v[0] == pytest.approx(800.0)
    assert v[1] == pytest.approx(0.0, abs=1e-300)


def test_sum_mean_axes_grad():
    grads_match(lambda t: (t.sum(axis=0) * Tensor(np.arange(4.0))).sum(), RNG.normal(size=(3, 4)))
    grads_match(lambda t: t.sum(axis=1, keepdims=True).sum(), RNG.normal(size=(3, 4)))
    grads_match(lambda t: (t.mean(axis=-1) * 2.0).sum(), RNG.normal(size=(2, 6)))
    grads_match(lambda t: t.mean(), RNG.normal(size=(2, 3, 4)))
    grads_match(lambda t: t.sum(axis=-2, keepdims=True).sum(), RNG.normal(size=(2, 3, 4)))


def test_reshape_transpose_grad():
    col = RNG.normal(size=(2, 1))
    grads_match(lambda t: (t.reshape(6, 2) @ Tensor(col)).sum(), RNG.normal(size=(3, 4)))
    rhs = RNG.normal(size=(2, 2, 3))
    grads_match(
        lambda t: (t.transpose_last() @ Tensor(rhs)).sum(),
        RNG.normal(size=(2, 2, 5)),
    )


def test_rows_gather_scatter_grad():
    idx = np.array([[0, 2, 2], [1, 0, 3]])
    mult = RNG.normal(size=(2, 3, 4))
    grads_match(lambda t: (t.rows(idx) * Tensor(mult)).sum(), RNG.normal(size=(5, 4)))
    # repeated indices accumulate
    table = Tensor(np.zeros((3, 2)), requires_grad=True)
    table.rows(np.array([1, 1, 1])).sum().backward()
    assert np.allclose(table.grad, [[0, 0], [3, 3], [0, 0]])


def test_select_tokens_grad():
    mult = RNG.normal(size=(2, 2, 3))
    grads_match(
        lambda t: (t.select_tokens([0, 2]) * Tensor(mult)).sum(),
        RNG.normal(size=(2, 4, 3)),
    )
    z = Tensor(RNG.normal(size=(2, 4, 3)), requires_grad=True)
    z.select_tokens([1, 1]).sum().backward()  # duplicate index accumulates
    assert np.allclose(z.grad[:, 1, :], 2.0)
    assert np.allclose(z.grad[:, 0, :], 0.0)


def test_softmax_last_grad_and_simplex():
    mult = RNG.normal(size=(3, 5))
    grads_match(
        lambda t: (t.softmax_last() * Tensor(mult)).sum(),
        RNG.normal(size=(3, 5)),
    )
    x = Tensor(RNG.normal(size=(2, 3, 4)) * 50)  # large logits stay stable
    s = x.softmax_last().data
    assert np.allclose(s.sum(axis=-1), 1.0)
    assert (s >= 0).all()


def test_concat_grad():
    b = RNG.normal(size=(3, 2))
    mult = RNG.normal(size=(3, 6))
    grads_match(
        lambda t: (concat([t, Tensor(b)], axis=1) * Tensor(mult)).sum(),
        RNG.normal(size=(3, 4)),
    )
    grads_match(
        lambda t: concat([Tensor(b), t], axis=0).sum(),
        RNG.normal(size=(2, 2)),
    )


def test_diamond_reuse():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = x * x + x  # x used twice
    y.backward()
    assert np.allclose(x.grad, [7.0])  # 2x + 1


def test_no_grad_graph_is_detached():
    a = Tensor(np.ones((2, 2)))
    b = Tensor(np.ones((2, 2)))
    out = (a @ b).relu()
    assert not out.requires_grad
    assert out._parents == ()


def test_backward_accumulates_until_zero_grad():
    x = Tensor(np.array([2.0]), requires_grad=True)
    (x * 3.0).backward()
    (x * 3.0).backward()
    assert np.allclose(x.grad, [6.0])
    x.zero_grad()
    assert x.grad is None


def test_bce_with_logits_frozen_value_and_grad():
    logits = Tensor(np.array([2.0, -1.0]), requires_grad=True)
    targets = np.array([1.0, 0.0])
    loss = bce_with_logits(logits, targets)
    assert loss.item() == pytest.approx(0.2200948492805977, abs=1e-15)
    loss.backward()
    expected = (sigmoid_array(logits.data) - targets) / 2  # d(mean bce)/dl
    np.testing.assert_allclose(logits.grad, expected, rtol=1e-12)


def test_bce_extreme_logits_finite():
    logits = Tensor(np.array([500.0, -500.0]), requires_grad=True)
    loss = bce_with_logits(logits, np.array([0.0, 1.0]))
    assert np.isfinite(loss.data)
    loss.backward()
    assert np.isfinite(logits.grad).all()


def test_sigmoid_array_stable():
    z = np.array([-1000.0, 0.0, 1000.0])
    s = sigmoid_array(z)
    assert np.allclose(s, [0.0, 0.5, 1.0])
    assert np.isfinite(s).all()


def test_item_detach_repr():
    x = Tensor(np.array(2.5), requires_grad=True)
    assert x.item() == 2.5
    d = x.detach()
    assert not d.requires_grad
    assert "grad" in repr(x) and "grad" not in repr(d)
