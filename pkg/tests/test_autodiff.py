"""Finite-difference checks for every autodiff operation."""

import numpy as np
import pytest

from hmgl.autodiff import Tensor, concat_cols, concat_rows, log_softmax_rows


def numeric_grad(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        down = fn(x)
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2 * h)
    return grad


def check(fn_t, fn_np, shape, seed=0, shift=0.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=shape) + shift
    t = Tensor(x.copy(), requires_grad=True)
    out = fn_t(t)
    out.backward()
    expected = numeric_grad(fn_np, x.copy())
    np.testing.assert_allclose(t.grad, expected, rtol=1e-5, atol=1e-7)


def test_add_mul_broadcast():
    check(
        lambda t: ((t + 2.0) * t).sum(),
        lambda x: float((((x + 2.0)) * x).sum()),
        (3, 4),
    )


def test_matmul_transpose():
    rng = np.random.default_rng(1)
    other = rng.normal(size=(4, 4))
    check(
        lambda t: (t @ Tensor(other) @ t.T).sum(),
        lambda x: float((x @ other @ x.T).sum()),
        (3, 4),
    )


def test_exp_log_sqrt():
    check(
        lambda t: (t.exp().log() * t.sqrt()).sum(),
        lambda x: float((np.log(np.exp(x)) * np.sqrt(x)).sum()),
        (5,),
        shift=3.0,
    )


def test_relu_and_clip_min():
    check(
        lambda t: (t.relu() + t.clip_min(0.25)).sum(),
        lambda x: float((np.maximum(x, 0.0) + np.maximum(x, 0.25)).sum()),
        (17,),
        seed=3,
    )


def test_div_row_broadcast():
    check(
        lambda t: (t / t.sum(axis=1, keepdims=True)).sum(),
        lambda x: float((x / x.sum(axis=1, keepdims=True)).sum()),
        (4, 5),
        shift=5.0,
    )


def test_getitem_slice_and_fancy():
    rows = np.array([0, 2, 1])
    cols = np.array([1, 1, 0])
    check(
        lambda t: t[:2, :2].sum() + t[rows, cols].sum(),
        lambda x: float(x[:2, :2].sum() + x[rows, cols].sum()),
        (3, 3),
    )


def test_concat_cols_rows():
    rng = np.random.default_rng(2)
    other = rng.normal(size=(3, 2))
    check(
        lambda t: concat_cols([t, Tensor(other)]).sum()
        + concat_rows([t, t]).mean(),
        lambda x: float(np.concatenate([x, other], axis=1).sum()
                        + np.concatenate([x, x], axis=0).mean()),
        (3, 2),
    )


def test_log_softmax_matches_manual():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 5)) * 3
    out = log_softmax_rows(Tensor(x))
    manual = x - np.log(np.exp(x).sum(axis=1, keepdims=True))
    np.testing.assert_allclose(out.data, manual, atol=1e-12)
    np.testing.assert_allclose(np.exp(out.data).sum(axis=1), 1.0, atol=1e-9)


def test_log_softmax_gradient():
    labels = np.array([1, 0, 3])

    def loss_np(x):
        lsm = x - np.log(np.exp(x).sum(axis=1, keepdims=True))
        return float(-lsm[np.arange(3), labels].mean())

    check(
        lambda t: -(log_softmax_rows(t)[np.arange(3), labels]).sum() * (1.0 / 3.0),
        loss_np,
        (3, 4),
        seed=5,
    )


def test_backward_requires_scalar():
    t = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (t * 2).backward()


def test_grad_accumulates_over_reuse():
    t = Tensor(np.array([3.0]), requires_grad=True)
    out = (t * t + t).sum()
    out.backward()
    np.testing.assert_allclose(t.grad, [7.0])


def test_constants_get_no_grad():
    c = Tensor(np.ones(3))
    t = Tensor(np.ones(3), requires_grad=True)
    (t * c).sum().backward()
    assert c.grad is None
    np.testing.assert_allclose(t.grad, np.ones(3))
