"""Unit tests for the shared numeric kernels."""

import numpy as np
import pytest

from sbmformer.errors import DomainError, ShapeError
from sbmformer.numerics import (AdamState, adam_update, bce_loss, check_matrix,
                                finite_diff_check, matmul, relu, sigmoid,
                                softmax_all, softmax_rows)


def test_check_matrix_coerces_and_rejects():
    out = check_matrix([[1, 2], [3, 4]])
    assert out.dtype == np.float64 and out.flags["C_CONTIGUOUS"]
    with pytest.raises(ShapeError):
        check_matrix(np.zeros(3), "vec")
    with pytest.raises(ShapeError):
        check_matrix(np.zeros((2, 2, 2)))


def test_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 6)), rng.normal(size=(6, 3))
    np.testing.assert_allclose(matmul(a, b), a @ b)
    with pytest.raises(ShapeError):
        matmul(a, np.zeros((5, 3)))


def test_softmax_rows_basic():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 7)) * 3
    s = softmax_rows(a)
    np.testing.assert_allclose(s.sum(axis=1), np.ones(5), atol=1e-12)
    assert (s > 0).all()
    # invariance to a per-row shift
    np.testing.assert_allclose(softmax_rows(a + 100.0), s, atol=1e-12)


def test_softmax_rows_extreme_logits_stay_finite():
    s = softmax_rows(np.array([[1000.0, 0.0, -1000.0]]))
    assert np.isfinite(s).all()
    np.testing.assert_allclose(s[0, 0], 1.0, atol=1e-12)


def test_softmax_all_normalizes_over_every_entry():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(3, 4))
    s = softmax_all(a)
    np.testing.assert_allclose(s.sum(), 1.0, atol=1e-12)
    flat = np.exp(a - a.max())
    np.testing.assert_allclose(s, flat / flat.sum(), atol=1e-12)


def test_sigmoid_symmetric_and_stable():
    x = np.array([[-800.0, -1.0, 0.0, 1.0, 800.0]])
    s = sigmoid(x)
    assert np.isfinite(s).all()
    np.testing.assert_allclose(s + sigmoid(-x), np.ones_like(s), atol=1e-12)
    np.testing.assert_allclose(s[0, 2], 0.5)


def test_relu():
    np.testing.assert_array_equal(relu(np.array([[-1.0, 0.0, 2.0]])),
                                  np.array([[0.0, 0.0, 2.0]]))


def test_bce_loss_against_direct_formula():
    rng = np.random.default_rng(3)
    z = rng.normal(size=20) * 2
    y = (rng.random(20) < 0.5).astype(float)
    loss, grad = bce_loss(z, y)
    p = 1.0 / (1.0 + np.exp(-z))
    want = -(y * np.log(p) + (1 - y) * np.log(1 - p)).mean()
    np.testing.assert_allclose(loss, want, rtol=1e-12)
    np.testing.assert_allclose(grad, (p - y) / 20, rtol=1e-10)


def test_bce_loss_huge_logits_do_not_overflow():
    loss, grad = bce_loss(np.array([5000.0, -5000.0]), np.array([0.0, 1.0]))
    assert np.isfinite(loss) and loss > 1000
    assert np.isfinite(grad).all()


def test_bce_loss_mask_selects_entries():
    z = np.array([0.3, -0.7, 2.0, 1.0])
    y = np.array([1.0, 0.0, 1.0, 0.0])
    m = np.array([True, True, False, False])
    loss, grad = bce_loss(z, y, mask=m)
    ref, _ = bce_loss(z[:2], y[:2])
    np.testing.assert_allclose(loss, ref)
    assert grad[2] == 0.0 and grad[3] == 0.0


def test_bce_loss_empty_mask_yields_zero():
    loss, grad = bce_loss(np.ones(3), np.ones(3), mask=np.zeros(3, dtype=bool))
    assert loss == 0.0
    np.testing.assert_array_equal(grad, np.zeros(3))


def test_bce_loss_rejects_soft_targets():
    with pytest.raises(DomainError):
        bce_loss(np.zeros(2), np.array([0.5, 1.0]))


def test_bce_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    z = rng.normal(size=12)
    y = (rng.random(12) < 0.5).astype(float)
    _, grad = bce_loss(z, y)
    report = finite_diff_check(lambda v: bce_loss(v, y)[0], z, grad)
    assert report.passed, report.failures


def test_adam_first_step_size_is_lr():
    # with fresh moments the first update is lr * sign(g) up to eps
    p = np.zeros(4)
    g = np.array([1.0, -2.0, 0.5, -0.1])
    new_p, state = adam_update(p, g, AdamState.fresh(p.shape, lr=1e-3))
    np.testing.assert_allclose(new_p, -1e-3 * np.sign(g), rtol=1e-6)
    assert state.step == 1


def test_adam_is_pure_and_converges_on_quadratic():
    p = np.array([5.0, -3.0])
    state = AdamState.fresh(p.shape, lr=0.05)
    p0, s0 = p.copy(), state
    for _ in range(2000):
        p, state = adam_update(p, 2 * p, state)
    np.testing.assert_allclose(p, np.zeros(2), atol=1e-4)
    np.testing.assert_array_equal(p0, [5.0, -3.0])
    assert s0.step == 0


def test_finite_diff_check_catches_a_wrong_gradient():
    f = lambda v: float((v ** 2).sum())
    at = np.array([1.0, 2.0])
    good = finite_diff_check(f, at, 2 * at)
    bad = finite_diff_check(f, at, 2 * at + 0.1)
    assert good.passed and not bad.passed
    assert bad.failures


def test_finite_diff_check_skips_subfloor_entries():
    f = lambda v: float(v[0] ** 2)
    at = np.array([1.0, 0.0])
    report = finite_diff_check(f, at, np.array([2.0, 0.0]))
    assert report.passed
    assert report.n_skipped == 1 and report.n_checked == 1
