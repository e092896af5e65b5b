"""Dense float64 kernels shared by every other module.

Matrices are 2-D, row-major (C-order) float64 numpy arrays, validated at the
API boundary. All kernels are pure and deterministic: identical inputs give
bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, ShapeError

Matrix = np.ndarray


def check_matrix(a, name: str = "matrix") -> Matrix:
    """Coerce to a C-order float64 2-D array or raise ShapeError."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name}: expected a 2-D matrix, got shape {np.shape(a)}")
    return out


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with an explicit shape check."""
    a = check_matrix(a, "left operand")
    b = check_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_rows(a: Matrix) -> Matrix:
    """Row-wise softmax, stable via per-row max subtraction."""
    a = check_matrix(a)
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_all(a: Matrix) -> Matrix:
    """Softmax over every entry of the matrix jointly; entries sum to 1."""
    a = check_matrix(a)
    e = np.exp(a - a.max())
    return e / e.sum()


def sigmoid(a: Matrix) -> Matrix:
    """Elementwise logistic, stable for large negative and positive inputs."""
    a = np.asarray(a, dtype=np.float64)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ex = np.exp(a[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(a: Matrix) -> Matrix:
    return np.maximum(np.asarray(a, dtype=np.float64), 0.0)


def bce_loss(logits, targets, mask=None) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy from logits, with its gradient.

    ``targets`` must be 0/1. ``mask`` (optional, same shape, boolean) selects
    the entries that count; masked-out entries get zero gradient. Returns
    ``(loss, dloss/dlogits)``. Computed in the log-sum-exp form so large
    logits cannot overflow.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeError(f"logits shape {z.shape} != targets shape {y.shape}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DomainError("targets must be 0 or 1")
    if mask is None:
        mask = np.ones(z.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != z.shape:
            raise ShapeError(f"mask shape {mask.shape} != logits shape {z.shape}")
    count = int(mask.sum())
    if count == 0:
        return 0.0, np.zeros_like(z)
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = float(per[mask].sum() / count)
    grad = np.where(mask, (sigmoid(z) - y) / count, 0.0)
    return loss, grad


@dataclass(frozen=True, eq=False)
class AdamState:
    """Per-parameter Adam state carried explicitly (no hidden globals)."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, shape, lr: float = 1e-3) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), step=0, lr=lr)


def adam_update(param: np.ndarray, grad: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One Adam step; returns the updated parameter and state (pure)."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise ShapeError(
            f"adam_update shapes disagree: param {param.shape}, grad {grad.shape}, moments {state.m.shape}"
        )
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_param = param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_param, replace(state, m=m, v=v, step=t)


@dataclass
class FdReport:
    """Outcome of a finite-difference gradient comparison."""

    passed: bool
    max_rel_err: float
    n_checked: int
    n_skipped: int
    failures: list  # (flat_index, analytic, numeric, rel_err), capped

    MAX_FAILURES = 20


def finite_diff_check(f, at: np.ndarray, analytic_grad: np.ndarray,
                      h: float = 1e-5, tol: float = 1e-4,
                      floor: float = 1e-6) -> FdReport:
    """Compare ``analytic_grad`` of scalar ``f`` at ``at`` against central differences.

    Relative error uses ``|a - n| / max(|a|, |n|, floor)``; entries where both
    magnitudes fall below ``floor`` are compared absolutely against ``floor``
    (central differences at h=1e-5 carry ~1e-11 cancellation noise, which
    would otherwise swamp near-zero gradients). Reports the worst entry and
    up to ``FdReport.MAX_FAILURES`` failing indices.
    """
    if h <= 0:
        raise DomainError(f"step h must be positive, got {h}")
    at = np.asarray(at, dtype=np.float64)
    analytic = np.asarray(analytic_grad, dtype=np.float64)
    if at.shape != analytic.shape:
        raise ShapeError(f"point shape {at.shape} != gradient shape {analytic.shape}")
    flat = at.ravel().copy()
    work = flat.copy()
    max_rel = 0.0
    failures = []
    skipped = 0
    for idx in range(flat.size):
        base = flat[idx]
        work[idx] = base + h
        fp = float(f(work.reshape(at.shape)))
        work[idx] = base - h
        fm = float(f(work.reshape(at.shape)))
        work[idx] = base
        numeric = (fp - fm) / (2.0 * h)
        a = analytic.ravel()[idx]
        scale = max(abs(a), abs(numeric))
        if scale < floor:
            if abs(a - numeric) > floor:
                failures.append((idx, a, numeric, float("inf")))
            else:
                skipped += 1
            continue
        rel = abs(a - numeric) / max(scale, floor)
        max_rel = max(max_rel, rel)
        if rel > tol and len(failures) < FdReport.MAX_FAILURES:
            failures.append((idx, a, numeric, rel))
    return FdReport(passed=not failures, max_rel_err=max_rel,
                    n_checked=flat.size - skipped, n_skipped=skipped,
                    failures=failures)
