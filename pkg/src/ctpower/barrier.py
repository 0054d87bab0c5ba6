"""Log-barrier Newton method for small smooth convex programs.

A program is an objective plus a list of constraint blocks. Each block maps
x to a vector of convex function values that must stay negative and
supplies exact first and second derivatives. The solver follows the central
path of ``t*f0(x) - sum(log(-f_k(x)))`` with damped Newton steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)
_ROUNDOFF = 64 * np.finfo(float).eps


def softplus(y):
    """ln(1 + e^y) without overflow or underflow."""
    y = np.asarray(y, dtype=float)
    return np.maximum(y, 0.0) + np.log1p(np.exp(-np.abs(y)))


def sigmoid(y):
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore"):
        e = np.exp(-np.abs(y))
    return np.where(y >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logsumexp_rows(Y):
    """Row-wise log-sum-exp and softmax weights with max shifting.

    Entries equal to -inf are treated as absent terms.
    """
    Y = np.asarray(Y, dtype=float)
    ymax = np.max(Y, axis=-1, keepdims=True)
    ymax = np.where(np.isfinite(ymax), ymax, 0.0)
    E = np.exp(Y - ymax)
    s = E.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        lse = (np.log(s) + ymax)[..., 0]
    return lse, E / s


class ConstraintBlock:
    """Interface for a vector of smooth convex constraints ``f(x) <= 0``."""

    size: int

    def values(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivatives(self, x: np.ndarray):
        """Return ``(values, jacobian, hess)`` where ``hess(w)`` gives sum_k w_k Hess f_k."""
        raise NotImplementedError


class LinearBlock(ConstraintBlock):
    """``A x - b <= 0``."""

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.size = self.b.shape[0]

    def values(self, x):
        return self.A @ x - self.b

    def derivatives(self, x):
        return self.values(x), self.A, None


class LogSumExpBlock(ConstraintBlock):
    """Rows ``ln sum_k exp(A[r, k] @ x + b[r, k]) <= 0``.

    Rows with fewer terms are padded with ``b = -inf``.
    """

    def __init__(self, A, b):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.A.ndim != 3 or self.A.shape[:2] != self.b.shape:
            raise ValueError("A must be (rows, terms, n) and b (rows, terms)")
        self.size = self.b.shape[0]

    def _terms(self, x):
        return np.einsum("rkn,n->rk", self.A, x) + self.b

    def values(self, x):
        return logsumexp_rows(self._terms(x))[0]

    def derivatives(self, x):
        vals, pi = logsumexp_rows(self._terms(x))
        jac = np.einsum("rk,rkn->rn", pi, self.A)

        def hess(w):
            B = self.A * np.sqrt(w[:, None] * pi)[..., None]
            B = B.reshape(-1, self.A.shape[2])
            return B.T @ B - (jac * w[:, None]).T @ jac

        return vals, jac, hess


class ExpSoftplusBlock(ConstraintBlock):
    """Rows ``c[r] + sum_k phi_rk(A[r, k] @ x + b[r, k]) <= 0``.

    ``phi`` is exp where ``is_exp`` is true and softplus elsewhere; padded
    terms use ``b = -inf`` and contribute nothing.
    """

    def __init__(self, A, b, is_exp, c):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.is_exp = np.asarray(is_exp, dtype=bool)
        self.c = np.asarray(c, dtype=float)
        self.size = self.c.shape[0]

    def _phi(self, x):
        y = np.einsum("rkn,n->rk", self.A, x) + self.b
        with np.errstate(over="ignore"):
            ey = np.exp(y)
        s = sigmoid(y)
        f = np.where(self.is_exp, ey, softplus(y))
        d1 = np.where(self.is_exp, ey, s)
        d2 = np.where(self.is_exp, ey, s * (1.0 - s))
        return f, d1, d2

    def values(self, x):
        return self.c + self._phi(x)[0].sum(axis=1)

    def derivatives(self, x):
        f, d1, d2 = self._phi(x)
        vals = self.c + f.sum(axis=1)
        jac = np.einsum("rk,rkn->rn", d1, self.A)

        def hess(w):
            B = self.A * np.sqrt(w[:, None] * d2)[..., None]
            B = B.reshape(-1, self.A.shape[2])
            return B.T @ B

        return vals, jac, hess


class ScaledReciprocalLogBlock(ConstraintBlock):
    """``coef * h(x[s]) - x[t] <= 0`` with h(u) = 1/log2(1 + e^u)."""

    def __init__(self, n, idx_s, idx_t, coef):
        self.n = n
        self.idx_s = np.asarray(idx_s, dtype=int)
        self.idx_t = np.asarray(idx_t, dtype=int)
        self.coef = np.asarray(coef, dtype=float)
        self.size = self.idx_s.shape[0]
        self._rows = np.arange(self.size)

    def values(self, x):
        return self.coef * reciprocal_log_rate(x[self.idx_s]) - x[self.idx_t]

    def derivatives(self, x):
        h, h1, h2 = reciprocal_log_rate(x[self.idx_s], derivatives=True)
        vals = self.coef * h - x[self.idx_t]
        jac = np.zeros((self.size, self.n))
        jac[self._rows, self.idx_s] = self.coef * h1
        jac[self._rows, self.idx_t] = -1.0

        def hess(w):
            H = np.zeros((self.n, self.n))
            np.add.at(H, (self.idx_s, self.idx_s), w * self.coef * h2)
            return H

        return vals, jac, hess


def reciprocal_log_rate(x, derivatives: bool = False):
    """h(x) = 1/log2(1 + e^x) and, optionally, h' and h''.

    Evaluated through softplus and the logistic function so that it stays
    finite for large |x|.
    """
    x = np.asarray(x, dtype=float)
    sp = softplus(x)
    # sp underflows to 0 only far below any feasible target; h = inf there
    with np.errstate(divide="ignore", invalid="ignore"):
        h = LN2 / sp
        if not derivatives:
            return h
        s = sigmoid(x)
        # e^x (2e^x - sp) / (1+e^x)^2 == 2 s^2 - s (1-s) sp; dividing by sp
        # one factor at a time keeps very negative x from underflowing sp**3
        ratio = s / sp
        h1 = -LN2 * ratio / sp
        h2 = LN2 * ratio * (2.0 * ratio - (1.0 - s)) / sp
    return h, h1, h2


class LinearObjective:
    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def value(self, x):
        return float(self.c @ x)

    def derivatives(self, x):
        return float(self.c @ x), self.c, None


class NormObjective:
    """``c @ x + sum_k coef_k * ||B_k x||_p`` on the positive orthant."""

    def __init__(self, c, terms: Sequence[tuple]):
        self.c = np.asarray(c, dtype=float)
        self.terms = [(float(a), np.asarray(B, dtype=float), float(p)) for a, B, p in terms]

    def value(self, x):
        val = float(self.c @ x)
        for a, B, p in self.terms:
            y = B @ x
            m = np.max(np.abs(y))
            val += a * m * np.sum((np.abs(y) / m) ** p) ** (1.0 / p)
        return float(val)

    def derivatives(self, x):
        n = x.shape[0]
        val = float(self.c @ x)
        grad = self.c.copy()
        H = np.zeros((n, n))
        for a, B, p in self.terms:
            y = B @ x
            m = np.max(y)
            f = m * np.sum((y / m) ** p) ** (1.0 / p)
            r = y / f
            g = r ** (p - 1.0)
            val += a * f
            grad += a * B.T @ g
            Hy = (p - 1.0) / f * (np.diag(r ** (p - 2.0)) - np.outer(g, g))
            H += a * B.T @ Hy @ B
        return float(val), grad, H


@dataclass
class BarrierResult:
    x: np.ndarray
    t: float
    gap: float
    objective: float
    outer_iterations: int
    newton_iterations: int
    converged: bool
    status: str
    max_constraint: float


class BarrierError(RuntimeError):
    def __init__(self, message, result: Optional[BarrierResult] = None):
        super().__init__(message)
        self.result = result


def _all_values(blocks, x):
    return np.concatenate([b.values(x) for b in blocks]) if blocks else np.zeros(0)


def _barrier_value(objective, blocks, x, t):
    vals = _all_values(blocks, x)
    if not np.all(np.isfinite(vals)) or np.any(vals >= 0):
        return np.inf
    f0 = objective.value(x)
    if not np.isfinite(f0):
        return np.inf
    return t * f0 - np.sum(np.log(-vals))


def _newton_system(objective, blocks, x, t):
    n = x.shape[0]
    _, g0, H0 = objective.derivatives(x)
    grad = t * g0
    H = t * H0 if H0 is not None else np.zeros((n, n))
    for blk in blocks:
        vals, jac, hess = blk.derivatives(x)
        inv = -1.0 / vals
        grad = grad + jac.T @ inv
        H = H + (jac * inv[:, None] ** 2).T @ jac
        if hess is not None:
            H = H + hess(inv)
    return grad, 0.5 * (H + H.T)


def _solve_psd(H, g):
    """Solve H d = -g, adding a diagonal shift if H is not numerically PD."""
    scale = max(1.0, float(np.max(np.abs(np.diag(H)))))
    shift = 0.0
    for _ in range(30):
        try:
            c = scipy.linalg.cho_factor(H + shift * np.eye(H.shape[0]), lower=True)
            return -scipy.linalg.cho_solve(c, g)
        except np.linalg.LinAlgError:
            shift = 1e-12 * scale if shift == 0.0 else shift * 10.0
    return -np.linalg.lstsq(H, g, rcond=None)[0]


def barrier_minimize(
    objective,
    blocks: Sequence[ConstraintBlock],
    x0,
    *,
    t0: float = 1.0,
    mu: float = 20.0,
    newton_tol: float = 1e-10,
    gap_tol: float = 1e-8,
    max_outer: int = 60,
    max_inner: int = 200,
    alpha: float = 0.01,
    beta: float = 0.5,
    stage_hook: Optional[Callable[[np.ndarray, float], None]] = None,
    stop_when: Optional[Callable[[np.ndarray], bool]] = None,
) -> BarrierResult:
    """Minimize ``objective`` subject to all blocks, starting strictly inside.

    ``stop_when(x)`` ends the run early (used by phase I). ``stage_hook(x, t)``
    runs after each centering step and may adjust the blocks, provided ``x``
    stays strictly feasible.
    """
    x = np.array(x0, dtype=float)
    vals = _all_values(blocks, x)
    if np.any(vals >= 0) or not np.all(np.isfinite(vals)):
        raise BarrierError(f"starting point is not strictly feasible (max f = {vals.max():g})")
    m = vals.shape[0]
    t = t0
    newton_total = 0
    status = "max_outer"
    converged = False
    outer = 0
    for outer in range(1, max_outer + 1):
        for _ in range(max_inner):
            grad, H = _newton_system(objective, blocks, x, t)
            dx = _solve_psd(H, grad)
            dec2 = -float(grad @ dx)
            if dec2 / 2.0 <= newton_tol:
                break
            phi = _barrier_value(objective, blocks, x, t)
            if dec2 <= _ROUNDOFF * abs(phi):
                # decrease below what phi can resolve: centered to working precision
                break
            step = 1.0
            while step > 1e-14:
                trial = x + step * dx
                if _barrier_value(objective, blocks, trial, t) <= phi - alpha * step * dec2:
                    break
                step *= beta
            else:
                # no representable decrease left: centered to working precision
                break
            x = trial
            newton_total += 1
            if stop_when is not None and stop_when(x):
                return _result(objective, blocks, x, t, m, outer, newton_total, True, "stopped")
        else:
            logger.debug("centering hit max_inner at t=%g", t)
        if stop_when is not None and stop_when(x):
            return _result(objective, blocks, x, t, m, outer, newton_total, True, "stopped")
        logger.debug("stage %d: t=%.3g gap=%.3g newton=%d", outer, t, m / t, newton_total)
        if m / t <= gap_tol:
            converged = True
            status = "optimal"
            break
        if stage_hook is not None:
            stage_hook(x, t)
        t *= mu
    return _result(objective, blocks, x, t, m, outer, newton_total, converged, status)


def _result(objective, blocks, x, t, m, outer, newton, converged, status):
    vals = _all_values(blocks, x)
    return BarrierResult(
        x=x, t=t, gap=m / t, objective=objective.value(x),
        outer_iterations=outer, newton_iterations=newton,
        converged=converged, status=status,
        max_constraint=float(vals.max()) if vals.size else -np.inf,
    )


class _SlackBlock(ConstraintBlock):
    """``f(x) - s <= 0`` for phase I, with s stored as the last coordinate."""

    def __init__(self, inner: ConstraintBlock):
        self.inner = inner
        self.size = inner.size

    def values(self, xs):
        return self.inner.values(xs[:-1]) - xs[-1]

    def derivatives(self, xs):
        vals, jac, hess = self.inner.derivatives(xs[:-1])
        jac = np.hstack([jac, -np.ones((self.size, 1))])

        def hess_ext(w):
            n = xs.shape[0]
            H = np.zeros((n, n))
            if hess is not None:
                H[:-1, :-1] = hess(w)
            return H

        return vals - xs[-1], jac, (hess_ext if hess is not None else None)


def phase_one(blocks: Sequence[ConstraintBlock], x0, *, margin: float = 1e-3, **kwargs):
    """Find a strictly feasible point by minimizing the worst constraint value.

    Returns ``(x, s)``: ``s < 0`` means x is strictly feasible with every
    constraint at most ``s``. Blocks must bound all variables they touch, or
    the auxiliary problem can be unbounded.
    """
    x0 = np.asarray(x0, dtype=float)
    s0 = float(_all_values(blocks, x0).max()) + 1.0
    ext = [_SlackBlock(b) for b in blocks]
    n = x0.shape[0]
    c = np.zeros(n + 1)
    c[-1] = 1.0
    res = barrier_minimize(
        LinearObjective(c), ext, np.append(x0, s0),
        stop_when=lambda xs: xs[-1] < -margin, **kwargs,
    )
    x = res.x[:-1]
    return x, float(_all_values(blocks, x).max())
