"""Completion-time cost functionals and their epigraph forms.

Four kinds are supported: a normalized weighted sum, the maximum, the sum of
the r largest entries and the l_p norm. Max and sum-of-r-largest are
nonsmooth; :func:`epigraph_reform` turns them into a linear objective with
auxiliary variables so the barrier solver only ever sees smooth functions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ParseError

KINDS = ("weighted_sum", "max", "sum_r_largest", "p_norm")


@dataclass(frozen=True, eq=False)
class CostSpec:
    kind: str
    w: Optional[np.ndarray] = None
    r: Optional[int] = None
    p: Optional[float] = None
    L: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "weighted_sum":
            if self.w is None:
                raise ValueError("weighted_sum needs weights w")
            w = np.array(self.w, dtype=float)
            if w.ndim != 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be a finite nonnegative vector")
            if abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"weights must sum to 1 (got {w.sum():.12g})")
            w.setflags(write=False)
            object.__setattr__(self, "w", w)
        elif self.kind == "sum_r_largest":
            if self.r is None or int(self.r) != self.r or self.r < 1:
                raise ValueError("sum_r_largest needs an integer r >= 1")
            object.__setattr__(self, "r", int(self.r))
        elif self.kind == "p_norm":
            if self.p is None or not self.p >= 1:
                raise ValueError("p_norm needs p >= 1")
            object.__setattr__(self, "p", float(self.p))
        if self.L is not None:
            L = np.array(self.L, dtype=float)
            L.setflags(write=False)
            object.__setattr__(self, "L", L)

    @classmethod
    def weighted_sum(cls, w, L=None) -> "CostSpec":
        return cls("weighted_sum", w=w, L=L)

    @classmethod
    def max(cls, L=None) -> "CostSpec":
        return cls("max", L=L)

    @classmethod
    def sum_r_largest(cls, r: int, L=None) -> "CostSpec":
        return cls("sum_r_largest", r=r, L=L)

    @classmethod
    def p_norm(cls, p: float, L=None) -> "CostSpec":
        return cls("p_norm", p=p, L=L)

    def with_lengths(self, L) -> "CostSpec":
        return CostSpec(self.kind, w=self.w, r=self.r, p=self.p, L=L)

    def check_size(self, M: int) -> None:
        if self.kind == "weighted_sum" and self.w.shape != (M,):
            raise ValueError(f"weights have length {self.w.shape[0]}, expected {M}")
        if self.kind == "sum_r_largest" and self.r > M:
            raise ValueError(f"r={self.r} exceeds the number of users {M}")

    def __eq__(self, other):
        if not isinstance(other, CostSpec):
            return NotImplemented
        if (self.kind, self.r, self.p) != (other.kind, other.r, other.p):
            return False
        for a, b in ((self.w, other.w), (self.L, other.L)):
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return True

    __hash__ = None

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "weighted_sum":
            d["w"] = self.w.tolist()
        elif self.kind == "sum_r_largest":
            d["r"] = self.r
        elif self.kind == "p_norm":
            d["p"] = self.p
        if self.L is not None:
            d["L"] = self.L.tolist()
        return d

    @classmethod
    def from_dict(cls, d) -> "CostSpec":
        if not isinstance(d, dict):
            raise ParseError("cost", "expected a JSON object")
        kind = d.get("kind")
        if kind not in KINDS:
            raise ParseError("cost.kind", f"expected one of {KINDS}, got {kind!r}")
        required = {"weighted_sum": "w", "sum_r_largest": "r", "p_norm": "p"}.get(kind)
        if required and required not in d:
            raise ParseError(f"cost.{required}", f"required for kind {kind!r}")
        try:
            return cls(kind, w=d.get("w"), r=d.get("r"), p=d.get("p"), L=d.get("L"))
        except ValueError as exc:
            raise ParseError("cost", str(exc)) from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CostSpec":
        return cls.from_dict(json.loads(text))


def _pnorm(T: np.ndarray, p: float) -> float:
    # factor out the largest entry so large p cannot overflow
    tmax = np.max(np.abs(T))
    if tmax == 0:
        return 0.0
    if math.isinf(p):
        return float(tmax)
    return float(tmax * np.sum((np.abs(T) / tmax) ** p) ** (1.0 / p))


def eval_cost(spec: CostSpec, T) -> float:
    T = np.asarray(T, dtype=float)
    spec.check_size(T.shape[0])
    if np.any(np.isinf(T)):
        return math.inf
    if spec.kind == "weighted_sum":
        return float(spec.w @ T)
    if spec.kind == "max":
        return float(np.max(T))
    if spec.kind == "sum_r_largest":
        return float(np.sort(T, kind="stable")[::-1][: spec.r].sum())
    return _pnorm(T, spec.p)


@dataclass(frozen=True, eq=False)
class EpigraphProgram:
    """Smooth surrogate of a cost: ``min c_T.T + c_aux.aux (+ ||T||_p)``.

    Constraints read ``A_T @ T + A_aux @ aux <= b``. ``p`` is set only for
    the smooth p-norm objective (p > 1), which has no auxiliaries.
    """

    n_aux: int
    A_T: np.ndarray
    A_aux: np.ndarray
    b: np.ndarray
    c_T: np.ndarray
    c_aux: np.ndarray
    p: Optional[float] = None
    kind: str = field(default="")

    @property
    def n_constraints(self) -> int:
        return self.b.shape[0]

    def objective(self, T, aux) -> float:
        T = np.asarray(T, dtype=float)
        val = float(self.c_T @ T + self.c_aux @ np.asarray(aux, dtype=float))
        if self.p is not None:
            val += _pnorm(T, self.p)
        return val

    def feasible(self, T, aux, tol: float = 0.0) -> bool:
        lhs = self.A_T @ np.asarray(T, dtype=float) + self.A_aux @ np.asarray(aux, dtype=float)
        return bool(np.all(lhs <= self.b + tol))

    def initial_aux(self, T, margin: float = 0.1) -> np.ndarray:
        """Auxiliaries that satisfy every constraint strictly at ``T``."""
        T = np.asarray(T, dtype=float)
        scale = margin * max(1.0, float(np.max(np.abs(T))))
        if self.kind == "max":
            return np.array([T.max() + scale])
        if self.kind == "sum_r_largest":
            t = float(np.median(T))
            return np.concatenate([[t], np.maximum(T - t, 0.0) + scale])
        return np.zeros(0)


def epigraph_reform(spec: CostSpec, M: int) -> EpigraphProgram:
    spec.check_size(M)
    empty = np.zeros((0, M)), np.zeros((0, 0)), np.zeros(0)
    if spec.kind == "weighted_sum":
        return EpigraphProgram(0, *empty, c_T=spec.w.copy(), c_aux=np.zeros(0), kind="weighted_sum")
    if spec.kind == "max":
        # T_i - t <= 0
        return EpigraphProgram(
            1, np.eye(M), -np.ones((M, 1)), np.zeros(M),
            c_T=np.zeros(M), c_aux=np.ones(1), kind="max",
        )
    if spec.kind == "sum_r_largest":
        # aux = (t, u_1..u_M); T_i - t - u_i <= 0, -u_i <= 0; minimize r t + sum u
        A_T = np.vstack([np.eye(M), np.zeros((M, M))])
        A_aux = np.block([
            [-np.ones((M, 1)), -np.eye(M)],
            [np.zeros((M, 1)), -np.eye(M)],
        ])
        c_aux = np.concatenate([[float(spec.r)], np.ones(M)])
        return EpigraphProgram(
            M + 1, A_T, A_aux, np.zeros(2 * M),
            c_T=np.zeros(M), c_aux=c_aux, kind="sum_r_largest",
        )
    p = spec.p
    if math.isinf(p):
        raise ValueError("p = inf is the max cost; use CostSpec.max() instead")
    if p == 1.0:
        return EpigraphProgram(0, *empty, c_T=np.ones(M), c_aux=np.zeros(0), kind="p_norm")
    return EpigraphProgram(0, *empty, c_T=np.zeros(M), c_aux=np.zeros(0), p=p, kind="p_norm")


def utility_from_cost(spec: CostSpec, R, L=None) -> float:
    """Rate utility -J(L_1/R_1, ..., L_M/R_M); -inf if any rate is zero."""
    R = np.asarray(R, dtype=float)
    L = spec.L if L is None else np.asarray(L, dtype=float)
    if L is None:
        raise ValueError("packet lengths are needed: pass L or build the CostSpec with L")
    if np.any(R <= 0):
        return -math.inf
    return -eval_cost(spec, L / R)


def harmonic_mean_utility(wprime, R) -> float:
    """Weighted harmonic mean of the rates, (sum w'_i / R_i)^-1."""
    wprime = np.asarray(wprime, dtype=float)
    R = np.asarray(R, dtype=float)
    if np.any(wprime < 0):
        raise ValueError("weights must be nonnegative")
    if np.any(R[wprime > 0] <= 0):
        return 0.0
    mask = wprime > 0
    return float(1.0 / np.sum(wprime[mask] / R[mask]))
