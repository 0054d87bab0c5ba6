"""Tracing the completion-time region boundary by weighted-sum sweeps."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .costs import CostSpec
from .model import NetworkInstance
from .solver import SolveOptions, SolverError, solve_perfect_csi

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TraceEntry:
    index: int
    theta: Optional[float]
    w: np.ndarray
    T: np.ndarray
    R: np.ndarray
    cost: float


@dataclass(frozen=True, eq=False)
class RegionTrace:
    entries: list
    failures: list = field(default_factory=list)
    fingerprint: str = ""

    @property
    def T(self) -> np.ndarray:
        return np.array([e.T for e in self.entries])

    @property
    def R(self) -> np.ndarray:
        return np.array([e.R for e in self.entries])

    @property
    def W(self) -> np.ndarray:
        return np.array([e.w for e in self.entries])

    def to_csv(self) -> str:
        M = len(self.entries[0].w) if self.entries else 2
        cols = ["theta"]
        for prefix in ("w", "T", "R"):
            cols += [f"{prefix}{i + 1}" for i in range(M)]
        cols.append("cost")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for e in self.entries:
            theta = "" if e.theta is None else repr(e.theta)
            writer.writerow([theta, *map(repr, e.w.tolist()), *map(repr, e.T.tolist()),
                             *map(repr, e.R.tolist()), repr(e.cost)])
        return buf.getvalue()


def instance_fingerprint(inst: NetworkInstance) -> str:
    return hashlib.sha256(inst.to_json().encode()).hexdigest()[:16]


def sweep_angles(K: int) -> np.ndarray:
    """K angles evenly spaced strictly inside (0, pi/2)."""
    return np.arange(1, K + 1) * (math.pi / 2) / (K + 1)


def trace_completion_region(
    inst: NetworkInstance,
    K: Optional[int] = None,
    *,
    weights: Optional[Sequence] = None,
    opts: Optional[SolveOptions] = None,
    n_jobs: int = 1,
) -> RegionTrace:
    """Solve one weighted-sum problem per weight vector.

    With M = 2 and ``K`` given, weights are (cos^2 theta, sin^2 theta) over
    :func:`sweep_angles`. Otherwise pass ``weights`` explicitly. Failed
    points are recorded in ``failures`` and skipped.
    """
    if weights is None:
        if K is None or inst.M != 2:
            raise ValueError("angle sweeps need M = 2 and K; pass explicit weights otherwise")
        thetas = sweep_angles(K)
        weights = np.stack([np.cos(thetas) ** 2, np.sin(thetas) ** 2], axis=1)
        weights = weights / weights.sum(axis=1, keepdims=True)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 2 or weights.shape[1] != inst.M:
            raise ValueError(f"weights must be (K, {inst.M})")
        thetas = [None] * weights.shape[0]

    def one(k):
        try:
            sol = solve_perfect_csi(inst, CostSpec.weighted_sum(weights[k]), opts)
        except (SolverError, ValueError) as exc:
            logger.warning("sweep point %d failed: %s", k, exc)
            return k, None, str(exc)
        return k, sol, None

    idx = range(len(weights))
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(one, idx))
    else:
        results = [one(k) for k in idx]

    entries, failures = [], []
    for k, sol, err in sorted(results, key=lambda r: r[0]):
        theta = None if thetas[k] is None else float(thetas[k])
        if sol is None:
            failures.append({"index": k, "theta": theta, "w": weights[k].tolist(), "error": err})
            continue
        entries.append(TraceEntry(k, theta, weights[k].copy(), sol.T, sol.R, sol.cost))
    return RegionTrace(entries, failures, instance_fingerprint(inst))


@dataclass(frozen=True)
class AuditResult:
    convex: bool
    worst_violation: float
    witness: Optional[tuple] = None


def _dedupe(P: np.ndarray, tol: float) -> np.ndarray:
    keep = [0]
    for k in range(1, len(P)):
        if np.linalg.norm(P[k] - P[keep[-1]]) > tol:
            keep.append(k)
    return np.asarray(keep)


def convexity_audit(points, kind: str = "completion", tol: float = 1e-7) -> AuditResult:
    """Check an ordered 2-D boundary trace.

    ``kind="completion"``: the polyline must turn the same way at every
    vertex; the violation is the sine of the worst opposite turn. The
    witness is a vertex triple of original indices.

    ``kind="rate"``: the region is taken as everything under the polyline
    through the points (sorted by the first coordinate). A chord between
    two points whose midpoint lies above the polyline proves the region is
    not convex; the violation is that height relative to the point spread.
    The witness is ``(i, j, midpoint)``.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    if P.shape[0] < 3:
        raise ValueError("need at least 3 points")
    scale = float(np.max(np.ptp(P, axis=0))) or 1.0

    if kind == "completion":
        keep = _dedupe(P, 1e-9 * scale)
        Q = P[keep]
        if len(Q) < 3:
            return AuditResult(True, 0.0)
        E = np.diff(Q, axis=0)
        lengths = np.linalg.norm(E, axis=1)
        sines = (E[:-1, 0] * E[1:, 1] - E[:-1, 1] * E[1:, 0]) / (lengths[:-1] * lengths[1:])
        orient = 1.0 if np.sum(sines) >= 0 else -1.0
        bad = -orient * sines
        k = int(np.argmax(bad))
        worst = float(max(bad[k], 0.0))
        witness = (int(keep[k]), int(keep[k + 1]), int(keep[k + 2])) if worst > tol else None
        return AuditResult(worst <= tol, worst, witness)

    if kind == "rate":
        order = np.argsort(P[:, 0], kind="stable")
        xs, ys = P[order, 0], P[order, 1]
        worst, witness = 0.0, None
        n = len(P)
        for a in range(n):
            for b in range(a + 1, n):
                mid = 0.5 * (P[a] + P[b])
                height = (mid[1] - np.interp(mid[0], xs, ys)) / scale
                if height > worst:
                    worst, witness = float(height), (a, b, tuple(mid.tolist()))
        convex = worst <= tol
        return AuditResult(convex, worst, None if convex else witness)

    raise ValueError(f"kind must be 'completion' or 'rate', got {kind!r}")
