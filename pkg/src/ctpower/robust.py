"""Outage-constrained power control with random channel gains.

User i is reliable when ``P_i W_ii > S_i (N_i + sum_j P_j W_ij)``. With
independent Rayleigh entries the reliability has a closed form whose
logarithm is concave in (ln S, ln P); for Nakagami and log-normal entries it
is estimated by a smoothed sample average over frozen draws.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from . import barrier
from .barrier import reciprocal_log_rate, sigmoid
from .costs import CostSpec
from .model import ParseError, completion_time, rate, read_quantity
from .solver import (
    Certificate,
    InfeasibleError,
    ProgramBuilder,
    Solution,
    SolveOptions,
    SolverError,
    add_cost,
    add_power_rows,
    check_pressure,
    clamped_users,
)
from .costs import eval_cost

logger = logging.getLogger(__name__)

CHUNK = 1 << 16


# marginals ----------------------------------------------------------------


@dataclass(frozen=True)
class Rayleigh:
    """Exponentially distributed power gain with the given mean."""

    mean: float

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError("Rayleigh mean power must be > 0")

    def sample(self, rng, size):
        return rng.exponential(self.mean, size)

    def log_pdf_exp(self, w):
        """ln f(e^w)."""
        return -math.log(self.mean) - np.exp(w) / self.mean

    def log_center(self) -> float:
        return math.log(self.mean)

    def to_dict(self):
        return {"kind": "rayleigh", "mean": self.mean}


@dataclass(frozen=True)
class Nakagami:
    """Gamma power gain with shape m and the given mean (Nakagami-m amplitude)."""

    m: float
    mean: float

    def __post_init__(self):
        if not self.m >= 0.5:
            raise ValueError("Nakagami m must be >= 0.5")
        if not self.mean > 0:
            raise ValueError("Nakagami mean power must be > 0")

    def sample(self, rng, size):
        return rng.gamma(self.m, self.mean / self.m, size)

    def log_pdf_exp(self, w):
        m = self.m
        return (m * math.log(m / self.mean) - gammaln(m)
                + (m - 1.0) * np.asarray(w) - m * np.exp(w) / self.mean)

    def log_center(self) -> float:
        return math.log(self.mean)

    def to_dict(self):
        return {"kind": "nakagami", "m": self.m, "mean": self.mean}


@dataclass(frozen=True)
class LogNormal:
    """Power gain whose natural log is N(mu, sigma^2)."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("log-normal sigma must be > 0")

    def sample(self, rng, size):
        return np.exp(rng.normal(self.mu, self.sigma, size))

    def log_pdf_exp(self, w):
        w = np.asarray(w, dtype=float)
        s = self.sigma
        return -w - math.log(s * math.sqrt(2 * math.pi)) - (w - self.mu) ** 2 / (2 * s * s)

    def log_center(self) -> float:
        return self.mu

    def to_dict(self):
        return {"kind": "lognormal", "mu": self.mu, "sigma": self.sigma}


def marginal_from_dict(d, where: str = "entry"):
    if not isinstance(d, dict):
        raise ParseError(where, "expected an object")
    kind = d.get("kind")
    try:
        if kind == "rayleigh":
            return Rayleigh(float(d["mean"]))
        if kind == "nakagami":
            return Nakagami(float(d["m"]), float(d["mean"]))
        if kind == "lognormal":
            return LogNormal(float(d["mu"]), float(d["sigma"]))
    except KeyError as exc:
        raise ParseError(f"{where}.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(where, str(exc)) from None
    raise ParseError(f"{where}.kind", f"expected rayleigh, nakagami or lognormal, got {kind!r}")


@dataclass(frozen=True)
class ChannelDistribution:
    """Independent per-entry marginals of the M x M random gain matrix."""

    entries: tuple

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.entries)
        M = len(rows)
        if M < 1 or any(len(r) != M for r in rows):
            raise ValueError("entries must be a square M x M table")
        object.__setattr__(self, "entries", rows)

    @property
    def M(self) -> int:
        return len(self.entries)

    @classmethod
    def rayleigh(cls, mean) -> "ChannelDistribution":
        mean = np.atleast_2d(np.asarray(mean, dtype=float))
        return cls(tuple(tuple(Rayleigh(float(x)) for x in row) for row in mean))

    @classmethod
    def uniform(cls, marginal, M: int) -> "ChannelDistribution":
        return cls(tuple(tuple(marginal for _ in range(M)) for _ in range(M)))

    def row_is_rayleigh(self, i: int) -> bool:
        return all(isinstance(e, Rayleigh) for e in self.entries[i])

    def rayleigh_means(self, i: Optional[int] = None) -> np.ndarray:
        rows = range(self.M) if i is None else [i]
        for r in rows:
            if not self.row_is_rayleigh(r):
                raise ValueError(f"row {r} has non-Rayleigh marginals; no closed form")
        if i is None:
            return np.array([[e.mean for e in row] for row in self.entries])
        return np.array([e.mean for e in self.entries[i]])

    def sample_row(self, i: int, rng, n: int) -> np.ndarray:
        return np.stack([e.sample(rng, n) for e in self.entries[i]], axis=1)

    def to_dict(self) -> dict:
        return {"entries": [[e.to_dict() for e in row] for row in self.entries]}

    @classmethod
    def from_dict(cls, d) -> "ChannelDistribution":
        table = d.get("entries") if isinstance(d, dict) else d
        if not isinstance(table, list):
            raise ParseError("dist.entries", "expected an M x M list of marginals")
        try:
            return cls(tuple(
                tuple(marginal_from_dict(e, f"dist.entries[{r}][{c}]") for c, e in enumerate(row))
                for r, row in enumerate(table)
            ))
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError("dist.entries", str(exc)) from None


@dataclass(frozen=True, eq=False)
class OutageSpec:
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        if np.any(q < 0) or np.any(q >= 1):
            raise ValueError("outage caps must lie in [0, 1)")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    def __eq__(self, other):
        return isinstance(other, OutageSpec) and np.array_equal(self.q, other.q)

    __hash__ = None

    def to_dict(self):
        return {"q": self.q.tolist()}

    @classmethod
    def from_dict(cls, d) -> "OutageSpec":
        if not isinstance(d, dict) or "q" not in d:
            raise ParseError("outage.q", "missing")
        try:
            return cls(d["q"])
        except ValueError as exc:
            raise ParseError("outage.q", str(exc)) from None


@dataclass(frozen=True, eq=False)
class LinkShape:
    """Deterministic part of a robust instance: noise, caps, packet sizes."""

    N: np.ndarray
    Pmax: np.ndarray
    L: np.ndarray
    Tmax: Optional[np.ndarray] = None

    def __post_init__(self):
        M = None
        for name in ("N", "Pmax", "L", "Tmax"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.array(v, dtype=float).reshape(-1)
            if np.any(v <= 0):
                raise ValueError(f"{name} entries must be > 0")
            M = v.shape[0] if M is None else M
            if v.shape[0] != M:
                raise ValueError(f"{name} has length {v.shape[0]}, expected {M}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def M(self) -> int:
        return self.N.shape[0]

    def __eq__(self, other):
        if not isinstance(other, LinkShape):
            return NotImplemented
        for k in ("N", "Pmax", "L", "Tmax"):
            a, b = getattr(self, k), getattr(other, k)
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return True

    __hash__ = None

    def to_dict(self) -> dict:
        d = {"units": "linear", "N": self.N.tolist(), "Pmax": self.Pmax.tolist(), "L": self.L.tolist()}
        if self.Tmax is not None:
            d["Tmax"] = self.Tmax.tolist()
        return d

    @classmethod
    def from_dict(cls, d) -> "LinkShape":
        if not isinstance(d, dict):
            raise ParseError("<root>", "expected a JSON object")
        try:
            return cls(
                N=read_quantity(d, "N"), Pmax=read_quantity(d, "Pmax"),
                L=read_quantity(d, "L"), Tmax=read_quantity(d, "Tmax", required=False),
            )
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError("<root>", str(exc)) from None


@dataclass(frozen=True)
class ReliabilityEstimate:
    value: float
    se: float
    n: int
    estimator: str

    def to_dict(self):
        return {"value": self.value, "se": self.se, "n": self.n, "estimator": self.estimator}


# reliability --------------------------------------------------------------


def _noise_i(N, i):
    N = np.asarray(N, dtype=float)
    return float(N) if N.ndim == 0 else float(N[i])


def _sample_chunks(n: int, seed):
    ss = np.random.SeedSequence(seed)
    counts = [CHUNK] * (n // CHUNK) + ([n % CHUNK] if n % CHUNK else [])
    return list(zip(counts, ss.spawn(len(counts))))


def sample_gain_rows(dist: ChannelDistribution, i: int, n: int, seed, n_jobs: int = 1) -> np.ndarray:
    """n draws of row i, built from per-chunk substreams of ``seed``.

    The result depends only on (seed, n), not on ``n_jobs``.
    """
    chunks = _sample_chunks(n, seed)

    def draw(c):
        count, child = c
        return dist.sample_row(i, np.random.default_rng(child), count)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(draw, chunks))
    else:
        parts = [draw(c) for c in chunks]
    return np.concatenate(parts, axis=0)


def reliability_mc(i, S, P, dist: ChannelDistribution, N, n: int = 100_000, seed=0,
                   n_jobs: int = 1) -> ReliabilityEstimate:
    """Monte Carlo probability that user i is not in outage."""
    if n < 1:
        raise ValueError("need at least one sample")
    if not S > 0:
        raise ValueError("SINR target must be > 0")
    P = np.asarray(P, dtype=float)
    Ni = _noise_i(N, i)
    chunks = _sample_chunks(n, seed)

    def count(c):
        m, child = c
        W = dist.sample_row(i, np.random.default_rng(child), m)
        interference = W @ P - W[:, i] * P[i]
        return int(np.count_nonzero(P[i] * W[:, i] > S * (Ni + interference)))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            hits = sum(pool.map(count, chunks))
    else:
        hits = sum(count(c) for c in chunks)
    v = hits / n
    return ReliabilityEstimate(v, math.sqrt(v * (1.0 - v) / n), n, "monte_carlo")


def reliability_rayleigh_closed(i, S, P, meanG, N) -> float:
    """Closed-form reliability under independent Rayleigh (exponential power) gains."""
    if isinstance(meanG, ChannelDistribution):
        meanG = meanG.rayleigh_means()
    meanG = np.asarray(meanG, dtype=float)
    P = np.asarray(P, dtype=float)
    if P[i] <= 0:
        return 0.0
    a = S / (meanG[i, i] * P[i])
    others = np.delete(np.arange(P.shape[0]), i)
    return float(math.exp(-a * _noise_i(N, i)) / np.prod(1.0 + a * meanG[i, others] * P[others]))


def log_reliability_rayleigh(i, Stilde, Ptilde, meanG, N) -> float:
    """ln Phi_i in log-SINR / log-power coordinates."""
    meanG = np.asarray(meanG, dtype=float)
    Ptilde = np.asarray(Ptilde, dtype=float)
    base = Stilde - Ptilde[i] - math.log(meanG[i, i])
    val = -math.exp(base + math.log(_noise_i(N, i)))
    for j in range(Ptilde.shape[0]):
        if j != i and meanG[i, j] > 0:
            val -= float(barrier.softplus(base + Ptilde[j] + math.log(meanG[i, j])))
    return val


@dataclass(frozen=True)
class ProbeResult:
    passed: bool
    worst_violation: float
    trials: int
    skipped: int

    def to_dict(self):
        return {"passed": self.passed, "worst_violation": self.worst_violation,
                "trials": self.trials, "skipped": self.skipped}


def transformed_log_density(dist: ChannelDistribution, i: int, wt) -> np.ndarray:
    """ln of the density of ln W_i at ``wt``: sum_j wt_j + ln f_{W_i}(exp(wt))."""
    wt = np.atleast_2d(np.asarray(wt, dtype=float))
    total = wt.sum(axis=1)
    for j, e in enumerate(dist.entries[i]):
        total = total + e.log_pdf_exp(wt[:, j])
    return total


def log_concavity_probe(dist: ChannelDistribution, i: int, trials: int = 10_000, seed=0,
                        tol: float = 1e-9, span: tuple = (-8.0, 3.0)) -> ProbeResult:
    """Midpoint test of concavity of :func:`transformed_log_density`.

    Endpoints are drawn around each entry's log-scale centre, ``span`` wide
    for gamma-type marginals and +-6 sigma for log-normal ones. Pairs whose
    log-density is not finite are skipped and counted.
    """
    rng = np.random.default_rng(seed)
    lo, hi = [], []
    for e in dist.entries[i]:
        c = e.log_center()
        if isinstance(e, LogNormal):
            lo.append(c - 6 * e.sigma)
            hi.append(c + 6 * e.sigma)
        else:
            lo.append(c + span[0])
            hi.append(c + span[1])
    lo, hi = np.array(lo), np.array(hi)
    a = rng.uniform(lo, hi, (trials, dist.M))
    b = rng.uniform(lo, hi, (trials, dist.M))
    ga = transformed_log_density(dist, i, a)
    gb = transformed_log_density(dist, i, b)
    gm = transformed_log_density(dist, i, 0.5 * (a + b))
    ok = np.isfinite(ga) & np.isfinite(gb) & np.isfinite(gm)
    viol = 0.5 * (ga + gb) - gm
    worst = float(np.max(viol[ok])) if ok.any() else math.nan
    skipped = int(trials - ok.sum())
    if skipped:
        logger.info("log-concavity probe skipped %d pairs with non-finite density", skipped)
    return ProbeResult(bool(ok.any() and worst <= tol), worst, trials, skipped)


# smoothed sample-average reliability --------------------------------------


class SmoothedReliabilityBlock(barrier.ConstraintBlock):
    """``ln(1 - q) - ln mean_k sigmoid(margin_k / tau) <= 0`` for one user.

    ``margin_k = ln W_ii^k - ln(e^(S~-P~_i) N_i + sum_j e^(S~-P~_i+P~_j) W_ij^k)``
    over frozen draws. ``tau`` may be lowered between barrier stages.
    """

    size = 1

    def __init__(self, i, iS, iP, log_W, N_i, q_i, tau):
        self.i = i
        M = len(iP)
        self.cols = np.concatenate([[iS[i]], iP]).astype(int)
        # local variables: [S~_i, P~_0, ..., P~_{M-1}]
        others = [j for j in range(M) if j != i]
        A = np.zeros((1 + len(others), 1 + M))
        A[:, 0] = 1.0
        A[:, 1 + i] = -1.0
        for k, j in enumerate(others):
            A[1 + k, 1 + j] = 1.0
        self.A = A
        const = np.empty((log_W.shape[0], A.shape[0]))
        const[:, 0] = math.log(N_i)
        const[:, 1:] = log_W[:, others]
        self.const = const
        self.log_Wii = log_W[:, i]
        self.c = math.log1p(-q_i)
        self.tau = tau

    def smoothed(self, x, tau=None):
        tau = self.tau if tau is None else tau
        v = x[self.cols]
        lse, _ = barrier.logsumexp_rows(self.const + self.A @ v)
        return float(np.mean(sigmoid((self.log_Wii - lse) / tau)))

    def empirical(self, x) -> float:
        v = x[self.cols]
        lse, _ = barrier.logsumexp_rows(self.const + self.A @ v)
        return float(np.mean(self.log_Wii > lse))

    def values(self, x, tau=None):
        phi = self.smoothed(x, tau)
        return np.array([self.c - math.log(phi) if phi > 0 else math.inf])

    def derivatives(self, x):
        v = x[self.cols]
        tau = self.tau
        lse, pi = barrier.logsumexp_rows(self.const + self.A @ v)
        s = sigmoid((self.log_Wii - lse) / tau)
        d1 = s * (1.0 - s) / tau
        d2 = s * (1.0 - s) * (1.0 - 2.0 * s) / tau**2
        grad_g = pi @ self.A  # (K, d)
        K = s.shape[0]
        phi = s.mean()
        dphi = -(d1 @ grad_g) / K
        # Hess margin_k = -(A' diag(pi_k) A - grad_g_k grad_g_k')
        hess_g = np.einsum("kt,td,te->de", pi * d1[:, None], self.A, self.A) / K
        hess_g -= np.einsum("k,kd,ke->de", d1, grad_g, grad_g) / K
        ddphi = np.einsum("k,kd,ke->de", d2, grad_g, grad_g) / K - hess_g
        val = self.c - math.log(phi)
        g_local = -dphi / phi
        H_local = -(ddphi / phi - np.outer(dphi, dphi) / phi**2)
        n = x.shape[0]
        jac = np.zeros((1, n))
        np.add.at(jac[0], self.cols, g_local)

        def hess(w):
            H = np.zeros((n, n))
            np.add.at(H, (self.cols[:, None], self.cols[None, :]), w[0] * H_local)
            return H

        return np.array([val]), jac, hess


# robust solve -------------------------------------------------------------


def _rayleigh_table(dist, i):
    """Mean-gain matrix with only row i filled, enough for user i's closed form."""
    G = np.ones((dist.M, dist.M))
    G[i] = dist.rayleigh_means(i)
    return G


def _solve_log_sinr(f, target: float) -> float:
    """Largest S~ with f(S~) >= target for f decreasing in S~."""
    lo, hi = -60.0, 10.0
    while f(hi) > target:
        hi += 20.0
        if hi > 700:
            raise SolverError("reliability does not decrease with the SINR target")
    if f(lo) < target:
        raise InfeasibleError("reliability target not reachable even at vanishing SINR")
    return brentq(lambda s: f(s) - target, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def solve_robust(
    shape: LinkShape,
    dist: ChannelDistribution,
    q: OutageSpec,
    spec: CostSpec,
    opts: Optional[SolveOptions] = None,
    *,
    samples: int = 100_000,
    seed=0,
    tau: float = 0.05,
    tau_min: float = 1e-3,
    anneal: float = 0.5,
    audit_samples: int = 100_000,
    probe_trials: int = 1000,
) -> Solution:
    """Minimize J(T) subject to Pr{user i not in outage} >= 1 - q_i.

    Rayleigh rows use the exact reliability; other rows use the smoothed
    sample average over ``samples`` frozen draws (seeded by ``seed``).
    The returned solution carries an ``audit`` with the log-concavity probe
    and unsmoothed Monte Carlo re-checks of each constraint.
    """
    opts = opts or SolveOptions()
    M = shape.M
    if dist.M != M or q.q.shape != (M,):
        raise ValueError("distribution, outage caps and link shape disagree on M")
    spec.check_size(M)
    check_pressure(spec, shape.Tmax)
    zero = np.flatnonzero(q.q == 0)
    if zero.size:
        raise InfeasibleError(
            f"q[{int(zero[0])}] = 0: gains have unbounded support, so outage cannot be exactly zero"
        )

    probes = [log_concavity_probe(dist, i, probe_trials, seed=i) for i in range(M)]
    for i, pr in enumerate(probes):
        if not pr.passed:
            warnings.warn(f"log-concavity hypothesis not confirmed for user {i} "
                          f"(worst violation {pr.worst_violation:.3g})", stacklevel=2)

    # (S~, P~) occupy indices [0, 2M) in every program built below
    iS, iP = np.arange(M), np.arange(M, 2 * M)
    saa_blocks: dict = {}
    for i in range(M):
        if not dist.row_is_rayleigh(i):
            W = sample_gain_rows(dist, i, samples, seed=[int(seed), i])
            saa_blocks[i] = SmoothedReliabilityBlock(i, iS, iP, np.log(W), shape.N[i], q.q[i], tau)

    def add_reliability(b):
        for i in range(M):
            if i in saa_blocks:
                b.add_block(lambda n, blk=saa_blocks[i]: blk, "reliability")
                continue
            G = dist.rayleigh_means(i)
            base = {int(iS[i]): 1.0, int(iP[i]): -1.0}
            terms = [(base, math.log(shape.N[i]) - math.log(G[i]), True)]
            for j in range(M):
                if j != i and G[j] > 0:
                    form = dict(base)
                    form[int(iP[j])] = 1.0
                    terms.append((form, math.log(G[j]) - math.log(G[i]), False))
            b.add_expsp(terms, math.log1p(-q.q[i]), "reliability")

    def log_phi(i, St_i, Pt):
        if i in saa_blocks:
            x = np.concatenate([np.full(M, St_i), Pt])
            return math.log(max(saa_blocks[i].smoothed(x), 1e-300))
        return log_reliability_rayleigh(i, St_i, Pt, _rayleigh_table(dist, i), shape.N)

    delta = opts.init_margin
    Pt0 = np.log(shape.Pmax / 2.0)
    St0 = np.array([_solve_log_sinr(lambda s, i=i: log_phi(i, s, Pt0), math.log1p(-q.q[i]))
                    for i in range(M)]) - delta
    T0 = shape.L * reciprocal_log_rate(St0) * (1.0 + delta)
    if shape.Tmax is not None and np.any(T0 >= shape.Tmax):
        pb = ProgramBuilder()
        pb.new(St0)
        pb.new(Pt0)
        add_reliability(pb)
        add_power_rows(pb, shape.Pmax, iP, opts.power_floor)
        Smin = 2.0 ** (shape.L / shape.Tmax) - 1.0
        for i in range(M):
            pb.add_linear({int(iS[i]): -1.0}, -math.log(Smin[i]), "smin")
        x, worst = barrier.phase_one(pb.blocks(), np.array(pb.x0), margin=1e-3, **opts.barrier_kwargs())
        if not worst < 0:
            raise InfeasibleError(
                f"completion-time caps cannot be met strictly (best worst-constraint value {worst:.3g})",
                Certificate("infeasible", worst, math.inf, math.inf, 0, 0),
            )
        St0, Pt0 = x[iS], x[iP]
        T0 = 0.5 * (shape.L * reciprocal_log_rate(St0) + shape.Tmax)

    b = ProgramBuilder()
    b.new(St0)
    b.new(Pt0)
    iT = b.new(T0)
    for i in range(M):
        b.add_ct(iS[i], iT[i], shape.L[i])
    add_reliability(b)
    add_power_rows(b, shape.Pmax, iP, opts.power_floor)
    if shape.Tmax is not None:
        for i in range(M):
            b.add_linear({int(iT[i]): 1.0}, shape.Tmax[i], "tmax")
    add_cost(b, spec, [{int(k): 1.0} for k in iT])

    def anneal_hook(x, t):
        for blk in saa_blocks.values():
            new = max(blk.tau * anneal, tau_min)
            if new < blk.tau and blk.values(x, new)[0] < 0:
                blk.tau = new

    res = barrier.barrier_minimize(
        b.objective(), b.blocks(), np.array(b.x0),
        stage_hook=anneal_hook if saa_blocks else None, **opts.barrier_kwargs(),
    )

    Pt = res.x[iP]
    P = np.minimum(np.exp(Pt), shape.Pmax)
    S = np.exp(res.x[iS])
    audit_users = []
    rel_viol = 0.0
    for i in range(M):
        entry: dict = {"required": 1.0 - float(q.q[i])}
        if i not in saa_blocks:
            G = _rayleigh_table(dist, i)
            # raise the target to the constraint boundary at the final powers
            S[i] = math.exp(_solve_log_sinr(
                lambda s: log_reliability_rayleigh(i, s, np.log(P), G, shape.N), math.log1p(-q.q[i])))
            closed = reliability_rayleigh_closed(i, S[i], P, G, shape.N)
            entry["closed_form"] = closed
            rel_viol = max(rel_viol, (1.0 - q.q[i]) - closed)
        else:
            blk = saa_blocks[i]
            entry["smoothed_saa"] = blk.smoothed(res.x)
            entry["empirical_saa"] = blk.empirical(res.x)
            entry["tau"] = blk.tau
        entry["monte_carlo"] = reliability_mc(i, S[i], P, dist, shape.N, audit_samples,
                                              seed=[int(seed), M + i]).to_dict()
        entry["log_concavity_probe"] = probes[i].to_dict()
        audit_users.append(entry)

    R = rate(S)
    T = completion_time(shape.L, R)
    viol = [0.0, float(np.max(P - shape.Pmax)), res.max_constraint, rel_viol]
    if shape.Tmax is not None:
        viol.append(float(np.max(T - shape.Tmax)))
    cert = Certificate(
        status=res.status, max_violation=max(viol), gap=res.gap,
        barrier_objective=res.objective, outer_iterations=res.outer_iterations,
        newton_iterations=res.newton_iterations,
        clamped=clamped_users(Pt, shape.Pmax, opts.power_floor),
    )
    if not res.converged:
        raise SolverError(f"robust solve did not converge ({res.status})", cert)
    audit = {"users": audit_users, "samples": samples if saa_blocks else 0, "seed": seed}
    return Solution(P=P, S=S, R=R, T=T, cost=eval_cost(spec, T), certificate=cert, audit=audit)


@dataclass(frozen=True)
class RobustProblem:
    """Everything a robust solve reads from one input file."""

    shape: LinkShape
    dist: ChannelDistribution
    outage: OutageSpec

    def to_dict(self) -> dict:
        d = self.shape.to_dict()
        d["dist"] = self.dist.to_dict()
        d["outage"] = self.outage.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "RobustProblem":
        if not isinstance(d, dict):
            raise ParseError("<root>", "expected a JSON object")
        for key in ("dist", "outage"):
            if key not in d:
                raise ParseError(key, "missing")
        prob = cls(LinkShape.from_dict(d), ChannelDistribution.from_dict(d["dist"]),
                   OutageSpec.from_dict(d["outage"]))
        if prob.dist.M != prob.shape.M or prob.outage.q.shape != (prob.shape.M,):
            raise ParseError("dist", f"sizes disagree with N (M = {prob.shape.M})")
        return prob

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RobustProblem":
        return cls.from_dict(json.loads(text))
