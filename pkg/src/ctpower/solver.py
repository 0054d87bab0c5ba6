"""Completion-time minimization in log-SINR / log-power coordinates.

With S~ = ln S and P~ = ln P the problem

    minimize J(T)  s.t.  T_i >= L_i / log2(1 + S_i),
                         S_i <= G_ii P_i / (N_i + sum_j G_ij P_j),
                         P_i <= Pmax_i

becomes convex: the rate bound is ``L_i * h(S~_i)`` with h convex and the
SINR bound is a log-sum-exp of affine functions. Everything here builds that
program for :mod:`ctpower.barrier` and maps the optimum back through the
physical chain in :mod:`ctpower.model`.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np

from . import barrier
from .barrier import reciprocal_log_rate
from .costs import CostSpec, epigraph_reform, eval_cost
from .model import NetworkInstance, ParseError, completion_time, link_state, rate

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """The solve failed; ``certificate`` carries the residuals reached."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class InfeasibleError(SolverError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    t0: float = 1.0
    mu: float = 20.0
    newton_tol: float = 1e-10
    gap_tol: float = 1e-8
    max_outer: int = 60
    max_inner: int = 200
    init_margin: float = 0.1
    power_floor: float = 1e-12

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be > 0")
        if not self.mu > 1:
            raise ValueError("mu must be > 1")
        for name in ("newton_tol", "gap_tol", "init_margin", "power_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")

    def barrier_kwargs(self) -> dict:
        return dict(
            t0=self.t0, mu=self.mu, newton_tol=self.newton_tol, gap_tol=self.gap_tol,
            max_outer=self.max_outer, max_inner=self.max_inner,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "SolveOptions":
        if not isinstance(d, dict):
            raise ParseError("opts", "expected a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParseError(f"opts.{sorted(unknown)[0]}", "unknown option")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ParseError("opts", str(exc)) from None


@dataclass(frozen=True)
class Certificate:
    status: str
    max_violation: float
    gap: float
    barrier_objective: float
    outer_iterations: int
    newton_iterations: int
    clamped: tuple = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clamped"] = list(self.clamped)
        return d

    @classmethod
    def from_dict(cls, d) -> "Certificate":
        d = dict(d)
        d["clamped"] = tuple(d.get("clamped", ()))
        return cls(**d)


def _vec(a):
    v = np.array(a, dtype=float)
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class Solution:
    P: np.ndarray
    S: np.ndarray
    R: np.ndarray
    T: np.ndarray
    cost: float
    certificate: Certificate
    audit: Optional[dict] = None

    def __post_init__(self):
        for name in ("P", "S", "R", "T"):
            object.__setattr__(self, name, _vec(getattr(self, name)))

    def __eq__(self, other):
        if not isinstance(other, Solution):
            return NotImplemented
        return (
            all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("P", "S", "R", "T"))
            and self.cost == other.cost
            and self.certificate == other.certificate
            and self.audit == other.audit
        )

    __hash__ = None

    def to_dict(self) -> dict:
        d = {
            "units": "linear",
            "P": self.P.tolist(), "S": self.S.tolist(),
            "R": self.R.tolist(), "T": self.T.tolist(),
            "cost": self.cost,
            "certificate": self.certificate.to_dict(),
        }
        if self.audit is not None:
            d["audit"] = self.audit
        return d

    @classmethod
    def from_dict(cls, d) -> "Solution":
        return cls(
            P=d["P"], S=d["S"], R=d["R"], T=d["T"], cost=d["cost"],
            certificate=Certificate.from_dict(d["certificate"]),
            audit=d.get("audit"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Solution":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class TransformedPoint:
    Stilde: np.ndarray
    Ptilde: np.ndarray
    T: Optional[np.ndarray] = None
    aux: Optional[np.ndarray] = None


def ct_bound(x):
    """h(x) = 1/log2(1 + e^x) with its first and second derivatives."""
    return reciprocal_log_rate(x, derivatives=True)


def _residual_terms(inst: NetworkInstance, i: int, Stilde, Ptilde):
    G = inst.G
    if G[i, i] <= 0:
        raise ValueError(f"G[{i},{i}] must be > 0")
    base = Stilde[i] - Ptilde[i] - math.log(G[i, i])
    terms = [base + math.log(inst.N[i])]
    for j in range(inst.M):
        if j != i and G[i, j] > 0:
            terms.append(base + Ptilde[j] + math.log(G[i, j]))
    return np.array(terms)


def feasibility_residual(i: int, x: TransformedPoint, inst: NetworkInstance) -> float:
    """Log of (noise + interference) * S_i / (G_ii P_i); feasible iff <= 0."""
    terms = _residual_terms(inst, i, np.asarray(x.Stilde, float), np.asarray(x.Ptilde, float))
    return float(barrier.logsumexp_rows(terms[None, :])[0][0])


# program assembly ---------------------------------------------------------


class ProgramBuilder:
    """Collects variables, rows and the objective, then emits barrier blocks.

    Linear forms are dicts ``{variable index: coefficient}``. Rows carry a
    group tag so a subset can be handed to phase I.
    """

    def __init__(self):
        self.x0: list[float] = []
        self.linear: list[tuple[str, dict, float]] = []
        self.lse: list[tuple[str, list]] = []
        self.ct: list[tuple[str, int, int, float]] = []
        self.expsp: list[tuple[str, list, float]] = []
        self.custom: list[tuple[str, object]] = []
        self.c: dict[int, float] = {}
        self.norms: list[tuple[float, list, float]] = []

    @property
    def n(self) -> int:
        return len(self.x0)

    def new(self, init) -> np.ndarray:
        init = np.atleast_1d(np.asarray(init, dtype=float))
        start = self.n
        self.x0.extend(init.tolist())
        return np.arange(start, start + init.shape[0])

    def set_init(self, idx, values) -> None:
        for k, v in zip(np.atleast_1d(idx), np.atleast_1d(values)):
            self.x0[int(k)] = float(v)

    def add_linear(self, form: dict, rhs: float, group: str) -> None:
        self.linear.append((group, form, float(rhs)))

    def add_lse(self, terms: list, group: str) -> None:
        """``terms``: list of ``(form, constant)``; row is ln sum exp(form.x + const) <= 0."""
        self.lse.append((group, terms))

    def add_ct(self, idx_s: int, idx_t: int, coef: float, group: str = "ct") -> None:
        self.ct.append((group, int(idx_s), int(idx_t), float(coef)))

    def add_expsp(self, terms: list, const: float, group: str) -> None:
        """``terms``: list of ``(form, constant, is_exp)``."""
        self.expsp.append((group, terms, float(const)))

    def add_block(self, factory, group: str) -> None:
        """``factory(n)`` returns a constraint block for an n-variable program."""
        self.custom.append((group, factory))

    def add_objective(self, form: dict, scale: float = 1.0) -> None:
        for k, v in form.items():
            self.c[k] = self.c.get(k, 0.0) + scale * v

    def add_norm(self, coef: float, rows: list, p: float) -> None:
        self.norms.append((coef, rows, p))

    def _dense(self, form: dict) -> np.ndarray:
        v = np.zeros(self.n)
        for k, c in form.items():
            v[k] += c
        return v

    def blocks(self, groups: Optional[set] = None) -> list:
        keep = (lambda g: True) if groups is None else (lambda g: g in groups)
        out = []
        lin = [(f, r) for g, f, r in self.linear if keep(g)]
        if lin:
            out.append(barrier.LinearBlock([self._dense(f) for f, _ in lin], [r for _, r in lin]))
        rows = [terms for g, terms in self.lse if keep(g)]
        if rows:
            k = max(len(t) for t in rows)
            A = np.zeros((len(rows), k, self.n))
            b = np.full((len(rows), k), -np.inf)
            for r, terms in enumerate(rows):
                for q, (form, const) in enumerate(terms):
                    A[r, q] = self._dense(form)
                    b[r, q] = const
            out.append(barrier.LogSumExpBlock(A, b))
        ct = [(s, t, c) for g, s, t, c in self.ct if keep(g)]
        if ct:
            s, t, c = zip(*ct)
            out.append(barrier.ScaledReciprocalLogBlock(self.n, s, t, c))
        rows = [(terms, const) for g, terms, const in self.expsp if keep(g)]
        if rows:
            k = max(len(t) for t, _ in rows)
            A = np.zeros((len(rows), k, self.n))
            b = np.full((len(rows), k), -np.inf)
            is_exp = np.zeros((len(rows), k), dtype=bool)
            for r, (terms, _) in enumerate(rows):
                for q, (form, const, e) in enumerate(terms):
                    A[r, q] = self._dense(form)
                    b[r, q] = const
                    is_exp[r, q] = e
            out.append(barrier.ExpSoftplusBlock(A, b, is_exp, [c for _, c in rows]))
        out.extend(factory(self.n) for g, factory in self.custom if keep(g))
        return out

    def objective(self):
        c = self._dense(self.c)
        if not self.norms:
            return barrier.LinearObjective(c)
        terms = [(a, np.array([self._dense(f) for f in rows]), p) for a, rows, p in self.norms]
        return barrier.NormObjective(c, terms)


def add_cost(builder: ProgramBuilder, spec: CostSpec, targets: list, scale: float = 1.0):
    """Add ``scale * J(Y)`` where ``Y_i = targets[i] . x``; returns aux indices."""
    M = len(targets)
    prog = epigraph_reform(spec, M)
    Y0 = np.array([sum(c * builder.x0[k] for k, c in form.items()) for form in targets])
    aux = builder.new(prog.initial_aux(Y0))
    form: dict = {}
    for i, tf in enumerate(targets):
        for k, v in tf.items():
            form[k] = form.get(k, 0.0) + prog.c_T[i] * v
    for a, v in zip(aux, prog.c_aux):
        form[int(a)] = form.get(int(a), 0.0) + v
    builder.add_objective(form, scale)
    if prog.p is not None:
        builder.add_norm(scale, targets, prog.p)
    for r in range(prog.n_constraints):
        row: dict = {}
        for i, tf in enumerate(targets):
            if prog.A_T[r, i] != 0:
                for k, v in tf.items():
                    row[k] = row.get(k, 0.0) + prog.A_T[r, i] * v
        for a, v in zip(aux, prog.A_aux[r]):
            if v != 0:
                row[int(a)] = row.get(int(a), 0.0) + v
        builder.add_linear(row, prog.b[r], "epi")
    return aux


def add_link_rows(builder, G, N, iS, iP, group: str = "sinr") -> None:
    """Log-sum-exp SINR rows for one gain matrix."""
    M = G.shape[0]
    for i in range(M):
        base = {int(iS[i]): 1.0, int(iP[i]): -1.0}
        terms = [(base, math.log(N[i]) - math.log(G[i, i]))]
        for j in range(M):
            if j != i and G[i, j] > 0:
                form = dict(base)
                form[int(iP[j])] = 1.0
                terms.append((form, math.log(G[i, j]) - math.log(G[i, i])))
        builder.add_lse(terms, group)


def add_power_rows(builder, Pmax, iP, floor: float, *, cap: bool = True) -> None:
    for i, k in enumerate(iP):
        if cap:
            builder.add_linear({int(k): 1.0}, math.log(Pmax[i]), "power")
        builder.add_linear({int(k): -1.0}, -math.log(floor * Pmax[i]), "clamp")


def check_pressure(spec: CostSpec, Tmax) -> None:
    """Zero-weight users without a completion-time cap leave the barrier unbounded."""
    if spec.kind == "weighted_sum":
        free = np.flatnonzero(spec.w == 0)
        if Tmax is None and free.size:
            raise ValueError(
                f"user {int(free[0])} has zero weight and no Tmax; its completion "
                "time is unbounded. Give Tmax or positive weights."
            )


def clamped_users(Ptilde, Pmax, floor: float) -> tuple:
    return tuple(int(i) for i in np.flatnonzero(np.exp(Ptilde) <= 10.0 * floor * np.asarray(Pmax)))


def _initial_point(inst: NetworkInstance, opts: SolveOptions):
    delta = opts.init_margin
    P0 = inst.Pmax / 2.0
    St0 = np.log(link_state(inst, P0).S) - delta
    T0 = inst.L * reciprocal_log_rate(St0) * (1.0 + delta)
    return St0, np.log(P0), T0


def _phase_one_sinr(inst, opts, St0, Pt0):
    """Strictly feasible (S~, P~) meeting Tmax, via a slack-minimization barrier."""
    b = ProgramBuilder()
    iS, iP = b.new(St0), b.new(Pt0)
    add_link_rows(b, inst.G, inst.N, iS, iP)
    add_power_rows(b, inst.Pmax, iP, opts.power_floor)
    Smin = 2.0 ** (inst.L / inst.Tmax) - 1.0
    for i in range(inst.M):
        b.add_linear({int(iS[i]): -1.0}, -math.log(Smin[i]), "smin")
    x, worst = barrier.phase_one(b.blocks(), np.array(b.x0), margin=1e-3, **opts.barrier_kwargs())
    if not worst < 0:
        raise InfeasibleError(
            f"completion-time caps cannot be met strictly (best worst-constraint value {worst:.3g})",
            Certificate("infeasible", worst, math.inf, math.inf, 0, 0),
        )
    return x[iS], x[iP]


def solve_perfect_csi(
    inst: NetworkInstance,
    spec: CostSpec,
    opts: Optional[SolveOptions] = None,
    *,
    linear_T: Optional[tuple] = None,
    sum_power: Sequence[tuple] = (),
) -> Solution:
    """Optimal powers for known gains.

    ``linear_T = (A, b)`` adds ``A @ T <= b``; each ``(users, budget)`` in
    ``sum_power`` adds ``sum_{j in users} P_j <= budget``.
    """
    opts = opts or SolveOptions()
    M = inst.M
    spec.check_size(M)
    check_pressure(spec, inst.Tmax)

    St0, Pt0, T0 = _initial_point(inst, opts)
    needs_phase_one = inst.Tmax is not None and np.any(T0 >= inst.Tmax)
    if sum_power:
        for users, budget in sum_power:
            if np.sum(np.exp(Pt0[list(users)])) >= budget:
                raise ValueError("initial half-power point violates a sum-power budget; lower it")
    if needs_phase_one:
        St0, Pt0 = _phase_one_sinr(inst, opts, St0, Pt0)
        lower = inst.L * reciprocal_log_rate(St0)
        T0 = 0.5 * (lower + inst.Tmax)

    def build(T0, St0, Pt0, with_cost=True):
        b = ProgramBuilder()
        iT, iS, iP = b.new(T0), b.new(St0), b.new(Pt0)
        for i in range(M):
            b.add_ct(iS[i], iT[i], inst.L[i])
        add_link_rows(b, inst.G, inst.N, iS, iP)
        add_power_rows(b, inst.Pmax, iP, opts.power_floor)
        if inst.Tmax is not None:
            for i in range(M):
                b.add_linear({int(iT[i]): 1.0}, inst.Tmax[i], "tmax")
        if linear_T is not None:
            for row, r in zip(A, rhs):
                b.add_linear({int(iT[i]): float(row[i]) for i in range(M) if row[i]}, r, "extra")
        for users, budget in sum_power:
            b.add_lse([({int(iP[j]): 1.0}, -math.log(budget)) for j in users], "sumpower")
        if with_cost:
            add_cost(b, spec, [{int(k): 1.0} for k in iT])
        return b, iP

    if linear_T is not None:
        A, rhs = np.atleast_2d(linear_T[0]), np.atleast_1d(linear_T[1])
        if np.any(A @ T0 >= rhs):
            # phase I over (T, S~, P~) with every constraint except the cost rows
            pb, _ = build(T0, St0, Pt0, with_cost=False)
            x, worst = barrier.phase_one(pb.blocks(), np.array(pb.x0), margin=1e-3, **opts.barrier_kwargs())
            if not worst < 0:
                raise InfeasibleError(
                    f"extra linear constraints on T cannot be met strictly (best worst-constraint value {worst:.3g})",
                    Certificate("infeasible", worst, math.inf, math.inf, 0, 0),
                )
            T0, St0, Pt0 = x[:M], x[M:2 * M], x[2 * M:3 * M]

    b, iP = build(T0, St0, Pt0)
    res = barrier.barrier_minimize(b.objective(), b.blocks(), np.array(b.x0), **opts.barrier_kwargs())
    P = np.minimum(np.exp(res.x[iP]), inst.Pmax)
    return finish_solution(inst, spec, res, P, res.x[iP], opts)


def finish_solution(inst, spec, res, P, Ptilde, opts, *, S=None, audit=None) -> Solution:
    """Map a barrier result back to physical quantities and certify it."""
    if S is None:
        S = link_state(inst, P).S
    R = rate(S)
    T = completion_time(inst.L, R)
    viol = [0.0, float(np.max(P - inst.Pmax)), res.max_constraint]
    if inst.Tmax is not None:
        viol.append(float(np.max(T - inst.Tmax)))
    cert = Certificate(
        status=res.status,
        max_violation=max(viol),
        gap=res.gap,
        barrier_objective=res.objective,
        outer_iterations=res.outer_iterations,
        newton_iterations=res.newton_iterations,
        clamped=clamped_users(Ptilde, inst.Pmax, opts.power_floor),
    )
    if not res.converged:
        raise SolverError(f"barrier method did not converge ({res.status}, gap {res.gap:.3g})", cert)
    if cert.clamped:
        logger.info("power floor active for users %s", cert.clamped)
    return Solution(P=P, S=S, R=R, T=T, cost=eval_cost(spec, T), certificate=cert, audit=audit)


# grid oracle --------------------------------------------------------------


def power_grid(Pmax_i: float, points: int, span_decades: float = 3.0) -> np.ndarray:
    """Log-spaced powers ``Pmax * 10^(-span k / points)``, k = 0..points-1.

    Grids nest when ``points`` doubles.
    """
    k = np.arange(points)
    return Pmax_i * 10.0 ** (-span_decades * k / points)


def batch_cost(spec: CostSpec, T: np.ndarray) -> np.ndarray:
    """eval_cost applied to each row of T."""
    if spec.kind == "weighted_sum":
        return T @ spec.w
    if spec.kind == "max":
        return T.max(axis=1)
    if spec.kind == "sum_r_largest":
        return -np.sort(-T, axis=1)[:, : spec.r].sum(axis=1)
    m = T.max(axis=1, keepdims=True)
    if math.isinf(spec.p):
        return m[:, 0]
    return m[:, 0] * np.sum((T / m) ** spec.p, axis=1) ** (1.0 / spec.p)


def brute_force_oracle(
    inst: NetworkInstance,
    spec: CostSpec,
    grid_points_per_dim: int,
    span_decades: float = 3.0,
) -> Solution:
    """Exhaustive search over a per-user log power grid with SINR at equality."""
    spec.check_size(inst.M)
    grids = [power_grid(p, grid_points_per_dim, span_decades) for p in inst.Pmax]
    M = inst.M
    g = np.diag(inst.G)
    lead = grids[: max(M - 2, 0)]
    tail = grids[max(M - 2, 0):]
    mesh = np.stack([a.ravel() for a in np.meshgrid(*tail, indexing="ij")], axis=1)
    best_cost, best_P = math.inf, None
    for head in itertools.product(*lead):
        P = np.hstack([np.tile(np.array(head, dtype=float), (mesh.shape[0], 1)), mesh])
        total = P @ inst.G.T
        S = g * P / (inst.N + total - g * P)
        T = inst.L / (np.log1p(S) / math.log(2.0))
        cost = batch_cost(spec, T)
        if inst.Tmax is not None:
            cost = np.where(np.all(T <= inst.Tmax, axis=1), cost, np.inf)
        k = int(np.argmin(cost))
        if cost[k] < best_cost:
            best_cost, best_P = float(cost[k]), P[k].copy()
    if best_P is None:
        raise InfeasibleError("no grid point meets the completion-time caps")
    ls = link_state(inst, best_P)
    cert = Certificate("grid", 0.0, math.nan, best_cost, 0, 0)
    return Solution(P=best_P, S=ls.S, R=ls.R, T=ls.T, cost=eval_cost(spec, ls.T), certificate=cert)
