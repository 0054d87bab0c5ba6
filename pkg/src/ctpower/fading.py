"""Power adaptation over a finite set of fading states.

Two objectives are supported: the cost of the expected completion times,
J(E[T]), and the expected cost, E[J(T)] = sum_s p_s J(T^(s)). Power is
limited either on average over the states (``"avg"``) or in every state
(``"short_term"``). All states share one convex program; the average-power
coupling is a log-sum-exp row over the states.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import barrier
from .barrier import reciprocal_log_rate
from .costs import CostSpec, eval_cost
from .model import NetworkInstance, ParseError, link_state, read_quantity
from .solver import (
    Certificate,
    ProgramBuilder,
    SolveOptions,
    SolverError,
    add_cost,
    add_link_rows,
    add_power_rows,
    check_pressure,
    clamped_users,
    solve_perfect_csi,
)

MAX_STATES = 64
MODES = ("avg", "short_term")


@dataclass(frozen=True, eq=False)
class FadingStates:
    probs: np.ndarray
    states: np.ndarray
    N: np.ndarray
    Pmax: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        states = np.array(self.states, dtype=float)
        if states.ndim != 3 or states.shape[1] != states.shape[2]:
            raise ValueError("states must be a list of square gain matrices")
        if probs.shape != (states.shape[0],):
            raise ValueError("need one probability per state")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("state probabilities must be > 0 and sum to 1")
        for arr in (probs, states):
            arr.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "states", states)
        # validates N, Pmax, L and every gain matrix
        insts = [NetworkInstance(G, self.N, self.Pmax, self.L) for G in states]
        for name in ("N", "Pmax", "L"):
            object.__setattr__(self, name, getattr(insts[0], name))

    @property
    def S(self) -> int:
        return self.states.shape[0]

    @property
    def M(self) -> int:
        return self.states.shape[1]

    def instance(self, s: int) -> NetworkInstance:
        return NetworkInstance(self.states[s], self.N, self.Pmax, self.L)

    def __eq__(self, other):
        if not isinstance(other, FadingStates):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("probs", "states", "N", "Pmax", "L"))

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "units": "linear",
            "probs": self.probs.tolist(),
            "states": [{"G": G.tolist()} for G in self.states],
            "N": self.N.tolist(), "Pmax": self.Pmax.tolist(), "L": self.L.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "FadingStates":
        if not isinstance(d, dict):
            raise ParseError("<root>", "expected a JSON object")
        for key in ("probs", "states"):
            if key not in d:
                raise ParseError(key, "missing")
        states = []
        for s, st in enumerate(d["states"]):
            if not isinstance(st, dict):
                raise ParseError(f"states[{s}]", "expected an object with key 'G'")
            try:
                states.append(read_quantity(st, "G", ndim=2))
            except ParseError as exc:
                raise ParseError(f"states[{s}].{exc.field}", exc.message) from None
        try:
            return cls(
                probs=d["probs"], states=states,
                N=read_quantity(d, "N"), Pmax=read_quantity(d, "Pmax"), L=read_quantity(d, "L"),
            )
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError("<root>", str(exc)) from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FadingStates":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class AdaptiveSolution:
    P: np.ndarray
    T: np.ndarray
    ET: np.ndarray
    objective: float
    objective_kind: str
    power_mode: str
    certificate: Certificate

    def __post_init__(self):
        for name in ("P", "T", "ET"):
            v = np.array(getattr(self, name), dtype=float)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def __eq__(self, other):
        if not isinstance(other, AdaptiveSolution):
            return NotImplemented
        return (
            all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("P", "T", "ET"))
            and (self.objective, self.objective_kind, self.power_mode, self.certificate)
            == (other.objective, other.objective_kind, other.power_mode, other.certificate)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "units": "linear",
            "P": self.P.tolist(), "T": self.T.tolist(), "ET": self.ET.tolist(),
            "objective": self.objective,
            "objective_kind": self.objective_kind,
            "power_mode": self.power_mode,
            "certificate": self.certificate.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "AdaptiveSolution":
        return cls(
            P=d["P"], T=d["T"], ET=d["ET"], objective=d["objective"],
            objective_kind=d["objective_kind"], power_mode=d["power_mode"],
            certificate=Certificate.from_dict(d["certificate"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "AdaptiveSolution":
        return cls.from_dict(json.loads(text))


def adaptive_objective(fs: FadingStates, spec: CostSpec, T: np.ndarray, kind: str) -> float:
    T = np.asarray(T, dtype=float)
    if kind == "cost_of_expected":
        return eval_cost(spec, fs.probs @ T)
    return float(sum(p * eval_cost(spec, Ts) for p, Ts in zip(fs.probs, T)))


def _solve_joint(fs, spec, kind, mode, opts, max_states):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if fs.S > max_states:
        raise ValueError(f"{fs.S} states exceed the cap of {max_states}; raise max_states")
    spec.check_size(fs.M)
    check_pressure(spec, None)
    opts = opts or SolveOptions()
    delta = opts.init_margin
    b = ProgramBuilder()
    idx = []
    P0 = fs.Pmax / 2.0
    for s in range(fs.S):
        St0 = np.log(link_state(fs.instance(s), P0).S) - delta
        T0 = fs.L * reciprocal_log_rate(St0) * (1.0 + delta)
        iT, iS, iP = b.new(T0), b.new(St0), b.new(np.log(P0))
        for i in range(fs.M):
            b.add_ct(iS[i], iT[i], fs.L[i])
        add_link_rows(b, fs.states[s], fs.N, iS, iP)
        add_power_rows(b, fs.Pmax, iP, opts.power_floor, cap=(mode == "short_term"))
        idx.append((iT, iS, iP))
    if mode == "avg":
        for i in range(fs.M):
            b.add_lse(
                [({int(idx[s][2][i]): 1.0}, math.log(fs.probs[s]) - math.log(fs.Pmax[i]))
                 for s in range(fs.S)],
                "avgpower",
            )
    if kind == "cost_of_expected":
        targets = [{int(idx[s][0][i]): float(fs.probs[s]) for s in range(fs.S)} for i in range(fs.M)]
        add_cost(b, spec, targets)
    else:
        for s in range(fs.S):
            add_cost(b, spec, [{int(k): 1.0} for k in idx[s][0]], scale=float(fs.probs[s]))

    res = barrier.barrier_minimize(b.objective(), b.blocks(), np.array(b.x0), **opts.barrier_kwargs())
    P = np.array([np.exp(res.x[iP]) for _, _, iP in idx])
    if mode == "short_term":
        P = np.minimum(P, fs.Pmax)
        power_viol = float(np.max(P - fs.Pmax))
    else:
        power_viol = float(np.max(fs.probs @ P - fs.Pmax))
    T = np.array([link_state(fs.instance(s), P[s]).T for s in range(fs.S)])
    clamped = sorted({u for s in range(fs.S) for u in clamped_users(res.x[idx[s][2]], fs.Pmax, opts.power_floor)})
    cert = Certificate(
        status=res.status,
        max_violation=max(0.0, power_viol, res.max_constraint),
        gap=res.gap,
        barrier_objective=res.objective,
        outer_iterations=res.outer_iterations,
        newton_iterations=res.newton_iterations,
        clamped=tuple(clamped),
    )
    if not res.converged:
        raise SolverError(f"adaptive solve did not converge ({res.status})", cert)
    return AdaptiveSolution(
        P=P, T=T, ET=fs.probs @ T,
        objective=adaptive_objective(fs, spec, T, kind),
        objective_kind=kind, power_mode=mode, certificate=cert,
    )


def solve_adaptive_avg(
    fs: FadingStates,
    spec: CostSpec,
    opts: Optional[SolveOptions] = None,
    *,
    mode: str = "avg",
    max_states: int = MAX_STATES,
) -> AdaptiveSolution:
    """Minimize J(E[T]); ``mode="short_term"`` gives the per-state-cap baseline."""
    return _solve_joint(fs, spec, "cost_of_expected", mode, opts, max_states)


def solve_adaptive_expected_cost(
    fs: FadingStates,
    spec: CostSpec,
    mode: str = "avg",
    opts: Optional[SolveOptions] = None,
    *,
    decompose: bool = False,
    n_jobs: int = 1,
    max_states: int = MAX_STATES,
) -> AdaptiveSolution:
    """Minimize E[J(T)].

    Under short-term constraints the problem separates by state;
    ``decompose=True`` then solves each state on its own (in parallel when
    ``n_jobs > 1``) instead of one joint program.
    """
    if not decompose:
        return _solve_joint(fs, spec, "expected_cost", mode, opts, max_states)
    if mode != "short_term":
        raise ValueError("only short-term power constraints decompose by state")
    if fs.S > max_states:
        raise ValueError(f"{fs.S} states exceed the cap of {max_states}; raise max_states")

    def one(s):
        return solve_perfect_csi(fs.instance(s), spec, opts)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            sols = list(pool.map(one, range(fs.S)))
    else:
        sols = [one(s) for s in range(fs.S)]
    T = np.array([sol.T for sol in sols])
    certs = [sol.certificate for sol in sols]
    cert = Certificate(
        status="optimal",
        max_violation=max(c.max_violation for c in certs),
        gap=float(sum(p * c.gap for p, c in zip(fs.probs, certs))),
        barrier_objective=float(sum(p * c.barrier_objective for p, c in zip(fs.probs, certs))),
        outer_iterations=sum(c.outer_iterations for c in certs),
        newton_iterations=sum(c.newton_iterations for c in certs),
        clamped=tuple(sorted({u for c in certs for u in c.clamped})),
    )
    return AdaptiveSolution(
        P=np.array([sol.P for sol in sols]), T=T, ET=fs.probs @ T,
        objective=adaptive_objective(fs, spec, T, "expected_cost"),
        objective_kind="expected_cost", power_mode="short_term", certificate=cert,
    )
