"""Quick in-process self-check: oracle comparisons and property checks.

Each check returns ``(passed, detail)``. :func:`run_all` runs them in a fixed
order with fixed seeds; it is what ``ctpower verify`` prints.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .barrier import reciprocal_log_rate
from .costs import CostSpec, eval_cost, harmonic_mean_utility
from .fading import FadingStates, solve_adaptive_avg, solve_adaptive_expected_cost
from .model import NetworkInstance
from .region import convexity_audit, trace_completion_region
from .robust import (
    ChannelDistribution,
    LinkShape,
    LogNormal,
    Nakagami,
    OutageSpec,
    Rayleigh,
    log_concavity_probe,
    reliability_mc,
    reliability_rayleigh_closed,
    solve_robust,
)
from .solver import brute_force_oracle, solve_perfect_csi

EXAMPLE_G = [[0.42, 0.89], [0.63, 0.15]]


def example_instance() -> NetworkInstance:
    """Two users, unit noise and power caps, L = 10, Tmax = 100 L."""
    return NetworkInstance(G=EXAMPLE_G, N=[1.0, 1.0], Pmax=[1.0, 1.0], L=[10.0, 10.0], Tmax=[1000.0, 1000.0])


def random_instance(rng, M: int) -> NetworkInstance:
    G = rng.uniform(0.05, 0.5, (M, M))
    G[np.diag_indices(M)] = rng.uniform(0.5, 2.0, M)
    return NetworkInstance(G=G, N=rng.uniform(0.05, 0.5, M), Pmax=np.ones(M), L=rng.uniform(5, 20, M))


def check_derivatives():
    x = np.linspace(-10, 10, 41)
    h, d1, d2 = reciprocal_log_rate(x, derivatives=True)
    eps = 1e-5
    fd1 = (reciprocal_log_rate(x + eps) - reciprocal_log_rate(x - eps)) / (2 * eps)
    _, a, _ = reciprocal_log_rate(x + eps, derivatives=True)
    _, b, _ = reciprocal_log_rate(x - eps, derivatives=True)
    fd2 = (a - b) / (2 * eps)
    err = max(np.max(np.abs(d1 - fd1) / np.abs(d1)), np.max(np.abs(d2 - fd2) / np.abs(d2)))
    return err <= 1e-6, f"max relative error {err:.2e}"


def check_cost_convexity():
    rng = np.random.default_rng(1)
    specs = [CostSpec.weighted_sum([0.2, 0.3, 0.5]), CostSpec.max(),
             CostSpec.sum_r_largest(2), CostSpec.p_norm(3.0)]
    worst = 0.0
    for spec in specs:
        for _ in range(200):
            a, b = rng.uniform(1, 100, 3), rng.uniform(1, 100, 3)
            lhs = eval_cost(spec, 0.5 * (a + b))
            rhs = 0.5 * (eval_cost(spec, a) + eval_cost(spec, b))
            worst = max(worst, (lhs - rhs) / abs(rhs))
    return worst <= 1e-12, f"worst midpoint excess {worst:.2e}"


def check_grid_oracle():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(3):
        inst = random_instance(rng, 2)
        spec = CostSpec.weighted_sum(rng.dirichlet([1, 1]))
        got = solve_perfect_csi(inst, spec).cost
        ref = brute_force_oracle(inst, spec, 100).cost
        worst = max(worst, (got - ref) / ref)
    return worst <= 1e-3, f"worst relative gap {worst:.2e}"


def check_region():
    trace = trace_completion_region(example_instance(), K=17)
    t_audit = convexity_audit(trace.T, "completion")
    r_audit = convexity_audit(trace.R, "rate")
    ok = not trace.failures and t_audit.convex and r_audit.witness is not None
    return ok, f"T worst {t_audit.worst_violation:.1e}; R witness {r_audit.witness is not None}"


def check_fading():
    rng = np.random.default_rng(3)
    worst, order_ok = 0.0, True
    spec = CostSpec.weighted_sum([0.5, 0.5])
    for _ in range(2):
        states = [random_instance(rng, 2).G for _ in range(2)]
        fs = FadingStates(probs=[0.4, 0.6], states=states, N=[0.1, 0.1], Pmax=[1.0, 1.0], L=[10.0, 10.0])
        joint = solve_adaptive_expected_cost(fs, spec, "short_term")
        split = solve_adaptive_expected_cost(fs, spec, "short_term", decompose=True)
        worst = max(worst, abs(joint.objective - split.objective))
        avg = solve_adaptive_avg(fs, spec)
        short = solve_adaptive_avg(fs, spec, mode="short_term")
        order_ok &= avg.objective <= short.objective * (1 + 1e-9)
    return worst <= 1e-6 and order_ok, f"decomposition gap {worst:.1e}; avg <= short-term {order_ok}"


def check_rayleigh_mc():
    rng = np.random.default_rng(4)
    worst = 0.0
    for k, M in enumerate((1, 2, 3)):
        G = rng.uniform(0.1, 1.0, (M, M))
        P = rng.uniform(0.2, 1.0, M)
        N = rng.uniform(0.05, 0.5, M)
        S = rng.uniform(0.1, 1.0)
        closed = reliability_rayleigh_closed(0, S, P, G, N)
        est = reliability_mc(0, S, P, ChannelDistribution.rayleigh(G), N, 200_000, seed=k)
        worst = max(worst, abs(closed - est.value) / est.se)
    return worst <= 3.0, f"worst |closed - MC| / SE {worst:.2f}"


def check_probes():
    marginals = [Rayleigh(1.0), Nakagami(0.5, 1.0), Nakagami(1.0, 1.0), Nakagami(4.0, 1.0),
                 LogNormal(0.0, 0.5), LogNormal(0.0, 1.0)]
    results = [log_concavity_probe(ChannelDistribution.uniform(m, 2), 0, 2000, seed=5) for m in marginals]
    worst = max(r.worst_violation for r in results)
    return all(r.passed for r in results), f"worst violation {worst:.1e}"


def check_robust_single_user():
    shape = LinkShape(N=[1.0], Pmax=[1.0], L=[10.0])
    sol = solve_robust(shape, ChannelDistribution.rayleigh([[1.0]]), OutageSpec([0.1]), CostSpec.max())
    S_ref = math.log(10 / 9)
    T_ref = 10 / math.log2(1 + S_ref)
    err = max(abs(sol.S[0] - S_ref) / S_ref, abs(sol.T[0] - T_ref) / T_ref)
    return err <= 1e-6, f"relative error {err:.1e}"


def check_jensen():
    rng = np.random.default_rng(6)
    worst = -math.inf
    for _ in range(100):
        w = rng.dirichlet(np.ones(3))
        R = rng.uniform(0.1, 5, 3)
        worst = max(worst, harmonic_mean_utility(w, R) - w @ R)
    eq = abs(harmonic_mean_utility([0.3, 0.7], [2.0, 2.0]) - 2.0)
    return worst <= 0 and eq <= 1e-9, f"max U_h - sum w'R {worst:.2e}; equal-rate error {eq:.1e}"


CHECKS = [
    ("reciprocal log-rate derivatives", check_derivatives),
    ("cost midpoint convexity", check_cost_convexity),
    ("solver vs grid oracle", check_grid_oracle),
    ("region sweep convexity audit", check_region),
    ("fading decomposition and ordering", check_fading),
    ("Rayleigh closed form vs Monte Carlo", check_rayleigh_mc),
    ("log-concavity probes", check_probes),
    ("robust single-user closed form", check_robust_single_user),
    ("Jensen bound", check_jensen),
]


def run_all(out=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        start = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail} ({time.perf_counter() - start:.1f} s)")
    return all_ok
