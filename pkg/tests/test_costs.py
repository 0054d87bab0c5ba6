import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from ctpower import CostSpec, ParseError, epigraph_reform, eval_cost, harmonic_mean_utility, utility_from_cost

SPECS3 = [
    CostSpec.weighted_sum([0.2, 0.3, 0.5]),
    CostSpec.max(),
    CostSpec.sum_r_largest(2),
    CostSpec.p_norm(1.0),
    CostSpec.p_norm(2.5),
]


def test_eval_examples():
    assert eval_cost(CostSpec.max(), [34.54, 78.72]) == 78.72
    assert eval_cost(CostSpec.sum_r_largest(3), [1, 2, 3]) == 6
    assert eval_cost(CostSpec.p_norm(1), [1, 2, 3]) == 6
    assert eval_cost(CostSpec.weighted_sum([0.5, 0.5]), [2, 4]) == 3
    assert eval_cost(CostSpec.p_norm(2), [3, 4]) == pytest.approx(5.0, rel=1e-15)


def test_infinite_time_gives_infinite_cost():
    for spec in SPECS3:
        assert eval_cost(spec, [1.0, math.inf, 2.0]) == math.inf


def test_pnorm_large_p_does_not_overflow():
    v = eval_cost(CostSpec.p_norm(400.0), [1e3, 2e3])
    assert math.isfinite(v) and v == pytest.approx(2e3, rel=1e-2)


def test_sum_r_largest_ties():
    assert eval_cost(CostSpec.sum_r_largest(2), [5.0, 5.0, 1.0]) == 10.0


def test_spec_validation():
    with pytest.raises(ValueError):
        CostSpec.weighted_sum([0.5, 0.6])
    with pytest.raises(ValueError):
        CostSpec.weighted_sum([1.5, -0.5])
    with pytest.raises(ValueError):
        CostSpec.sum_r_largest(0)
    with pytest.raises(ValueError):
        CostSpec.p_norm(0.5)
    with pytest.raises(ValueError):
        CostSpec("median")
    with pytest.raises(ValueError):
        CostSpec.sum_r_largest(4).check_size(3)


def test_json_round_trip():
    for spec in SPECS3 + [CostSpec.weighted_sum([0.5, 0.5], L=[10, 20])]:
        assert CostSpec.from_json(spec.to_json()) == spec


def test_parse_errors():
    with pytest.raises(ParseError) as err:
        CostSpec.from_dict({"kind": "weighted_sum"})
    assert err.value.field == "cost.w"
    with pytest.raises(ParseError) as err:
        CostSpec.from_dict({"kind": "min"})
    assert err.value.field == "cost.kind"


def test_epigraph_shapes():
    prog = epigraph_reform(CostSpec.max(), 2)
    assert prog.n_aux == 1 and prog.n_constraints == 2
    assert epigraph_reform(CostSpec.weighted_sum([0.5, 0.5]), 2).n_aux == 0
    assert epigraph_reform(CostSpec.p_norm(3.0), 2).n_aux == 0
    with pytest.raises(ValueError, match="max"):
        epigraph_reform(CostSpec.p_norm(math.inf), 2)


def _epigraph_min(prog, T):
    """Minimize the epigraph objective over the auxiliaries with an LP."""
    if prog.n_aux == 0:
        return prog.objective(T, [])
    res = linprog(prog.c_aux, A_ub=prog.A_aux, b_ub=prog.b - prog.A_T @ T,
                  bounds=[(None, None)] * prog.n_aux, method="highs")
    assert res.status == 0
    return float(prog.c_T @ T + res.fun)


def test_epigraph_value_matches_eval():
    rng = np.random.default_rng(0)
    for _ in range(50):
        T = rng.uniform(1, 100, 4)
        for spec in [CostSpec.max(), CostSpec.sum_r_largest(1), CostSpec.sum_r_largest(3),
                     CostSpec.weighted_sum(rng.dirichlet(np.ones(4))), CostSpec.p_norm(1.0), CostSpec.p_norm(3.0)]:
            prog = epigraph_reform(spec, 4)
            assert _epigraph_min(prog, T) == pytest.approx(eval_cost(spec, T), rel=1e-9)


def test_sum_one_largest_equals_max():
    rng = np.random.default_rng(1)
    for _ in range(30):
        T = rng.uniform(0, 10, 3)
        assert _epigraph_min(epigraph_reform(CostSpec.sum_r_largest(1), 3), T) == pytest.approx(T.max(), rel=1e-9)


def test_initial_aux_strictly_feasible():
    rng = np.random.default_rng(2)
    for spec in SPECS3:
        prog = epigraph_reform(spec, 3)
        T = rng.uniform(1, 50, 3)
        aux = prog.initial_aux(T)
        if prog.n_constraints:
            assert np.all(prog.A_T @ T + prog.A_aux @ aux < prog.b)


times = arrays(float, 3, elements=st.floats(0.1, 1e4))


@settings(max_examples=100, deadline=None)
@given(times, times)
def test_midpoint_convexity(a, b):
    for spec in SPECS3:
        mid = eval_cost(spec, 0.5 * (a + b))
        avg = 0.5 * (eval_cost(spec, a) + eval_cost(spec, b))
        assert mid <= avg * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (6, 3), elements=st.floats(0.1, 1e3)), st.floats(0.01, 100.0))
def test_weighted_sum_argmin_scale_invariant(cands, c):
    w = np.array([0.2, 0.3, 0.5])
    J = [eval_cost(CostSpec.weighted_sum(w), T) for T in cands]
    scaled = cands @ (c * w)
    assert np.argmin(J) == np.argmin(scaled) or math.isclose(min(J), J[int(np.argmin(scaled))], rel_tol=1e-12)


def test_utility_examples():
    assert utility_from_cost(CostSpec.weighted_sum([1.0]), [1.0], L=[10.0]) == -10.0
    w, L, R = np.array([0.3, 0.7]), np.array([10.0, 20.0]), np.array([0.5, 2.0])
    assert utility_from_cost(CostSpec.weighted_sum(w), R, L) == pytest.approx(-np.sum(w * L / R), rel=1e-15)
    assert utility_from_cost(CostSpec.max(), [0.0, 1.0], L=[1, 1]) == -math.inf
    with pytest.raises(ValueError):
        utility_from_cost(CostSpec.max(), [1.0, 1.0])


def test_max_utility_tracks_min_rate_with_equal_lengths():
    rng = np.random.default_rng(3)
    spec = CostSpec.max(L=[10.0, 10.0, 10.0])
    for _ in range(20):
        cands = rng.uniform(0.01, 3.0, (15, 3))
        U = [utility_from_cost(spec, R) for R in cands]
        assert np.argmax(U) == np.argmax(cands.min(axis=1))


def test_harmonic_mean_examples():
    assert harmonic_mean_utility([0.5, 0.5], [1.0, 1.0]) == 1.0
    assert harmonic_mean_utility([0.5, 0.5], [0.0, 1.0]) == 0.0


def test_jensen_bound():
    rng = np.random.default_rng(4)
    for _ in range(100):
        w = rng.dirichlet(np.ones(3))
        R = rng.uniform(0.01, 10, 3)
        assert w @ R >= harmonic_mean_utility(w, R)
    for c in (0.1, 1.0, 7.5):
        w = rng.dirichlet(np.ones(4))
        assert abs(harmonic_mean_utility(w, np.full(4, c)) - c) <= 1e-9 * c
