import numpy as np
import pytest

from ctpower import (
    AdaptiveSolution,
    CostSpec,
    FadingStates,
    NetworkInstance,
    ParseError,
    eval_cost,
    link_state,
    solve_adaptive_avg,
    solve_adaptive_expected_cost,
    solve_perfect_csi,
)
from ctpower.fading import adaptive_objective


def random_states(rng, S=2, M=2):
    states = []
    for _ in range(S):
        G = rng.uniform(0.05, 0.5, (M, M))
        G[np.diag_indices(M)] = rng.uniform(0.3, 2.0, M)
        states.append(G)
    probs = rng.dirichlet(np.ones(S))
    return FadingStates(probs=probs, states=states, N=np.full(M, 0.1), Pmax=np.ones(M), L=rng.uniform(5, 20, M))


SPEC = CostSpec.weighted_sum([0.5, 0.5])


def test_single_state_matches_perfect_csi():
    G = [[1.0, 0.2], [0.3, 0.8]]
    fs = FadingStates(probs=[1.0], states=[G], N=[0.1, 0.1], Pmax=[1.0, 1.0], L=[10.0, 20.0])
    ref = solve_perfect_csi(NetworkInstance(G, [0.1, 0.1], [1.0, 1.0], [10.0, 20.0]), SPEC)
    for sol in (solve_adaptive_avg(fs, SPEC), solve_adaptive_expected_cost(fs, SPEC, "avg"),
                solve_adaptive_expected_cost(fs, SPEC, "short_term")):
        assert sol.objective == pytest.approx(ref.cost, rel=1e-7)
        np.testing.assert_allclose(sol.P[0], ref.P, rtol=1e-4)


def test_identical_states_get_identical_powers():
    G = [[1.0, 0.2], [0.3, 0.8]]
    fs = FadingStates(probs=[0.5, 0.5], states=[G, G], N=[0.1, 0.1], Pmax=[1.0, 1.0], L=[10.0, 10.0])
    sol = solve_adaptive_avg(fs, SPEC)
    np.testing.assert_allclose(sol.P[0], sol.P[1], rtol=1e-5)
    ref = solve_perfect_csi(fs.instance(0), SPEC)
    assert sol.objective == pytest.approx(ref.cost, rel=1e-7)


def test_average_power_beats_short_term_single_user():
    fs = FadingStates(probs=[0.5, 0.5], states=[[[4.0]], [[1.0]]], N=[1.0], Pmax=[1.0], L=[10.0])
    spec = CostSpec.weighted_sum([1.0])
    avg = solve_adaptive_avg(fs, spec)
    short = solve_adaptive_avg(fs, spec, mode="short_term")
    assert avg.objective < short.objective
    assert fs.probs @ avg.P[:, 0] <= 1.0 * (1 + 1e-9)
    # the average budget is used in full, unevenly across states
    assert fs.probs @ avg.P[:, 0] == pytest.approx(1.0, rel=1e-6)
    assert abs(avg.P[0, 0] - avg.P[1, 0]) > 0.1


def test_short_term_expected_cost_decomposes():
    rng = np.random.default_rng(30)
    for _ in range(4):
        fs = random_states(rng)
        joint = solve_adaptive_expected_cost(fs, SPEC, "short_term")
        split = solve_adaptive_expected_cost(fs, SPEC, "short_term", decompose=True)
        assert abs(joint.objective - split.objective) <= 1e-6
        np.testing.assert_allclose(joint.P, split.P, rtol=1e-4)
        per_state = sum(p * solve_perfect_csi(fs.instance(s), SPEC).cost for s, p in enumerate(fs.probs))
        assert split.objective == pytest.approx(per_state, rel=1e-12)


def test_parallel_decomposition_matches_serial():
    fs = random_states(np.random.default_rng(31), S=4)
    a = solve_adaptive_expected_cost(fs, SPEC, "short_term", decompose=True)
    b = solve_adaptive_expected_cost(fs, SPEC, "short_term", decompose=True, n_jobs=4)
    assert a == b


def test_mode_ordering_and_constraints():
    rng = np.random.default_rng(32)
    for spec in (SPEC, CostSpec.max()):
        for _ in range(3):
            fs = random_states(rng)
            for solve in (lambda m: solve_adaptive_avg(fs, spec, mode=m),
                          lambda m: solve_adaptive_expected_cost(fs, spec, m)):
                avg, short = solve("avg"), solve("short_term")
                assert avg.objective <= short.objective * (1 + 1e-9)
                assert np.all(fs.probs @ avg.P <= fs.Pmax * (1 + 1e-9))
                assert np.all(short.P <= fs.Pmax)


def test_jensen_direction_at_fixed_point():
    rng = np.random.default_rng(33)
    for spec in (SPEC, CostSpec.max(), CostSpec.p_norm(2.0)):
        for _ in range(20):
            fs = random_states(rng, S=3)
            T = rng.uniform(1, 100, (3, 2))
            assert adaptive_objective(fs, spec, T, "cost_of_expected") <= \
                adaptive_objective(fs, spec, T, "expected_cost") * (1 + 1e-12)


def test_reported_times_follow_powers():
    fs = random_states(np.random.default_rng(34))
    sol = solve_adaptive_avg(fs, SPEC)
    for s in range(fs.S):
        inst = fs.instance(s)
        np.testing.assert_allclose(link_state(inst, sol.P[s]).T, sol.T[s], rtol=1e-12)
    np.testing.assert_allclose(sol.ET, fs.probs @ sol.T)
    assert sol.objective == pytest.approx(eval_cost(SPEC, sol.ET), rel=1e-12)


def test_validation():
    G = [[1.0]]
    with pytest.raises(ValueError):
        FadingStates(probs=[0.5, 0.4], states=[G, G], N=[1.0], Pmax=[1.0], L=[1.0])
    with pytest.raises(ValueError):
        FadingStates(probs=[1.2, -0.2], states=[G, G], N=[1.0], Pmax=[1.0], L=[1.0])
    with pytest.raises(ValueError):
        FadingStates(probs=[1.0], states=[[[0.0]]], N=[1.0], Pmax=[1.0], L=[1.0])
    fs = random_states(np.random.default_rng(35), S=3)
    with pytest.raises(ValueError, match="cap"):
        solve_adaptive_avg(fs, SPEC, max_states=2)
    with pytest.raises(ValueError):
        solve_adaptive_expected_cost(fs, SPEC, "avg", decompose=True)
    with pytest.raises(ValueError):
        solve_adaptive_avg(fs, SPEC, mode="weekly")


def test_json_round_trips():
    fs = random_states(np.random.default_rng(36))
    assert FadingStates.from_json(fs.to_json()) == fs
    sol = solve_adaptive_avg(fs, SPEC)
    assert AdaptiveSolution.from_json(sol.to_json()) == sol


def test_parse_error_names_state():
    with pytest.raises(ParseError) as err:
        FadingStates.from_dict({"probs": [1.0], "states": [{"H": [[1]]}], "N": [1], "Pmax": [1], "L": [1]})
    assert err.value.field == "states[0].G"
