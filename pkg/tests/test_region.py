import math

import numpy as np
import pytest

from ctpower import CostSpec, NetworkInstance, brute_force_oracle, convexity_audit, trace_completion_region
from ctpower.region import sweep_angles

from conftest import random_instance


def test_sweep_angles_open_interval():
    th = sweep_angles(33)
    assert th.shape == (33,)
    assert np.all(th > 0) and np.all(th < math.pi / 2)
    np.testing.assert_allclose(th + th[::-1], math.pi / 2)


def test_example_trace_extremes(example_capped):
    trace = trace_completion_region(example_capped, K=33)
    assert len(trace.entries) == 33 and not trace.failures
    lower = example_capped.interference_free_times()
    T = trace.T
    assert np.all(T >= lower * (1 - 1e-9))
    assert np.all(T <= 1000.0 * (1 + 1e-9))
    np.testing.assert_allclose(trace.R * T, np.tile(example_capped.L, (33, 1)), rtol=1e-9)


def test_each_point_optimal_for_its_weight(example_capped):
    trace = trace_completion_region(example_capped, K=17)
    W, T = trace.W, trace.T
    J = W @ T.T  # J[k, j] = w_k . T_j
    assert np.all(np.diag(J)[:, None] <= J * (1 + 1e-6))


def test_symmetric_instance_gives_symmetric_trace():
    inst = NetworkInstance(G=[[1.0, 0.4], [0.4, 1.0]], N=[0.2, 0.2], Pmax=[1.0, 1.0], L=[10.0, 10.0])
    T = trace_completion_region(inst, K=15).T
    np.testing.assert_allclose(T, T[::-1, ::-1], rtol=1e-6)


def test_extreme_weight_matches_grid(example_capped):
    trace = trace_completion_region(example_capped, weights=[[1.0, 0.0]])
    # the cap on user 2 binds between grid points, so the grid needs to be fine here
    coarse = brute_force_oracle(example_capped, CostSpec.weighted_sum([1.0, 0.0]), 200)
    ref = brute_force_oracle(example_capped, CostSpec.weighted_sum([1.0, 0.0]), 800)
    assert ref.cost <= coarse.cost
    assert trace.entries[0].cost == pytest.approx(ref.cost, rel=1e-3)
    assert trace.entries[0].cost <= ref.cost * (1 + 1e-9)


def test_failures_are_recorded_not_raised(example):
    # zero weight without a completion-time cap is rejected by the solver
    trace = trace_completion_region(example, weights=[[0.5, 0.5], [1.0, 0.0]])
    assert len(trace.entries) == 1
    assert trace.failures[0]["index"] == 1


def test_completion_traces_are_convex(example_capped):
    rng = np.random.default_rng(20)
    instances = [example_capped] + [random_instance(rng, 2, Tmax=[1000.0, 1000.0]) for _ in range(10)]
    for inst in instances:
        trace = trace_completion_region(inst, K=21)
        audit = convexity_audit(trace.T, "completion")
        assert audit.convex, audit


def test_example_rate_trace_has_witness(example_capped):
    trace = trace_completion_region(example_capped, K=33)
    audit = convexity_audit(trace.R, "rate")
    assert not audit.convex
    a, b, mid = audit.witness
    R = trace.R
    np.testing.assert_allclose(mid, 0.5 * (R[a] + R[b]))
    # the midpoint lies above the traced boundary
    order = np.argsort(R[:, 0])
    assert mid[1] > np.interp(mid[0], R[order, 0], R[order, 1])


def test_audit_convex_curves():
    t = np.linspace(0, math.pi / 2, 30)
    assert convexity_audit(np.c_[np.cos(t), np.sin(t)], "completion").convex
    x = np.linspace(0.2, 5, 40)
    assert convexity_audit(np.c_[x, 1 / x], "completion").convex


def test_audit_detects_opposite_turn():
    pts = [(0, 3), (1, 1), (2, 0.8), (3, 0)]
    audit = convexity_audit(pts, "completion")
    assert not audit.convex and audit.witness is not None


def test_audit_rate_region_convex_for_concave_boundary():
    x = np.linspace(0, 1, 25)
    assert convexity_audit(np.c_[x, np.sqrt(1 - x**2)], "rate").convex


def test_audit_input_checks():
    with pytest.raises(ValueError):
        convexity_audit([(0, 1), (1, 0)])
    with pytest.raises(ValueError):
        convexity_audit([(0, 1), (1, 0), (2, 2)], "volume")


def test_csv_format(example_capped):
    trace = trace_completion_region(example_capped, K=5)
    lines = trace.to_csv().splitlines()
    assert lines[0] == "theta,w1,w2,T1,T2,R1,R2,cost"
    assert len(lines) == 6
    row = [float(v) for v in lines[1].split(",")]
    assert row[1] == pytest.approx(math.cos(row[0]) ** 2, rel=1e-12)


def test_parallel_sweep_matches_serial(example_capped):
    a = trace_completion_region(example_capped, K=9)
    b = trace_completion_region(example_capped, K=9, n_jobs=3)
    assert a.to_csv() == b.to_csv()
    assert a.fingerprint == b.fingerprint
