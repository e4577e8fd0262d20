from math import factorial

import numpy as np
import pytest

from netfdi.dynamics import (FailureEvent, NetworkSystem, SubsystemModel, jump_oracle,
                             simulate)
from netfdi.fdi import (DetectorConfig, JumpSignature, default_order_budget, detect,
                        detectable, estimate_one_sided_derivative, isolate,
                        lookup_table, relation_matrix)
from netfdi.graph import Digraph, Edge, gen_cycle, gen_star

from corpusgen import random_connected_digraph

CYCLE5_R = np.array([
    [1, 2, 3, 4, 0],
    [0, 1, 2, 3, 4],
    [4, 0, 1, 2, 3],
    [3, 4, 0, 1, 2],
    [2, 3, 4, 0, 1],
])

CYCLE5_D_23 = np.array([
    [2, 1, 0, 4, 3],
    [3, 2, 1, 0, 4],
])


def scalar_model():
    return SubsystemModel([[-1.0]], [[1.0]], [[1.0]], [[1.0]])


def example2_trace(dt=1e-3):
    sys_net = NetworkSystem(gen_cycle(5), scalar_model())
    return simulate(sys_net, [1, 2, 3, 4, 5], 0.0, 10.0, dt, [FailureEvent(2, 5.0)])


# -- relation matrix and lookup table ------------------------------------------------


def test_relation_matrix_cycle_golden():
    rel = relation_matrix(gen_cycle(5), r=1, z=4)
    assert np.array_equal(rel.entries, CYCLE5_R)
    assert rel.edge_labels == (1, 2, 3, 4, 5)
    assert np.array_equal(rel.r0_mask, CYCLE5_R == 0)


def test_relation_matrix_star_golden():
    expected = np.hstack([np.zeros((4, 4), dtype=int), np.ones((4, 1), dtype=int)])
    for z in (1, 4):
        rel = relation_matrix(gen_star(5), r=1, z=z)
        assert np.array_equal(rel.entries, expected)


def test_relation_matrix_single_edge_higher_degree():
    g = Digraph(2, [Edge(1, 2)])
    rel = relation_matrix(g, r=2, z=4)
    assert rel.entries[0, 1] == 2  # head at distance 0: order (0+1)*2
    assert rel.entries[0, 0] == 0


def test_relation_matrix_default_budget():
    g = gen_cycle(5)
    assert default_order_budget(g, 1) == 5
    rel = relation_matrix(g, r=1)
    assert rel.z == 5
    assert rel.entries.max() == 5
    assert (rel.entries > 0).all()  # every pair reachable within the default budget


def test_relation_matrix_validation():
    with pytest.raises(ValueError):
        relation_matrix(gen_cycle(5), r=0)
    with pytest.raises(ValueError):
        relation_matrix(gen_cycle(5), r=2, z=1)


def test_relation_matrix_ignores_weights():
    rng = np.random.default_rng(8)
    g = random_connected_digraph(6, rng, weighted=True)
    unweighted = Digraph(6, [Edge(e.tail, e.head) for _, e in g.edges()])
    for r, z in ((1, 4), (2, 8)):
        assert np.array_equal(relation_matrix(g, r, z).entries,
                              relation_matrix(unweighted, r, z).entries)


def test_lookup_table_cycle_golden():
    table = lookup_table(gen_cycle(5), (2, 3), r=1, z=4)
    assert np.array_equal(table.table, CYCLE5_D_23)
    assert table.sensors == (2, 3)
    assert np.array_equal(table.column(2), np.array([1, 2]))


def test_lookup_table_row_order_follows_sensors():
    table = lookup_table(gen_cycle(5), (3, 2), r=1, z=4)
    assert np.array_equal(table.table, CYCLE5_D_23[::-1])


def test_lookup_table_all_sensors_is_r_transposed():
    g = gen_cycle(5)
    rel = relation_matrix(g, r=1, z=4)
    table = lookup_table(g, (1, 2, 3, 4, 5), r=1, z=4)
    assert np.array_equal(table.table, rel.entries.T)


def test_lookup_table_star_single_sensor():
    table = lookup_table(gen_star(5), (5,), r=1, z=1)
    assert np.array_equal(table.table, np.ones((1, 4), dtype=int))


def test_lookup_table_validation():
    with pytest.raises(ValueError):
        lookup_table(gen_cycle(5), (), r=1, z=4)
    with pytest.raises(ValueError):
        lookup_table(gen_cycle(5), (2, 2), r=1, z=4)
    with pytest.raises(ValueError):
        lookup_table(gen_cycle(5), (9,), r=1, z=4)


# -- detectability -------------------------------------------------------------------


def test_detectable_golden_cases():
    g = gen_cycle(5)
    assert not detectable(g, (2,), r=1, z=4, edge=3)  # D entry 0
    assert detectable(g, (2,), r=1, z=4, edge=2)  # head in sensor set
    assert detectable(g, (3,), r=1, z=4, edge=3)


def test_detectable_matches_jump_oracle_observability():
    rng = np.random.default_rng(12)
    model = scalar_model()
    for _ in range(6):
        g = random_connected_digraph(5, rng, weighted=False)
        sys_pre = NetworkSystem(g, model)
        x = rng.normal(0.0, 1.0, 5) + 2.0  # entries bounded away from zero
        z = 3
        for label in g.edge_labels:
            sys_post = sys_pre.remove_edge(label)
            for p in range(1, 6):
                seen = any(
                    np.linalg.norm(jump_oracle(sys_pre, sys_post, x, p, k)) > 1e-9
                    for k in range(1, z + 1))
                assert detectable(g, (p,), r=1, z=z, edge=label) == seen


# -- one-sided estimation --------------------------------------------------------------


def test_estimate_polynomial_exactness():
    cfg = DetectorConfig(z=3, mode="finite-difference", stencil_width=6)
    dt = 1e-3
    t = np.arange(0, 12) * dt + 0.3
    for k in (1, 2, 3):
        y = t**k
        # d^k/dt^k of t^k is k! everywhere; stencils are polynomial-exact
        left = estimate_one_sided_derivative(t, y, k, "left", cfg)
        right = estimate_one_sided_derivative(t, y, k, "right", cfg)
        assert left[0] == pytest.approx(factorial(k), rel=1e-6)
        assert right[0] == pytest.approx(factorial(k), rel=1e-6)


def test_estimate_exponential_left():
    cfg = DetectorConfig(z=1, mode="finite-difference", stencil_width=5)
    dt = 1e-3
    t = 1.0 - dt * np.arange(9)[::-1]
    y = np.exp(-t)
    est = estimate_one_sided_derivative(t, y, 1, "left", cfg)
    assert est[0] == pytest.approx(-np.exp(-1.0), rel=1e-9)


def test_estimate_detects_second_derivative_step():
    # piecewise quadratic: y'' jumps by J at t=0, y and y' continuous
    J, dt = 2.5, 1e-3
    t = dt * np.arange(-8, 9)
    y = np.where(t < 0, 0.5 * t**2, 0.5 * (1 + J) * t**2)
    cfg = DetectorConfig(z=2, mode="finite-difference", stencil_width=6)
    mid = 8
    left = estimate_one_sided_derivative(t[: mid + 1], y[: mid + 1], 2, "left", cfg)
    right = estimate_one_sided_derivative(t[mid:], y[mid:], 2, "right", cfg)
    assert (right - left)[0] == pytest.approx(J, rel=0.05)


def test_estimate_validation():
    cfg = DetectorConfig(z=2, mode="finite-difference", stencil_width=6)
    t = np.arange(4) * 0.1
    with pytest.raises(ValueError):
        estimate_one_sided_derivative(t, t, 1, "left", cfg)
    t_bad = np.array([0.0, 0.1, 0.25, 0.3, 0.4, 0.5, 0.6])
    with pytest.raises(ValueError):
        estimate_one_sided_derivative(t_bad, t_bad, 1, "left", cfg)
    t = np.arange(8) * 0.1
    with pytest.raises(ValueError):
        estimate_one_sided_derivative(t, t, 1, "sideways", cfg)


def test_detector_config_validation():
    cfg = DetectorConfig(z=4)
    assert cfg.stencil_width == 7
    with pytest.raises(ValueError):
        DetectorConfig(z=0)
    with pytest.raises(ValueError):
        DetectorConfig(z=4, stencil_width=5)
    with pytest.raises(ValueError):
        DetectorConfig(z=4, mode="magic")
    with pytest.raises(ValueError):
        DetectorConfig(z=4, threshold_rel=0.0)


# -- detection -------------------------------------------------------------------------


def test_detect_analytic_example2():
    events = detect(example2_trace(), (2, 3), DetectorConfig(z=4))
    assert len(events) == 1
    assert events[0].time == pytest.approx(5.0)
    assert events[0].orders.tolist() == [1, 2]


def test_detect_finite_difference_example2():
    cfg = DetectorConfig(z=4, mode="finite-difference")
    events = detect(example2_trace(), (2, 3), cfg)
    assert len(events) == 1
    assert events[0].time == pytest.approx(5.0, abs=1e-12)
    assert events[0].orders.tolist() == [1, 2]


def test_detect_failure_free_trace_is_silent():
    sys_net = NetworkSystem(gen_cycle(5), scalar_model())
    trace = simulate(sys_net, [1, 2, 3, 4, 5], 0.0, 10.0, 1e-3)
    for mode in ("analytic", "finite-difference"):
        assert detect(trace, (2, 3), DetectorConfig(z=4, mode=mode)) == []


def test_detect_out_of_budget_failure_is_silent():
    # head of edge 4 is node 4, dist(4, 2) = 3: first jump order 4 > z = 1
    sys_net = NetworkSystem(gen_cycle(5), scalar_model())
    trace = simulate(sys_net, [1, 2, 3, 4, 5], 0.0, 10.0, 1e-2, [FailureEvent(4, 5.0)])
    assert detect(trace, (2,), DetectorConfig(z=1)) == []


def test_detect_unreachable_failure_is_silent():
    sys_net = NetworkSystem(gen_star(5), scalar_model())
    trace = simulate(sys_net, np.ones(5), 0.0, 6.0, 1e-2, [FailureEvent(1, 3.0)])
    assert detect(trace, (1,), DetectorConfig(z=4)) == []


def test_detect_analytic_refuses_driven_traces():
    from netfdi.dynamics import ExogenousInput
    sys_net = NetworkSystem(gen_cycle(5), scalar_model())
    w = ExogenousInput.sinusoid(0.4 * np.ones((5, 1)), 0.25 * np.ones((5, 1)),
                                np.zeros((5, 1)))
    trace = simulate(sys_net, [1, 2, 3, 4, 5], 0.0, 10.0, 1e-3,
                     [FailureEvent(2, 5.0)], w=w)
    assert not trace.autonomous
    with pytest.raises(ValueError):
        detect(trace, (2, 3), DetectorConfig(z=4, mode="analytic"))
    # the sample-based detector still works under a smooth drive
    events = detect(trace, (2, 3), DetectorConfig(z=4, mode="finite-difference"))
    assert len(events) == 1
    assert events[0].time == pytest.approx(5.0, abs=1e-12)
    assert events[0].orders.tolist() == [1, 2]


def test_fd_and_analytic_agree_up_to_third_order():
    trace = example2_trace(dt=1e-3)
    sensors = (2, 3, 4)  # node 4 sees the edge-2 failure at order 3
    analytic = detect(trace, sensors, DetectorConfig(z=4, mode="analytic"))
    fd = detect(trace, sensors, DetectorConfig(z=4, mode="finite-difference"))
    assert len(analytic) == len(fd) == 1
    assert analytic[0].orders.tolist() == [1, 2, 3]
    assert fd[0].orders.tolist() == analytic[0].orders.tolist()


def test_min_oracle_jump_order_equals_lookup_entry():
    # the first observable jump order per (sensor, edge) is the D entry,
    # provided the failing link carried a nonzero signal
    rng = np.random.default_rng(23)
    model = SubsystemModel([[-0.5]], [[1.0]], [[1.0]], [[0.6]])
    for _ in range(6):
        n = int(rng.integers(3, 7))
        g = random_connected_digraph(n, rng)
        z = 4
        table = lookup_table(g, tuple(range(1, n + 1)), r=1, z=z)
        sys_pre = NetworkSystem(g, model)
        x = rng.uniform(0.5, 1.5, n) * rng.choice([-1.0, 1.0], n)
        for label in g.edge_labels:
            sys_post = sys_pre.remove_edge(label)
            column = table.column(label)
            for p in range(1, n + 1):
                observed = 0
                for k in range(1, z + 1):
                    if np.linalg.norm(jump_oracle(sys_pre, sys_post, x, p, k)) > 1e-9:
                        observed = k
                        break
                assert observed == column[p - 1]


def _random_isolable_digraph(n, rng):
    """Random connected digraph with all in-degrees <= 1.

    Edges sharing a head produce identical signature columns, so isolation
    is feasible exactly on these graphs: random recursive trees (edges
    parent -> child), sometimes closed into a cycle through the root.
    """
    edges = [Edge(int(rng.integers(1, i)), i) for i in range(2, n + 1)]
    if rng.random() < 0.5:
        tail = int(rng.integers(2, n + 1))
        edges.append(Edge(tail, 1))
    return Digraph(n, edges)


def test_detect_isolate_recovers_injected_edge_on_random_corpus():
    from netfdi.placement import greedy_detection, greedy_isolation
    from netfdi.fdi import relation_matrix as rel_mat
    rng = np.random.default_rng(37)
    model = scalar_model()
    for _ in range(5):
        n = int(rng.integers(3, 7))
        g = _random_isolable_digraph(n, rng)
        rel = rel_mat(g, r=1)
        m_i = greedy_isolation(rel, greedy_detection(rel))
        assert m_i is not None  # in-degree <= 1 makes isolation feasible
        table = lookup_table(g, m_i, r=1, z=rel.z)
        sys_net = NetworkSystem(g, model)
        x0 = rng.uniform(0.5, 1.5, n)
        for label in g.edge_labels:
            trace = simulate(sys_net, x0, 0.0, 4.0, 0.01, [FailureEvent(label, 2.0)])
            events = detect(trace, m_i, DetectorConfig(z=rel.z))
            assert len(events) == 1
            verdict = isolate(events[0], table)
            assert verdict.verdict == "unique"
            assert verdict.edge == label


def test_detect_sensor_validation():
    trace = example2_trace(dt=1e-2)
    with pytest.raises(ValueError):
        detect(trace, (), DetectorConfig(z=4))
    with pytest.raises(ValueError):
        detect(trace, (7,), DetectorConfig(z=4))


# -- isolation -------------------------------------------------------------------------


def cycle_table():
    return lookup_table(gen_cycle(5), (2, 3), r=1, z=4)


def test_isolate_unique_example2():
    result = isolate(JumpSignature(np.array([1, 2]), 5.0), cycle_table())
    assert result.verdict == "unique"
    assert result.edges == (2,)
    assert result.edge == 2


def test_isolate_ambiguous_on_star():
    table = lookup_table(gen_star(5), (1, 2, 3, 4, 5), r=1, z=1)
    result = isolate(JumpSignature(np.array([0, 0, 0, 0, 1]), 1.0), table)
    assert result.verdict == "ambiguous"
    assert result.edges == (1, 2, 3, 4)
    with pytest.raises(ValueError):
        result.edge


def test_isolate_nomatch():
    result = isolate(JumpSignature(np.array([4, 4]), 5.0), cycle_table())
    assert result.verdict == "nomatch"
    assert result.edges == ()


def test_isolate_signature_dimension_check():
    with pytest.raises(ValueError):
        isolate(JumpSignature(np.array([1, 2, 3]), 5.0), cycle_table())


def test_every_cycle_edge_isolated_uniquely():
    table = cycle_table()
    sys_net = NetworkSystem(gen_cycle(5), scalar_model())
    for label in (1, 2, 3, 4, 5):
        trace = simulate(sys_net, [1, 2, 3, 4, 5], 0.0, 10.0, 1e-2,
                         [FailureEvent(label, 5.0)])
        events = detect(trace, (2, 3), DetectorConfig(z=4))
        assert len(events) == 1
        result = isolate(events[0], table)
        assert result.verdict == "unique"
        assert result.edge == label
