import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ltmcascade.dynamics import (orient_tree, pltm_as_ltm, pltm_root_on_undirected_tree, run,
                                 run_time_varying, simulate_batch, validate_undirected_tree)
from ltmcascade.graph import NetworkValidationError, build_network, from_arrays
from ltmcascade.statistics import ThresholdSchedule

from oracles import naive_run


@st.composite
def networks(draw, max_n=12, max_l=40, seeds_fire=False):
    n = draw(st.integers(1, max_n))
    edges = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=max_l))
    kappa = [0] * n
    for i, _ in edges:
        kappa[i] += 1
    sigma = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    rho = [draw(st.integers(0, kappa[i])) for i in range(n)]
    if seeds_fire:
        rho = [0 if sigma[i] else rho[i] for i in range(n)]
    return n, edges, rho, sigma


@given(networks())
@settings(max_examples=300, deadline=None)
def test_matches_naive_simulator(case):
    n, edges, rho, sigma = case
    net = build_network(edges, rho, sigma, n=n)
    for mode in ("ltm", "pltm"):
        rec = run(net, mode=mode, horizon=8, record_states=True)
        ref = naive_run(n, edges, rho, sigma, 8, progressive=(mode == "pltm"))
        # recorded states stop at settlement; fractions are filled to the horizon
        for t, s in enumerate(rec.states):
            assert s.tolist() == ref[t]
        assert np.allclose(rec.z, [sum(z) / n for z in ref])


def test_all_zero_no_zero_threshold_stays_zero():
    net = build_network([(0, 1), (1, 2), (2, 0)], [1, 1, 1], [0, 0, 0])
    rec = run(net, horizon=5)
    assert rec.z.tolist() == [0.0] * 6
    assert rec.converged_at == 0


def test_two_cycle_detected_and_filled():
    # mutual observers with threshold 1 swap states every step
    net = build_network([(0, 1), (1, 0)], [1, 1], [1, 0])
    rec = run(net, horizon=7)
    assert rec.cycle_at == 0 and rec.converged_at is None
    assert rec.z.tolist() == [0.5] * 8
    # single node watching itself with threshold 1 is frozen
    loop = build_network([(0, 0)], [1], [1])
    assert run(loop, horizon=3).z.tolist() == [1.0] * 4


def test_fixed_point_fill():
    # node 1 watches only itself, node 0 follows node 1
    net = build_network([(0, 1), (1, 1)], [1, 1], [0, 1])
    rec = run(net, horizon=4)
    assert rec.z.tolist() == [0.5, 1.0, 1.0, 1.0, 1.0]
    assert rec.converged_at == 1


def test_zero_outdegree_adopts_unless_frozen():
    net = build_network([(0, 1)], [1, 0], [0, 0])
    assert run(net, horizon=3).z.tolist() == [0.0, 0.5, 1.0, 1.0]
    assert run(net, horizon=3, freeze_zero_outdegree=True).z.tolist() == [0.0] * 4


def test_a_is_indegree_weighted():
    net = build_network([(0, 2), (1, 2), (2, 0)], [0, 0, 1], [0, 0, 1])
    rec = run(net, horizon=0)
    assert rec.a[0] == pytest.approx(2 / 3)


def test_batch_columns_independent():
    rng = np.random.default_rng(1)
    n = 30
    tails, heads = rng.integers(0, n, 90), rng.integers(0, n, 90)
    kappa = np.bincount(tails, minlength=n)
    rho = rng.integers(0, kappa + 1)
    init = rng.integers(0, 2, (n, 5)).astype(np.uint8)
    net = from_arrays(n, tails, heads, rho, np.zeros(n))
    res = simulate_batch(net, init, 20)
    for c in range(5):
        single = run(net, horizon=20, initial_state=init[:, c])
        assert np.array_equal(res.z[:, c], single.z)


def test_unknown_mode():
    net = build_network([(0, 1)], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        run(net, mode="icm")


@given(networks())
@settings(max_examples=300, deadline=None)
def test_pltm_equals_ltm_on_reduced_thresholds(case):
    n, edges, rho, sigma = case
    net = build_network(edges, rho, sigma, n=n)
    a = run(net, mode="pltm", horizon=n, record_states=True)
    b = run(pltm_as_ltm(net), mode="ltm", horizon=n, record_states=True)
    assert np.array_equal(a.z, b.z)


@given(networks(), st.data())
@settings(max_examples=300, deadline=None)
def test_monotone_in_initial_state(case, data):
    n, edges, rho, sigma = case
    more = [s | data.draw(st.integers(0, 1)) for s in sigma]
    lo = naive_run(n, edges, rho, sigma, n)
    net = build_network(edges, rho, sigma, n=n)
    hi = run(net, horizon=n, record_states=True, initial_state=more)
    lo_states = run(net, horizon=n, record_states=True).states
    for t in range(min(len(hi.states), len(lo_states))):
        assert np.all(lo_states[t] <= hi.states[t])
    assert np.all(run(net, horizon=n).z <= hi.z + 1e-15)
    assert lo[0] == sigma


@given(networks(seeds_fire=True))
@settings(max_examples=300, deadline=None)
def test_nondecreasing_when_seeds_have_zero_threshold(case):
    n, edges, rho, sigma = case
    traj = naive_run(n, edges, rho, sigma, n)
    rec = run(build_network(edges, rho, sigma, n=n), horizon=n, record_states=True)
    for a, b in zip(rec.states, rec.states[1:]):
        assert np.all(a <= b)
    assert all(all(x <= y for x, y in zip(a, b)) for a, b in zip(traj, traj[1:]))


def test_time_varying_constant_schedule_matches_run():
    net = build_network([(0, 1), (1, 2), (2, 0), (0, 2)], [1, 1, 1, 0], [1, 0, 0, 0], n=4)
    a = run_time_varying(net, ThresholdSchedule.constant(net.threshold), 6)
    b = run(net, horizon=6)
    assert np.array_equal(a.z, b.z)


def test_time_varying_switch_restarts_cascade():
    net = build_network([(0, 1), (1, 0)], [1, 1], [0, 0])
    table = [[1, 1]] * 3 + [[0, 0]]
    rec = run_time_varying(net, ThresholdSchedule.from_table(table), 6)
    assert rec.z.tolist() == [0, 0, 0, 0, 1, 1, 1]


def test_time_varying_rejects_bad_schedule():
    net = build_network([(0, 1), (1, 0)], [1, 1], [0, 0])
    with pytest.raises(NetworkValidationError) as err:
        run_time_varying(net, ThresholdSchedule.from_table([[1, 1], [1, 2]]), 3)
    assert err.value.node == 1


def _random_tree(rng, n):
    parent = [int(rng.integers(0, v)) for v in range(1, n)]
    tails = [p for p in parent] + list(range(1, n))
    heads = list(range(1, n)) + [p for p in parent]
    return tails, heads


@given(st.integers(1, 15), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=300, deadline=None)
def test_pltm_root_on_undirected_tree_matches_rooted(n, seed):
    rng = np.random.default_rng(seed)
    tails, heads = _random_tree(rng, n)
    deg = np.bincount(np.asarray(tails, dtype=np.int64), minlength=n)
    rho = rng.integers(0, deg + 1)
    sigma = rng.integers(0, 2, n)
    tree = from_arrays(n, tails, heads, rho, sigma)
    root = int(rng.integers(0, n))
    full = run(tree, mode="pltm", horizon=n, record_states=True)
    rooted = pltm_root_on_undirected_tree(tree, root, n)
    got = [s[root] for s in full.states]
    got += [got[-1]] * (n + 1 - len(got))
    assert rooted.tolist() == got


def test_tree_validation():
    with pytest.raises(NetworkValidationError):
        validate_undirected_tree(build_network([(0, 1)], [0, 0], [0, 0]))
    with pytest.raises(NetworkValidationError):
        validate_undirected_tree(build_network([(0, 1), (1, 0), (2, 3), (3, 2)], [0] * 4, [0] * 4))
    tree = build_network([(0, 1), (1, 0), (1, 2), (2, 1)], [1, 2, 1], [0, 0, 1])
    d = orient_tree(tree, 0)
    assert sorted(map(tuple, d.edges().tolist())) == [(0, 1), (1, 2)]
