import json
from collections import Counter

import numpy as np
import pytest

from ltmcascade.dynamics import run
from ltmcascade.ensembles import (branching_root_expectation, sample_branching, sample_directed_cm,
                                  sample_root_states, sample_undirected_cm)
from ltmcascade.harness import homogeneous_stats
from ltmcascade.ingest import parse_edge_list
from ltmcascade.meanfield import build_maps, iterate
from ltmcascade.statistics import (IncompatibleStatisticsError, NetworkStatistics, UndirectedStatistics,
                                   extract, extract_undirected)

from oracles import all_wirings, tree_root_state


def test_forced_regular_graph():
    st_ = NetworkStatistics({(2, 2, 1, 0): 1.0})
    for seed in range(20):
        net = sample_directed_cm(st_, 3, seed).network
        assert net.in_degree.tolist() == [2, 2, 2] and net.out_degree.tolist() == [2, 2, 2]


def test_statistics_exact_for_every_seed():
    counts = {(3, 2, 1, 0): 4, (2, 2, 2, 1): 2, (2, 3, 0, 0): 3, (0, 1, 1, 1): 1}
    assert sum(d * c for (d, *_), c in counts.items()) == sum(k * c for (_, k, *_), c in counts.items())
    st_ = NetworkStatistics.from_counts(counts)
    for seed in range(30):
        assert extract(sample_directed_cm(st_, 10, seed).network) == st_


def test_incompatible_rejected():
    with pytest.raises(ValueError):
        sample_directed_cm(NetworkStatistics({(2, 2, 1, 0): 1.0}), None)
    with pytest.raises(IncompatibleStatisticsError):
        sample_directed_cm(NetworkStatistics({(2, 2, 1, 0): 0.5, (2, 2, 0, 0): 0.5}), 3)


def test_two_wirings_equally_likely():
    st_ = NetworkStatistics({(1, 1, 0, 0): 1.0})
    seen = Counter()
    for seed in range(10_000):
        e = sample_directed_cm(st_, 2, seed).network.edges().tolist()
        seen["identity" if e == [[0, 0], [1, 1]] else "swap"] += 1
    assert set(seen) == {"identity", "swap"}
    assert abs(seen["identity"] / 10_000 - 0.5) < 0.05


def test_three_stub_wirings_uniform():
    # three nodes, one out- and one in-stub each: every permutation is its own wiring
    st_ = NetworkStatistics({(1, 1, 0, 0): 1.0})
    expected = {links for _, links in all_wirings([0, 1, 2], [0, 1, 2])}
    seen = Counter()
    N = 6000
    for seed in range(N):
        seen[tuple(map(tuple, sample_directed_cm(st_, 3, seed).network.edges().tolist()))] += 1
    assert set(seen) == expected
    se = np.sqrt(1 / 6 * 5 / 6 / N)
    assert all(abs(c / N - 1 / 6) < 4 * se for c in seen.values())


def test_undirected_symmetric_and_exact():
    u = UndirectedStatistics.from_counts({(2, 1, 0): 3, (1, 1, 1): 2, (3, 2, 0): 2})
    for seed in range(20):
        net = sample_undirected_cm(u, 7, seed).network
        A = net.adjacency
        assert (A != A.T).nnz == 0
        assert extract_undirected(net) == u


def test_undirected_two_stub_pairings():
    u = UndirectedStatistics({(1, 0, 0): 1.0})
    for seed in range(10):
        e = sorted(map(tuple, sample_undirected_cm(u, 2, seed).network.edges().tolist()))
        assert e == [(0, 1), (1, 0)]
    # a single node with two stubs can only pair with itself
    u = UndirectedStatistics({(2, 0, 0): 1.0})
    assert sample_undirected_cm(u, 1, 0).network.edges().tolist() == [[0, 0], [0, 0]]


def test_undirected_odd_stubs_rejected():
    with pytest.raises(IncompatibleStatisticsError):
        sample_undirected_cm(UndirectedStatistics({(1, 0, 0): 1.0}), 3)


def test_export_round_trip(tmp_path):
    st_ = NetworkStatistics.from_counts({(2, 2, 1, 0): 3, (2, 2, 0, 1): 1})
    s = sample_directed_cm(st_, 4, 5)
    edges, side = s.export(tmp_path / "draw")
    back = parse_edge_list(edges)
    assert sorted(zip(back.original[back.tails].tolist(), back.original[back.heads].tolist())) == \
        sorted(map(tuple, s.network.edges().tolist()))
    meta = json.loads(side.read_text())
    assert meta["seed"] == 5 and meta["thresholds"] == s.network.threshold.tolist()


def test_branching_trivial_shapes():
    leaf = NetworkStatistics({(0, 0, 0, 1): 1.0})
    t = sample_branching(leaf, 5, 0)
    assert t.node_count == 1
    binary = NetworkStatistics({(2, 2, 1, 0): 1.0})
    for depth in range(5):
        assert sample_branching(binary, depth, 0).node_count == 2 ** (depth + 1) - 1


def test_branching_cap():
    t = sample_branching(NetworkStatistics({(3, 3, 1, 0): 1.0}), 10, 0, node_cap=100)
    assert t.capped and t.node_count <= 100
    est = branching_root_expectation(NetworkStatistics({(3, 3, 1, 0): 1.0}), 6, 50, 0, node_cap=100)
    assert est.discarded == 50 and est.replicas == 0


def test_offspring_law_is_link_biased():
    st_ = NetworkStatistics({(1, 1, 0, 0): 0.5, (3, 3, 1, 0): 0.5})
    # q puts weight 1/4 on k=1, 3/4 on k=3: mean offspring 2.5
    ks = [sample_branching(st_, 1, s).k[1] for s in range(4000)]
    flat = np.concatenate(ks)
    frac1 = np.mean(flat == 1)
    assert abs(frac1 - 0.25) < 3 * np.sqrt(0.25 * 0.75 / flat.size)
    roots = [sample_branching(st_, 0, s).k[0][0] for s in range(4000)]
    assert abs(np.mean(np.array(roots) == 1) - 0.5) < 3 * np.sqrt(0.25 / 4000)


def test_tree_root_state_matches_recursion_oracle_and_full_ltm():
    rng = np.random.default_rng(11)
    for trial in range(60):
        cells = {}
        for _ in range(3):
            k = int(rng.integers(0, 4))
            cells[(int(rng.integers(1, 4)), k, int(rng.integers(0, k + 1)), int(rng.integers(0, 2)))] = 1.0
        tot = len(cells)
        st_ = NetworkStatistics({c: 1 / tot for c in cells})
        depth = int(rng.integers(0, 4))
        tree = sample_branching(st_, depth, trial)
        children = {}
        offsets = np.cumsum([0] + [len(g) for g in tree.k])
        for g in range(1, tree.depth + 1):
            for child, par in enumerate(tree.parent[g]):
                children.setdefault(int(par + offsets[g - 1]), []).append(int(child + offsets[g]))
        n = int(offsets[-1])
        ch = [children.get(v, []) for v in range(n)]
        r = np.concatenate(tree.r).tolist()
        s = np.concatenate(tree.s).tolist()
        want = tree_root_state(ch, r, s, 0, tree.depth)
        assert tree.root_state() == want
        net = tree.to_network()
        full = run(net, horizon=tree.depth, record_states=True)
        states = full.states + [full.states[-1]] * (tree.depth + 1 - len(full.states))
        if full.cycle_at is None:
            assert states[tree.depth][0] == want


def test_root_expectation_t0_and_all_zero_threshold():
    st_ = homogeneous_stats(3, 1, upsilon=0.4)
    est = branching_root_expectation(st_, 0, 20_000, 1)
    assert abs(est.mean - 0.4) < 3 * np.sqrt(0.24 / 20_000)
    zero = NetworkStatistics({(2, 2, 0, 0): 1.0})
    for t in (1, 2, 3):
        assert branching_root_expectation(zero, t, 500, 0).mean == 1.0


def test_root_expectation_matches_recursion():
    st_ = homogeneous_stats(7, 3, upsilon=0.3)
    y = iterate(build_maps(st_), st_.xi, st_.upsilon, 3, tol=-1).y
    est = branching_root_expectation(st_, 3, 20_000, 4)
    se = np.sqrt(y[3] * (1 - y[3]) / est.replicas)
    assert abs(est.mean - y[3]) < 3 * se


def test_forest_matches_explicit_trees_in_law():
    st_ = NetworkStatistics({(2, 2, 1, 0): 0.3, (1, 3, 2, 1): 0.3, (3, 1, 1, 0): 0.4})
    forest, kept = sample_root_states(st_, 2, 20_000, 9)
    explicit = np.array([sample_branching(st_, 2, s).root_state() for s in range(3000)])
    p1, p2 = forest[kept].mean(), explicit.mean()
    se = np.sqrt(p1 * (1 - p1) / 20_000 + p2 * (1 - p2) / 3000)
    assert abs(p1 - p2) < 4 * se
