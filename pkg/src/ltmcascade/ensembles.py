"""Random network ensembles matching given statistics.

The directed configuration model fixes every node's ``(d, k, r, s)`` from
the requested counts and only randomises the wiring: out-stub ``h`` (owned
by ``lambda(h)``) is joined to in-stub ``pi(h)`` (owned by ``nu(pi(h))``)
for a uniform permutation ``pi``.  The branching process is the local-tree
limit of that ensemble.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .graph import Network, from_arrays
from .statistics import (IncompatibleStatisticsError, NetworkStatistics, UndirectedStatistics)

DEFAULT_NODE_CAP = 10_000_000


@dataclass
class EnsembleSample:
    network: Network
    seed: int
    permutation: np.ndarray = field(repr=False)
    kind: str = "directed"

    def export(self, prefix: str | Path) -> tuple[Path, Path]:
        """Write ``<prefix>.txt`` (edge list) and ``<prefix>.json`` (thresholds, states, seed)."""
        from .ingest import write_edge_list

        prefix = Path(prefix)
        edges = prefix.with_suffix(".txt")
        side = prefix.with_suffix(".json")
        write_edge_list(self.network, edges)
        meta = {
            "kind": self.kind,
            "seed": self.seed,
            "n": self.network.n,
            "thresholds": self.network.threshold.tolist(),
            "initial_states": self.network.initial_state.tolist(),
        }
        try:
            side.write_text(json.dumps(meta) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write {side}: {exc}") from exc
        return edges, side


def designed_vectors(counts: dict) -> tuple[np.ndarray, ...]:
    """Per-node attribute columns, nodes laid out in sorted cell order."""
    cells = sorted(c for c, m in counts.items() if m)
    reps = np.array([counts[c] for c in cells], dtype=np.int64)
    table = np.array(cells, dtype=np.int64).reshape(len(cells), -1)
    return tuple(np.repeat(table[:, j], reps) for j in range(table.shape[1]))


def sample_directed_cm(stats: NetworkStatistics, n: int | None = None, seed: int = 0) -> EnsembleSample:
    """One draw of the directed configuration model with exactly these statistics."""
    n = stats.n if n is None else n
    if n is None:
        raise ValueError("node count required")
    try:
        counts = stats.counts(n)
    except IncompatibleStatisticsError:
        raise
    delta, kappa, rho, sigma = designed_vectors(counts)
    ids = np.arange(n, dtype=np.int64)
    lam = np.repeat(ids, kappa)
    nu = np.repeat(ids, delta)
    pi = rngmod.stream(seed, rngmod.WIRING).permutation(lam.size)
    net = from_arrays(n, lam, nu[pi], rho, sigma)
    return EnsembleSample(net, seed, pi, "directed")


def sample_undirected_cm(ustats: UndirectedStatistics, n: int | None = None, seed: int = 0) -> EnsembleSample:
    """Undirected configuration model; each matched stub pair becomes two reciprocal links."""
    n = ustats.n if n is None else n
    if n is None:
        raise ValueError("node count required")
    counts = ustats.counts(n)
    kappa, rho, sigma = designed_vectors(counts)
    lam = np.repeat(np.arange(n, dtype=np.int64), kappa)
    pi = rngmod.stream(seed, rngmod.WIRING).permutation(lam.size)
    a = lam[pi[0::2]]
    b = lam[pi[1::2]]
    net = from_arrays(n, np.concatenate([a, b]), np.concatenate([b, a]), rho, sigma)
    return EnsembleSample(net, seed, pi, "undirected")


# --- branching process ------------------------------------------------------

def _cells(law: dict) -> tuple[np.ndarray, np.ndarray]:
    keys = sorted(law)
    tab = np.array(keys, dtype=np.int64).reshape(len(keys), 3)
    p = np.array([law[c] for c in keys], dtype=np.float64)
    return tab, p / p.sum()


@dataclass
class BranchingTree:
    """Truncated two-stage tree: generation ``g`` holds ``k``, ``r``, ``s`` and parent indices."""

    depth: int
    k: list[np.ndarray]
    r: list[np.ndarray]
    s: list[np.ndarray]
    parent: list[np.ndarray]  # parent[g] indexes generation g-1; parent[0] is empty
    capped: bool = False

    @property
    def node_count(self) -> int:
        return int(sum(len(g) for g in self.k))

    def root_state(self, t: int | None = None) -> int:
        """LTM state of the root at time ``t`` (default: the truncation depth)."""
        t = self.depth if t is None else t
        if t > self.depth:
            raise ValueError("tree too shallow")
        vals = self.s[t].astype(np.int64)
        for g in range(t - 1, -1, -1):
            sums = np.bincount(self.parent[g + 1], weights=vals, minlength=len(self.k[g]))
            vals = (sums >= self.r[g]).astype(np.int64)
        return int(vals[0])

    def to_network(self) -> Network:
        """The tree as a network with parent-observes-child links (leaves keep their thresholds)."""
        offsets = np.cumsum([0] + [len(g) for g in self.k])
        tails = np.concatenate([self.parent[g] + offsets[g - 1] for g in range(1, self.depth + 1)]
                               or [np.zeros(0, np.int64)])
        heads = np.concatenate([np.arange(len(self.k[g])) + offsets[g] for g in range(1, self.depth + 1)]
                               or [np.zeros(0, np.int64)])
        return from_arrays(int(offsets[-1]), tails, heads, np.concatenate(self.r), np.concatenate(self.s),
                           check_thresholds=False)


def sample_branching(stats: NetworkStatistics, depth: int, seed: int = 0,
                     node_cap: int = DEFAULT_NODE_CAP) -> BranchingTree:
    """Root from ``p_{k,r,s}``, all descendants from ``q_{k,r,s}``, down to generation ``depth``.

    Generation ``g`` nodes each get ``k`` children while ``g < depth``.  If the
    tree would exceed ``node_cap`` nodes it is returned truncated with
    ``capped=True``.
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    g = rngmod.stream(seed, rngmod.BRANCHING)
    ptab, pp = _cells(stats.p_krs)
    qtab, qp = _cells(stats.q_krs) if stats.q_krs else (ptab, pp)
    root = ptab[g.choice(len(pp), p=pp)]
    ks, rs, ss, par = [root[0:1]], [root[1:2]], [root[2:3]], [np.zeros(0, np.int64)]
    total = 1
    capped = False
    for _ in range(depth):
        m = int(ks[-1].sum())
        if total + m > node_cap:
            capped = True
            break
        idx = g.choice(len(qp), size=m, p=qp)
        par.append(np.repeat(np.arange(len(ks[-1])), ks[-1]))
        ks.append(qtab[idx, 0])
        rs.append(qtab[idx, 1])
        ss.append(qtab[idx, 2])
        total += m
    return BranchingTree(len(ks) - 1, ks, rs, ss, par, capped)


@dataclass
class BranchingEstimate:
    t: int
    mean: float
    stderr: float
    replicas: int
    discarded: int

    def to_json_dict(self) -> dict:
        return {"t": self.t, "mean": self.mean, "stderr": self.stderr, "replicas": self.replicas,
                "discarded": self.discarded}


def sample_root_states(stats: NetworkStatistics, t: int, replicas: int, seed: int = 0,
                       node_cap: int = DEFAULT_NODE_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Root states at time ``t`` for a forest of independent trees.

    Returns ``(states, kept)``; trees whose size would pass ``node_cap`` are
    flagged ``kept = False``.  The deepest generation only enters through
    its number of seeds, so it is drawn directly as Binomial(k, xi) with
    ``xi`` the link-weighted seed fraction; this has the same law as drawing
    the leaves one by one.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    g = rngmod.stream(seed, rngmod.BRANCHING, t)
    ptab, pp = _cells(stats.p_krs)
    qtab, qp = _cells(stats.q_krs) if stats.q_krs else (ptab, pp)
    xi_q = float(qp[qtab[:, 2] == 1].sum())

    idx = g.choice(len(pp), size=replicas, p=pp)
    if t == 0:
        return ptab[idx, 2].astype(np.uint8), np.ones(replicas, dtype=bool)
    k = [ptab[idx, 0]]
    r = [ptab[idx, 1]]
    owner = [np.arange(replicas)]
    parent = [np.zeros(0, np.int64)]
    size = np.ones(replicas, dtype=np.int64)
    alive = np.ones(replicas, dtype=bool)
    for _gen in range(1, t):
        kids = k[-1]
        size += np.bincount(owner[-1], weights=kids, minlength=replicas).astype(np.int64)
        alive &= size <= node_cap
        par = np.repeat(np.arange(len(kids)), kids)
        keep = alive[owner[-1][par]]
        par = par[keep]
        sel = g.choice(len(qp), size=par.size, p=qp)
        k.append(qtab[sel, 0])
        r.append(qtab[sel, 1])
        owner.append(owner[-1][par])
        parent.append(par)
    # generation t: only seed counts are needed
    size += np.bincount(owner[-1], weights=k[-1], minlength=replicas).astype(np.int64)
    alive &= size <= node_cap
    active = g.binomial(k[-1], xi_q)
    vals = (active >= r[-1]).astype(np.int64)
    for gen in range(t - 2, -1, -1):
        sums = np.bincount(parent[gen + 1], weights=vals, minlength=len(k[gen]))
        vals = (sums >= r[gen]).astype(np.int64)
    return vals.astype(np.uint8), alive


def branching_root_expectation(stats: NetworkStatistics, t: int, replicas: int, seed: int = 0,
                               node_cap: int = DEFAULT_NODE_CAP) -> BranchingEstimate:
    """Monte Carlo mean of the root state at time ``t``; capped trees are discarded and counted."""
    states, kept = sample_root_states(stats, t, replicas, seed, node_cap)
    x = states[kept].astype(np.float64)
    m = len(x)
    mean = float(x.mean()) if m else math.nan
    se = math.sqrt(mean * (1 - mean) / m) if m else math.nan
    return BranchingEstimate(t, mean, se, m, int(replicas - m))
