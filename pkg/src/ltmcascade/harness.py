"""Experiment recipes behind the command line verbs.

Each ``cmd_*`` function takes plain Python values, does the work and returns
a result object that :mod:`ltmcascade.ingest` knows how to write.  Replica
``r`` always draws from ``replica_seed(seed, REPLICA, r)``, so growing the
replica count leaves earlier replicas untouched, and the same replica seeds
are reused at every grid point.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .dynamics import run, simulate_batch
from .ensembles import branching_root_expectation, sample_directed_cm
from .graph import Network
from .ingest import AssignmentSpec, SweepTable, assign
from .meanfield import (build_maps, concentration_constants, fixed_points, iterate, LimitTable)
from .statistics import NetworkStatistics, ThresholdCDF, degree_law_of, extract, reseed, synthesize

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 100
DEFAULT_REPLICAS = 10


@dataclass
class ExperimentConfig:
    kind: str
    source: str = "synthesized"  # synthesized | extracted | file
    upsilon_grid: list[float] = field(default_factory=lambda: [0.1])
    replicas: int = DEFAULT_REPLICAS
    horizon: int = DEFAULT_HORIZON
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if any(not 0 <= u <= 1 for u in self.upsilon_grid):
            raise ValueError("grid values must lie in [0, 1]")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")


def homogeneous_stats(k: int, r: int, d: int | None = None, upsilon: float = 0.0,
                      n: int | None = None) -> NetworkStatistics:
    """All nodes share ``(d, k, r)``; seeds are a fraction ``upsilon`` of them."""
    d = k if d is None else d
    base = NetworkStatistics({(d, k, r, 0): 1.0}, n=n)
    return reseed(base, upsilon, n)


def maps_for(stats: NetworkStatistics, mode: str = "ltm"):
    return build_maps(stats.pltm_reduced() if mode == "pltm" else stats)


# --- stats -----------------------------------------------------------------------

def cmd_stats(net: Network) -> dict:
    """Empirical statistics of ``net`` plus degree-marginal tables."""
    st = extract(net)
    marg = st.degree_marginals()
    return {
        "statistics": st.to_json_dict(),
        "n": net.n,
        "links": net.link_count,
        "p_in": {str(k): v for k, v in marg["p_in"].items()},
        "p_out": {str(k): v for k, v in marg["p_out"].items()},
        "p_in_zero": marg["p_in"].get(0, 0.0),
        "p_out_zero": marg["p_out"].get(0, 0.0),
    }


# --- recursion -------------------------------------------------------------------

def limit_table(stats: NetworkStatistics, xi_grid: Sequence[float], mode: str = "ltm") -> LimitTable:
    """``x*(xi)``, ``y*(xi)`` over a grid; for PLTM the maps are seed-rescaled per grid point."""
    grid = np.asarray(list(xi_grid), dtype=np.float64)
    if mode == "ltm":
        return fixed_points(build_maps(stats)).table(grid)
    base = build_maps(reseed(stats, 0.0))
    xs, ys = [], []
    for xi in grid:
        m = base.seed_rescaled(float(xi))
        x = fixed_points(m).limit_x(float(xi))
        xs.append(x)
        ys.append(float(m.psi(x)))
    return LimitTable(grid, np.array(xs), np.array(ys))


def cmd_recursion(stats: NetworkStatistics, xi: float | None = None, upsilon: float | None = None,
                  horizon: int = DEFAULT_HORIZON, mode: str = "ltm",
                  xi_grid: Sequence[float] | None = None) -> dict:
    xi = stats.xi if xi is None else xi
    upsilon = stats.upsilon if upsilon is None else upsilon
    if mode == "pltm":
        maps = build_maps(reseed(stats, 0.0)).seed_rescaled(xi, upsilon)
    else:
        maps = build_maps(stats)
    traj = iterate(maps, xi, upsilon, horizon)
    prof = fixed_points(maps)
    grid = np.linspace(0.0, 1.0, 101) if xi_grid is None else xi_grid
    table = limit_table(stats, grid, mode)
    return {"trajectory": traj, "profile": prof, "table": table}


# --- simulate --------------------------------------------------------------------

def network_from_stats(stats: NetworkStatistics, n: int, seed: int, upsilon: float | None = None) -> Network:
    """One configuration-model draw; ``upsilon`` re-places the seeds first."""
    if upsilon is not None:
        stats = reseed(stats, upsilon, n)
    return sample_directed_cm(stats, n, seed).network


def cmd_simulate(net: Network, mode: str = "ltm", horizon: int = DEFAULT_HORIZON,
                 freeze_zero_outdegree: bool = False, initial_state=None):
    return run(net, mode=mode, horizon=horizon, initial_state=initial_state,
               freeze_zero_outdegree=freeze_zero_outdegree)


# --- sweep -----------------------------------------------------------------------

def _replica_net(rep: int, seed: int, upsilon: float, topology: Network | None, F: ThresholdCDF | None,
                 stats: NetworkStatistics | None, n: int | None) -> Network:
    rs = rngmod.replica_seed(seed, rngmod.REPLICA, rep)
    if topology is not None:
        return assign(topology, AssignmentSpec(F, upsilon, rs))
    return network_from_stats(stats, n, rs, upsilon)


def _sweep_one(args):
    rep, seed, grid, topology, F, stats, n, mode, horizon, freeze = args
    out = []
    for u in grid:
        net = _replica_net(rep, seed, u, topology, F, stats, n)
        frozen = (net.out_degree == 0) if freeze else None
        res = simulate_batch(net, net.initial_state, horizon, mode=mode, frozen=frozen)
        out.append((u, rep, float(res.z[horizon, 0]), float(res.a[horizon, 0])))
    return out


def cmd_sweep(upsilon_grid: Sequence[float], replicas: int = DEFAULT_REPLICAS, horizon: int = DEFAULT_HORIZON,
              seed: int = 0, mode: str = "ltm", *, topology: Network | None = None, F: ThresholdCDF | None = None,
              stats: NetworkStatistics | None = None, n: int | None = None, freeze_zero_outdegree: bool = False,
              workers: int = 1) -> tuple[SweepTable, LimitTable]:
    """Simulate every ``(upsilon, replica)`` pair and pair the table with the recursion staircase.

    With a ``topology`` each replica draws fresh threshold and state
    permutations (``F`` and ``upsilon``); with ``stats`` each replica is a new
    configuration-model wiring on ``n`` nodes.
    """
    if (topology is None) == (stats is None):
        raise ValueError("give exactly one of topology or stats")
    if topology is not None and F is None:
        raise ValueError("a topology sweep needs a threshold CDF")
    if stats is not None and n is None:
        n = stats.n
    grid = [float(u) for u in upsilon_grid]
    jobs = [(rep, seed, grid, topology, F, stats, n, mode, horizon, freeze_zero_outdegree)
            for rep in range(replicas)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            chunks = list(ex.map(_sweep_one, jobs))
    else:
        chunks = [_sweep_one(j) for j in jobs]
    rows = sorted(r for c in chunks for r in c)
    table = SweepTable(np.array([r[0] for r in rows]), np.array([r[1] for r in rows], dtype=np.int64),
                       np.array([r[2] for r in rows]), np.array([r[3] for r in rows]))
    if topology is not None:
        prior = synthesize(F, degree_law_of(topology), 0.0)
    else:
        prior = stats
    staircase = limit_table(prior, grid, mode)
    return table, staircase


# --- concentration ------------------------------------------------------------------

@dataclass
class ConcentrationRow:
    n: int
    mean_dev: float
    median_dev: float
    max_dev: float
    gamma_over_n: float
    tail: float
    vacuous: bool


def max_deviation(net: Network, t: int, mode: str = "ltm") -> float:
    """``max_{s <= t} |z(s) - y(s)|`` with ``y`` from the recursion of the realised statistics."""
    st = extract(net)
    maps = build_maps(st.pltm_reduced() if mode == "pltm" else st)
    traj = iterate(maps, st.xi, st.upsilon, t, tol=-1.0)
    res = simulate_batch(net, net.initial_state, t, mode=mode)
    return float(np.max(np.abs(res.z[:t + 1, 0] - traj.y[:t + 1])))


def cmd_concentration(stats: NetworkStatistics, n_grid: Sequence[int], upsilon: float, t: int,
                      replicas: int = DEFAULT_REPLICAS, seed: int = 0, epsilon: float = 0.1,
                      mode: str = "ltm") -> list[ConcentrationRow]:
    rows = []
    for n in n_grid:
        devs = []
        for rep in range(replicas):
            net = network_from_stats(stats, n, rngmod.replica_seed(seed, rngmod.REPLICA, rep, n), upsilon)
            devs.append(max_deviation(net, t, mode))
        st = reseed(stats, upsilon, n)
        cb = concentration_constants(st, t, epsilon)
        g_n = cb.gamma_t / n
        rows.append(ConcentrationRow(int(n), float(np.mean(devs)), float(np.median(devs)), float(np.max(devs)),
                                     g_n, cb.tail(n), bool(n < cb.n_min)))
        log.info("n=%d median deviation %.4g", n, rows[-1].median_dev)
    return rows


# --- branching -----------------------------------------------------------------------

def cmd_branching(stats: NetworkStatistics, horizon: int, replicas: int, seed: int = 0) -> list[dict]:
    maps = build_maps(stats)
    traj = iterate(maps, stats.xi, stats.upsilon, horizon, tol=-1.0)
    rows = []
    for t in range(horizon + 1):
        est = branching_root_expectation(stats, t, replicas, seed)
        y = float(traj.y[t])
        se0 = math.sqrt(max(y * (1 - y), 0.0) / max(est.replicas, 1))
        z = (est.mean - y) / se0 if se0 > 0 else (0.0 if est.mean == y else math.inf)
        rows.append({"t": t, "mean": est.mean, "stderr": est.stderr, "y": y, "z_score": z,
                     "replicas": est.replicas, "discarded": est.discarded})
    return rows



def mixed_population_stats(n: int = 2000, upsilon: float = 0.0) -> NetworkStatistics:
    """45% of nodes with (k, r) = (14, 3), 55% with (11, 9); in-degree drawn from the
    same {14, 11} law independently of the out-degree class."""
    share = {14: 0.45, 11: 0.55}
    thr = {14: 3, 11: 9}
    counts = {}
    for d, pd in share.items():
        for k, pk in share.items():
            counts[(d, k, thr[k])] = int(round(n * pd * pk))
    if sum(counts.values()) != n:
        raise ValueError(f"n={n} does not split into whole cells")
    base = NetworkStatistics.from_counts({(d, k, r, 0): c for (d, k, r), c in counts.items()}, n)
    return reseed(base, upsilon, n)
