"""Synchronous LTM and PLTM dynamics.

A step maps the whole state vector at once: every node reads the previous
buffer and writes the next one.  Ties adopt (``sum >= rho`` gives state 1).
The batch runner :func:`simulate_batch` advances ``R`` independent state
columns over one shared topology, which is how sweeps amortise the sparse
product.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .graph import Network, NetworkValidationError, from_arrays

Mode = Literal["ltm", "pltm"]


@dataclass
class TrajectoryRecord:
    """Per-time fractions of one run, always filled up to ``horizon``.

    When the run settles early the tail is extended analytically (constant
    after a fixed point, alternating after a 2-cycle).
    """

    z: np.ndarray
    a: np.ndarray
    horizon: int
    mode: str = "ltm"
    converged_at: int | None = None
    cycle_at: int | None = None
    states: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def cycle(self) -> bool:
        return self.cycle_at is not None

    @property
    def settled(self) -> bool:
        return self.converged_at is not None or self.cycle_at is not None

    def settling_value(self) -> tuple[float, float]:
        """``(z, a)`` at the horizon, averaged over the two phases of a 2-cycle."""
        T = self.horizon
        if self.cycle and T >= 1:
            return float(self.z[T - 1:T + 1].mean()), float(self.a[T - 1:T + 1].mean())
        return float(self.z[T]), float(self.a[T])


def _effective_threshold(rho: np.ndarray, z: np.ndarray) -> np.ndarray:
    if z.ndim == 2 and rho.ndim == 1:
        return rho[:, None]
    return rho


def ltm_step(net: Network, z, threshold=None, frozen: np.ndarray | None = None) -> np.ndarray:
    """One synchronous LTM update: ``Z_i' = 1`` iff ``sum_j A_ij Z_j >= rho_i``.

    ``z`` may be a single state or an ``(n, R)`` batch.  Nodes flagged in
    ``frozen`` keep their current value.
    """
    z = np.asarray(z, dtype=np.uint8)
    rho = net.threshold if threshold is None else np.asarray(threshold, dtype=np.int64)
    nxt = (net.neighbor_sums(z) >= _effective_threshold(rho, z)).astype(np.uint8)
    if frozen is not None:
        keep = frozen[:, None] if (z.ndim == 2 and frozen.ndim == 1) else frozen
        nxt = np.where(keep, z, nxt).astype(np.uint8)
    return nxt


def pltm_step(net: Network, z, threshold=None, frozen: np.ndarray | None = None) -> np.ndarray:
    """One progressive update: the effective threshold is ``(1 - Z_i) rho_i``."""
    z = np.asarray(z, dtype=np.uint8)
    rho = net.threshold if threshold is None else np.asarray(threshold, dtype=np.int64)
    rho = _effective_threshold(rho, z)
    nxt = (net.neighbor_sums(z) >= (1 - z.astype(np.int64)) * rho).astype(np.uint8)
    if frozen is not None:
        keep = frozen[:, None] if (z.ndim == 2 and frozen.ndim == 1) else frozen
        nxt = np.where(keep, z, nxt).astype(np.uint8)
    return nxt


def pltm_as_ltm(net: Network) -> Network:
    """Copy of ``net`` with ``rho_i <- (1 - sigma_i) rho_i``.

    LTM on the result reproduces PLTM on ``net`` at every time step.
    """
    rho = (1 - net.initial_state.astype(np.int64)) * net.threshold
    return net.with_thresholds(rho)


@dataclass
class BatchResult:
    z: np.ndarray  # (T+1, R)
    a: np.ndarray  # (T+1, R)
    converged_at: np.ndarray  # (R,), -1 if never
    cycle_at: np.ndarray  # (R,), -1 if never
    final_state: np.ndarray  # (n, R) state at the last simulated step


def simulate_batch(net: Network, initial: np.ndarray, horizon: int, *, mode: Mode = "ltm",
                   threshold: np.ndarray | None = None, frozen: np.ndarray | None = None,
                   on_state: Callable[[int, np.ndarray], None] | None = None) -> BatchResult:
    """Run ``R`` state columns for ``horizon`` steps over one topology.

    ``initial`` is ``(n, R)``; ``threshold`` is ``(n,)`` or ``(n, R)``.  The
    loop ends once every column has reached a fixed point or a 2-cycle; the
    remaining times are filled in from the last two states.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if mode not in ("ltm", "pltm"):
        raise ValueError(f"unknown mode {mode!r}")
    step = ltm_step if mode == "ltm" else pltm_step
    cur = np.asarray(initial, dtype=np.uint8)
    if cur.ndim == 1:
        cur = cur[:, None]
    n, R = cur.shape
    l = max(net.link_count, 1)
    delta = net.in_degree.astype(np.float64)

    z = np.empty((horizon + 1, R))
    a = np.empty((horizon + 1, R))
    converged = np.full(R, -1, dtype=np.int64)
    cycle = np.full(R, -1, dtype=np.int64)

    def record(t, s):
        z[t] = s.sum(axis=0) / n if n else 0.0
        a[t] = (delta @ s) / l if net.link_count else 0.0
        if on_state is not None:
            on_state(t, s)

    record(0, cur)
    prev = None
    t = 0
    while t < horizon:
        nxt = step(net, cur, threshold, frozen)
        t += 1
        record(t, nxt)
        fixed = np.all(nxt == cur, axis=0)
        newly = fixed & (converged < 0) & (cycle < 0)
        converged[newly] = t - 1
        if prev is not None:
            two = np.all(nxt == prev, axis=0) & ~fixed
            newly = two & (converged < 0) & (cycle < 0)
            cycle[newly] = t - 2
        prev, cur = cur, nxt
        if np.all((converged >= 0) | (cycle >= 0)):
            break
    if t < horizon:
        # settled: every column is periodic with period 1 or 2 from here on
        for s in range(t + 1, horizon + 1):
            src = t - ((s - t) % 2)
            z[s] = z[src]
            a[s] = a[src]
    return BatchResult(z=z, a=a, converged_at=converged, cycle_at=cycle, final_state=cur)


def run(net: Network, mode: Mode = "ltm", horizon: int = 100, record_states: bool = False, *,
        initial_state=None, freeze_zero_outdegree: bool = False) -> TrajectoryRecord:
    """Iterate the chosen dynamics from ``sigma`` (or ``initial_state``) up to ``horizon``."""
    sigma = net.initial_state if initial_state is None else np.asarray(initial_state, dtype=np.uint8)
    frozen = (net.out_degree == 0) if freeze_zero_outdegree else None
    states: list[np.ndarray] | None = [] if record_states else None

    def keep(t, s):
        states.append(s[:, 0].copy())

    res = simulate_batch(net, sigma[:, None], horizon, mode=mode, frozen=frozen,
                         on_state=keep if record_states else None)
    conv = int(res.converged_at[0])
    cyc = int(res.cycle_at[0])
    return TrajectoryRecord(
        z=res.z[:, 0].copy(), a=res.a[:, 0].copy(), horizon=horizon, mode=mode,
        converged_at=conv if conv >= 0 else None,
        cycle_at=cyc if cyc >= 0 else None,
        states=states,
    )


def run_time_varying(net: Network, schedule, horizon: int, *, mode: Mode = "ltm",
                     record_states: bool = False) -> TrajectoryRecord:
    """LTM where step ``t -> t+1`` uses the thresholds ``schedule.thresholds(t)``.

    No early stopping: a later threshold change can restart the cascade.
    """
    step = ltm_step if mode == "ltm" else pltm_step
    n = net.n
    l = max(net.link_count, 1)
    delta = net.in_degree.astype(np.float64)
    cur = net.initial_state.copy()
    z = np.empty(horizon + 1)
    a = np.empty(horizon + 1)
    states = [cur.copy()] if record_states else None
    z[0] = cur.sum() / n
    a[0] = delta @ cur / l
    for t in range(horizon):
        rho = np.asarray(schedule.thresholds(t), dtype=np.int64)
        if rho.shape != (n,):
            raise NetworkValidationError(f"schedule at t={t} has shape {rho.shape}, expected ({n},)")
        bad = np.flatnonzero((rho < 0) | (rho > net.out_degree))
        if bad.size:
            i = int(bad[0])
            raise NetworkValidationError(
                f"schedule at t={t}: node {i} threshold {rho[i]} outside 0..{net.out_degree[i]}", node=i)
        cur = step(net, cur, rho)
        z[t + 1] = cur.sum() / n
        a[t + 1] = delta @ cur / l
        if record_states:
            states.append(cur.copy())
    return TrajectoryRecord(z=z, a=a, horizon=horizon, mode=mode, states=states)


def validate_undirected_tree(tree: Network) -> None:
    """Check that ``tree`` stores a simple undirected tree as reciprocal link pairs."""
    n = tree.n
    A = tree.adjacency
    if tree.link_count != 2 * max(n - 1, 0):
        raise NetworkValidationError(f"a tree on {n} nodes has {2 * (n - 1)} directed links, got {tree.link_count}")
    if A.diagonal().any():
        raise NetworkValidationError("tree has a self-loop")
    if A.nnz and A.data.max() > 1:
        raise NetworkValidationError("tree has parallel links")
    if (A != A.T).nnz:
        raise NetworkValidationError("links are not reciprocal")
    if n and len(_bfs_parents(tree, 0)[1]) != n:
        raise NetworkValidationError("tree is not connected")


def _bfs_parents(net: Network, root: int) -> tuple[np.ndarray, list[int]]:
    parent = np.full(net.n, -1, dtype=np.int64)
    seen = np.zeros(net.n, dtype=bool)
    seen[root] = True
    order = [root]
    q = deque([root])
    while q:
        u = q.popleft()
        for v in net.out_neighbors(u):
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                order.append(int(v))
                q.append(int(v))
    return parent, order


def orient_tree(tree: Network, root: int) -> Network:
    """Directed version of an undirected tree, links pointing away from ``root``.

    Thresholds are kept even where they now exceed the reduced out-degree;
    such nodes can only be active if they start active.
    """
    validate_undirected_tree(tree)
    if not 0 <= root < tree.n:
        raise IndexError(f"root {root} outside 0..{tree.n - 1}")
    parent, _ = _bfs_parents(tree, root)
    child = np.flatnonzero(parent >= 0)
    return from_arrays(tree.n, parent[child], child, tree.threshold, tree.initial_state,
                       check_thresholds=False)


def pltm_root_on_undirected_tree(tree: Network, root: int, horizon: int) -> np.ndarray:
    """Root states ``Z_root(0..horizon)`` of PLTM, computed on the rooted orientation."""
    directed = orient_tree(tree, root)
    out = np.empty(horizon + 1, dtype=np.uint8)
    cur = directed.initial_state.copy()
    out[0] = cur[root]
    for t in range(horizon):
        cur = pltm_step(directed, cur)
        out[t + 1] = cur[root]
    return out
