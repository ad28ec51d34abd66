"""Directed multigraphs with per-node thresholds and initial states.

Links follow the observation convention: a link ``(i, j)`` means agent ``i``
watches agent ``j``, so the out-neighbours of ``i`` are the agents whose
states ``i`` counts.  Parallel links and self-loops are part of the model and
are kept verbatim.

Adjacency is stored in compressed-row form (``indptr``/``indices``) because a
synchronous sweep reads every row once, in order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class NetworkValidationError(ValueError):
    """Raised when a network violates ``0 <= rho_i <= kappa_i`` or has bad ids."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable network ``(V, E, rho, sigma)``.

    ``indices[indptr[i]:indptr[i+1]]`` is the multiset of out-neighbours of
    node ``i``.  All arrays are read-only so one instance can be shared by
    many simulations.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    in_degree: np.ndarray
    out_degree: np.ndarray
    threshold: np.ndarray
    initial_state: np.ndarray

    @property
    def node_count(self) -> int:
        return self.n

    @property
    def link_count(self) -> int:
        return int(self.indices.shape[0])

    @property
    def mean_degree(self) -> float:
        return self.link_count / self.n if self.n else 0.0

    def out_neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def tails(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), self.out_degree)

    def edges(self) -> np.ndarray:
        """Link multiset as an ``(l, 2)`` array of ``(tail, head)`` rows, tail-sorted."""
        return np.column_stack([self.tails(), self.indices])

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Sparse adjacency ``A`` with ``A[i, j]`` = multiplicity of link ``(i, j)``."""
        data = np.ones(self.link_count, dtype=np.int32)
        a = sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n), copy=True)
        a.sum_duplicates()
        return a

    def neighbor_sums(self, z: np.ndarray) -> np.ndarray:
        """``A @ z`` for a state vector, or for an ``(n, R)`` batch of them."""
        return self.adjacency @ np.asarray(z, dtype=np.int32)

    def with_thresholds(self, threshold: Sequence[int] | np.ndarray, *, check: bool = True) -> "Network":
        return from_csr(self.n, self.indptr, self.indices, threshold, self.initial_state,
                        in_degree=self.in_degree, check_thresholds=check)

    def with_initial_state(self, initial_state: Sequence[int] | np.ndarray) -> "Network":
        return from_csr(self.n, self.indptr, self.indices, self.threshold, initial_state,
                        in_degree=self.in_degree, check_thresholds=False)


def _validate_attrs(n: int, out_degree: np.ndarray, threshold, initial_state, check_thresholds: bool):
    rho = np.asarray(threshold, dtype=np.int64).reshape(-1)
    sigma = np.asarray(initial_state).reshape(-1)
    if rho.shape[0] != n:
        raise NetworkValidationError(f"expected {n} thresholds, got {rho.shape[0]}")
    if sigma.shape[0] != n:
        raise NetworkValidationError(f"expected {n} initial states, got {sigma.shape[0]}")
    bad = np.flatnonzero((sigma != 0) & (sigma != 1))
    if bad.size:
        raise NetworkValidationError(f"initial state of node {bad[0]} is not a bit", node=int(bad[0]))
    neg = np.flatnonzero(rho < 0)
    if neg.size:
        raise NetworkValidationError(f"node {neg[0]} has negative threshold {rho[neg[0]]}", node=int(neg[0]))
    if check_thresholds:
        over = np.flatnonzero(rho > out_degree)
        if over.size:
            i = int(over[0])
            raise NetworkValidationError(
                f"node {i} has threshold {rho[i]} exceeding its out-degree {out_degree[i]}", node=i)
    return rho, sigma.astype(np.uint8)


def from_csr(n, indptr, indices, threshold, initial_state, *, in_degree=None,
             check_thresholds: bool = True) -> Network:
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    out_degree = np.diff(indptr)
    if in_degree is None:
        in_degree = np.bincount(indices, minlength=n).astype(np.int64)
    rho, sigma = _validate_attrs(n, out_degree, threshold, initial_state, check_thresholds)
    return Network(
        n=int(n),
        indptr=_frozen(indptr.copy()),
        indices=_frozen(indices.copy()),
        in_degree=_frozen(np.asarray(in_degree, dtype=np.int64).copy()),
        out_degree=_frozen(out_degree),
        threshold=_frozen(rho.copy()),
        initial_state=_frozen(sigma.copy()),
    )


def from_arrays(n: int, tails, heads, threshold, initial_state, *, check_thresholds: bool = True) -> Network:
    """Build a network from parallel tail/head arrays (any order)."""
    tails = np.asarray(tails, dtype=np.int64).reshape(-1)
    heads = np.asarray(heads, dtype=np.int64).reshape(-1)
    if tails.shape != heads.shape:
        raise NetworkValidationError("tail and head arrays differ in length")
    for name, ids in (("tail", tails), ("head", heads)):
        bad = np.flatnonzero((ids < 0) | (ids >= n))
        if bad.size:
            raise NetworkValidationError(
                f"link {bad[0]} has {name} id {ids[bad[0]]} outside 0..{n - 1}", node=int(ids[bad[0]]))
    order = np.argsort(tails, kind="stable")
    out_degree = np.bincount(tails, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(out_degree, out=indptr[1:])
    return from_csr(n, indptr, heads[order], threshold, initial_state, check_thresholds=check_thresholds)


def build_network(edge_list: Iterable[tuple[int, int]] | np.ndarray, thresholds, initial_states,
                  n: int | None = None) -> Network:
    """Build a :class:`Network` from ``(tail, head)`` pairs.

    The node count defaults to ``len(thresholds)``.  Duplicate pairs become
    parallel links.
    """
    e = np.asarray(list(edge_list) if not isinstance(edge_list, np.ndarray) else edge_list, dtype=np.int64)
    e = e.reshape(-1, 2)
    if n is None:
        n = len(thresholds)
    return from_arrays(n, e[:, 0], e[:, 1], thresholds, initial_states)


def neighbor_sum(net: Network, z, i: int) -> int:
    """Number of state-1 out-neighbours of ``i``, counted with multiplicity."""
    if not 0 <= i < net.n:
        raise IndexError(f"node id {i} outside 0..{net.n - 1}")
    z = np.asarray(z)
    return int(z[net.out_neighbors(i)].astype(np.int64).sum())
