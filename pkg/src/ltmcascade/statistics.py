"""Network statistics: the joint law of (in-degree, out-degree, threshold, state).

``NetworkStatistics.joint`` maps ``(d, k, r, s)`` to the fraction of nodes
with in-degree ``d``, out-degree ``k``, threshold ``r`` and initial state
``s``.  Everything the mean-field recursion and the samplers need is derived
from it:

* ``p_kr``  -- node-weighted law of ``(k, r)``
* ``q_kr``  -- link-weighted law, ``sum_{d,s} d p_{d,k,r,s} / dbar``
* ``upsilon``, ``xi`` -- node- and link-weighted seed fractions
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Mapping

import numpy as np

from .graph import Network, NetworkValidationError

Cell = tuple[int, int, int, int]

_SUM_TOL = 1e-9


class IncompatibleStatisticsError(ValueError):
    """Statistics cannot be realised on ``n`` nodes."""


def _as_fraction(theta) -> Fraction:
    if isinstance(theta, Fraction):
        return theta
    if isinstance(theta, (int, np.integer)):
        return Fraction(int(theta))
    if isinstance(theta, str):
        return Fraction(theta)
    # str() keeps 0.2 as 1/5 rather than its binary expansion
    return Fraction(repr(float(theta)))


def ceil_ratio(theta: Fraction, k) -> np.ndarray | int:
    """Exact ``ceil(theta * k)`` for a rational ``theta``; works on integer arrays."""
    num, den = theta.numerator, theta.denominator
    if isinstance(k, np.ndarray):
        return -((-num * k.astype(np.int64)) // den)
    return -((-num * int(k)) // den)


@dataclass(frozen=True)
class ThresholdCDF:
    """Finite-atom CDF of the normalised thresholds ``Theta``.

    Atoms are stored as exact rationals so that ``ceil(theta * k)`` and
    ``F(r / k)`` never suffer from binary rounding at ``r/k`` boundaries.
    """

    atoms: tuple[tuple[Fraction, float], ...]

    def __post_init__(self):
        total = sum(w for _, w in self.atoms)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"threshold masses sum to {total}, expected 1")
        for theta, w in self.atoms:
            if not 0 <= theta <= 1:
                raise ValueError(f"threshold atom {theta} outside [0, 1]")
            if w < 0:
                raise ValueError(f"negative mass {w} at atom {theta}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[object, float]]) -> "ThresholdCDF":
        merged: dict[Fraction, float] = {}
        for theta, w in pairs:
            f = _as_fraction(theta)
            merged[f] = merged.get(f, 0.0) + float(w)
        return cls(tuple(sorted(merged.items())))

    @classmethod
    def step(cls, theta) -> "ThresholdCDF":
        return cls.from_pairs([(theta, 1.0)])

    def __call__(self, theta) -> float:
        if isinstance(theta, (Fraction, int, np.integer)):
            t = Fraction(theta)
            return float(sum(w for a, w in self.atoms if a <= t))
        t = float(theta)
        return float(sum(w for a, w in self.atoms if float(a) <= t))

    def threshold_law(self, k: int) -> dict[int, float]:
        """Law of ``rho = ceil(Theta k)`` for out-degree ``k``."""
        if k == 0:
            return {0: 1.0}
        out: dict[int, float] = {}
        for theta, w in self.atoms:
            if w == 0:
                continue
            r = ceil_ratio(theta, k)
            out[r] = out.get(r, 0.0) + w
        return out


def threshold_law_from_cdf(F: Callable, k: int) -> dict[int, float]:
    """``F(r/k) - F((r-1)/k)`` for ``r = 0..k``, with ``F`` evaluated at exact ratios."""
    if isinstance(F, ThresholdCDF):
        return F.threshold_law(k)
    if k == 0:
        return {0: 1.0}
    out = {}
    prev = 0.0
    for r in range(k + 1):
        cur = float(F(Fraction(r, k)))
        if cur - prev > 0:
            out[r] = cur - prev
        prev = cur
    return out


@dataclass(frozen=True, eq=False)
class NetworkStatistics:
    """Sparse joint law ``p_{d,k,r,s}``; ``n`` is optional and only informative."""

    joint: Mapping[Cell, float]
    n: int | None = None

    def __post_init__(self):
        clean = {}
        for (d, k, r, s), p in self.joint.items():
            d, k, r, s = int(d), int(k), int(r), int(s)
            if p < 0:
                raise ValueError(f"negative fraction at {(d, k, r, s)}")
            if not (d >= 0 and 0 <= r <= k and s in (0, 1)):
                raise ValueError(f"invalid cell {(d, k, r, s)}: need d >= 0, 0 <= r <= k, s in {{0, 1}}")
            if p > 0:
                clean[(d, k, r, s)] = clean.get((d, k, r, s), 0.0) + float(p)
        total = sum(clean.values())
        if clean and abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"fractions sum to {total}, expected 1")
        object.__setattr__(self, "joint", dict(sorted(clean.items())))

    # construction --------------------------------------------------------
    @classmethod
    def from_counts(cls, counts: Mapping[Cell, int], n: int | None = None) -> "NetworkStatistics":
        total = int(sum(counts.values()))
        if n is None:
            n = total
        if total != n:
            raise ValueError(f"cell counts sum to {total}, expected n={n}")
        return cls({c: v / n for c, v in counts.items() if v}, n=n)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NetworkStatistics):
            return NotImplemented
        return self.joint == other.joint

    def __hash__(self):
        return hash(tuple(self.joint.items()))

    def counts(self, n: int | None = None) -> dict[Cell, int]:
        """Integer cell counts ``n p``; raises if some ``n p`` is not an integer."""
        n = self.n if n is None else n
        if n is None:
            raise ValueError("node count unknown")
        rep = check_compatibility(self, n)
        if not rep.compatible:
            raise IncompatibleStatisticsError("; ".join(rep.violations[:5]))
        return {c: int(round(p * n)) for c, p in self.joint.items()}

    # marginals -----------------------------------------------------------
    @cached_property
    def mean_degree(self) -> float:
        return math.fsum(d * p for (d, _, _, _), p in self.joint.items())

    @cached_property
    def mean_out_degree(self) -> float:
        return math.fsum(k * p for (_, k, _, _), p in self.joint.items())

    @cached_property
    def p_krs(self) -> dict[tuple[int, int, int], float]:
        out: dict = {}
        for (d, k, r, s), p in self.joint.items():
            out[(k, r, s)] = out.get((k, r, s), 0.0) + p
        return out

    @cached_property
    def q_krs(self) -> dict[tuple[int, int, int], float]:
        dbar = self.mean_degree
        if dbar <= 0:
            return {}
        out: dict = {}
        for (d, k, r, s), p in self.joint.items():
            if d:
                out[(k, r, s)] = out.get((k, r, s), 0.0) + d * p / dbar
        return out

    @cached_property
    def p_kr(self) -> dict[tuple[int, int], float]:
        return _drop_last(self.p_krs)

    @cached_property
    def q_kr(self) -> dict[tuple[int, int], float]:
        return _drop_last(self.q_krs)

    @cached_property
    def upsilon(self) -> float:
        return math.fsum(p for (_, _, _, s), p in self.joint.items() if s == 1)

    @cached_property
    def xi(self) -> float:
        dbar = self.mean_degree
        if dbar <= 0:
            return self.upsilon
        return math.fsum(d * p for (d, _, _, s), p in self.joint.items() if s == 1) / dbar

    @cached_property
    def d_max(self) -> int:
        return max((c[0] for c in self.joint), default=0)

    @cached_property
    def k_max(self) -> int:
        return max((c[1] for c in self.joint), default=0)

    def degree_marginals(self) -> dict[str, dict]:
        """In/out-degree laws, the joint ``p_{d,k}`` and link-weighted ``q_{d,k}``."""
        p_in: dict[int, float] = {}
        p_out: dict[int, float] = {}
        p_dk: dict[tuple[int, int], float] = {}
        for (d, k, _, _), p in self.joint.items():
            p_in[d] = p_in.get(d, 0.0) + p
            p_out[k] = p_out.get(k, 0.0) + p
            p_dk[(d, k)] = p_dk.get((d, k), 0.0) + p
        dbar = self.mean_degree
        q_dk = {dk: dk[0] * p / dbar for dk, p in p_dk.items() if dk[0]} if dbar > 0 else {}
        return {"p_in": dict(sorted(p_in.items())), "p_out": dict(sorted(p_out.items())),
                "p_dk": dict(sorted(p_dk.items())), "q_dk": dict(sorted(q_dk.items()))}

    def satisfies_pltm_condition(self) -> bool:
        """True iff no seed node has a positive threshold (``p_{d,k,r,1} = 0`` for ``r >= 1``)."""
        return all(not (s == 1 and r >= 1) for (_, _, r, s) in self.joint)

    def pltm_reduced(self) -> "NetworkStatistics":
        """Statistics of the LTM that reproduces PLTM: seeds get threshold 0."""
        out: dict[Cell, float] = {}
        for (d, k, r, s), p in self.joint.items():
            key = (d, k, 0 if s == 1 else r, s)
            out[key] = out.get(key, 0.0) + p
        return NetworkStatistics(out, n=self.n)

    # serialisation ---------------------------------------------------------
    def to_json_dict(self) -> dict:
        nested: dict = {}
        for (d, k, r, s), p in self.joint.items():
            nested.setdefault(str(d), {}).setdefault(str(k), {}).setdefault(str(r), {})[str(s)] = p
        return {"n": self.n, "mean_degree": self.mean_degree, "upsilon": self.upsilon, "xi": self.xi,
                "joint": nested}

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "NetworkStatistics":
        joint = {}
        for d, by_k in obj["joint"].items():
            for k, by_r in by_k.items():
                for r, by_s in by_r.items():
                    for s, p in by_s.items():
                        joint[(int(d), int(k), int(r), int(s))] = float(p)
        return cls(joint, n=obj.get("n"))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_NONE)
        w.writerow(["d", "k", "r", "s", "p"])
        for (d, k, r, s), p in self.joint.items():
            w.writerow([d, k, r, s, repr(p)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n: int | None = None) -> "NetworkStatistics":
        rows = csv.DictReader(io.StringIO(text))
        return cls({(int(r["d"]), int(r["k"]), int(r["r"]), int(r["s"])): float(r["p"]) for r in rows}, n=n)


def _drop_last(m: Mapping[tuple, float]) -> dict:
    out: dict = {}
    for key, p in m.items():
        out[key[:-1]] = out.get(key[:-1], 0.0) + p
    return dict(sorted(out.items()))


@dataclass(frozen=True, eq=False)
class UndirectedStatistics:
    """Law ``u_{k,r,s}`` of (degree, threshold, state) for undirected networks."""

    joint: Mapping[tuple[int, int, int], float]
    n: int | None = None

    def __post_init__(self):
        clean = {}
        for (k, r, s), u in self.joint.items():
            if not (0 <= r <= k and s in (0, 1)) or u < 0:
                raise ValueError(f"invalid undirected cell {(k, r, s)} -> {u}")
            if u > 0:
                clean[(int(k), int(r), int(s))] = float(u)
        total = sum(clean.values())
        if clean and abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"fractions sum to {total}, expected 1")
        object.__setattr__(self, "joint", dict(sorted(clean.items())))

    @classmethod
    def from_counts(cls, counts: Mapping[tuple[int, int, int], int], n: int | None = None):
        total = int(sum(counts.values()))
        n = total if n is None else n
        if total != n:
            raise ValueError(f"cell counts sum to {total}, expected n={n}")
        return cls({c: v / n for c, v in counts.items() if v}, n=n)

    def __eq__(self, other):
        if not isinstance(other, UndirectedStatistics):
            return NotImplemented
        return self.joint == other.joint

    __hash__ = None

    @property
    def mean_degree(self) -> float:
        return math.fsum(k * u for (k, _, _), u in self.joint.items())

    def to_directed(self) -> NetworkStatistics:
        """Directed view with ``d = k`` for every node (``p_{k,k,r,s} = u_{k,r,s}``)."""
        return NetworkStatistics({(k, k, r, s): u for (k, r, s), u in self.joint.items()}, n=self.n)

    def counts(self, n: int | None = None) -> dict[tuple[int, int, int], int]:
        n = self.n if n is None else n
        rep = check_undirected_compatibility(self, n)
        if not rep.compatible:
            raise IncompatibleStatisticsError("; ".join(rep.violations[:5]))
        return {c: int(round(u * n)) for c, u in self.joint.items()}


@dataclass
class CompatibilityReport:
    compatible: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.compatible


def _integral(x: float) -> bool:
    return abs(x - round(x)) <= 1e-9 * max(1.0, abs(x))


def check_compatibility(stats: NetworkStatistics, n: int) -> CompatibilityReport:
    """``n p`` must be integral in every cell and in/out degree totals must balance."""
    violations = []
    for cell, p in stats.joint.items():
        if not _integral(n * p):
            violations.append(f"cell {cell}: n*p = {n * p!r} is not an integer")
    din = stats.mean_degree * n
    dout = stats.mean_out_degree * n
    if abs(din - dout) > 1e-9 * max(1.0, din):
        violations.append(f"in-degree total {din!r} differs from out-degree total {dout!r}")
    return CompatibilityReport(not violations, violations)


def check_undirected_compatibility(stats: UndirectedStatistics, n: int) -> CompatibilityReport:
    violations = []
    for cell, u in stats.joint.items():
        if not _integral(n * u):
            violations.append(f"cell {cell}: n*u = {n * u!r} is not an integer")
    l = stats.mean_degree * n
    if not _integral(l) or int(round(l)) % 2:
        violations.append(f"stub total {l!r} is not an even integer")
    return CompatibilityReport(not violations, violations)


def extract(net: Network, threshold: np.ndarray | None = None) -> NetworkStatistics:
    """Empirical statistics of ``net`` (optionally with substituted thresholds)."""
    rho = net.threshold if threshold is None else np.asarray(threshold, dtype=np.int64)
    if net.n == 0:
        return NetworkStatistics({}, n=0)
    rows = np.column_stack([net.in_degree, net.out_degree, rho, net.initial_state.astype(np.int64)])
    cells, cnt = np.unique(rows, axis=0, return_counts=True)
    return NetworkStatistics.from_counts({tuple(int(v) for v in c): int(m) for c, m in zip(cells, cnt)}, net.n)


def extract_undirected(net: Network) -> UndirectedStatistics:
    rows = np.column_stack([net.out_degree, net.threshold, net.initial_state.astype(np.int64)])
    cells, cnt = np.unique(rows, axis=0, return_counts=True)
    return UndirectedStatistics.from_counts({tuple(int(v) for v in c): int(m) for c, m in zip(cells, cnt)}, net.n)


# --- synthesis -------------------------------------------------------------

def largest_remainder(targets: np.ndarray, total: int) -> np.ndarray:
    """Round non-negative ``targets`` to integers summing to ``total``; ties go to lower index."""
    targets = np.asarray(targets, dtype=np.float64)
    base = np.floor(targets + 1e-9).astype(np.int64)
    short = int(total - base.sum())
    if short < 0:
        raise IncompatibleStatisticsError("targets exceed the requested total")
    if short:
        rem = targets - base
        order = np.lexsort((np.arange(len(rem)), -rem))
        base[order[:short]] += 1
    return base


def cumulative_split(cell_counts: np.ndarray, share: float) -> np.ndarray:
    """Split each cell count into a part of size ~``share * count``.

    Rounds the running total, so every cell gets floor or ceil of its target
    and the grand total is ``round(share * sum)``.
    """
    cell_counts = np.asarray(cell_counts, dtype=np.int64)
    cum = np.concatenate([[0.0], np.cumsum(cell_counts * share)])
    rounded = np.floor(cum + 0.5 + 1e-9).astype(np.int64)
    rounded = np.minimum(rounded, np.concatenate([[0], np.cumsum(cell_counts)]))
    return np.diff(rounded)


def split_categories(cell_counts: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Distribute each cell count over categories with global ``weights``.

    Nested binary splits (first category vs the rest, and so on), each done
    by :func:`cumulative_split`, keep every category's grand total within one
    unit per level of ``n w_j`` while preserving every cell's count.
    """
    cell_counts = np.asarray(cell_counts, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    out = np.zeros((len(cell_counts), len(weights)), dtype=np.int64)
    left = cell_counts.copy()
    mass = weights.sum()
    for j in range(len(weights) - 1):
        share = weights[j] / mass if mass > 0 else 0.0
        part = cumulative_split(left, min(max(share, 0.0), 1.0))
        out[:, j] = part
        left = left - part
        mass -= weights[j]
    if len(weights):
        out[:, -1] = left
    return out


def homogeneous_degree_law(d: int, k: int) -> dict[tuple[int, int], float]:
    return {(d, k): 1.0}


def independent_degree_law(p_in: Mapping[int, float], p_out: Mapping[int, float]) -> dict[tuple[int, int], float]:
    """Product law ``p_{d,k} = p_d p_k``."""
    return {(d, k): pd * pk for d, pd in p_in.items() for k, pk in p_out.items() if pd * pk > 0}


def degree_law_of(net: Network) -> dict[tuple[int, int], float]:
    """Empirical ``p_{d,k}`` of a topology."""
    rows = np.column_stack([net.in_degree, net.out_degree])
    cells, cnt = np.unique(rows, axis=0, return_counts=True)
    return {(int(d), int(k)): c / net.n for (d, k), c in zip(cells, cnt)}


def synthesize(F, degree_law: Mapping[tuple[int, int], float], upsilon: float,
               n: int | None = None) -> NetworkStatistics:
    """A-priori statistics for thresholds ``ceil(Theta k)`` with ``Theta ~ F`` and seeds ``~ upsilon``.

    ``p_{d,k,r,s} = p_{d,k} (F(r/k) - F((r-1)/k)) (upsilon [s=1] + (1-upsilon) [s=0])``,
    with all mass of ``k = 0`` nodes at ``r = 0``.  Without ``n`` the exact
    fractions are returned.  With ``n`` the cells are rounded to counts: the
    degree law must balance after rounding; thresholds and seeds are split
    across cells so that their grand totals stay within one node of target.
    Integer rounding needs ``F`` as a :class:`ThresholdCDF`.
    """
    if not 0 <= upsilon <= 1:
        raise ValueError("upsilon must lie in [0, 1]")
    total = sum(degree_law.values())
    law = {dk: w / total for dk, w in degree_law.items() if w > 0}
    if n is None:
        joint: dict[Cell, float] = {}
        for (d, k), pdk in law.items():
            for r, w in threshold_law_from_cdf(F, k).items():
                if upsilon > 0:
                    joint[(d, k, r, 1)] = joint.get((d, k, r, 1), 0.0) + pdk * w * upsilon
                if upsilon < 1:
                    joint[(d, k, r, 0)] = joint.get((d, k, r, 0), 0.0) + pdk * w * (1 - upsilon)
        return NetworkStatistics(joint)

    if not isinstance(F, ThresholdCDF):
        raise TypeError("rounding to n nodes needs a finite-atom ThresholdCDF")
    cells = sorted(law)
    dk_counts = largest_remainder(np.array([law[c] * n for c in cells]), n)
    if sum(d * c for (d, _), c in zip(cells, dk_counts)) != sum(k * c for (_, k), c in zip(cells, dk_counts)):
        raise IncompatibleStatisticsError(f"degree law cannot be rounded to {n} nodes with balanced in/out totals")
    weights = np.array([w for _, w in F.atoms])
    by_atom = split_categories(dk_counts, weights)
    sub_keys: list[tuple[int, int, int]] = []
    sub_counts: list[int] = []
    for (d, k), row in zip(cells, by_atom):
        rs: dict[int, int] = {}
        for (theta, _), c in zip(F.atoms, row):
            if c:
                r = 0 if k == 0 else ceil_ratio(theta, k)
                rs[r] = rs.get(r, 0) + int(c)
        for r in sorted(rs):
            sub_keys.append((d, k, r))
            sub_counts.append(rs[r])
    ones = cumulative_split(np.array(sub_counts, dtype=np.int64), upsilon)
    counts: dict[Cell, int] = {}
    for (d, k, r), c, o in zip(sub_keys, sub_counts, ones):
        if o:
            counts[(d, k, r, 1)] = int(o)
        if c - o:
            counts[(d, k, r, 0)] = int(c - o)
    return NetworkStatistics.from_counts(counts, n)


def with_seed_fraction(cell_counts: Mapping[tuple[int, int, int], int], upsilon: float) -> NetworkStatistics:
    """Attach initial states to ``(d, k, r)`` counts, ~``upsilon`` of every cell being seeds."""
    keys = sorted(cell_counts)
    c = np.array([cell_counts[k] for k in keys], dtype=np.int64)
    ones = cumulative_split(c, upsilon)
    counts: dict[Cell, int] = {}
    for (d, k, r), m, o in zip(keys, c, ones):
        if o:
            counts[(d, k, r, 1)] = int(o)
        if m - o:
            counts[(d, k, r, 0)] = int(m - o)
    return NetworkStatistics.from_counts(counts, int(c.sum()))


class ThresholdSchedule:
    """Time-indexed thresholds ``rho_i(t)``.

    Wraps either a dense ``(T, n)`` table (the last row is held beyond ``T``)
    or a rule ``t -> thresholds``.
    """

    def __init__(self, rule: Callable[[int], np.ndarray]):
        self._rule = rule

    @classmethod
    def constant(cls, threshold) -> "ThresholdSchedule":
        rho = np.asarray(threshold, dtype=np.int64)
        return cls(lambda t: rho)

    @classmethod
    def from_table(cls, table) -> "ThresholdSchedule":
        tab = np.asarray(table, dtype=np.int64)
        if tab.ndim != 2:
            raise ValueError("threshold table must be (T, n)")
        return cls(lambda t: tab[min(t, tab.shape[0] - 1)])

    def thresholds(self, t: int) -> np.ndarray:
        return np.asarray(self._rule(t), dtype=np.int64)

    def validate(self, net: Network, horizon: int) -> None:
        for t in range(horizon):
            rho = self.thresholds(t)
            bad = np.flatnonzero((rho < 0) | (rho > net.out_degree))
            if bad.size:
                i = int(bad[0])
                raise NetworkValidationError(
                    f"schedule at t={t}: node {i} threshold {rho[i]} outside 0..{net.out_degree[i]}", node=i)

    def stats_at(self, net: Network, t: int) -> NetworkStatistics:
        """``p_{d,k,r,s}(t)``: statistics with the step-``t`` thresholds."""
        return extract(net, self.thresholds(t))


def stats_to_json(stats: NetworkStatistics) -> str:
    return json.dumps(stats.to_json_dict(), sort_keys=True)


def reseed(stats: NetworkStatistics, upsilon: float, n: int | None = None) -> NetworkStatistics:
    """Replace the initial states by seeds placed independently of ``(d, k, r)``.

    Fractional without ``n``; with ``n`` the ``(d, k, r)`` counts must be
    integral and seeds are split by :func:`with_seed_fraction`.
    """
    if not 0 <= upsilon <= 1:
        raise ValueError("upsilon must lie in [0, 1]")
    base: dict[tuple[int, int, int], float] = {}
    for (d, k, r, _), p in stats.joint.items():
        base[(d, k, r)] = base.get((d, k, r), 0.0) + p
    if n is None:
        joint: dict[Cell, float] = {}
        for (d, k, r), p in base.items():
            if upsilon > 0:
                joint[(d, k, r, 1)] = p * upsilon
            if upsilon < 1:
                joint[(d, k, r, 0)] = p * (1 - upsilon)
        return NetworkStatistics(joint, n=stats.n)
    counts = {}
    for cell, p in base.items():
        if not _integral(n * p):
            raise IncompatibleStatisticsError(f"cell {cell}: n*p = {n * p!r} is not an integer")
        counts[cell] = int(round(n * p))
    return with_seed_fraction(counts, upsilon)
