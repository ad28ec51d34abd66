"""Mean-field recursion ``x(t+1) = phi(x(t))``, ``y(t+1) = psi(x(t))``.

``varphi(k, r, x)`` is the probability that a Binomial(k, x) variable is at
least ``r``.  ``phi`` mixes these tails with the link-weighted law ``q_{k,r}``
and ``psi`` with the node-weighted law ``p_{k,r}``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize, special, stats as sps

from .statistics import NetworkStatistics, synthesize

log = logging.getLogger(__name__)

RECURSION_TOL = 1e-12
RECURSION_CAP = 100_000
GRID_POINTS = 10_000
ROOT_TOL = 1e-10
MARGINAL_TOL = 1e-6
_ZERO = 1e-13


def _check(k, r):
    k = np.asarray(k)
    r = np.asarray(r)
    if np.any(r < 0) or np.any(r > k):
        raise ValueError(f"need 0 <= r <= k, got k={k}, r={r}")


def _check_x(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(~((x >= 0) & (x <= 1))):
        raise ValueError("x must lie in [0, 1]")
    return x


def varphi(k, r, x):
    """``P(Binomial(k, x) >= r)``.

    Uses the regularised incomplete beta identity
    ``P(B >= r) = I_x(r, k - r + 1)``, which stays accurate for large ``k``.
    """
    _check(k, r)
    x = _check_x(x)
    k = np.asarray(k, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    safe_r = np.where(r > 0, r, 1.0)
    out = np.where(r > 0, special.betainc(safe_r, k - safe_r + 1.0, x), 1.0)
    return out if out.ndim else float(out)


def _pmf(j, m, x):
    # binomial pmf that tolerates m = 0 and out-of-range j
    j = np.asarray(j, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    ok = (j >= 0) & (j <= m)
    val = sps.binom.pmf(np.where(ok, j, 0), m, x)
    degenerate = m == 0
    val = np.where(degenerate, (j == 0).astype(np.float64), val)
    return np.where(ok, val, 0.0)


def varphi_derivative(k, r, x):
    """``C(k, r) r x^(r-1) (1-x)^(k-r)``, written as ``k * pmf(r-1; k-1, x)``."""
    _check(k, r)
    x = _check_x(x)
    k = np.asarray(k, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    out = np.where((r > 0) & (k > 0), k * _pmf(r - 1, np.maximum(k - 1, 0), x), 0.0)
    return out if out.ndim else float(out)


def varphi_second(k, r, x):
    """Second derivative; its sign is the sign of ``r - 1 - x (k - 1)``."""
    _check(k, r)
    x = _check_x(x)
    k = np.asarray(k, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    m = np.maximum(k - 2, 0)
    val = k * (k - 1) * (_pmf(r - 2, m, x) - _pmf(r - 1, m, x))
    out = np.where((r > 0) & (k > 1), val, 0.0)
    return out if out.ndim else float(out)


def inflection_point(k: int, r: int) -> float | None:
    """``(r - 1) / (k - 1)`` for ``2 <= r <= k - 1``; otherwise ``varphi`` has no interior inflection."""
    if k >= 3 and 2 <= r <= k - 1:
        return (r - 1) / (k - 1)
    return None


@dataclass(frozen=True)
class MeanFieldMaps:
    """``phi`` and ``psi`` as weighted lists of ``(k, r, weight)`` terms."""

    terms_phi: tuple[tuple[int, int, float], ...]
    terms_psi: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        for name, terms in (("phi", self.terms_phi), ("psi", self.terms_psi)):
            ws = [w for _, _, w in terms]
            if any(w < 0 for w in ws):
                raise ValueError(f"negative weight in {name}")
            if terms and abs(math.fsum(ws) - 1.0) > 1e-9:
                raise ValueError(f"{name} weights sum to {math.fsum(ws)}, expected 1")
            for k, r, _ in terms:
                if not 0 <= r <= k:
                    raise ValueError(f"invalid term (k={k}, r={r}) in {name}")

    @classmethod
    def from_terms(cls, phi: Mapping[tuple[int, int], float] | Iterable,
                   psi: Mapping[tuple[int, int], float] | Iterable | None = None) -> "MeanFieldMaps":
        tp = _terms(phi)
        return cls(tp, _terms(psi) if psi is not None else tp)

    @classmethod
    def single(cls, k: int, r: int) -> "MeanFieldMaps":
        return cls(((k, r, 1.0),), ((k, r, 1.0),))

    def _eval(self, terms, x, fn):
        x = _check_x(x)
        flat = np.atleast_1d(x).ravel()
        acc = np.zeros_like(flat)
        if terms:
            ks = np.array([t[0] for t in terms], dtype=np.float64)
            rs = np.array([t[1] for t in terms], dtype=np.float64)
            ws = np.array([t[2] for t in terms])
            # chunk over terms to bound memory for heavy-tailed degree laws
            step = max(1, 2_000_000 // max(flat.size, 1))
            for i in range(0, len(terms), step):
                vals = fn(ks[i:i + step, None], rs[i:i + step, None], flat[None, :])
                acc += ws[i:i + step] @ vals
        out = acc.reshape(x.shape)
        return out if out.ndim else float(out)

    def phi(self, x):
        return self._eval(self.terms_phi, x, varphi)

    def psi(self, x):
        return self._eval(self.terms_psi, x, varphi)

    def phi_prime(self, x):
        return self._eval(self.terms_phi, x, varphi_derivative)

    def psi_prime(self, x):
        return self._eval(self.terms_psi, x, varphi_derivative)

    @property
    def phi0(self) -> float:
        return math.fsum(w for _, r, w in self.terms_phi if r == 0)

    @property
    def psi0(self) -> float:
        return math.fsum(w for _, r, w in self.terms_psi if r == 0)

    def seed_rescaled(self, xi: float, upsilon: float | None = None) -> "MeanFieldMaps":
        """``phi_xi(x) = xi + (1 - xi) phi(x)`` (and likewise ``psi`` with ``upsilon``).

        These are the maps of PLTM when the seeds are placed independently of
        ``(d, k, r)`` on a population described by ``self``.
        """
        upsilon = xi if upsilon is None else upsilon

        def resc(terms, s):
            out = [(k, r, (1 - s) * w) for k, r, w in terms]
            if s > 0:
                out.append((0, 0, s))
            return tuple(_merge(out))

        return MeanFieldMaps(resc(self.terms_phi, xi), resc(self.terms_psi, upsilon))


def _merge(terms):
    acc: dict[tuple[int, int], float] = {}
    for k, r, w in terms:
        acc[(k, r)] = acc.get((k, r), 0.0) + w
    return [(k, r, w) for (k, r), w in sorted(acc.items()) if w > 0]


def _terms(spec) -> tuple[tuple[int, int, float], ...]:
    if isinstance(spec, Mapping):
        items = [(int(k), int(r), float(w)) for (k, r), w in spec.items()]
    else:
        items = [(int(k), int(r), float(w)) for k, r, w in spec]
    return tuple(_merge(items))


def build_maps(stats: NetworkStatistics) -> MeanFieldMaps:
    """``phi = sum q_{k,r} varphi_{k,r}``, ``psi = sum p_{k,r} varphi_{k,r}``."""
    q = stats.q_kr
    if not q:
        # no links at all: phi is never consulted beyond x(0); use psi's law
        q = stats.p_kr
    return MeanFieldMaps.from_terms(q, stats.p_kr)


@dataclass
class RecursionTrajectory:
    x: np.ndarray
    y: np.ndarray
    horizon: int
    converged_at: int | None = None

    def x_at(self, t: int) -> float:
        return float(self.x[min(t, len(self.x) - 1)])

    def y_at(self, t: int) -> float:
        return float(self.y[min(t, len(self.y) - 1)])

    @property
    def x_final(self) -> float:
        return float(self.x[-1])

    @property
    def y_final(self) -> float:
        return float(self.y[-1])


def iterate(maps: MeanFieldMaps, xi: float, upsilon: float, horizon: int | None = None,
            tol: float = RECURSION_TOL) -> RecursionTrajectory:
    """Run the recursion from ``x(0) = xi``, ``y(0) = upsilon``.

    Stops once ``|x(t+1) - x(t)| < tol`` (the orbit is monotone, so this is a
    safe Cauchy test).  With an explicit ``horizon`` the arrays are padded to
    length ``horizon + 1`` with the converged values.
    """
    for name, v in (("xi", xi), ("upsilon", upsilon)):
        if not 0 <= v <= 1:
            raise ValueError(f"{name} must lie in [0, 1]")
    cap = RECURSION_CAP if horizon is None else int(horizon)
    xs = [float(xi)]
    ys = [float(upsilon)]
    converged = None
    for t in range(cap):
        x = xs[-1]
        nx = float(np.clip(maps.phi(x), 0.0, 1.0))
        xs.append(nx)
        ys.append(float(np.clip(maps.psi(x), 0.0, 1.0)))
        if abs(nx - x) < tol:
            converged = t
            break
    if horizon is not None and len(xs) < horizon + 1:
        pad = horizon + 1 - len(xs)
        xl = xs[-1]
        yl = float(np.clip(maps.psi(xl), 0.0, 1.0))
        xs.extend([xl] * pad)
        ys.extend([yl] * pad)
    return RecursionTrajectory(np.array(xs), np.array(ys), cap, converged)


def iterate_time_varying(maps_at: Callable[[int], MeanFieldMaps] | Sequence[MeanFieldMaps],
                         xi: float, upsilon: float, horizon: int) -> RecursionTrajectory:
    """``x(t+1) = phi_t(x(t))``, ``y(t+1) = psi_t(x(t))``; a sequence holds its last map."""
    if not callable(maps_at):
        seq = list(maps_at)
        maps_at = lambda t: seq[min(t, len(seq) - 1)]  # noqa: E731
    xs = np.empty(horizon + 1)
    ys = np.empty(horizon + 1)
    xs[0], ys[0] = xi, upsilon
    for t in range(horizon):
        m = maps_at(t)
        xs[t + 1] = np.clip(m.phi(xs[t]), 0.0, 1.0)
        ys[t + 1] = np.clip(m.psi(xs[t]), 0.0, 1.0)
    return RecursionTrajectory(xs, ys, horizon)


# --- fixed points ------------------------------------------------------------

@dataclass(frozen=True)
class FixedPoint:
    x: float
    slope: float
    stability: str  # "stable" | "unstable" | "marginal"


class RootSeparationError(RuntimeError):
    pass


@dataclass
class LimitProfile:
    """Roots of ``phi(x) = x`` on [0, 1] and the induced limit map ``xi -> (x*, y*)``."""

    maps: MeanFieldMaps
    fixed_points: list[FixedPoint]
    interval_signs: list[int]  # sign of phi(x) - x between consecutive roots
    identity: bool = False

    @property
    def roots(self) -> np.ndarray:
        return np.array([f.x for f in self.fixed_points])

    def limit_x(self, xi: float) -> float:
        if not 0 <= xi <= 1:
            raise ValueError("xi must lie in [0, 1]")
        if self.identity:
            return float(xi)
        roots = self.roots
        j = int(np.argmin(np.abs(roots - xi)))
        if abs(roots[j] - xi) <= ROOT_TOL:
            return float(roots[j])
        i = int(np.searchsorted(roots, xi)) - 1  # roots[i] < xi < roots[i+1]
        if i < 0:
            # below the first root, which happens only when phi(0) > 0
            return float(roots[0])
        if i >= len(roots) - 1:
            return float(roots[-1])
        return float(roots[i] if self.interval_signs[i] < 0 else roots[i + 1])

    def limit(self, xi: float) -> tuple[float, float]:
        x = self.limit_x(xi)
        return x, float(self.maps.psi(x))

    @property
    def discontinuities(self) -> list[float]:
        """Roots at which ``xi -> x*(xi)`` jumps."""
        if self.identity:
            return []
        out = []
        roots = self.roots
        for i, x in enumerate(roots):
            left = self.interval_signs[i - 1] if i > 0 else None
            right = self.interval_signs[i] if i < len(roots) - 1 else None
            from_left = left is None or left > 0
            from_right = right is None or right < 0
            if not (from_left and from_right):
                out.append(float(x))
        return out

    def table(self, xi_grid: Iterable[float]) -> "LimitTable":
        xi = np.asarray(list(xi_grid), dtype=np.float64)
        xs = np.array([self.limit_x(v) for v in xi])
        ys = np.asarray(self.maps.psi(xs), dtype=np.float64) if xs.size else xs
        return LimitTable(xi, xs, np.atleast_1d(ys))

    def to_json_dict(self) -> dict:
        return {
            "identity": self.identity,
            "fixed_points": [{"x": f.x, "slope": f.slope, "stability": f.stability} for f in self.fixed_points],
            "discontinuities": self.discontinuities,
        }


@dataclass
class LimitTable:
    xi: np.ndarray
    x_star: np.ndarray
    y_star: np.ndarray

    header = ("xi", "x_star", "y_star")

    def rows(self):
        for a, b, c in zip(self.xi, self.x_star, self.y_star):
            yield float(a), float(b), float(c)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows():
            w.writerow([repr(v) for v in row])
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {"xi": self.xi.tolist(), "x_star": self.x_star.tolist(), "y_star": self.y_star.tolist()}


def _sign(v: np.ndarray) -> np.ndarray:
    s = np.sign(v).astype(np.int64)
    s[np.abs(v) <= _ZERO] = 0
    return s


def _find_roots(g: Callable, lo: float, hi: float, npts: int, depth: int, out: list[float]) -> None:
    xs = np.linspace(lo, hi, npts)
    gv = np.asarray(g(xs), dtype=np.float64)
    sg = _sign(gv)
    nz = np.flatnonzero(sg != 0)
    # zero-valued grid points at the ends of the scanned window belong to the caller
    for i in np.flatnonzero(sg == 0):
        if 0 < i < npts - 1 or depth == 0:
            out.append(float(xs[i]))
    for a, b in zip(nz[:-1], nz[1:]):
        xa, xb = xs[a], xs[b]
        if sg[a] != sg[b]:
            if b - a > 1:
                continue  # zero run between: already recorded
            if depth < 3 and xb - xa > 1e-7:
                sub = np.linspace(xa, xb, 11)
                ss = _sign(np.asarray(g(sub)))
                if np.count_nonzero(np.diff(ss[ss != 0]) != 0) > 1 or np.any(ss[1:-1] == 0):
                    _find_roots(g, xa, xb, 11, depth + 1, out)
                    continue
            out.append(float(optimize.brentq(g, xa, xb, xtol=ROOT_TOL / 10, rtol=4 * np.finfo(float).eps)))
    # tangential candidates: interior local minima of |g| without a sign change
    ag = np.abs(gv)
    for i in range(1, npts - 1):
        if sg[i] == 0 or sg[i - 1] != sg[i] or sg[i + 1] != sg[i]:
            continue
        if ag[i] <= ag[i - 1] and ag[i] <= ag[i + 1] and ag[i] < 1e-4:
            xa, xb = xs[i - 1], xs[i + 1]
            if depth < 4 and xb - xa > 1e-7:
                _find_roots(g, xa, xb, 21, depth + 1, out)
            else:
                res = optimize.minimize_scalar(lambda v: abs(float(g(v))), bounds=(xa, xb),
                                               method="bounded", options={"xatol": ROOT_TOL})
                if res.fun < 1e-12:
                    out.append(float(res.x))


def fixed_points(maps: MeanFieldMaps, grid: int = GRID_POINTS) -> LimitProfile:
    """All roots of ``phi(x) = x`` in [0, 1], tagged by ``phi'`` against 1."""
    g = lambda x: np.asarray(maps.phi(np.clip(x, 0.0, 1.0))) - x  # noqa: E731
    xs = np.linspace(0.0, 1.0, grid + 1)
    gv = g(xs)
    if np.all(np.abs(gv) <= 1e-12):
        return LimitProfile(maps, [FixedPoint(0.0, 1.0, "marginal"), FixedPoint(1.0, 1.0, "marginal")],
                            [0], identity=True)
    found: list[float] = [1.0]
    if maps.phi0 <= _ZERO:
        found.append(0.0)
    _find_roots(g, 0.0, 1.0, grid + 1, 0, found)
    roots: list[float] = []
    for x in sorted(found):
        x = min(max(x, 0.0), 1.0)
        if roots and x - roots[-1] <= 1e-8:
            # keep the endpoint representative exactly
            if x in (0.0, 1.0):
                roots[-1] = x
            continue
        roots.append(x)
    # drop spurious near-zero roots when phi(0) > 0
    roots = [x for x in roots if not (x < 1e-8 and x != 0.0 and abs(g(x)) > 1e-9)]
    fps = []
    for x in roots:
        s = float(maps.phi_prime(x))
        tag = "marginal" if abs(s - 1) < MARGINAL_TOL else ("stable" if s < 1 else "unstable")
        fps.append(FixedPoint(float(x), s, tag))
    signs = []
    for a, b in zip(roots[:-1], roots[1:]):
        v = float(g(0.5 * (a + b)))
        signs.append(1 if v > 0 else (-1 if v < 0 else 0))
    return LimitProfile(maps, fps, signs)


# --- local indicators ------------------------------------------------------------

@dataclass(frozen=True)
class LocalIndicators:
    gamma: float
    vartheta: float
    phi0: float
    psi0: float

    @property
    def near_zero(self) -> str:
        """Behaviour of the recursion started just above 0."""
        if self.phi0 > 0:
            return "lifted"  # 0 is not a fixed point
        if abs(self.gamma - 1) < MARGINAL_TOL:
            return "marginal"
        return "grows" if self.gamma > 1 else "dies"

    @property
    def near_one(self) -> str:
        """Behaviour of the recursion started just below 1."""
        if abs(self.vartheta - 1) < MARGINAL_TOL:
            return "marginal"
        return "stays" if self.vartheta < 1 else "retreats"


def local_indicators(stats_or_maps) -> LocalIndicators:
    """``gamma = phi'(0) = sum k q_{k,1}`` and ``vartheta = phi'(1) = sum k q_{k,k}``."""
    maps = build_maps(stats_or_maps) if isinstance(stats_or_maps, NetworkStatistics) else stats_or_maps
    gamma = math.fsum(k * w for k, r, w in maps.terms_phi if r == 1)
    vartheta = math.fsum(k * w for k, r, w in maps.terms_phi if r == k and k > 0)
    return LocalIndicators(gamma, vartheta, maps.phi0, maps.psi0)


# --- large-degree limit -------------------------------------------------------

@dataclass
class GranovetterRow:
    k: int
    sup_phi: float
    sup_psi: float


def granovetter_limit(F, k_values: Iterable[int], *, degree_law_for: Callable[[int], Mapping] | None = None,
                      grid: Sequence[float] | None = None, exclude: Iterable[float] = (),
                      margin: float = 0.05) -> list[GranovetterRow]:
    """Sup-distance between ``phi``/``psi`` and ``F`` as the minimum degree grows.

    ``degree_law_for(k)`` gives ``p_{d,k}`` (default: every node has ``d = k``).
    Points within ``margin`` of the values in ``exclude`` (the jumps of ``F``)
    are left out of the sup.
    """
    degree_law_for = degree_law_for or (lambda k: {(k, k): 1.0})
    xs = np.linspace(0.0, 1.0, 1001) if grid is None else np.asarray(grid, dtype=np.float64)
    jumps = list(exclude)
    if not jumps and hasattr(F, "atoms"):
        jumps = [float(a) for a, _ in F.atoms]
    keep = np.ones(xs.shape, dtype=bool)
    for j in jumps:
        keep &= np.abs(xs - j) > margin
    xs = xs[keep]
    target = np.array([F(float(v)) for v in xs])
    rows = []
    for k in k_values:
        maps = build_maps(synthesize(F, degree_law_for(k), 0.0))
        rows.append(GranovetterRow(int(k), float(np.max(np.abs(maps.phi(xs) - target))),
                                   float(np.max(np.abs(maps.psi(xs) - target)))))
    return rows


# --- concentration constants ----------------------------------------------------

@dataclass(frozen=True)
class ConcentrationBounds:
    """Constants of the large-``n`` concentration bound, kept in log form."""

    t: int
    epsilon: float
    log_gamma_t: float
    log_beta: float

    @property
    def gamma_t(self) -> float:
        return _exp(self.log_gamma_t)

    @property
    def beta(self) -> float:
        return _exp(self.log_beta)

    @property
    def log_n_min(self) -> float:
        return self.log_gamma_t - math.log(self.epsilon)

    @property
    def n_min(self) -> float:
        return _exp(self.log_n_min)

    def log_tail(self, n: float) -> float:
        return math.log(2.0) - self.epsilon ** 2 * n * self.beta

    def tail(self, n: float) -> float:
        return min(1.0, _exp(self.log_tail(n)))

    def to_json_dict(self) -> dict:
        return {"t": self.t, "epsilon": self.epsilon, "gamma_t": self.gamma_t, "beta": self.beta,
                "n_min": self.n_min, "log_gamma_t": self.log_gamma_t, "log_beta": self.log_beta,
                "log_n_min": self.log_n_min}


def _exp(v: float) -> float:
    return math.exp(v) if v < 709.0 else math.inf


def concentration_constants(stats: NetworkStatistics | None = None, t: int = 0, epsilon: float = 0.1, *,
                            d_max: int | None = None, k_max: int | None = None,
                            mean_degree: float | None = None) -> ConcentrationBounds:
    """``gamma_t = d_max k_max^(2t+3) / dbar``, ``beta = 1 / (32 dbar k_max^(2t))``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    if stats is not None:
        d_max = stats.d_max if d_max is None else d_max
        k_max = stats.k_max if k_max is None else k_max
        mean_degree = stats.mean_degree if mean_degree is None else mean_degree
    if not (d_max and k_max and mean_degree):
        raise ValueError("need positive d_max, k_max and mean degree")
    lg = math.log(d_max) + (2 * t + 3) * math.log(k_max) - math.log(mean_degree)
    lb = -math.log(32.0) - math.log(mean_degree) - 2 * t * math.log(k_max)
    return ConcentrationBounds(int(t), float(epsilon), lg, lb)


def profile_to_json(profile: LimitProfile) -> str:
    return json.dumps(profile.to_json_dict())
