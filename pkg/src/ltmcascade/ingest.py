"""Edge-list input, threshold/state assignment, and result files."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from . import rng as rngmod
from .graph import Network, from_arrays
from .statistics import ThresholdCDF, ceil_ratio, largest_remainder


class EdgeListError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class EdgeList:
    """Dense-id links plus the original ids (``original[i]`` is the label of node ``i``)."""

    tails: np.ndarray
    heads: np.ndarray
    original: np.ndarray

    @property
    def n(self) -> int:
        return int(self.original.size)

    @property
    def link_count(self) -> int:
        return int(self.tails.size)

    def topology(self) -> Network:
        """Network with zero thresholds and states; use :func:`assign` to fill them."""
        z = np.zeros(self.n, dtype=np.int64)
        return from_arrays(self.n, self.tails, self.heads, z, z)


def parse_edge_list(source: str | Path | IO[str]) -> EdgeList:
    """Parse ``tail head`` integer pairs; ``#`` starts a comment line.

    Ids are remapped to ``0..n-1`` in increasing order of the original ids.
    Duplicate lines stay duplicate links.
    """
    if isinstance(source, (str, Path)) and not (isinstance(source, str) and "\n" in source):
        path = Path(source)
        if path.exists():
            with path.open() as fh:
                return _parse(fh)
        if isinstance(source, Path):
            raise FileNotFoundError(f"edge list {path} not found")
    if isinstance(source, str):
        return _parse(io.StringIO(source))
    return _parse(source)


def _parse(fh: Iterable[str]) -> EdgeList:
    tails: list[int] = []
    heads: list[int] = []
    for no, line in enumerate(fh, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 2:
            raise EdgeListError(f"expected 2 fields, got {len(parts)}: {s!r}", no)
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListError(f"non-integer id in {s!r}", no) from None
        tails.append(a)
        heads.append(b)
    raw = np.array([tails, heads], dtype=np.int64).reshape(2, -1)
    original, inv = np.unique(raw, return_inverse=True)
    inv = inv.reshape(2, -1)
    return EdgeList(inv[0].copy(), inv[1].copy(), original)


def write_edge_list(net: Network, path: str | Path, original: np.ndarray | None = None) -> None:
    e = net.edges()
    if original is not None:
        e = np.asarray(original)[e]
    text = "".join(f"{a} {b}\n" for a, b in e.tolist())
    try:
        Path(path).write_text(f"# nodes {net.n} links {net.link_count}\n" + text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


@dataclass(frozen=True)
class AssignmentSpec:
    """Threshold CDF ``F`` (finite atoms), seed fraction and seed for the two permutations."""

    F: ThresholdCDF
    upsilon: float
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.upsilon <= 1:
            raise ValueError("upsilon must lie in [0, 1]")

    @classmethod
    def from_atoms(cls, atoms, upsilon: float, seed: int = 0) -> "AssignmentSpec":
        return cls(ThresholdCDF.from_pairs(atoms), float(upsilon), int(seed))


def seed_count(n: int, upsilon: float) -> int:
    """Nearest integer to ``n * upsilon`` (halves round up)."""
    return int(math.floor(n * upsilon + 0.5))


def theta_vector(F: ThresholdCDF, n: int) -> list[Fraction]:
    counts = largest_remainder(np.array([w * n for _, w in F.atoms]), n)
    out: list[Fraction] = []
    for (theta, _), c in zip(F.atoms, counts):
        out.extend([theta] * int(c))
    return out


def assign(topology: Network, spec: AssignmentSpec) -> Network:
    """``rho_i = ceil(Theta_{pi'(i)} kappa_i)`` and ``sigma_i = Sigma_{pi''(i)}``.

    ``Theta`` holds each atom ``round(n w_j)`` times (largest remainder) and
    ``Sigma`` holds exactly ``round(n upsilon)`` ones.  The two permutations
    come from separate substreams of ``spec.seed``.
    """
    n = topology.n
    kappa = topology.out_degree.astype(np.int64)
    counts = largest_remainder(np.array([w * n for _, w in spec.F.atoms]), n)
    atom_idx = np.repeat(np.arange(len(spec.F.atoms)), counts)
    p1 = rngmod.stream(spec.seed, rngmod.THRESHOLD_PERMUTATION).permutation(n)
    p2 = rngmod.stream(spec.seed, rngmod.STATE_PERMUTATION).permutation(n)
    per_node = atom_idx[p1]
    rho = np.zeros(n, dtype=np.int64)
    for j, (theta, _) in enumerate(spec.F.atoms):
        m = per_node == j
        rho[m] = ceil_ratio(theta, kappa[m])
    sigma_sorted = np.zeros(n, dtype=np.uint8)
    sigma_sorted[:seed_count(n, spec.upsilon)] = 1
    sigma = sigma_sorted[p2]
    return topology.with_thresholds(rho).with_initial_state(sigma)


# --- result files -------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _json17(obj) -> str:
    """JSON with floats printed to 17 significant digits."""
    def conv(o):
        if isinstance(o, dict):
            return {str(k): conv(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [conv(v) for v in o]
        if isinstance(o, np.ndarray):
            return conv(o.tolist())
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.integer):
            return int(o)
        return o

    return "".join(_encode(conv(obj))) + "\n"


def _encode(o):
    # small hand-rolled encoder so floats get '.17g' and non-finite values become null
    if isinstance(o, dict):
        yield "{"
        for i, key in enumerate(sorted(o)):
            if i:
                yield ", "
            yield json.dumps(key)
            yield ": "
            yield from _encode(o[key])
        yield "}"
    elif isinstance(o, list):
        yield "["
        for i, v in enumerate(o):
            if i:
                yield ", "
            yield from _encode(v)
        yield "]"
    elif isinstance(o, bool) or o is None:
        yield json.dumps(o)
    elif isinstance(o, float):
        yield format(o, ".17g") if math.isfinite(o) else "null"
    elif isinstance(o, int):
        yield str(o)
    else:
        yield json.dumps(o, default=_json_default)


@dataclass
class SweepTable:
    """One row per ``(upsilon, replica)``: fractions ``z(T)`` and ``a(T)`` at the horizon."""

    upsilon: np.ndarray
    rep: np.ndarray
    z_T: np.ndarray
    a_T: np.ndarray

    header = ("upsilon", "rep", "z_T", "a_T")

    def rows(self):
        order = np.lexsort((self.rep, self.upsilon))
        for i in order:
            yield float(self.upsilon[i]), int(self.rep[i]), float(self.z_T[i]), float(self.a_T[i])

    def to_json_dict(self) -> dict:
        rows = list(self.rows())
        return {k: [r[j] for r in rows] for j, k in enumerate(self.header)}


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_NONE)
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def render(record, fmt: str = "csv") -> str:
    """Serialise a trajectory, limit table or sweep table to CSV or JSON text."""
    from .dynamics import TrajectoryRecord
    from .meanfield import LimitProfile, LimitTable, RecursionTrajectory

    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(record, LimitProfile):
        record = record.table(np.linspace(0.0, 1.0, 1001))
    if isinstance(record, TrajectoryRecord):
        rows = [(t, float(record.z[t]), float(record.a[t])) for t in range(len(record.z))]
        if fmt == "csv":
            return _csv(("t", "z", "a"), rows)
        return _json17({"mode": record.mode, "horizon": record.horizon, "converged_at": record.converged_at,
                        "cycle_at": record.cycle_at, "t": [r[0] for r in rows], "z": record.z, "a": record.a})
    if isinstance(record, RecursionTrajectory):
        rows = [(t, float(record.x[t]), float(record.y[t])) for t in range(len(record.x))]
        if fmt == "csv":
            return _csv(("t", "x", "y"), rows)
        return _json17({"t": [r[0] for r in rows], "x": record.x, "y": record.y,
                        "converged_at": record.converged_at})
    if isinstance(record, LimitTable):
        if fmt == "csv":
            return _csv(record.header, record.rows())
        return _json17(record.to_json_dict())
    if isinstance(record, SweepTable):
        if fmt == "csv":
            return _csv(record.header, record.rows())
        return _json17(record.to_json_dict())
    if isinstance(record, dict):
        if fmt == "json":
            return _json17(record)
        raise ValueError("dict records can only be written as JSON")
    raise TypeError(f"cannot write {type(record).__name__}")


def write_results(record, path: str | Path | None, fmt: str = "csv") -> str:
    """Write ``record`` to ``path`` (or just return the text when ``path`` is None)."""
    text = render(record, fmt)
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
    return text


def dumps_json(obj) -> str:
    return _json17(obj)
