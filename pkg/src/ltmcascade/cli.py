"""Command line entry point ``ltm-cascade``.

Verbs: stats, recursion, simulate, sweep, concentration, branching, sample.
A ``--config`` JSON file supplies defaults for any flag (keys use the flag
names with underscores).  Validation failures print a JSON error record on
stderr and exit with status 2.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .ensembles import sample_directed_cm
from .graph import NetworkValidationError
from .ingest import AssignmentSpec, EdgeListError, assign, dumps_json, parse_edge_list, write_results
from .meanfield import concentration_constants
from .statistics import (IncompatibleStatisticsError, NetworkStatistics, ThresholdCDF, degree_law_of,
                         extract, reseed, synthesize)

log = logging.getLogger("ltmcascade")


def _grid(text: str) -> list[float]:
    """``a:b:m`` (m evenly spaced points) or a comma-separated list."""
    if ":" in text:
        a, b, m = text.split(":")
        return np.linspace(float(a), float(b), int(m)).tolist()
    return [float(v) for v in text.split(",") if v.strip()]


def _atoms(text: str) -> ThresholdCDF:
    """``theta:mass,...``, e.g. ``1/5:0.3,1/2:0.3,4/5:0.4``; a bare ``theta`` is a single atom."""
    pairs = []
    for part in text.split(","):
        theta, _, w = part.partition(":")
        pairs.append((theta.strip(), float(w) if w else 1.0))
    return ThresholdCDF.from_pairs(pairs)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ltm-cascade", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with default flag values")
        sp.add_argument("--input", help="edge list (tail head per line, '#' comments)")
        sp.add_argument("--stats", help="statistics file (JSON or CSV) written by 'stats'")
        sp.add_argument("--homogeneous", help="k,r[,d]: every node has out-degree k, threshold r, in-degree d")
        sp.add_argument("--thresholds", default="1/2", help="threshold atoms theta:mass,... (default 1/2)")
        sp.add_argument("--n", type=int, help="node count for configuration-model draws")
        sp.add_argument("--mode", choices=("ltm", "pltm"), default="ltm")
        sp.add_argument("--upsilon", type=float)
        sp.add_argument("--upsilon-grid", type=_grid)
        sp.add_argument("--xi", type=float)
        sp.add_argument("--horizon", type=int, default=harness.DEFAULT_HORIZON)
        sp.add_argument("--replicas", type=int, default=harness.DEFAULT_REPLICAS)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=("csv", "json"), default="json")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--freeze-zero-outdegree", action="store_true")
        return sp

    common(sub.add_parser("stats", help="extract statistics and degree marginals"))
    common(sub.add_parser("recursion", help="mean-field trajectory and limit profile"))
    sim = common(sub.add_parser("simulate", help="exact dynamics on one network"))
    sim.add_argument("--states", help="file of 0/1 initial states, one per node")
    sw = common(sub.add_parser("sweep", help="simulate over a seed-fraction grid"))
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--staircase-out", help="where to write the recursion staircase")
    co = common(sub.add_parser("concentration", help="deviation of z from y as n grows"))
    co.add_argument("--n-grid", default="300,1000,3000,10000")
    co.add_argument("--epsilon", type=float, default=0.1)
    common(sub.add_parser("branching", help="branching-process root mean against y(t)"))
    common(sub.add_parser("sample", help="export one configuration-model draw"))
    return p


def _apply_config(args, parser):
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    defaults = parser.parse_args([args.verb])
    for key, val in cfg.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise ValueError(f"unknown config key {key!r}")
        # explicit command line values win over the file
        if getattr(args, key) == getattr(defaults, key, None):
            if key == "upsilon_grid" and isinstance(val, str):
                val = _grid(val)
            setattr(args, key, val)
    harness.ExperimentConfig(kind=args.verb, upsilon_grid=list(args.upsilon_grid or [0.0]),
                             replicas=args.replicas, horizon=args.horizon, seed=args.seed, out=args.out)
    return args


def _load_stats(args) -> NetworkStatistics:
    if args.stats:
        text = Path(args.stats).read_text()
        if text.lstrip().startswith("{"):
            obj = json.loads(text)
            st = NetworkStatistics.from_json_dict(obj.get("statistics", obj))
        else:
            st = NetworkStatistics.from_csv(text, n=args.n)
    elif args.homogeneous:
        parts = [int(v) for v in args.homogeneous.split(",")]
        k, r = parts[0], parts[1]
        d = parts[2] if len(parts) > 2 else k
        st = NetworkStatistics({(d, k, r, 0): 1.0}, n=args.n)
    elif args.input:
        # a-priori statistics of the graph under the threshold law
        topo = parse_edge_list(Path(args.input)).topology()
        st = synthesize(_atoms(args.thresholds), degree_law_of(topo), 0.0)
        st = NetworkStatistics(st.joint, n=topo.n)
    else:
        raise ValueError("need --stats, --homogeneous or --input")
    if args.upsilon is not None:
        st = reseed(st, args.upsilon)
    return st


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _network(args):
    if args.input:
        topo = parse_edge_list(Path(args.input)).topology()
        ups = 0.0 if args.upsilon is None else args.upsilon
        return assign(topo, AssignmentSpec(_atoms(args.thresholds), ups, args.seed))
    st = _load_stats(args)
    n = args.n or st.n
    if n is None:
        raise ValueError("--n is required to sample from statistics")
    if args.upsilon is not None:
        st = reseed(st, args.upsilon, n)
    return sample_directed_cm(st, n, args.seed).network


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_config(args, parser)
        return _dispatch(args)
    except (ValueError, OSError, KeyError, NetworkValidationError, EdgeListError,
            IncompatibleStatisticsError) as exc:
        rec = {"error": type(exc).__name__, "message": str(exc)}
        node = getattr(exc, "node", None)
        if node is not None:
            rec["node"] = node
        line = getattr(exc, "line", None)
        if line is not None:
            rec["line"] = line
        sys.stderr.write(json.dumps(rec) + "\n")
        return 2


def _dispatch(args) -> int:
    verb = args.verb
    if verb == "stats":
        net = _network(args) if args.input else None
        if net is not None:
            res = harness.cmd_stats(net)
            if args.format == "csv":
                _emit(extract(net).to_csv(), args.out)
            else:
                _emit(dumps_json(res), args.out)
        else:
            st = _load_stats(args)
            _emit(st.to_csv() if args.format == "csv" else dumps_json({"statistics": st.to_json_dict()}),
                  args.out)
        return 0

    if verb == "recursion":
        st = _load_stats(args)
        res = harness.cmd_recursion(st, args.xi, args.upsilon, args.horizon, args.mode, args.upsilon_grid)
        if args.format == "csv":
            _emit(write_results(res["table"], None, "csv"), args.out)
        else:
            traj = res["trajectory"]
            obj = {"x": traj.x, "y": traj.y, "converged_at": traj.converged_at,
                   "profile": res["profile"].to_json_dict(), "table": res["table"].to_json_dict()}
            _emit(dumps_json(obj), args.out)
        return 0

    if verb == "simulate":
        net = _network(args)
        init = None
        if args.states:
            init = np.array(Path(args.states).read_text().split(), dtype=np.int64)
            if init.size != net.n:
                raise ValueError(f"{args.states}: expected {net.n} states, got {init.size}")
            if np.any((init != 0) & (init != 1)):
                raise ValueError(f"{args.states}: states must be 0 or 1")
        rec = harness.cmd_simulate(net, args.mode, args.horizon, args.freeze_zero_outdegree, init)
        _emit(write_results(rec, None, args.format), args.out)
        return 0

    if verb == "sweep":
        grid = args.upsilon_grid or [0.0 if args.upsilon is None else args.upsilon]
        if args.input:
            topo = parse_edge_list(Path(args.input)).topology()
            table, stair = harness.cmd_sweep(grid, args.replicas, args.horizon, args.seed, args.mode,
                                             topology=topo, F=_atoms(args.thresholds),
                                             freeze_zero_outdegree=args.freeze_zero_outdegree,
                                             workers=args.workers)
        else:
            st = _load_stats(args)
            n = args.n or st.n
            if n is None:
                raise ValueError("--n is required to sample from statistics")
            table, stair = harness.cmd_sweep(grid, args.replicas, args.horizon, args.seed, args.mode, stats=st,
                                             n=n, freeze_zero_outdegree=args.freeze_zero_outdegree,
                                             workers=args.workers)
        if args.format == "csv":
            _emit(write_results(table, None, "csv"), args.out)
            if args.staircase_out:
                write_results(stair, args.staircase_out, "csv")
        else:
            _emit(dumps_json({"sweep": table.to_json_dict(), "staircase": stair.to_json_dict()}), args.out)
        return 0

    if verb == "concentration":
        st = _load_stats(args)
        n_grid = [int(v) for v in _grid(args.n_grid)]
        ups = st.upsilon if args.upsilon is None else args.upsilon
        t = args.horizon
        rows = harness.cmd_concentration(st, n_grid, ups, t, args.replicas, args.seed, args.epsilon, args.mode)
        cb = concentration_constants(reseed(st, ups), t, args.epsilon)
        obj = {"t": t, "epsilon": args.epsilon, "bounds": cb.to_json_dict(),
               "rows": [r.__dict__ for r in rows]}
        if args.format == "csv":
            lines = ["n,mean_dev,median_dev,max_dev,gamma_over_n,tail,vacuous"]
            lines += [f"{r.n},{r.mean_dev!r},{r.median_dev!r},{r.max_dev!r},{r.gamma_over_n!r},{r.tail!r},"
                      f"{int(r.vacuous)}" for r in rows]
            _emit("\n".join(lines) + "\n", args.out)
        else:
            _emit(dumps_json(obj), args.out)
        return 0

    if verb == "branching":
        st = _load_stats(args)
        rows = harness.cmd_branching(st, args.horizon, args.replicas, args.seed)
        if args.format == "csv":
            keys = list(rows[0])
            lines = [",".join(keys)] + [",".join(repr(r[k]) for k in keys) for r in rows]
            _emit("\n".join(lines) + "\n", args.out)
        else:
            _emit(dumps_json({"rows": rows}), args.out)
        return 0

    if verb == "sample":
        st = _load_stats(args)
        n = args.n or st.n
        if n is None:
            raise ValueError("--n is required to sample from statistics")
        if args.upsilon is not None:
            st = reseed(st, args.upsilon, n)
        if not args.out:
            raise ValueError("sample needs --out PREFIX")
        edges, side = sample_directed_cm(st, n, args.seed).export(args.out)
        sys.stdout.write(dumps_json({"edges": str(edges), "sidecar": str(side)}))
        return 0
    raise ValueError(f"unknown verb {verb}")


if __name__ == "__main__":
    sys.exit(main())
