"""Command-line interface.

Trees are given either inline as Newick strings or as paths to files
holding one Newick tree (or forest) per line.  Results go to stdout, or
to ``--out`` (a file, or a directory for multi-file outputs).  Errors exit
with 2 (usage or domain), 3 (parse), 4 (numerical) or 5 (no convergence).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as wio
from .baselines import SUPPORTED_METRICS, bhv_distance, compare_metrics, path_difference_distance
from .errors import DomainError, WaldError
from .experiments import (
    coordinates,
    direction_velocity,
    example_tree,
    make_metric,
    ode_connect,
)
from .forest import Wald, random_wald, read_wald, to_newick
from .projection import (
    project_exhaustive,
    project_global,
    project_within_orthant,
    recursive_geodesic,
    star_distance_profile,
    symmetrized_geodesic,
)
from .riemann import sectional_curvature, shoot_geodesic
from .spd import GaussianMetric, covariance_of, extrinsic_cov_distance, frechet_mean_spd
from .twostate import TwoStateMetric, extrinsic_distance


# ---------------------------------------------------------------------------
# input and output helpers


def _tree_texts(arg: str) -> list[str]:
    if os.path.isfile(arg):
        with open(arg, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh]
        return [ln for ln in lines if ln and not ln.startswith("#")]
    return [arg]


def _load_trees(args, sources) -> list[Wald]:
    trees = [read_wald(t, args.weights) for src in sources for t in _tree_texts(src)]
    if not trees:
        raise DomainError("no trees given")
    return trees


def _load_one(args, source) -> Wald:
    trees = _load_trees(args, [source])
    if len(trees) != 1:
        raise DomainError(f"expected one tree in {source!r}, found {len(trees)}")
    return trees[0]


def _emit(args, text: str, name: str | None = None) -> None:
    """Write ``text`` to stdout, to ``--out``, or to ``--out/name``."""
    if args.out is None:
        sys.stdout.write(text)
        return
    path = args.out
    if name is not None:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _table(args, header, rows) -> str:
    if args.format == "json":
        return json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n"
    return wio._csv(header, [[wio.fmt(v) if isinstance(v, float) else v for v in r] for r in rows])


def _rng(args):
    return np.random.default_rng(args.seed)


# ---------------------------------------------------------------------------
# subcommands


def cmd_parse(args):
    rows = [[to_newick(w, args.param)] for w in _load_trees(args, args.trees)]
    if args.format == "json":
        _emit(args, json.dumps([r[0] for r in rows], indent=2) + "\n")
    else:
        _emit(args, "".join(r[0] + "\n" for r in rows))


def cmd_dist(args):
    a = _load_one(args, args.tree1)
    b = _load_one(args, args.tree2)
    if args.metric == "cov":
        d = extrinsic_cov_distance(a, b)
    elif args.metric in ("js", "hellinger"):
        d = extrinsic_distance(a, b, args.metric, args.cap)
    elif args.metric == "bhv":
        d = bhv_distance(a, b)
    else:
        d = path_difference_distance(a, b)
    if args.format == "json":
        _emit(args, json.dumps({"metric": args.metric, "distance": d}) + "\n")
    else:
        _emit(args, wio.fmt(d) + "\n")


def cmd_shoot(args):
    w = example_tree(args.pendant, tuple(args.internal)) if args.tree is None else _load_one(args, args.tree)
    metric = make_metric(args.model, w, args.param)
    x0 = coordinates(w, args.param)
    write = wio.path_json if args.format == "json" else wio.path_csv
    ext = args.format
    combined = []
    for j in range(args.directions):
        angle = 2 * np.pi * j / args.directions
        v0 = direction_velocity(metric, w, angle, args.param)
        path = shoot_geodesic(metric, x0, v0, args.step, args.max_time, pendant_clamp=not args.no_clamp)
        if args.out is not None:
            _emit(args, write(path), f"direction_{j:02d}.{ext}")
        else:
            combined.append((j, angle, path))
    if args.out is None:
        if args.format == "json":
            out = [{"direction": j, "angle": a, **json.loads(wio.path_json(p))} for j, a, p in combined]
            _emit(args, json.dumps(out, indent=2) + "\n")
        else:
            header = ["direction", "angle", *wio.path_header(metric.dim)]
            rows = []
            for j, a, p in combined:
                for k in range(len(p)):
                    term = p.termination if k == len(p) - 1 else ""
                    rows.append([j, wio.fmt(a), wio.fmt(p.t[k]), *(wio.fmt(v) for v in p.x[k]),
                                 wio.fmt(p.cumulative_length[k]), term])
            _emit(args, wio._csv(header, rows))


def cmd_connect(args):
    a = _load_one(args, args.tree1)
    b = _load_one(args, args.tree2)
    if args.algorithm == "ode":
        if a.topology != b.topology or not a.topology.is_fully_resolved:
            raise DomainError("ODE connection needs two trees in the same fully resolved orthant")
        model = TwoStateMetric if args.model == "twostate" else GaussianMetric
        metric = model(a.topology, args.param)
        path = ode_connect(metric, coordinates(a, args.param), coordinates(b, args.param), args.step)
        _emit(args, wio.path_json(path) if args.format == "json" else wio.path_csv(path))
        return
    algo = symmetrized_geodesic if args.algorithm == "symmetrized" else recursive_geodesic
    g = algo(a, b, args.k)
    if args.format == "json":
        _emit(args, wio.geodesic_json(g))
        return
    body, sidecar = wio.geodesic_csv(g)
    _emit(args, body)
    if args.out is not None:
        with open(args.out + ".topologies.json", "w", encoding="utf-8") as fh:
            fh.write(sidecar)
    else:
        sys.stderr.write(sidecar)


def _target(args):
    if args.matrix is not None:
        with open(args.matrix, encoding="utf-8") as fh:
            return wio.read_matrix_csv(fh.read())
    return covariance_of(_load_one(args, args.target))


def cmd_project(args):
    S0 = _target(args)
    n = S0.shape[0]
    if args.mode == "exhaustive":
        r = project_exhaustive(S0, n)
    else:
        if args.init is not None:
            w0 = _load_one(args, args.init)
        else:
            w0 = random_wald(n, _rng(args), lam_range=(0.1, 0.5))
        if args.mode == "orthant":
            if not w0.topology.is_fully_resolved:
                raise DomainError("orthant mode needs a fully resolved initial tree")
            r = project_within_orthant(S0, w0.topology, w0.lengths)
        else:
            r = project_global(S0, w0)
    header = ["newick", "distance", "iterations", "converged"]
    _emit(args, _table(args, header, [[to_newick(r.wald, args.param), r.distance, r.iterations, r.converged]]))


def cmd_curvature(args):
    rng = _rng(args)
    rows = []
    for i in range(args.samples):
        w = random_wald(args.n_leaves, rng, lam_range=(0.1, 0.8))
        x = coordinates(w, args.param)
        m = make_metric(args.model, w, args.param)
        u, v = rng.standard_normal((2, w.topology.n_splits))
        rows.append([i, to_newick(w, args.param), float(sectional_curvature(m, x, u, v))])
    _emit(args, _table(args, ["sample", "newick", "curvature"], rows))
    k = np.array([r[2] for r in rows])
    sys.stderr.write(f"positive {int(np.sum(k > 0))}, negative {int(np.sum(k < 0))}, "
                     f"min {k.min():.6g}, max {k.max():.6g}\n")


def cmd_frechet(args):
    trees = _load_trees(args, args.trees)
    n = trees[0].n_leaves
    if any(t.n_leaves != n for t in trees):
        raise DomainError("all trees need the same leaf count")
    M = frechet_mean_spd([covariance_of(t) for t in trees])
    if not args.project:
        _emit(args, wio.matrix_json(M) if args.format == "json" else wio.matrix_csv(M))
        return
    r = project_global(M, trees[0])
    header = ["newick", "distance", "iterations", "converged"]
    _emit(args, _table(args, header, [[to_newick(r.wald, args.param), r.distance, r.iterations, r.converged]]))


def cmd_star_profile(args):
    lo, hi = args.range
    grid = np.linspace(lo, hi, args.points)
    prof = star_distance_profile(args.lambda0, grid, args.k)
    _emit(args, _table(args, ["lambda", "distance"], [[lam, d] for lam, d in prof]))


def cmd_compare(args):
    if args.random is not None:
        rng = _rng(args)
        trees = [random_wald(args.random[0], rng, lam_range=(0.1, 0.6)) for _ in range(args.random[1])]
    else:
        trees = _load_trees(args, args.trees)
    report = compare_metrics(trees, tuple(args.metrics), cap=args.cap)
    rows = [[m1, m2, v] for (m1, m2), v in report.correlations.items()]
    if args.format == "json":
        out = {
            "labels": report.labels,
            "correlations": [dict(zip(["metric1", "metric2", "pearson"], r)) for r in rows],
            "matrices": {k: M.tolist() for k, M in report.matrices.items()},
            "notices": report.notices,
        }
        _emit(args, json.dumps(out, indent=2) + "\n")
    else:
        text = wio._csv(["metric1", "metric2", "pearson"], [[a, b, wio.fmt(v)] for a, b, v in rows])
        if args.out is not None:
            _emit(args, text, "correlations.csv")
            for k, M in report.matrices.items():
                _emit(args, wio.matrix_csv(M, report.labels), f"{k}.csv")
        else:
            _emit(args, text)
    for note in report.notices:
        sys.stderr.write(f"notice: {note}\n")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--out", help="output file (or directory for multi-file output)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--param", choices=("length", "lambda"), default="length",
                        help="coordinates for output and integration")
    common.add_argument("--weights", choices=("length", "lambda"), default="length",
                        help="meaning of Newick branch annotations on input")

    p = argparse.ArgumentParser(prog="waldspace", description="Wald space of phylogenetic forests.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("parse", parents=[common], help="validate and canonicalize Newick input")
    s.add_argument("trees", nargs="+")
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("dist", parents=[common], help="distance between two trees")
    s.add_argument("tree1")
    s.add_argument("tree2")
    s.add_argument("--metric", choices=SUPPORTED_METRICS, default="cov")
    s.add_argument("--cap", type=int, default=16, help="largest N for full distributions")
    s.set_defaults(func=cmd_dist)

    s = sub.add_parser("shoot", parents=[common], help="fan of geodesics from the five-leaf example tree")
    s.add_argument("--model", choices=("twostate", "gaussian"), default="gaussian")
    s.add_argument("--directions", type=int, default=24)
    s.add_argument("--pendant", type=float, default=0.1)
    s.add_argument("--internal", type=float, nargs=2, default=(1.0, 1.0), metavar=("A", "B"))
    s.add_argument("--tree", help="start tree instead of the example (five leaves, resolved)")
    s.add_argument("--max-time", type=float, default=2.0)
    s.add_argument("--step", type=float, default=1e-3)
    s.add_argument("--no-clamp", action="store_true", help="stop when a pendant edge reaches zero")
    s.set_defaults(func=cmd_shoot)

    s = sub.add_parser("connect", parents=[common], help="approximate geodesic between two trees")
    s.add_argument("tree1")
    s.add_argument("tree2")
    s.add_argument("--algorithm", choices=("recursive", "symmetrized", "ode"), default="symmetrized")
    s.add_argument("--k", type=int, default=32)
    s.add_argument("--model", choices=("twostate", "gaussian"), default="gaussian", help="metric for --algorithm ode")
    s.add_argument("--step", type=float, default=1e-3)
    s.set_defaults(func=cmd_connect)

    s = sub.add_parser("project", parents=[common], help="project a covariance matrix into wald space")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--matrix", help="CSV file with the target matrix")
    g.add_argument("--target", help="tree whose covariance is the target")
    s.add_argument("--mode", choices=("orthant", "global", "exhaustive"), default="global")
    s.add_argument("--init", help="initial tree (default: random, from --seed)")
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("curvature", parents=[common], help="sectional curvatures at random points and planes")
    s.add_argument("--n-leaves", type=int, default=5)
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--model", choices=("twostate", "gaussian"), default="gaussian")
    s.set_defaults(func=cmd_curvature)

    s = sub.add_parser("frechet", parents=[common], help="affine-invariant mean of tree covariances")
    s.add_argument("trees", nargs="+")
    s.add_argument("--project", action="store_true", help="project the mean back into wald space")
    s.set_defaults(func=cmd_frechet)

    s = sub.add_parser("star-profile", parents=[common], help="distance from the cherry tree to star trees")
    s.add_argument("--lambda0", type=float, default=0.5)
    s.add_argument("--points", type=int, default=20)
    s.add_argument("--range", type=float, nargs=2, default=(0.02, 0.98), metavar=("LO", "HI"))
    s.add_argument("--k", type=int, default=32)
    s.set_defaults(func=cmd_star_profile)

    s = sub.add_parser("compare", parents=[common], help="pairwise distance matrices and correlations")
    s.add_argument("trees", nargs="*")
    s.add_argument("--metrics", nargs="+", default=["bhv", "pathdiff", "cov", "js"],
                   choices=(*SUPPORTED_METRICS, "tropical"))
    s.add_argument("--random", type=int, nargs=2, metavar=("N", "COUNT"),
                   help="use COUNT random trees on N leaves instead of input files")
    s.add_argument("--cap", type=int, default=16)
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except WaldError as exc:
        sys.stderr.write(f"waldspace {args.command}: error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"waldspace {args.command}: error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
