"""``angletree-bench``: generate data, build trees, run queries, emulate LSH, tabulate formulas.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import bench
from .analysis import GeometryParams
from .data import Dataset, DatasetSpec, generate, load_dataset, save_dataset
from .search import SearchConfig
from .tree import AngleTree, TreeConfig, build_angle_tree, deserialize_tree

GEN_HELP = """\
Writes the dataset to --out (binary "ATDS" or CSV, chosen by --format or the
file suffix) and prints one CSV row: kind,n,dim,intrinsic_dim,noise_sigma,
epsilon,alpha_deg,seed,out.
"""

BUILD_HELP = """\
CSV columns (one row): dataset,n,dim, tree_* (full TreeConfig echo),
n_internal,n_leaves,depth, build_projection_evals (one per point per split),
build_angle_evals (k per internal node), build_ndc (sum), wall_time_s.
The tree is written to --out; its configuration goes to <out>.json.
"""

QUERY_HELP = """\
Aggregate CSV columns (one row per --knn value): dataset,n,dim, tree_* echo,
query_seed,knn,n_queries,recall (fraction of queries whose k results are all
true k-NN), mean_distance_evals,median_distance_evals,mean_projection_evals,
mean_total_ndc, pbf_equivalent_fraction (recall^(1/k)), speedup_over_pbf
(pbf_equivalent_fraction*N/mean_total_ndc), theta_deg,force_kd_bound,
exclude_self,wall_time_s, ndc_ratio_vs_first (mean_total_ndc over that of
the first --knn value).
Per-query CSV (--per-query): query_index,point_id,knn,correct,
distance_evals,projection_evals,total_ndc,leaves_visited,kth_distance,
true_kth_distance.
"""

LSH_HELP = """\
CSV columns (one row per --trees value): dataset,n,dim,knn,n_trees,n_queries,
exclude_self,max_depth,min_size,tree_seed, single_tree_accuracy (p_hat,
averaged over all trees), single_tree_mean_ndc (x), projected_accuracy
(1-(1-p_hat)^t), measured_accuracy (union of t leaves), avg_per_search_all_hashes
(t*x), measured_mean_ndc, query_seed.
"""

ANALYZE_HELP = """\
CSV columns: quantity (miss_probability | error_region_ratio), d, theta_deg,
k, segment_ratio, D, epsilon, alpha_deg, value; with --mc-check also
mc_value, mc_stderr, mc_samples, mc_seed.  Columns that do not apply to a row
are left empty.
"""


class UsageError(Exception):
    pass


def _write_rows(rows: list[dict], out: str | None) -> None:
    if not rows:
        return
    fields: list[str] = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out:
            fh.close()


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_tree_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tree-type", "--tree-kind", dest="tree_type", choices=["kd", "rp"], default="rp")
    p.add_argument("--min-size", type=int, default=50)
    p.add_argument("--k-samples", type=int, default=2000, help="angle samples per node; 0 disables angle estimation")
    p.add_argument("--iout", type=float, default=0.1)
    p.add_argument("--center", choices=["mean", "median"], default="mean")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--seed", type=int, default=0, help="tree seed")


def _tree_config(args) -> TreeConfig:
    try:
        return TreeConfig(
            tree_type=args.tree_type,
            min_size=args.min_size,
            angle_samples=args.k_samples,
            iout=args.iout,
            rng_seed=args.seed,
            center=args.center,
            max_depth=args.max_depth,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_gen(args) -> list[dict]:
    kind = {"flat": "affine_flat"}.get(args.kind, args.kind)
    if kind == "sin3d":
        if args.D not in (None, 3) or args.d not in (None, 2):
            raise UsageError("sin3d is fixed at d=2, D=3")
    elif args.d is None or args.D is None:
        raise UsageError(f"--d and --D are required for kind {args.kind}")
    if kind == "sphere" and args.d + 1 > args.D:
        raise UsageError("sphere needs D >= d + 1")
    if kind in ("affine_flat", "hypercylinder") and args.d > args.D:
        raise UsageError("need d <= D")
    if kind == "hypercylinder" and args.noise:
        raise UsageError("--noise does not apply to hypercylinder; use --epsilon")
    spec = DatasetSpec(kind, args.n, args.D, args.d, args.noise, args.epsilon, math.radians(args.alpha), args.seed)
    data = generate(spec)
    save_dataset(data, args.out, args.format)
    return [
        {
            "kind": args.kind,
            "n": data.n,
            "dim": data.dim,
            "intrinsic_dim": data.meta.get("intrinsic_dim"),
            "noise_sigma": args.noise,
            "epsilon": args.epsilon,
            "alpha_deg": args.alpha,
            "seed": args.seed,
            "out": args.out,
        }
    ]


def _save_tree(tree: AngleTree, path: str) -> None:
    Path(path).write_bytes(tree.to_bytes())
    Path(path + ".json").write_text(json.dumps(bench.tree_config_echo(tree.config, prefix=""), sort_keys=True))


def _load_tree(path: str) -> AngleTree:
    cfg = None
    sidecar = Path(path + ".json")
    if sidecar.exists():
        cfg = TreeConfig(**json.loads(sidecar.read_text()))
    return deserialize_tree(Path(path).read_bytes(), cfg)


def cmd_build(args) -> list[dict]:
    data = load_dataset(args.data, args.format)
    cfg = _tree_config(args)
    t0 = time.perf_counter()
    tree = build_angle_tree(data, cfg)
    wall = time.perf_counter() - t0
    _save_tree(tree, args.out)
    row = bench.build_report(data, tree, wall)
    row["data_path"] = args.data
    row["out"] = args.out
    return [row]


def cmd_query(args) -> tuple[list[dict], list[dict]]:
    if args.n_queries < 1:
        raise UsageError("--n-queries must be at least 1")
    if any(k < 1 for k in args.knn):
        raise UsageError("--knn values must be positive")
    if not 0 <= args.theta < 90:
        raise UsageError("--theta must lie in [0, 90) degrees")
    data = load_dataset(args.data, args.format)
    if args.tree:
        tree = _load_tree(args.tree)
        if tree.dim != data.dim or tree.n_points != data.n:
            raise UsageError("tree was not built over this dataset")
    else:
        tree = build_angle_tree(data, _tree_config(args))
    qids = bench.sample_queries(data.n, args.n_queries, args.query_seed)
    agg_rows, per_query = [], []
    truths: dict = {}
    for k in args.knn:
        rows, agg = bench.run_queries(data, tree, qids, SearchConfig(k, math.radians(args.theta), args.force_kd_bound), args.exclude_self, truths)
        head = {"dataset": data.name, "n": data.n, "dim": data.dim, "data_path": args.data, "tree_path": args.tree or ""}
        head.update(bench.tree_config_echo(tree.config))
        head["query_seed"] = args.query_seed
        head.update(agg)
        agg_rows.append(head)
        per_query.extend(rows)
    base = agg_rows[0]["mean_total_ndc"]
    for row in agg_rows:
        row["ndc_ratio_vs_first"] = row["mean_total_ndc"] / base if base else math.nan
    return agg_rows, per_query


def cmd_lsh_emulate(args) -> list[dict]:
    if args.n_queries < 1:
        raise UsageError("--n-queries must be at least 1")
    if not args.trees or min(args.trees) < 1:
        raise UsageError("--trees values must be positive")
    data = load_dataset(args.data, args.format)
    cfg = TreeConfig(tree_type="rp", min_size=args.min_size, angle_samples=0, iout=0.0, rng_seed=args.seed, max_depth=args.max_depth)
    trees = bench.build_forest(data, max(args.trees), cfg)
    qids = bench.sample_queries(data.n, args.n_queries, args.query_seed)
    rows = bench.run_lsh_emulation(data, trees, args.trees, qids, args.knn, exclude_self=not args.include_self)
    for r in rows:
        r["query_seed"] = args.query_seed
    return rows


def cmd_analyze(args) -> list[dict]:
    thetas = [math.radians(t) for t in args.theta]
    rows = bench.miss_grid(args.d, thetas, args.k, args.mc_samples if args.mc_check else 0, args.seed)
    alphas = [math.radians(a) for a in args.alpha]
    try:
        rows += bench.error_region_grid(args.D, args.err_d, args.epsilon, alphas, args.mc_samples if args.mc_check else 0, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return rows


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="angletree-bench", description="Angle Tree experiments at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset", epilog=GEN_HELP, formatter_class=fmt)
    p.add_argument("--kind", choices=["sphere", "flat", "affine_flat", "sin3d", "hypercylinder"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=None, help="intrinsic dimension")
    p.add_argument("--D", type=int, default=None, help="ambient dimension")
    p.add_argument("--noise", type=float, default=0.0, help="isotropic Gaussian noise sigma")
    p.add_argument("--epsilon", type=float, default=0.05, help="hypercylinder noise fraction")
    p.add_argument("--alpha", type=float, default=90.0, help="dihedral angle in degrees (hypercylinder metadata)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["bin", "csv"], default=None)

    p = sub.add_parser("build", help="build a tree and report build cost", epilog=BUILD_HELP, formatter_class=fmt)
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=["bin", "csv"], default=None, help="dataset format")
    _add_tree_flags(p)
    p.add_argument("--out", required=True, help="tree file")
    p.add_argument("--report", default=None, help="CSV report path (default stdout)")

    p = sub.add_parser("query", help="k-NN queries vs brute force", epilog=QUERY_HELP, formatter_class=fmt)
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=["bin", "csv"], default=None, help="dataset format")
    p.add_argument("--tree", default=None, help="tree file from `build`; otherwise a tree is built from the tree flags")
    _add_tree_flags(p)
    p.add_argument("--n-queries", type=int, default=200)
    p.add_argument("--query-seed", type=int, default=0)
    p.add_argument("--knn", type=int, nargs="+", default=[1])
    p.add_argument("--theta", type=float, default=0.0, help="error angle in degrees")
    p.add_argument("--force-kd-bound", action="store_true")
    p.add_argument("--exclude-self", action="store_true", help="drop the query's own row from candidates")
    p.add_argument("--out", default=None, help="aggregate CSV path (default stdout)")
    p.add_argument("--per-query", default=None, help="per-query CSV path")

    p = sub.add_parser("lsh-emulate", help="LSH inferred from near-neighbour probes in t rp-trees", epilog=LSH_HELP, formatter_class=fmt)
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=["bin", "csv"], default=None, help="dataset format")
    p.add_argument("--trees", type=int, nargs="+", default=[1, 3, 5])
    p.add_argument("--max-depth", type=int, default=10)
    p.add_argument("--min-size", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="seed of the first tree; tree j uses seed+j")
    p.add_argument("--n-queries", type=int, default=200)
    p.add_argument("--query-seed", type=int, default=0)
    p.add_argument("--knn", type=int, default=1)
    p.add_argument("--include-self", action="store_true", help="keep the query's own row as a candidate")
    p.add_argument("--out", default=None)

    p = sub.add_parser("analyze", help="tabulate miss probability and error-region ratio", epilog=ANALYZE_HELP, formatter_class=fmt)
    p.add_argument("--d", type=_int_list, default=list(range(1, 31)), help="intrinsic dimensions for the miss grid")
    p.add_argument("--theta", type=_float_list, default=[15.0, 30.0, 45.0], help="error angles in degrees")
    p.add_argument("--k", type=int, default=2000)
    p.add_argument("--D", type=_int_list, default=[5, 20])
    p.add_argument("--err-d", type=_int_list, default=[2, 3])
    p.add_argument("--epsilon", type=_float_list, default=[0.05, 0.1])
    p.add_argument("--alpha", type=_float_list, default=[10.0, 30.0, 45.0, 60.0, 90.0], help="dihedral angles in degrees")
    p.add_argument("--mc-check", action="store_true", help="add Monte Carlo columns with standard errors")
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            _write_rows(cmd_gen(args), None)
        elif args.command == "build":
            _write_rows(cmd_build(args), args.report)
        elif args.command == "query":
            agg, per_query = cmd_query(args)
            _write_rows(agg, args.out)
            if args.per_query:
                _write_rows(per_query, args.per_query)
        elif args.command == "lsh-emulate":
            _write_rows(cmd_lsh_emulate(args), args.out)
        elif args.command == "analyze":
            _write_rows(cmd_analyze(args), args.out)
    except UsageError as exc:
        parser.error(str(exc))
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"angletree-bench: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
