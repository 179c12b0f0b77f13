"""Experiment drivers shared by the command line and the acceptance tests.

Each driver returns plain dicts (one per CSV row) so results can be written
with :mod:`csv` or inspected directly.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, replace

import numpy as np

from .analysis import GeometryParams, error_region_ratio, hypercylinder_mc, miss_probability, segment_ratio, segment_ratio_mc
from .data import Dataset
from .search import SearchConfig, brute_force, is_exact, knn_search, multi_tree_probe, near_neighbor_probe, pbf_equivalent_fraction
from .tree import AngleTree, TreeConfig, build_angle_tree


def tree_config_echo(cfg: TreeConfig, prefix: str = "tree_") -> dict:
    return {(k if k.startswith(prefix) else prefix + k): v for k, v in asdict(cfg).items() if k != "keep_samples"}


def _deg(rad: float) -> float:
    # radians -> degrees, trimmed of conversion noise for CSV output
    return round(math.degrees(rad), 9)


def build_report(data: Dataset, tree: AngleTree, wall_time: float) -> dict:
    m = tree.build_metric
    row = {"dataset": data.name, "n": data.n, "dim": data.dim}
    row.update(tree_config_echo(tree.config))
    row.update(
        n_internal=tree.n_internal,
        n_leaves=len(tree.leaves()),
        depth=tree.depth,
        build_projection_evals=m.projection_evals,
        build_angle_evals=m.angle_evals,
        build_ndc=m.total,
        wall_time_s=round(wall_time, 6),
    )
    return row


def sample_queries(n_points: int, n_queries: int, seed: int) -> np.ndarray:
    """Dataset rows used as queries (without replacement when possible)."""
    if n_queries < 1:
        raise ValueError("n_queries must be positive")
    rng = np.random.default_rng(seed)
    return rng.choice(n_points, size=n_queries, replace=n_queries > n_points)


def run_queries(
    data: Dataset,
    tree: AngleTree,
    query_ids,
    cfg: SearchConfig,
    exclude_self: bool = False,
    truths: dict | None = None,
) -> tuple[list[dict], dict]:
    """Run ``knn_search`` for every query row and score it against brute force.

    Returns ``(per_query_rows, aggregate)``.  ``truths`` may carry cached
    brute-force results keyed by ``(point_id, k)``.
    """
    pts = data.points
    rows = []
    t0 = time.perf_counter()
    for qi, pid in enumerate(query_ids):
        pid = int(pid)
        exclude = pid if exclude_self else None
        res = knn_search(tree, data, pts[pid], cfg, exclude=exclude)
        key = (pid, cfg.k_neighbors, exclude_self)
        truth = truths.get(key) if truths is not None else None
        if truth is None:
            truth = brute_force(data, pts[pid], cfg.k_neighbors, exclude=exclude)
            if truths is not None:
                truths[key] = truth
        rows.append(
            {
                "query_index": qi,
                "point_id": pid,
                "knn": cfg.k_neighbors,
                "correct": int(is_exact(res, truth)),
                "distance_evals": res.stats.distance_evals,
                "projection_evals": res.stats.projection_evals,
                "total_ndc": res.stats.total,
                "leaves_visited": res.leaves_visited,
                "kth_distance": float(res.distances[-1]) if len(res.distances) else math.nan,
                "true_kth_distance": float(truth.distances[-1]) if len(truth.distances) else math.nan,
            }
        )
    wall = time.perf_counter() - t0
    agg = aggregate_rows(rows, data.n, cfg.k_neighbors)
    agg.update(theta_deg=_deg(cfg.theta), force_kd_bound=int(cfg.force_kd_bound), exclude_self=int(exclude_self), wall_time_s=round(wall, 6))
    return rows, agg


def aggregate_rows(rows: list[dict], n_points: int, k: int) -> dict:
    correct = np.array([r["correct"] for r in rows], dtype=float)
    dist = np.array([r["distance_evals"] for r in rows], dtype=float)
    proj = np.array([r["projection_evals"] for r in rows], dtype=float)
    total = np.array([r["total_ndc"] for r in rows], dtype=float)
    recall = float(correct.mean())
    pbf = pbf_equivalent_fraction(recall, k)
    mean_total = float(total.mean())
    return {
        "knn": k,
        "n_queries": len(rows),
        "recall": recall,
        "mean_distance_evals": float(dist.mean()),
        "median_distance_evals": float(np.median(dist)),
        "mean_projection_evals": float(proj.mean()),
        "mean_total_ndc": mean_total,
        "pbf_equivalent_fraction": pbf,
        "speedup_over_pbf": pbf * n_points / mean_total if mean_total > 0 else math.inf,
    }


def build_forest(data: Dataset, n_trees: int, cfg: TreeConfig) -> list[AngleTree]:
    """``n_trees`` independent trees; tree ``j`` uses seed ``cfg.rng_seed + j``."""
    return [build_angle_tree(data, replace(cfg, rng_seed=cfg.rng_seed + j)) for j in range(n_trees)]


def run_lsh_emulation(
    data: Dataset,
    trees: list[AngleTree],
    t_values,
    query_ids,
    k_neighbors: int = 1,
    exclude_self: bool = True,
) -> list[dict]:
    """Near-neighbour probing in one and in ``t`` trees, with projected vs measured accuracy.

    The single-tree success rate ``p_hat`` is averaged over every tree in
    the forest; the projection is ``1 - (1 - p_hat)^t``.
    """
    pts = data.points
    t_values = sorted(set(int(t) for t in t_values))
    if not t_values or t_values[0] < 1 or t_values[-1] > len(trees):
        raise ValueError("t values must lie in [1, number of trees]")
    truths = []
    for pid in query_ids:
        pid = int(pid)
        truths.append(brute_force(data, pts[pid], k_neighbors, exclude=pid if exclude_self else None))

    single_hits = np.zeros((len(trees), len(query_ids)))
    single_ndc = np.zeros((len(trees), len(query_ids)))
    for j, tree in enumerate(trees):
        for qi, pid in enumerate(query_ids):
            pid = int(pid)
            res = near_neighbor_probe(tree, data, pts[pid], k_neighbors, exclude=pid if exclude_self else None)
            single_hits[j, qi] = is_exact(res, truths[qi])
            single_ndc[j, qi] = res.stats.total
    p_hat = float(single_hits.mean())
    x = float(single_ndc.mean())

    rows = []
    for t in t_values:
        hits = 0
        ndc = 0
        for qi, pid in enumerate(query_ids):
            pid = int(pid)
            res = multi_tree_probe(trees[:t], data, pts[pid], k_neighbors, exclude=pid if exclude_self else None)
            hits += is_exact(res, truths[qi])
            ndc += res.stats.total
        rows.append(
            {
                "dataset": data.name,
                "n": data.n,
                "dim": data.dim,
                "knn": k_neighbors,
                "n_trees": t,
                "n_queries": len(query_ids),
                "exclude_self": int(exclude_self),
                "max_depth": trees[0].config.max_depth,
                "min_size": trees[0].config.min_size,
                "tree_seed": trees[0].config.rng_seed,
                "single_tree_accuracy": p_hat,
                "single_tree_mean_ndc": x,
                "projected_accuracy": 1.0 - (1.0 - p_hat) ** t,
                "measured_accuracy": hits / len(query_ids),
                "avg_per_search_all_hashes": t * x,
                "measured_mean_ndc": ndc / len(query_ids),
            }
        )
    return rows


def miss_grid(d_values, theta_values, k: int, mc_samples: int = 0, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for d in d_values:
        for theta in theta_values:
            s = segment_ratio(d, theta)
            row = {"quantity": "miss_probability", "d": d, "theta_deg": _deg(theta), "k": k, "segment_ratio": s, "value": miss_probability(d, theta, k)}
            if mc_samples:
                est = segment_ratio_mc(d, theta, mc_samples, rng)
                row.update(mc_value=est.value, mc_stderr=est.stderr, mc_samples=mc_samples, mc_seed=seed)
            rows.append(row)
    return rows


def error_region_grid(D_values, d_values, eps_values, alpha_values, mc_samples: int = 0, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for D in D_values:
        for d in d_values:
            if d >= D:
                continue
            for eps in eps_values:
                for alpha in alpha_values:
                    params = GeometryParams(D, d, eps, alpha)
                    row = {"quantity": "error_region_ratio", "D": D, "d": d, "epsilon": eps, "alpha_deg": _deg(alpha), "value": error_region_ratio(params)}
                    if mc_samples:
                        est = hypercylinder_mc(params, mc_samples, rng)
                        row.update(mc_value=est.ratio, mc_stderr=est.stderr, mc_samples=mc_samples, mc_seed=seed)
                    rows.append(row)
    return rows
