"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line in ``VERDICTS`` (shown in the
pytest terminal summary) and then asserts.  Running this file directly
prints the same lines.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from angletree.analysis import (  # noqa: E402
    GeometryParams,
    compute_theta,
    error_region_ratio,
    hypercylinder_mc,
    miss_probability,
    segment_ratio,
    segment_ratio_mc,
    segment_ratio_series,
    sin_alpha_mc,
)
from angletree.bench import build_forest, run_lsh_emulation, run_queries, sample_queries  # noqa: E402
from angletree.data import gen_affine_flat, gen_sin3d, gen_sphere  # noqa: E402
from angletree.search import SearchConfig, brute_force, knn_search  # noqa: E402
from angletree.tree import TreeConfig, build_angle_tree, subtree_ids  # noqa: E402
from oracles import classic_kd_search  # noqa: E402

DEG = math.pi / 180
VERDICTS: list[str] = []


def verdict(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def sphere8():
    """8-d sphere in R^100 with its rp-tree and 200 query rows (criteria 7 and 8)."""
    data = gen_sphere(20_000, 8, 100, seed=1)
    tree = build_angle_tree(data, TreeConfig(tree_type="rp", iout=0.1, rng_seed=1))
    return data, tree, sample_queries(data.n, 200, seed=7)


def test_criterion_01_sin_alpha_moments():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    target = math.sqrt(4.5 / 499.5)
    low = sin_alpha_mc(500, 5, 100_000, rng)
    high = sin_alpha_mc(1000, 100, 100_000, rng)
    elapsed = time.perf_counter() - t0
    z = (low.mean - target) / low.stderr
    var_err = high.variance / (1 / 1999) - 1
    ok = abs(z) < 3 and abs(var_err) < 0.2 and elapsed < 10
    verdict(1, ok, f"mean {low.mean:.6f} vs {target:.6f} ({z:+.2f} SE); variance {high.variance:.3e} vs {1 / 1999:.3e} ({var_err:+.1%}); {elapsed:.1f}s")


def test_criterion_02_segment_ratio_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst_z = 0.0
    worst_series = 0.0
    for d in (2, 3, 5, 8, 10):
        for theta in (15 * DEG, 30 * DEG, 45 * DEG):
            s = segment_ratio(d, theta)
            est = segment_ratio_mc(d, theta, 1_000_000, rng)
            worst_z = max(worst_z, abs(s - est.value) / est.stderr)
            if d % 2:
                worst_series = max(worst_series, abs(segment_ratio_series(d, theta) / s - 1))
    elapsed = time.perf_counter() - t0
    ok = worst_z < 3 and worst_series < 1e-8 and elapsed < 60
    verdict(2, ok, f"worst MC deviation {worst_z:.2f} SE; worst series rel err {worst_series:.1e}; {elapsed:.1f}s")


def test_criterion_03_miss_probability_cliff():
    low = {d: miss_probability(d, 30 * DEG, 2000) for d in range(1, 11)}
    high = {d: miss_probability(d, 30 * DEG, 2000) for d in range(25, 41)}
    bad_low = {d: p for d, p in low.items() if not p < 0.01}
    bad_high = {d: p for d, p in high.items() if not p > 0.99}
    detail = f"d<=10 violations {', '.join(f'd={d}:{p:.4f}' for d, p in bad_low.items()) or 'none'}; d>=25 violations {len(bad_high)}"
    verdict(3, not bad_low and not bad_high, detail)


def test_criterion_04_error_region_oracle():
    rng = np.random.default_rng(0)
    parts = []
    ok = True
    for d, D, eps, alpha in [(2, 5, 0.05, 45), (3, 20, 0.1, 30)]:
        params = GeometryParams(D, d, eps, alpha * DEG)
        exact = error_region_ratio(params)
        est = hypercylinder_mc(params, 10_000_000, rng)
        rel = abs(exact / est.ratio - 1)
        grid = [error_region_ratio(GeometryParams(D, d, eps, a * DEG)) for a in np.linspace(10, 90, 9)]
        mono = all(b <= a for a, b in zip(grid, grid[1:]))
        ok &= rel < 0.02 and mono
        parts.append(f"(d={d},D={D}) {exact:.5f} vs MC {est.ratio:.5f} rel {rel:.2%} monotone={mono}")
    verdict(4, ok, "; ".join(parts))


def test_criterion_05_kd_reduction():
    datasets = [gen_sphere(20_000, 8, 100, seed=1), gen_affine_flat(10_000, 3, 50, seed=2), gen_sin3d(10_000, seed=3)]
    mismatches = 0
    checked = 0
    for data in datasets:
        tree = build_angle_tree(data, TreeConfig(rng_seed=1)).with_dihedral(math.pi / 2)
        for pid in sample_queries(data.n, 200, seed=0):
            pid = int(pid)
            res = knn_search(tree, data, data.points[pid], SearchConfig(1, theta=0.0), exclude=pid)
            ids, dists, n_dist, _ = classic_kd_search(tree, data.points, data.points[pid], 1, exclude=pid)
            same = res.neighbor_ids.tolist() == ids and res.distances.tolist() == dists and res.stats.distance_evals == n_dist
            mismatches += not same
            checked += 1
    verdict(5, mismatches == 0, f"{mismatches} mismatches in {checked} queries over 3 datasets")


def test_criterion_06_exact_on_flats():
    theta = compute_theta(3, 2000, 0.01)
    data = gen_affine_flat(10_000, 3, 50, noise_sigma=0.0, seed=0)
    tree = build_angle_tree(data, TreeConfig(angle_samples=2000, iout=0.0, rng_seed=0))
    _, agg = run_queries(data, tree, sample_queries(data.n, 500, seed=0), SearchConfig(1, theta), exclude_self=True)

    small = gen_affine_flat(2000, 3, 50, noise_sigma=0.0, seed=1)
    small_tree = build_angle_tree(small, TreeConfig(angle_samples=2000, iout=0.0, min_size=20, rng_seed=1))
    bad_prunes = 0
    loose_bounds = 0  # informational: bound below the k-th best at prune time, but harmless
    n_prunes = 0
    for pid in range(small.n):
        res = knn_search(small_tree, small, small.points[pid], SearchConfig(1, theta), exclude=pid, trace=True)
        for node, worst_then in res.pruned:
            ids = subtree_ids(node)
            ids = ids[ids != pid]
            d = np.linalg.norm(small.points[ids] - small.points[pid], axis=1)
            n_prunes += 1
            bad_prunes += bool(np.any(d < res.distances[-1]))
            loose_bounds += bool(np.any(d < worst_then))
    ok = agg["recall"] == 1.0 and bad_prunes == 0
    verdict(
        6,
        ok,
        f"theta {math.degrees(theta):.1f} deg; recall {agg['recall']:.3f} over 500 queries; "
        f"{bad_prunes} of {n_prunes} pruned nodes hold a better point ({loose_bounds} undercut the k-th best at prune time)",
    )


def test_criterion_07_sphere_speedup(sphere8):
    data, tree, qids = sphere8
    _, agg = run_queries(data, tree, qids, SearchConfig(1), exclude_self=True)
    ok = agg["recall"] >= 0.90 and agg["speedup_over_pbf"] > 1.5
    verdict(7, ok, f"recall {agg['recall']:.3f}; mean total NDC {agg['mean_total_ndc']:.1f} of N={data.n}; speedup {agg['speedup_over_pbf']:.2f}")


def test_criterion_08_two_nn_cost_ratio(sphere8):
    data, tree, qids = sphere8
    _, one = run_queries(data, tree, qids, SearchConfig(1), exclude_self=True)
    _, two = run_queries(data, tree, qids, SearchConfig(2), exclude_self=True)
    ratio = two["mean_total_ndc"] / one["mean_total_ndc"]
    dist_ratio = two["mean_distance_evals"] / one["mean_distance_evals"]
    verdict(8, 1.3 <= ratio <= 3.0, f"mean total NDC ratio {ratio:.3f} (distance evals only {dist_ratio:.3f})")


def test_criterion_09_iout_monotone():
    data = gen_sphere(20_000, 8, 100, noise_sigma=0.05, seed=1)
    base = build_angle_tree(data, TreeConfig(iout=0.0, keep_samples=True, rng_seed=1))
    qids = sample_queries(data.n, 200, seed=7)
    truths: dict = {}
    evals, recalls = [], []
    for iout in (0.0, 0.05, 0.1, 0.2):
        rows, agg = run_queries(data, base.with_iout(iout), qids, SearchConfig(1), exclude_self=True, truths=truths)
        evals.append(sum(r["distance_evals"] for r in rows))
        recalls.append(agg["recall"])
    ok = all(b <= a for a, b in zip(evals, evals[1:])) and all(b <= a for a, b in zip(recalls, recalls[1:]))
    verdict(9, ok, f"distance evals {evals}; recall {[round(r, 3) for r in recalls]}")


def test_criterion_10_lsh_emulation():
    data = gen_sphere(100_000, 14, 15, seed=1)
    cfg = TreeConfig(tree_type="rp", min_size=1, angle_samples=0, iout=0.0, max_depth=10, rng_seed=0)
    trees = build_forest(data, 3, cfg)
    rows = run_lsh_emulation(data, trees, [1, 3], sample_queries(data.n, 1000, seed=0))
    r = rows[-1]
    gap = abs(r["measured_accuracy"] - r["projected_accuracy"])
    verdict(10, gap <= 0.03, f"p_hat {r['single_tree_accuracy']:.3f}; t=3 projected {r['projected_accuracy']:.3f} measured {r['measured_accuracy']:.3f}")


def test_criterion_11_build_accounting():
    ratios = []
    for n in (5_000, 10_000, 20_000, 40_000):
        data = gen_sphere(n, 8, 20, seed=2)
        with_angles = build_angle_tree(data, TreeConfig(angle_samples=2000, rng_seed=0))
        without = build_angle_tree(data, TreeConfig(angle_samples=0, rng_seed=0))
        ratios.append((with_angles.build_metric.total - without.build_metric.total) / with_angles.n_internal)
    slope = float(np.mean(ratios))
    spread = max(abs(r / slope - 1) for r in ratios)
    verdict(11, spread <= 0.05, f"extra NDC per internal node {[round(r, 1) for r in ratios]}; max deviation {spread:.2%}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
