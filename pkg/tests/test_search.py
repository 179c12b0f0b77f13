import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from angletree.analysis import compute_theta
from angletree.data import gen_affine_flat, gen_sin3d, gen_sphere
from angletree.search import (
    SearchConfig,
    brute_force,
    is_exact,
    knn_search,
    multi_tree_probe,
    near_neighbor_probe,
    pbf_equivalent_fraction,
    pruning_bound,
)
from angletree.tree import HALF_PI, TreeConfig, build_angle_tree, subtree_ids
from oracles import classic_kd_search, naive_distance


@pytest.fixture(scope="module")
def sphere():
    data = gen_sphere(6000, 6, 60, noise_sigma=0.01, seed=3)
    tree = build_angle_tree(data, TreeConfig(iout=0.1, rng_seed=3, keep_samples=True))
    queries = np.random.default_rng(9).choice(data.n, 60, replace=False)
    return data, tree, queries


class TestBruteForce:
    def test_self_first(self):
        pts = np.random.default_rng(0).standard_normal((50, 3))
        res = brute_force(pts, pts[17], 3)
        assert res.neighbor_ids[0] == 17 and res.distances[0] == 0.0
        assert res.stats.distance_evals == 50

    def test_hand_ordered_1d(self):
        pts = np.array([[1.0], [0.0], [0.5], [-0.3], [2.0]])
        res = brute_force(pts, [0.4], 5)
        assert res.neighbor_ids.tolist() == [2, 1, 0, 3, 4]
        np.testing.assert_allclose(res.distances, [0.1, 0.4, 0.6, 0.7, 1.6], rtol=1e-12)

    def test_matches_independent_sort(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((300, 6))
        q = rng.standard_normal(6)
        ref = sorted((naive_distance(q, p), i) for i, p in enumerate(pts))[:7]
        res = brute_force(pts, q, 7)
        assert res.neighbor_ids.tolist() == [i for _, i in ref]
        np.testing.assert_allclose(res.distances, [d for d, _ in ref], rtol=1e-12)

    def test_exclude_self(self):
        pts = np.random.default_rng(2).standard_normal((20, 2))
        res = brute_force(pts, pts[4], 1, exclude=4)
        assert res.neighbor_ids[0] != 4 and res.distances[0] > 0

    def test_k_larger_than_n_is_flagged(self):
        res = brute_force(np.eye(3), [0, 0, 0], 5)
        assert res.truncated and len(res.neighbor_ids) == 3


class TestPBF:
    def test_values(self):
        assert pbf_equivalent_fraction(0.9, 1) == pytest.approx(0.9)
        assert pbf_equivalent_fraction(1.0, 7) == 1.0
        assert pbf_equivalent_fraction(0.81, 2) == pytest.approx(0.9)
        assert pbf_equivalent_fraction(0.0, 3) == 0.0


class TestKnnSearch:
    def test_result_invariants(self, sphere):
        data, tree, queries = sphere
        for pid in queries[:20]:
            res = knn_search(tree, data, data.points[pid], SearchConfig(5))
            truth = brute_force(data, data.points[pid], 5)
            assert np.all(np.diff(res.distances) >= 0)
            assert len(set(res.neighbor_ids.tolist())) == 5
            assert np.all(res.distances >= truth.distances - 1e-12)

    def test_right_angle_reduces_to_classic_kd(self, sphere):
        data, tree, queries = sphere
        kd_tree = tree.with_dihedral(HALF_PI)
        for pid in queries:
            for k in (1, 3):
                res = knn_search(kd_tree, data, data.points[pid], SearchConfig(k), exclude=int(pid))
                ids, dists, n_dist, n_proj = classic_kd_search(kd_tree, data.points, data.points[pid], k, exclude=int(pid))
                assert res.neighbor_ids.tolist() == ids
                np.testing.assert_allclose(res.distances, dists, rtol=1e-12)
                assert res.stats.distance_evals == n_dist
                assert res.stats.projection_evals == n_proj

    def test_force_kd_bound_equals_right_angle_tree(self, sphere):
        data, tree, queries = sphere
        for pid in queries[:20]:
            a = knn_search(tree, data, data.points[pid], SearchConfig(1, force_kd_bound=True), exclude=int(pid))
            b = knn_search(tree.with_dihedral(), data, data.points[pid], SearchConfig(1), exclude=int(pid))
            assert a.neighbor_ids.tolist() == b.neighbor_ids.tolist()
            assert a.stats.as_dict() == b.stats.as_dict()

    def test_force_kd_visits_superset_of_leaves(self, sphere):
        data, tree, queries = sphere
        for pid in queries:
            a = knn_search(tree, data, data.points[pid], SearchConfig(1), exclude=int(pid), trace=True)
            b = knn_search(tree, data, data.points[pid], SearchConfig(1, force_kd_bound=True), exclude=int(pid), trace=True)
            assert {id(x) for x in a.visited} <= {id(x) for x in b.visited}

    def test_distance_evals_non_increasing_in_iout(self, sphere):
        data, tree, queries = sphere
        trees = [tree.with_iout(x) for x in (0.0, 0.05, 0.1, 0.2, 0.4)]
        for pid in queries:
            evals = [knn_search(t, data, data.points[pid], SearchConfig(1), exclude=int(pid)).stats.distance_evals for t in trees]
            assert all(b <= a for a, b in zip(evals, evals[1:])), evals

    def test_exact_on_noiseless_flat(self):
        data = gen_affine_flat(3000, 3, 50, seed=4)
        tree = build_angle_tree(data, TreeConfig(iout=0.0, rng_seed=4))
        cfg = SearchConfig(1, compute_theta(3, 2000, 0.01))
        for pid in range(0, 3000, 30):
            res = knn_search(tree, data, data.points[pid], cfg, exclude=pid)
            assert is_exact(res, brute_force(data, data.points[pid], 1, exclude=pid))

    def test_pruned_nodes_hold_nothing_closer_on_flat(self):
        data = gen_affine_flat(2000, 3, 50, seed=6)
        tree = build_angle_tree(data, TreeConfig(iout=0.0, min_size=20, rng_seed=6))
        cfg = SearchConfig(2, compute_theta(3, 2000, 0.01))
        for pid in range(0, 2000, 10):
            res = knn_search(tree, data, data.points[pid], cfg, exclude=pid, trace=True)
            kth = res.distances[-1]
            for node, _ in res.pruned:
                ids = subtree_ids(node)
                ids = ids[ids != pid]
                d = np.linalg.norm(data.points[ids] - data.points[pid], axis=1)
                assert np.all(d >= kth)

    def test_k_larger_than_n(self):
        pts = np.random.default_rng(0).standard_normal((10, 2))
        tree = build_angle_tree(pts, TreeConfig(min_size=3))
        res = knn_search(tree, pts, pts[0], SearchConfig(20))
        assert res.truncated and sorted(res.neighbor_ids.tolist()) == list(range(10))

    def test_sin3d_is_exact(self):
        data = gen_sin3d(10_000, seed=1)
        tree = build_angle_tree(data, TreeConfig(rng_seed=1))
        queries = np.random.default_rng(7).choice(data.n, 500, replace=False)
        for pid in queries:
            pid = int(pid)
            res = knn_search(tree, data, data.points[pid], SearchConfig(1), exclude=pid)
            assert is_exact(res, brute_force(data, data.points[pid], 1, exclude=pid))

    @given(st.floats(-10, 10), st.floats(1e-6, HALF_PI), st.floats(0, 1.5))
    def test_angle_bound_dominates_kd_bound(self, margin, dihedral, theta):
        assert pruning_bound(margin, dihedral, theta) >= pruning_bound(margin, dihedral, theta, force_kd_bound=True)

    def test_search_config_validation(self):
        with pytest.raises(ValueError):
            SearchConfig(0)
        with pytest.raises(ValueError):
            SearchConfig(1, theta=HALF_PI)


class TestProbes:
    def test_single_leaf_probe_is_brute_force(self):
        pts = np.random.default_rng(0).standard_normal((30, 4))
        tree = build_angle_tree(pts, TreeConfig(min_size=50))
        for i in range(5):
            a = near_neighbor_probe(tree, pts, pts[i] + 0.1, 3)
            b = brute_force(pts, pts[i] + 0.1, 3)
            assert a.neighbor_ids.tolist() == b.neighbor_ids.tolist()
            assert a.stats.distance_evals == b.stats.distance_evals

    def test_probe_cost_bounded_by_leaf(self, sphere):
        data, tree, queries = sphere
        biggest = max(len(leaf.point_ids) for leaf in tree.leaves())
        for pid in queries:
            res = near_neighbor_probe(tree, data, data.points[pid])
            assert res.stats.distance_evals <= biggest
            assert res.neighbor_ids[0] == pid

    def test_one_tree_equals_near_neighbor_probe(self, sphere):
        data, tree, queries = sphere
        for pid in queries[:10]:
            a = multi_tree_probe([tree], data, data.points[pid], 2, exclude=int(pid))
            b = near_neighbor_probe(tree, data, data.points[pid], 2, exclude=int(pid))
            assert a.neighbor_ids.tolist() == b.neighbor_ids.tolist()
            assert a.stats.as_dict() == b.stats.as_dict()

    def test_costs_add_over_trees(self, sphere):
        data, _, queries = sphere
        trees = [build_angle_tree(data, TreeConfig(angle_samples=0, rng_seed=s)) for s in range(4)]
        for pid in queries[:10]:
            q = data.points[pid]
            singles = [near_neighbor_probe(t, data, q) for t in trees]
            combined = multi_tree_probe(trees, data, q)
            assert combined.stats.distance_evals == sum(s.stats.distance_evals for s in singles)
            assert combined.stats.projection_evals == sum(s.stats.projection_evals for s in singles)

    def test_more_trees_raise_recall(self):
        data = gen_sphere(5000, 8, 9, seed=2)
        trees = [build_angle_tree(data, TreeConfig(angle_samples=0, rng_seed=s, min_size=20)) for s in range(10)]
        queries = np.random.default_rng(1).choice(data.n, 200, replace=False)
        hits1 = hits10 = 0
        for pid in queries:
            pid = int(pid)
            truth = brute_force(data, data.points[pid], 1, exclude=pid)
            hits1 += is_exact(near_neighbor_probe(trees[0], data, data.points[pid], exclude=pid), truth)
            hits10 += is_exact(multi_tree_probe(trees, data, data.points[pid], exclude=pid), truth)
        assert hits10 > hits1

    def test_empty_tree_list(self):
        with pytest.raises(ValueError):
            multi_tree_probe([], np.eye(2), [0, 0])
