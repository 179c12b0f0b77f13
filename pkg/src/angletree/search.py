"""k-NN search over Angle Trees, plus the baselines it is measured against."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .geometry import CountedMetric, as_vector, distances_to, signed_margin
from .tree import AngleTree, Internal, Leaf, Node

HALF_PI = math.pi / 2


@dataclass
class SearchConfig:
    k_neighbors: int = 1
    theta: float = 0.0
    force_kd_bound: bool = False

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be positive")
        if not 0.0 <= self.theta < HALF_PI:
            raise ValueError("theta must lie in [0, pi/2)")


@dataclass
class SearchResult:
    neighbor_ids: np.ndarray
    distances: np.ndarray
    stats: CountedMetric
    truncated: bool = False
    leaves_visited: int = 0
    # filled only with trace=True: (node, k-th best distance when pruned) and scanned leaves
    pruned: list = field(default_factory=list, repr=False)
    visited: list = field(default_factory=list, repr=False)


class _Best:
    """The k best (distance, id) pairs seen so far, ordered lexicographically."""

    def __init__(self, k: int):
        self.k = k
        self.dist = np.empty(0)
        self.ids = np.empty(0, dtype=np.int64)

    @property
    def full(self) -> bool:
        return len(self.dist) >= self.k

    @property
    def worst(self) -> float:
        return float(self.dist[-1]) if self.full else math.inf

    def offer(self, dist: np.ndarray, ids: np.ndarray) -> None:
        d = np.concatenate([self.dist, dist])
        i = np.concatenate([self.ids, ids])
        order = np.lexsort((i, d))[: self.k]
        self.dist, self.ids = d[order], i[order]


def _points(data) -> np.ndarray:
    return data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)


def _scan(pts: np.ndarray, q: np.ndarray, ids: np.ndarray, best: _Best, metric: CountedMetric, exclude: int | None) -> None:
    if exclude is not None:
        ids = ids[ids != exclude]
    if len(ids):
        best.offer(distances_to(q, pts[ids], metric), ids)


def _available(n: int, exclude: int | None) -> int:
    return n - (exclude is not None)


def pruning_bound(margin: float, dihedral: float, theta: float = 0.0, force_kd_bound: bool = False) -> float:
    """Lower bound on the distance from the query to anything across the splitter.

    ``|margin| cos(theta) / sin(dihedral)``; with ``force_kd_bound`` the
    divisor is 1, which is the classic kd-tree rule.
    """
    bound = abs(margin) * math.cos(theta)
    if force_kd_bound:
        return bound
    return bound / math.sin(dihedral)


def knn_search(tree: AngleTree, data, q, cfg: SearchConfig | None = None, exclude: int | None = None, trace: bool = False) -> SearchResult:
    """Depth-first search, near child first, pruning with the dihedral-scaled bound.

    The far child of a node is skipped when
    ``|margin| * cos(theta) / sin(dihedral) >= k-th best distance``.
    ``exclude`` drops one dataset index from candidacy (a query drawn from
    the data itself).
    """
    cfg = cfg or SearchConfig()
    pts = _points(data)
    q = as_vector(q, pts.shape[1])
    k = min(cfg.k_neighbors, _available(pts.shape[0], exclude))
    metric = CountedMetric()
    best = _Best(k)
    pruned = []
    visited = []
    leaves = 0

    def visit(node: Node) -> None:
        nonlocal leaves
        if isinstance(node, Leaf):
            leaves += 1
            if trace:
                visited.append(node)
            _scan(pts, q, node.point_ids, best, metric, exclude)
            return
        margin = signed_margin(q, node.splitter, metric)
        near, far = (node.neg, node.pos) if margin <= 0 else (node.pos, node.neg)
        visit(near)
        bound = pruning_bound(margin, node.dihedral, cfg.theta, cfg.force_kd_bound)
        if best.full and bound >= best.worst:
            if trace:
                pruned.append((far, best.worst))
            return
        visit(far)

    visit(tree.root)
    return SearchResult(best.ids, best.dist, metric, k < cfg.k_neighbors, leaves, pruned, visited)


def brute_force(data, q, k_neighbors: int = 1, exclude: int | None = None) -> SearchResult:
    """Exact k nearest neighbours by a full scan (N distance evaluations)."""
    pts = _points(data)
    q = as_vector(q, pts.shape[1])
    metric = CountedMetric()
    dist = distances_to(q, pts, metric)
    ids = np.arange(pts.shape[0], dtype=np.int64)
    if exclude is not None:
        keep = ids != exclude
        dist, ids = dist[keep], ids[keep]
    k = min(k_neighbors, len(ids))
    order = np.lexsort((ids, dist))[:k]
    return SearchResult(ids[order], dist[order], metric, k < k_neighbors)


def near_neighbor_probe(tree: AngleTree, data, q, k_neighbors: int = 1, exclude: int | None = None) -> SearchResult:
    """Descend to the single leaf containing ``q`` and scan only it."""
    return multi_tree_probe([tree], data, q, k_neighbors, exclude)


def multi_tree_probe(trees, data, q, k_neighbors: int = 1, exclude: int | None = None) -> SearchResult:
    """Probe one leaf per tree and keep the best ``k_neighbors`` of all candidates.

    Costs are summed over trees; a point found in several leaves is
    charged once per leaf it was scanned in.
    """
    trees = list(trees)
    if not trees:
        raise ValueError("multi_tree_probe needs at least one tree")
    pts = _points(data)
    q = as_vector(q, pts.shape[1])
    metric = CountedMetric()
    k = min(k_neighbors, _available(pts.shape[0], exclude))
    cand_d, cand_i = [], []
    for tree in trees:
        leaf = tree.find_leaf(q, metric)
        ids = leaf.point_ids if exclude is None else leaf.point_ids[leaf.point_ids != exclude]
        cand_d.append(distances_to(q, pts[ids], metric))
        cand_i.append(ids)
    d = np.concatenate(cand_d)
    i = np.concatenate(cand_i)
    i, first = np.unique(i, return_index=True)
    d = d[first]
    order = np.lexsort((i, d))[:k]
    return SearchResult(i[order], d[order], metric, k < k_neighbors, leaves_visited=len(trees))


def pbf_equivalent_fraction(recall: float, k_neighbors: int = 1) -> float:
    """Fraction of the data a random partial scan must read to match ``recall`` on all-k queries."""
    if recall <= 0:
        return 0.0
    if recall > 1:
        raise ValueError("recall must lie in [0, 1]")
    return recall ** (1.0 / k_neighbors)


def is_exact(result: SearchResult, truth: SearchResult, rel_tol: float = 1e-12) -> bool:
    """True when ``result`` holds a valid set of true k nearest neighbours.

    Ties at the k-th distance count either id as correct.
    """
    k = len(truth.distances)
    if len(result.distances) != k:
        return False
    if k == 0:
        return True
    kth = truth.distances[-1]
    return bool(np.all(result.distances <= kth + rel_tol * max(kth, 1e-300)))
