"""kd-trees, rp-trees and Angle Trees.

An Angle Tree is an ordinary kd- or rp-tree in which every internal node
also stores an estimate of the dihedral angle between its splitter and the
local low-dimensional plane the data lives on.  The estimate is a high
quantile of the angles between sampled vectors ``p - center`` and the
splitter hyperplane; its sine later scales the pruning bound.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Iterator, Union

import numpy as np

from .data import Dataset
from .geometry import CountedMetric, plane_angles, project, signed_margin

HALF_PI = math.pi / 2
# estimates are clamped away from zero so sin(dihedral) is always a valid divisor
MIN_DIHEDRAL = 1e-12

TREE_MAGIC = b"ATRE"
TREE_VERSION = 1


class Unsplittable(ValueError):
    """All points in a region project to the same value."""


@dataclass(frozen=True)
class Splitter:
    normal: np.ndarray
    threshold: float

    def __post_init__(self):
        n = np.array(self.normal, dtype=np.float64)
        if n.ndim != 1:
            raise ValueError("splitter normal must be a vector")
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("splitter normal must have unit length")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "threshold", float(self.threshold))

    @classmethod
    def from_direction(cls, direction, threshold: float = 0.0) -> "Splitter":
        d = np.asarray(direction, dtype=np.float64)
        norm = np.linalg.norm(d)
        if norm == 0:
            raise ValueError("splitter direction must be non-zero")
        return cls(d / norm, threshold)


@dataclass
class Leaf:
    point_ids: np.ndarray


@dataclass
class Internal:
    splitter: Splitter
    dihedral: float
    neg: "Node"
    pos: "Node"
    # ascending plane angles the dihedral was read from; kept only on request
    angle_samples: np.ndarray | None = field(default=None, repr=False)


Node = Union[Leaf, Internal]


@dataclass
class TreeConfig:
    tree_type: str = "rp"
    min_size: int = 50
    angle_samples: int = 2000
    iout: float = 0.1
    theta: float = 0.0
    rng_seed: int = 0
    center: str = "mean"
    max_depth: int | None = None
    keep_samples: bool = False

    def __post_init__(self):
        if self.tree_type not in ("kd", "rp"):
            raise ValueError(f"tree_type must be 'kd' or 'rp', got {self.tree_type!r}")
        if self.min_size < 1:
            raise ValueError("min_size must be positive")
        if self.angle_samples < 0:
            raise ValueError("angle_samples must be non-negative (0 disables angle estimation)")
        if not 0.0 <= self.iout < 1.0:
            raise ValueError("iout must lie in [0, 1)")
        if not 0.0 <= self.theta < HALF_PI:
            raise ValueError("theta must lie in [0, pi/2)")
        if self.center not in ("mean", "median"):
            raise ValueError("center must be 'mean' or 'median'")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")


@dataclass
class AngleTree:
    root: Node
    dim: int
    n_points: int
    config: TreeConfig
    build_metric: CountedMetric = field(default_factory=CountedMetric)

    def nodes(self) -> Iterator[Node]:
        """Pre-order traversal."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, Internal):
                stack.append(node.pos)
                stack.append(node.neg)

    def leaves(self) -> list[Leaf]:
        return [n for n in self.nodes() if isinstance(n, Leaf)]

    def internals(self) -> list[Internal]:
        return [n for n in self.nodes() if isinstance(n, Internal)]

    @property
    def n_internal(self) -> int:
        return len(self.internals())

    @property
    def depth(self) -> int:
        def _depth(node):
            if isinstance(node, Leaf):
                return 0
            return 1 + max(_depth(node.neg), _depth(node.pos))

        return _depth(self.root)

    def find_leaf(self, q, metric: CountedMetric | None = None) -> Leaf:
        node = self.root
        while isinstance(node, Internal):
            node = node.neg if signed_margin(q, node.splitter, metric) <= 0 else node.pos
        return node

    def with_iout(self, iout: float) -> "AngleTree":
        """Same skeleton, dihedrals re-read from the cached angle samples at a new ``iout``."""
        if not 0.0 <= iout < 1.0:
            raise ValueError("iout must lie in [0, 1)")

        def _copy(node):
            if isinstance(node, Leaf):
                return node
            if node.angle_samples is None:
                raise ValueError("tree was built without keep_samples; cannot re-estimate")
            return Internal(node.splitter, dihedral_from_samples(node.angle_samples, iout), _copy(node.neg), _copy(node.pos), node.angle_samples)

        return replace(self, root=_copy(self.root), config=replace(self.config, iout=iout))

    def with_dihedral(self, value: float = HALF_PI) -> "AngleTree":
        """Same skeleton with every node dihedral overwritten by ``value``."""

        def _copy(node):
            if isinstance(node, Leaf):
                return node
            return Internal(node.splitter, value, _copy(node.neg), _copy(node.pos), node.angle_samples)

        return replace(self, root=_copy(self.root))

    def to_bytes(self) -> bytes:
        return serialize_tree(self)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "AngleTree":
        return deserialize_tree(blob)


def subtree_ids(node: Node) -> np.ndarray:
    """All dataset indices stored below ``node``."""
    if isinstance(node, Leaf):
        return node.point_ids
    return np.concatenate([subtree_ids(node.neg), subtree_ids(node.pos)])


def _split_threshold(proj: np.ndarray) -> float:
    lo, hi = proj.min(), proj.max()
    if lo == hi:
        raise Unsplittable("all projections are equal")
    thr = float(np.median(proj))
    if thr >= hi:
        # ties at the top would empty the positive side
        thr = float(proj[proj < hi].max())
    return thr


def gen_splitter(tree_type: str, points: np.ndarray, rng: np.random.Generator) -> Splitter:
    """kd: max-variance axis; rp: random Gaussian direction. Threshold is the median projection."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 2:
        raise Unsplittable("need at least two points to split")
    dim = points.shape[1]
    if tree_type == "kd":
        var = points.var(axis=0)
        axis = int(np.argmax(var))
        if var[axis] == 0:
            raise Unsplittable("all points identical")
        normal = np.zeros(dim)
        normal[axis] = 1.0
        proj = points[:, axis]
    elif tree_type == "rp":
        direction = rng.standard_normal(dim)
        normal = direction / np.linalg.norm(direction)
        proj = project(points, normal)
    else:
        raise ValueError(f"unknown tree type {tree_type!r}")
    return Splitter(normal, _split_threshold(proj))


def sample_plane_angles(
    splitter: Splitter,
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    center: str = "mean",
    metric: CountedMetric | None = None,
) -> np.ndarray:
    """Ascending angles between ``k`` sampled vectors ``p - center`` and the splitter plane.

    Points are drawn uniformly with replacement; zero vectors are dropped.
    """
    if k <= 0:
        return np.empty(0)
    c = points.mean(axis=0) if center == "mean" else np.median(points, axis=0)
    idx = rng.integers(0, points.shape[0], size=k)
    vecs = points[idx] - c
    if metric is not None:
        metric.angle_evals += k
    gamma = plane_angles(vecs, splitter.normal)
    return np.sort(gamma[~np.isnan(gamma)])


def dihedral_from_samples(samples: np.ndarray, iout: float) -> float:
    """The ``(1 - iout)`` quantile of ascending plane angles; pi/2 when nothing was sampled."""
    k_eff = len(samples)
    if k_eff == 0:
        return HALF_PI
    idx = min(int(math.floor(k_eff * (1.0 - iout) + 1e-9)), k_eff - 1)
    return float(min(HALF_PI, max(samples[idx], MIN_DIHEDRAL)))


def estimate_dihedral(splitter: Splitter, points: np.ndarray, cfg: TreeConfig, rng: np.random.Generator, metric: CountedMetric | None = None) -> float:
    samples = sample_plane_angles(splitter, np.asarray(points, dtype=np.float64), cfg.angle_samples, rng, cfg.center, metric)
    return dihedral_from_samples(samples, cfg.iout)


def build_angle_tree(data: Dataset | np.ndarray, cfg: TreeConfig | None = None) -> AngleTree:
    """Recursively split until regions hold at most ``min_size`` points.

    Splitter generation and angle sampling draw from separate streams, so
    the skeleton depends only on the seed and not on ``angle_samples``.
    """
    cfg = cfg or TreeConfig()
    pts = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("cannot build a tree over an empty dataset")
    split_seq, angle_seq = np.random.SeedSequence(cfg.rng_seed).spawn(2)
    split_rng = np.random.default_rng(split_seq)
    angle_rng = np.random.default_rng(angle_seq)
    metric = CountedMetric()

    def build(ids: np.ndarray, depth: int) -> Node:
        if len(ids) <= cfg.min_size or (cfg.max_depth is not None and depth >= cfg.max_depth):
            return Leaf(ids)
        region = pts[ids]
        try:
            splitter = gen_splitter(cfg.tree_type, region, split_rng)
        except Unsplittable:
            return Leaf(ids)
        samples = sample_plane_angles(splitter, region, cfg.angle_samples, angle_rng, cfg.center, metric)
        dihedral = dihedral_from_samples(samples, cfg.iout)
        margins = project(region, splitter.normal) - splitter.threshold
        metric.projection_evals += len(ids)
        neg_mask = margins <= 0
        neg = build(ids[neg_mask], depth + 1)
        pos = build(ids[~neg_mask], depth + 1)
        return Internal(splitter, dihedral, neg, pos, samples if cfg.keep_samples else None)

    root = build(np.arange(pts.shape[0], dtype=np.int64), 0)
    return AngleTree(root, pts.shape[1], pts.shape[0], cfg, metric)


# -- serialization -----------------------------------------------------------
#
# header:   b"ATRE" u32 version u32 D u64 n_points
# internal: u8 1, D*f64 normal, f64 threshold, f64 dihedral, u64 neg_offset, u64 pos_offset
# leaf:     u8 0, u32 count, count*u64 ids
# Offsets are absolute byte positions; nodes are written in pre-order.

_TREE_HEADER = struct.Struct("<4sIIQ")


def serialize_tree(tree: AngleTree) -> bytes:
    buf = bytearray(_TREE_HEADER.pack(TREE_MAGIC, TREE_VERSION, tree.dim, tree.n_points))
    internal_tail = struct.Struct(f"<{tree.dim}dddQQ")

    def write(node: Node) -> int:
        start = len(buf)
        if isinstance(node, Leaf):
            ids = np.asarray(node.point_ids, dtype="<u8")
            buf.extend(struct.pack("<BI", 0, len(ids)))
            buf.extend(ids.tobytes())
            return start
        buf.append(1)
        tail_at = len(buf)
        buf.extend(bytes(internal_tail.size))
        neg_at = write(node.neg)
        pos_at = write(node.pos)
        internal_tail.pack_into(buf, tail_at, *node.splitter.normal, node.splitter.threshold, node.dihedral, neg_at, pos_at)
        return start

    write(tree.root)
    return bytes(buf)


def deserialize_tree(blob: bytes, config: TreeConfig | None = None) -> AngleTree:
    if len(blob) < _TREE_HEADER.size:
        raise ValueError("tree blob too short")
    magic, version, dim, n_points = _TREE_HEADER.unpack_from(blob)
    if magic != TREE_MAGIC:
        raise ValueError(f"bad tree magic {magic!r}")
    if version != TREE_VERSION:
        raise ValueError(f"unsupported tree format version {version}")
    internal_tail = struct.Struct(f"<{dim}dddQQ")

    def read(offset: int) -> Node:
        tag = blob[offset]
        if tag == 0:
            (count,) = struct.unpack_from("<I", blob, offset + 1)
            ids = np.frombuffer(blob, dtype="<u8", count=count, offset=offset + 5).astype(np.int64)
            return Leaf(ids)
        if tag != 1:
            raise ValueError(f"bad node tag {tag} at offset {offset}")
        vals = internal_tail.unpack_from(blob, offset + 1)
        normal = np.array(vals[:dim])
        threshold, dihedral, neg_at, pos_at = vals[dim:]
        return Internal(Splitter(normal, threshold), dihedral, read(neg_at), read(pos_at))

    root = read(_TREE_HEADER.size)
    return AngleTree(root, dim, n_points, config or TreeConfig())
