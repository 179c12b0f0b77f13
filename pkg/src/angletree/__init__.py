"""Angle Trees: kd/rp-trees whose pruning bound adapts to low intrinsic dimension."""
from .analysis import (
    GeometryParams,
    ball_volume,
    cap_volume,
    compute_theta,
    error_region_ratio,
    hypercylinder_mc,
    miss_probability,
    segment_ratio,
    sin_alpha_mc,
)
from .data import Dataset, DatasetSpec, generate, load_dataset, save_dataset
from .geometry import CountedMetric
from .search import (
    SearchConfig,
    SearchResult,
    brute_force,
    knn_search,
    multi_tree_probe,
    near_neighbor_probe,
    pbf_equivalent_fraction,
)
from .tree import AngleTree, Splitter, TreeConfig, build_angle_tree, deserialize_tree

__version__ = "0.1.0"

__all__ = [
    "AngleTree",
    "CountedMetric",
    "Dataset",
    "DatasetSpec",
    "GeometryParams",
    "SearchConfig",
    "SearchResult",
    "Splitter",
    "TreeConfig",
    "ball_volume",
    "brute_force",
    "build_angle_tree",
    "cap_volume",
    "compute_theta",
    "deserialize_tree",
    "error_region_ratio",
    "generate",
    "hypercylinder_mc",
    "knn_search",
    "load_dataset",
    "miss_probability",
    "multi_tree_probe",
    "near_neighbor_probe",
    "pbf_equivalent_fraction",
    "save_dataset",
    "segment_ratio",
    "sin_alpha_mc",
]
