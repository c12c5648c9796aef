"""Pruned segment networks for cup-drawing mesh regression."""

from ._core import (
    Network,
    build_cupnet,
    build_regnet,
    generate_base_mesh,
    load_checkpoint,
    mask_count,
    mask_nonzeros,
    pairwise_distances,
    param_count_cup,
    param_count_ref,
    r2_score,
    sample_dataset,
    solve_s,
    stratified_split,
)

__all__ = [
    "Network",
    "build_cupnet",
    "build_regnet",
    "generate_base_mesh",
    "load_checkpoint",
    "mask_count",
    "mask_nonzeros",
    "pairwise_distances",
    "param_count_cup",
    "param_count_ref",
    "r2_score",
    "sample_dataset",
    "solve_s",
    "stratified_split",
]
