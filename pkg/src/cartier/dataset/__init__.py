"""Trajectory, scene and query data plus the synthetic scene generator."""

from .io import (
    detector_vocabulary,
    load_queries,
    load_scene_truth,
    load_trajectory,
    read_cdpt,
    save_queries,
    save_scene_truth,
    save_trajectory,
    write_cdpt,
)
from .synthetic import HOUSEHOLD_LABELS, generate_synthetic
from .types import (
    Detection,
    Frame,
    Query,
    QueryType,
    SceneObject,
    SceneTruth,
    SyntheticConfig,
    Trajectory,
)

__all__ = [
    "Detection",
    "Frame",
    "HOUSEHOLD_LABELS",
    "Query",
    "QueryType",
    "SceneObject",
    "SceneTruth",
    "SyntheticConfig",
    "Trajectory",
    "detector_vocabulary",
    "generate_synthetic",
    "load_queries",
    "load_scene_truth",
    "load_trajectory",
    "read_cdpt",
    "save_queries",
    "save_scene_truth",
    "save_trajectory",
    "write_cdpt",
]
