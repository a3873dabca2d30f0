"""Spatial language indices: ObjectDepth, ObjectViewpoint and the embedding grid."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import EmbedderMismatch, MalformedRecord, MissingFile
from .embedders import Embedder, HashingEmbedder, SyntheticPixelEmbedder, supports_pixels
from .grid import (
    DEFAULT_CELL_SIZE,
    EMBEDDING_GRID,
    EmbeddingGrid,
    GridAccumulator,
    accumulate_grid,
    query_grid,
)
from .object_index import (
    OBJECT_DEPTH,
    OBJECT_VIEWPOINT,
    IndexEntry,
    ObjectIndex,
    build_object_depth,
    build_object_viewpoint,
    compensated_area,
    normalize_label,
)

INDEX_TYPES = (OBJECT_DEPTH, OBJECT_VIEWPOINT, EMBEDDING_GRID)


def lookup(index, label: str, embedder=None) -> np.ndarray:
    """World point for ``label`` from any index type."""
    if isinstance(index, EmbeddingGrid):
        if embedder is None:
            raise EmbedderMismatch("querying an embedding grid needs the embedder it was built with")
        return query_grid(index, label, embedder).point
    return index.lookup(label)


def save_index(index, path) -> Path:
    if isinstance(index, EmbeddingGrid):
        return index.save(path)
    index.save(path)
    return Path(path)


def load_index(path):
    import json

    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"index file not found: {path}")
    try:
        head = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedRecord(f"invalid JSON: {e.msg}", path, e.lineno) from None
    if head.get("kind") == EMBEDDING_GRID:
        return EmbeddingGrid.load(path)
    return ObjectIndex.load(path)


__all__ = [
    "DEFAULT_CELL_SIZE",
    "EMBEDDING_GRID",
    "Embedder",
    "EmbeddingGrid",
    "GridAccumulator",
    "HashingEmbedder",
    "INDEX_TYPES",
    "IndexEntry",
    "OBJECT_DEPTH",
    "OBJECT_VIEWPOINT",
    "ObjectIndex",
    "SyntheticPixelEmbedder",
    "accumulate_grid",
    "build_object_depth",
    "build_object_viewpoint",
    "compensated_area",
    "load_index",
    "lookup",
    "normalize_label",
    "query_grid",
    "save_index",
    "supports_pixels",
]
