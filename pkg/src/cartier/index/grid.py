"""Top-down embedding grid queried by text similarity."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..dataset.types import Frame, Trajectory
from ..errors import (
    EmbedderLacksPixelCapability,
    EmbedderMismatch,
    EmptyGrid,
    MalformedRecord,
    MissingFile,
)
from ..geometry import backproject_many, camera_to_world_many
from .embedders import supports_pixels
from .object_index import IndexEntry

DEFAULT_CELL_SIZE = 0.1
EMBEDDING_GRID = "embedding-grid"


@dataclass
class _Partial:
    """Per-frame sums keyed by integer cell coordinates (ix, iy)."""

    keys: np.ndarray  # (n, 2) int64
    emb_sum: np.ndarray  # (n, d)
    z_sum: np.ndarray  # (n,)
    count: np.ndarray  # (n,)


def _frame_partial(frame: Frame, intr, pixel_emb: np.ndarray, cell_size: float) -> _Partial | None:
    depth = frame.depth.astype(np.float64)
    valid = np.isfinite(depth) & (depth > 0)
    if not np.any(valid):
        return None
    rows, cols = np.nonzero(valid)
    world = camera_to_world_many(backproject_many(cols, rows, depth[rows, cols], intr), frame.pose)
    emb = np.asarray(pixel_emb, dtype=np.float64)[rows, cols]
    ij = np.floor(world[:, :2] / cell_size).astype(np.int64)
    keys, inverse = np.unique(ij, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    emb_sum = np.zeros((len(keys), emb.shape[1]))
    np.add.at(emb_sum, inverse, emb)
    z_sum = np.bincount(inverse, weights=world[:, 2], minlength=len(keys))
    count = np.bincount(inverse, minlength=len(keys))
    return _Partial(keys, emb_sum, z_sum, count)


class GridAccumulator:
    """Collects per-frame contributions; the reduction runs in frame-id order.

    Frames may be added in any order (or from several threads through
    :meth:`merge`); the finished grid is bitwise identical.
    """

    def __init__(self, intrinsics, cell_size: float = DEFAULT_CELL_SIZE, dimension: int | None = None):
        if not cell_size > 0:
            raise ValueError("cell_size must be positive")
        self.intrinsics = intrinsics
        self.cell_size = float(cell_size)
        self.dimension = dimension
        self._partials: dict[int, _Partial | None] = {}

    def add_frame(self, frame: Frame, pixel_embeddings: np.ndarray) -> None:
        pe = np.asarray(pixel_embeddings)
        if pe.shape[:2] != frame.depth.shape or pe.ndim != 3:
            raise ValueError(
                f"frame {frame.frame_id}: pixel embeddings {pe.shape} do not match depth {frame.depth.shape}"
            )
        if self.dimension is None:
            self.dimension = pe.shape[2]
        elif pe.shape[2] != self.dimension:
            raise ValueError(f"embedding dimension {pe.shape[2]} != {self.dimension}")
        self._partials[frame.frame_id] = _frame_partial(frame, self.intrinsics, pe, self.cell_size)

    def merge(self, other: "GridAccumulator") -> None:
        self._partials.update(other._partials)

    def finalize(self, embedder_id: str, dropped_dims=()) -> "EmbeddingGrid":
        parts = [self._partials[k] for k in sorted(self._partials) if self._partials[k] is not None]
        d = self.dimension or 0
        if not parts:
            return EmbeddingGrid(
                self.cell_size, (0.0, 0.0), np.zeros((0, 0, d)), np.zeros((0, 0), np.int64),
                np.zeros((0, 0)), embedder_id, tuple(dropped_dims),
            )
        all_keys = np.concatenate([p.keys for p in parts])
        lo = all_keys.min(axis=0)
        hi = all_keys.max(axis=0)
        cols, rows = (hi - lo + 1).tolist()
        emb = np.zeros((rows, cols, d))
        z = np.zeros((rows, cols))
        cnt = np.zeros((rows, cols), dtype=np.int64)
        for p in parts:
            c = p.keys[:, 0] - lo[0]
            r = p.keys[:, 1] - lo[1]
            emb[r, c] += p.emb_sum  # keys are unique within a partial
            z[r, c] += p.z_sum
            cnt[r, c] += p.count
        filled = cnt > 0
        emb[filled] /= cnt[filled][:, None]
        z[filled] /= cnt[filled]
        origin = (float(lo[0] * self.cell_size), float(lo[1] * self.cell_size))
        return EmbeddingGrid(self.cell_size, origin, emb, cnt, z, embedder_id, tuple(dropped_dims))


@dataclass(frozen=True, eq=False)
class EmbeddingGrid:
    """Cells indexed ``[row, col]`` with rows along world +y and columns along +x.

    ``means`` holds the raw running mean of contributing pixel embeddings;
    :attr:`embeddings` is the unit-normalized view used for similarity.
    """

    cell_size: float
    origin: tuple[float, float]
    means: np.ndarray
    counts: np.ndarray
    heights: np.ndarray
    embedder_id: str
    dropped_dims: tuple[int, ...] = field(default=())

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def dimension(self) -> int:
        return self.means.shape[2]

    @property
    def embeddings(self) -> np.ndarray:
        n = np.linalg.norm(self.means, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, self.means / n, 0.0)

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (self.origin[0] + (col + 0.5) * self.cell_size, self.origin[1] + (row + 0.5) * self.cell_size)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (
            int(math.floor((y - self.origin[1]) / self.cell_size + 1e-9)),
            int(math.floor((x - self.origin[0]) / self.cell_size + 1e-9)),
        )

    def with_dropped_dims(self, dims) -> "EmbeddingGrid":
        dims = tuple(sorted(set(int(d) for d in dims)))
        if any(not (0 <= d < self.dimension) for d in dims):
            raise ValueError(f"dropped dims {dims} out of range for dimension {self.dimension}")
        return EmbeddingGrid(self.cell_size, self.origin, self.means, self.counts, self.heights, self.embedder_id, dims)

    def similarities(self, query_vec: np.ndarray) -> np.ndarray:
        """Cosine similarity per cell after zeroing dropped dims; NaN where undefined."""
        keep = np.ones(self.dimension, dtype=bool)
        keep[list(self.dropped_dims)] = False
        q = np.where(keep, np.asarray(query_vec, dtype=np.float64), 0.0)
        qn = np.linalg.norm(q)
        sims = np.full(self.shape, np.nan)
        if qn == 0:
            return sims
        m = np.where(keep, self.means, 0.0)
        mn = np.linalg.norm(m, axis=-1)
        ok = (self.counts > 0) & (mn > 0)
        sims[ok] = (m[ok] @ q) / (mn[ok] * qn)
        return sims

    # -- serialization: grid.json manifest + float32 blob of unit cell embeddings
    def save(self, path) -> Path:
        path = Path(path)
        blob = path.with_suffix(".bin")
        emb = self.embeddings.astype("<f4")
        blob.write_bytes(np.ascontiguousarray(emb).tobytes())
        manifest = {
            "kind": EMBEDDING_GRID,
            "cell_size": self.cell_size,
            "origin": list(self.origin),
            "rows": int(self.shape[0]),
            "cols": int(self.shape[1]),
            "dimension": int(self.dimension),
            "embedder": self.embedder_id,
            "dropped_dims": list(self.dropped_dims),
            "blob": blob.name,
            "counts": self.counts.tolist(),
            "heights": [[float(h) for h in row] for row in self.heights],
        }
        path.write_text(json.dumps(manifest) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "EmbeddingGrid":
        path = Path(path)
        if not path.is_file():
            raise MissingFile(f"grid manifest not found: {path}")
        try:
            m = json.loads(path.read_text(encoding="utf-8"))
            rows, cols, d = m["rows"], m["cols"], m["dimension"]
            blob = path.parent / m["blob"]
            if not blob.is_file():
                raise MissingFile(f"grid blob not found: {blob}")
            raw = np.frombuffer(blob.read_bytes(), dtype="<f4")
            if raw.size != rows * cols * d:
                raise MalformedRecord(f"blob holds {raw.size} floats, expected {rows * cols * d}", blob)
            return cls(
                float(m["cell_size"]),
                tuple(m["origin"]),
                raw.reshape(rows, cols, d).astype(np.float64),
                np.array(m["counts"], dtype=np.int64).reshape(rows, cols),
                np.array(m["heights"], dtype=np.float64).reshape(rows, cols),
                m["embedder"],
                tuple(m["dropped_dims"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedRecord(f"bad grid manifest: {e}", path) from None


def accumulate_grid(
    traj: Trajectory,
    embedder=None,
    cell_size: float = DEFAULT_CELL_SIZE,
    pixel_embeddings: Mapping[int, np.ndarray] | None = None,
    dropped_dims=(),
    workers: int = 1,
    embedder_id: str | None = None,
) -> EmbeddingGrid:
    """Drop every valid depth pixel onto the top-down grid, averaging embeddings per cell.

    Per-pixel embeddings come from ``pixel_embeddings[frame_id]`` when given,
    otherwise from ``embedder.embed_pixels(frame)``.
    """
    if pixel_embeddings is None and not supports_pixels(embedder):
        name = getattr(embedder, "identity", type(embedder).__name__)
        raise EmbedderLacksPixelCapability(
            f"embedder {name!r} cannot embed pixels and no precomputed pixel embeddings were supplied"
        )
    ident = embedder_id or getattr(embedder, "identity", None)
    if ident is None:
        raise EmbedderMismatch("an embedder identity is required to tag the grid")

    def pixels_for(frame):
        if pixel_embeddings is not None:
            return pixel_embeddings[frame.frame_id]
        return embedder.embed_pixels(frame)

    acc = GridAccumulator(traj.intrinsics, cell_size, getattr(embedder, "dimension", None))
    if workers > 1:
        def run(chunk):
            part = GridAccumulator(traj.intrinsics, cell_size, acc.dimension)
            for fr in chunk:
                part.add_frame(fr, pixels_for(fr))
            return part

        chunks = [traj.frames[i::workers] for i in range(workers)]
        with ThreadPoolExecutor(workers) as pool:
            for part in pool.map(run, chunks):
                acc.merge(part)
    else:
        for fr in traj.frames:
            acc.add_frame(fr, pixels_for(fr))
    return acc.finalize(ident, dropped_dims)


def query_grid(grid: EmbeddingGrid, text: str, embedder) -> IndexEntry:
    """Center of the cell most similar to ``text``; ties go to the lowest (row, col)."""
    if embedder.identity != grid.embedder_id:
        raise EmbedderMismatch(f"grid was built with {grid.embedder_id!r}, query uses {embedder.identity!r}")
    if grid.counts.size == 0 or not np.any(grid.counts > 0):
        raise EmptyGrid("grid has no populated cells")
    sims = grid.similarities(embedder.embed_text(text))
    if np.all(np.isnan(sims)):
        raise EmptyGrid(f"no cell has a defined similarity to {text!r} (all dimensions dropped?)")
    flat = np.where(np.isnan(sims), -np.inf, sims).ravel()
    idx = int(np.argmax(flat))  # first maximum in row-major order
    row, col = divmod(idx, grid.shape[1])
    x, y = grid.cell_center(row, col)
    return IndexEntry(text, np.array([x, y, float(grid.heights[row, col])]), -1, float(flat[idx]))
