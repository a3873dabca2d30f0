from __future__ import annotations

import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset.types import Detection, Trajectory
from ..errors import LabelNotIndexed, MalformedRecord, MissingFile, NoValidDepth
from ..geometry import backproject_many, bbox_view_angle, camera_to_world_many

OBJECT_DEPTH = "object-depth"
OBJECT_VIEWPOINT = "object-viewpoint"


def normalize_label(label: str) -> str:
    """Lowercase, treat ``_``/``-`` as spaces and collapse runs of whitespace."""
    return re.sub(r"[\s_\-]+", " ", label.strip().lower()).strip()


@dataclass(frozen=True, eq=False)
class IndexEntry:
    label: str
    point: np.ndarray
    source_frame: int
    score: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "point": [float(c) for c in self.point],
            "source_frame": int(self.source_frame),
            "score": float(self.score),
        }


@dataclass(frozen=True, eq=False)
class ObjectIndex:
    variant: str
    entries: dict[str, IndexEntry]
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, label: str) -> bool:
        return normalize_label(label) in self.entries

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries.values()]

    def get(self, label: str) -> IndexEntry:
        try:
            return self.entries[normalize_label(label)]
        except KeyError:
            raise LabelNotIndexed(f"label {label!r} is not in the {self.variant} index") from None

    def lookup(self, label: str) -> np.ndarray:
        return self.get(label).point.copy()

    def to_json(self) -> str:
        data = {
            "variant": self.variant,
            "params": self.params,
            "entries": [self.entries[k].to_dict() for k in sorted(self.entries)],
        }
        return json.dumps(data, indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ObjectIndex":
        path = Path(path)
        if not path.is_file():
            raise MissingFile(f"index file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            entries = {}
            for rec in data["entries"]:
                e = IndexEntry(rec["label"], np.array(rec["point"], dtype=float), rec["source_frame"], rec["score"])
                entries[normalize_label(e.label)] = e
            return cls(data["variant"], entries, data.get("params", {}))
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedRecord(f"bad index file: {e}", path) from None


def _candidates(traj: Trajectory, threshold: float) -> dict[str, list[Detection]]:
    """Detections above threshold grouped by normalized label, in trajectory order."""
    groups: dict[str, list[Detection]] = {}
    for fr in traj.frames:
        for det in fr.detections:
            if det.confidence > threshold:
                groups.setdefault(normalize_label(det.label), []).append(det)
    return groups


def _depth_center(traj: Trajectory, frames: dict, det: Detection) -> np.ndarray | None:
    fr = frames[det.frame_id]
    b = det.bbox
    patch = fr.depth[b.ymin : b.ymax, b.xmin : b.xmax].astype(np.float64)
    valid = np.isfinite(patch) & (patch > 0)
    if not np.any(valid):
        return None
    rows, cols = np.nonzero(valid)
    cam = backproject_many(cols + b.xmin, rows + b.ymin, patch[rows, cols], traj.intrinsics)
    return camera_to_world_many(cam, fr.pose).mean(axis=0)


def build_object_depth(
    traj: Trajectory, threshold: float = 0.8, workers: int = 1, on_missing: str = "raise"
) -> ObjectIndex:
    """Per label, the mean world position of valid depth pixels in its largest bbox.

    If the largest bbox holds no valid depth, the next largest is used.
    ``on_missing="skip"`` drops labels with no usable bbox instead of raising.
    """
    if on_missing not in ("raise", "skip"):
        raise ValueError("on_missing must be 'raise' or 'skip'")
    frames = {fr.frame_id: fr for fr in traj.frames}
    groups = _candidates(traj, threshold)

    def one(key: str):
        # stable sort keeps trajectory order among equal areas
        for det in sorted(groups[key], key=lambda d: -d.bbox.area):
            point = _depth_center(traj, frames, det)
            if point is not None:
                return IndexEntry(det.label, point, det.frame_id, float(det.bbox.area))
        if on_missing == "raise":
            raise NoValidDepth(f"no detection of {groups[key][0].label!r} has valid depth in its bbox")
        return None

    keys = list(groups)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, keys))
    else:
        results = [one(k) for k in keys]
    entries = {k: e for k, e in zip(keys, results) if e is not None}
    return ObjectIndex(OBJECT_DEPTH, entries, {"confidence_threshold": threshold})


def compensated_area(area: float, theta: float) -> float:
    """Bbox area corrected for off-axis enlargement: ``area * cos(theta)**3``."""
    return area * math.cos(theta) ** 3


def viewpoint_score(det: Detection, intr, compensate: bool) -> float:
    area = float(det.bbox.area)
    if not compensate:
        return area
    return compensated_area(area, bbox_view_angle(det.bbox, intr))


def build_object_viewpoint(traj: Trajectory, threshold: float = 0.8, compensate: bool = True) -> ObjectIndex:
    """Per label, the camera position of the frame where its (compensated) bbox is largest."""
    frames = {fr.frame_id: fr for fr in traj.frames}
    entries = {}
    for key, dets in _candidates(traj, threshold).items():
        best, best_score = None, -math.inf
        for det in dets:
            s = viewpoint_score(det, traj.intrinsics, compensate)
            if s > best_score:
                best, best_score = det, s
        pose = frames[best.frame_id].pose
        entries[key] = IndexEntry(best.label, np.array(pose.position), best.frame_id, best_score)
    return ObjectIndex(OBJECT_VIEWPOINT, entries, {"confidence_threshold": threshold, "compensate": compensate})
