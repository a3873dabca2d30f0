from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import (
    DatasetError,
    InvalidQueryType,
    ManifestMismatch,
    MalformedRecord,
    UnknownPlausibleLabel,
)
from ..geometry import AABB3, Intrinsics, PixelBBox, Pose


class QueryType(str, Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"
    CONVERSATIONAL = "conversational"

    @classmethod
    def parse(cls, value: str) -> "QueryType":
        try:
            return cls(value)
        except ValueError:
            allowed = ", ".join(t.value for t in cls)
            raise InvalidQueryType(f"query_type {value!r} is not one of: {allowed}") from None


@dataclass(frozen=True)
class Detection:
    frame_id: int
    label: str
    confidence: float
    bbox: PixelBBox

    def __post_init__(self):
        if not isinstance(self.label, str) or not self.label.strip():
            raise DatasetError("detection label must be non-empty")
        c = float(self.confidence)
        if not (0.0 <= c <= 1.0):
            raise DatasetError(f"confidence {c} outside [0, 1]")
        object.__setattr__(self, "confidence", c)
        object.__setattr__(self, "frame_id", int(self.frame_id))


@dataclass(frozen=True, eq=False)
class Frame:
    pose: Pose
    depth: np.ndarray
    detections: tuple[Detection, ...] = ()

    @property
    def frame_id(self) -> int:
        return self.pose.frame_id


@dataclass(frozen=True, eq=False)
class Trajectory:
    intrinsics: Intrinsics
    frames: tuple[Frame, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        intr = self.intrinsics
        prev = None
        for fr in frames:
            if prev is not None and fr.frame_id <= prev:
                raise DatasetError(f"frame ids must be strictly increasing ({prev} then {fr.frame_id})")
            prev = fr.frame_id
            if fr.depth.shape != (intr.height, intr.width):
                raise ManifestMismatch(
                    f"frame {fr.frame_id}: depth is {fr.depth.shape[1]}x{fr.depth.shape[0]}, "
                    f"intrinsics say {intr.width}x{intr.height}"
                )
            for det in fr.detections:
                if det.frame_id != fr.frame_id:
                    raise MalformedRecord(
                        f"detection for frame {det.frame_id} attached to frame {fr.frame_id}"
                    )
                if not det.bbox.fits(intr.width, intr.height):
                    raise MalformedRecord(
                        f"frame {fr.frame_id}: bbox {det.bbox.as_list()} exceeds image bounds"
                    )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def detections(self) -> list[Detection]:
        return [d for fr in self.frames for d in fr.detections]

    def frame(self, frame_id: int) -> Frame:
        for fr in self.frames:
            if fr.frame_id == frame_id:
                return fr
        raise KeyError(frame_id)


@dataclass(frozen=True)
class SceneObject:
    instance_id: str
    label: str
    aabb: AABB3


@dataclass(frozen=True)
class SceneTruth:
    scene_id: str
    objects: tuple[SceneObject, ...]

    def __post_init__(self):
        objs = tuple(self.objects)
        object.__setattr__(self, "objects", objs)
        seen = set()
        for o in objs:
            if o.instance_id in seen:
                raise DatasetError(f"duplicate instance_id {o.instance_id!r} in scene {self.scene_id!r}")
            seen.add(o.instance_id)

    @property
    def labels(self) -> list[str]:
        out: list[str] = []
        for o in self.objects:
            if o.label not in out:
                out.append(o.label)
        return out

    def boxes_for(self, labels) -> list[AABB3]:
        wanted = set(labels)
        return [o.aabb for o in self.objects if o.label in wanted]


@dataclass(frozen=True)
class Query:
    query_id: str
    query_type: QueryType
    text: str
    plausible_labels: tuple[str, ...]

    def __post_init__(self):
        if not isinstance(self.query_type, QueryType):
            object.__setattr__(self, "query_type", QueryType.parse(self.query_type))
        labels = tuple(self.plausible_labels)
        if not labels:
            raise DatasetError(f"query {self.query_id!r} has no plausible labels")
        object.__setattr__(self, "plausible_labels", labels)

    def check_against(self, truth: SceneTruth) -> None:
        present = set(truth.labels)
        for label in self.plausible_labels:
            if label not in present:
                raise UnknownPlausibleLabel(
                    f"query {self.query_id!r}: plausible label {label!r} not in scene {truth.scene_id!r}"
                )


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 0
    room_extents: tuple[float, float, float] = (6.0, 5.0, 2.6)
    object_count: int = 10
    object_size_range: tuple[float, float] = (0.3, 0.9)
    waypoint_count: int = 8
    headings_per_waypoint: int = 8
    camera_height: float = 1.5
    camera_pitch_deg: float = 25.0
    depth_noise_sigma: float = 0.0
    image_width: int = 128
    image_height: int = 96
    fov_deg: float = 90.0

    def __post_init__(self):
        if self.object_count <= 0 or self.waypoint_count <= 0 or self.headings_per_waypoint <= 0:
            raise DatasetError("object, waypoint and heading counts must be positive")
        if len(self.room_extents) != 3 or any(not (e > 0) for e in self.room_extents):
            raise DatasetError(f"room extents must be positive, got {self.room_extents}")
        lo, hi = self.object_size_range
        if not (0 < lo <= hi):
            raise DatasetError(f"invalid object size range {self.object_size_range}")
        if not (0 < self.camera_height < self.room_extents[2]):
            raise DatasetError("camera height must lie inside the room")
        if self.depth_noise_sigma < 0 or not math.isfinite(self.depth_noise_sigma):
            raise DatasetError("depth noise sigma must be a non-negative number")
        if self.image_width <= 0 or self.image_height <= 0 or not (0 < self.fov_deg < 180):
            raise DatasetError("invalid image size or field of view")
