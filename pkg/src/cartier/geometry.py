"""Core geometric types and exact operations.

Conventions: right-handed frames. The camera frame has +Z along the optical
axis, +X to the right and +Y down the image. A pixel ``(u, v)`` addresses
column ``u`` and row ``v`` with integer coordinates at pixel centers.
Quaternions are stored ``(w, x, y, z)`` and rotate camera-frame vectors into
the world frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GeometryError,
    NonPositiveDepth,
    PixelOutOfBounds,
    UnnormalizedQuaternion,
)

QUAT_TOLERANCE = 1e-3


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise GeometryError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Intrinsics":
        return cls(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )


def normalize_quaternion(q, tol: float = QUAT_TOLERANCE) -> tuple[float, float, float, float]:
    """Renormalize ``q``; reject it if its norm is further than ``tol`` from 1."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4,) or not np.all(np.isfinite(q)):
        raise UnnormalizedQuaternion(f"quaternion must be 4 finite numbers, got {q!r}")
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > tol:
        raise UnnormalizedQuaternion(f"quaternion norm {n:.6g} deviates from 1 by more than {tol}")
    q = q / n
    return (float(q[0]), float(q[1]), float(q[2]), float(q[3]))


def quaternion_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quaternion(R) -> tuple[float, float, float, float]:
    """Rotation matrix to a (w, x, y, z) quaternion with w >= 0."""
    from scipy.spatial.transform import Rotation

    x, y, z, w = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    if w < 0:
        w, x, y, z = -w, -x, -y, -z
    return normalize_quaternion((w, x, y, z))


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]
    frame_id: int = 0
    timestamp: float = 0.0
    _R: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pos = tuple(float(c) for c in self.position)
        if len(pos) != 3 or not all(math.isfinite(c) for c in pos):
            raise GeometryError(f"position must be 3 finite numbers, got {self.position!r}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", normalize_quaternion(self.orientation))
        object.__setattr__(self, "frame_id", int(self.frame_id))
        object.__setattr__(self, "timestamp", float(self.timestamp))
        object.__setattr__(self, "_R", quaternion_to_matrix(self.orientation))

    @property
    def rotation(self) -> np.ndarray:
        return self._R.copy()

    @property
    def t(self) -> np.ndarray:
        return np.array(self.position)


@dataclass(frozen=True)
class PixelBBox:
    """Half-open pixel rectangle ``[xmin, xmax) x [ymin, ymax)``."""

    xmin: int
    ymin: int
    xmax: int
    ymax: int

    def __post_init__(self):
        for name in ("xmin", "ymin", "xmax", "ymax"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise GeometryError(f"empty bbox {self.as_list()}")
        if self.xmin < 0 or self.ymin < 0:
            raise GeometryError(f"bbox {self.as_list()} has negative coordinates")

    @property
    def area(self) -> int:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    @property
    def center(self) -> tuple[float, float]:
        # pixel centers sit on integers, so the covered centers span [min, max - 1]
        return ((self.xmin + self.xmax - 1) / 2.0, (self.ymin + self.ymax - 1) / 2.0)

    def fits(self, width: int, height: int) -> bool:
        return self.xmax <= width and self.ymax <= height

    def as_list(self) -> list[int]:
        return [self.xmin, self.ymin, self.xmax, self.ymax]


@dataclass(frozen=True)
class AABB3:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(c) for c in self.min)
        hi = tuple(float(c) for c in self.max)
        if len(lo) != 3 or len(hi) != 3:
            raise GeometryError("AABB corners must be 3-vectors")
        if not all(math.isfinite(c) for c in lo + hi):
            raise GeometryError("AABB corners must be finite")
        if any(a > b for a, b in zip(lo, hi)):
            raise GeometryError(f"AABB min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.min) + np.array(self.max)) / 2.0

    @property
    def size(self) -> np.ndarray:
        return np.array(self.max) - np.array(self.min)

    def corners(self) -> np.ndarray:
        lo, hi = self.min, self.max
        return np.array(
            [[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]] for i in (0, 1) for j in (0, 1) for k in (0, 1)]
        )

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= np.array(self.min) - tol) and np.all(p <= np.array(self.max) + tol))

    def inflate(self, margin: float) -> "AABB3":
        return AABB3(tuple(c - margin for c in self.min), tuple(c + margin for c in self.max))

    def overlaps(self, other: "AABB3", gap: float = 0.0) -> bool:
        return all(
            self.min[i] < other.max[i] + gap and other.min[i] < self.max[i] + gap for i in range(3)
        )

    def to_dict(self) -> dict:
        return {"min": list(self.min), "max": list(self.max)}

    @classmethod
    def from_dict(cls, data: dict) -> "AABB3":
        return cls(tuple(data["min"]), tuple(data["max"]))


# Points are plain float64 3-vectors; the frame tag lives in the function names.
CameraPoint = np.ndarray
WorldPoint = np.ndarray


def backproject(u: float, v: float, z: float, intr: Intrinsics) -> CameraPoint:
    if not z > 0:  # also rejects NaN
        raise NonPositiveDepth(f"depth must be positive, got {z}")
    if not (-0.5 <= u <= intr.width - 0.5 and -0.5 <= v <= intr.height - 0.5):
        raise PixelOutOfBounds(f"pixel ({u}, {v}) outside {intr.width}x{intr.height} image")
    return np.array([(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, float(z)])


def backproject_many(us, vs, zs, intr: Intrinsics) -> np.ndarray:
    """Vectorized :func:`backproject` without validation; returns an (N, 3) array."""
    zs = np.asarray(zs, dtype=np.float64)
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    return np.stack([(us - intr.cx) * zs / intr.fx, (vs - intr.cy) * zs / intr.fy, zs], axis=-1)


def project(p: CameraPoint, intr: Intrinsics) -> tuple[float, float]:
    """Pinhole projection of a camera-frame point; inverse of :func:`backproject`."""
    x, y, z = (float(c) for c in p)
    if not z > 0:
        raise NonPositiveDepth(f"cannot project point with z={z}")
    return (intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy)


def camera_to_world(p: CameraPoint, pose: Pose) -> WorldPoint:
    return pose._R @ np.asarray(p, dtype=float) + np.array(pose.position)


def camera_to_world_many(points: np.ndarray, pose: Pose) -> np.ndarray:
    return np.asarray(points, dtype=float) @ pose._R.T + np.array(pose.position)


def world_to_camera(p: WorldPoint, pose: Pose) -> CameraPoint:
    return pose._R.T @ (np.asarray(p, dtype=float) - np.array(pose.position))


def point_to_aabb_distance(p: WorldPoint, box: AABB3) -> float:
    p = np.asarray(p, dtype=float)
    lo = np.array(box.min)
    hi = np.array(box.max)
    gap = np.maximum(np.maximum(lo - p, 0.0), p - hi)
    return float(math.sqrt(float(np.dot(gap, gap))))


def bbox_view_angle(b: PixelBBox, intr: Intrinsics) -> float:
    """Angle between the optical axis and the ray through the bbox center."""
    uc, vc = b.center
    return math.atan(math.hypot((uc - intr.cx) / intr.fx, (vc - intr.cy) / intr.fy))


def look_rotation(forward, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world rotation for a camera looking along ``forward``.

    The image's down direction is aligned with ``-up`` as far as possible.
    """
    f = np.asarray(forward, dtype=float)
    f = f / np.linalg.norm(f)
    right = np.cross(f, np.asarray(up, dtype=float))
    n = np.linalg.norm(right)
    if n < 1e-12:
        raise GeometryError("forward direction is parallel to up")
    right /= n
    down = np.cross(f, right)
    return np.column_stack([right, down, f])
