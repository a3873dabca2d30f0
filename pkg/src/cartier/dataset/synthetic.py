"""Deterministic synthetic household scenes with analytic ground truth.

Objects are floor-standing axis-aligned boxes inside a box-shaped room. Depth
images are ray-cast exactly, so every valid depth pixel inside a detection's
box lands on that object's surface. Pixels inside a detection box that show
anything else (background around the silhouette, or other objects) are written
as invalid depth, the way real sensors drop mixed pixels at object edges.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import PlacementFailure
from ..geometry import AABB3, Intrinsics, PixelBBox, Pose, look_rotation, matrix_to_quaternion
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

HOUSEHOLD_LABELS = (
    "bed", "sofa", "armchair", "dining table", "coffee table", "desk", "office chair",
    "bookshelf", "television", "refrigerator", "microwave", "oven", "sink", "dishwasher",
    "toilet", "bathtub", "shower", "washing machine", "laundry basket", "wardrobe",
    "dresser", "nightstand", "lamp", "houseplant", "trash can", "coffee machine",
    "toaster", "kettle", "piano", "fireplace", "mirror", "ottoman", "bench", "cabinet",
    "fish tank", "treadmill", "vacuum cleaner", "ironing board", "printer", "shoe rack",
)

NEAR_PLANE = 0.05
PLACEMENT_RETRIES = 2000
OBJECT_GAP = 0.25
WALL_MARGIN = 0.2
ROBOT_CLEARANCE = 0.4


def intrinsics_for(width: int, height: int, fov_deg: float) -> Intrinsics:
    f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return Intrinsics(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height)


def camera_pose(position, yaw: float, pitch: float, frame_id: int = 0, timestamp: float = 0.0) -> Pose:
    """Pose of a camera at ``position`` looking along ``yaw`` (about +Z) and tilted down by ``pitch``."""
    forward = (math.cos(pitch) * math.cos(yaw), math.cos(pitch) * math.sin(yaw), -math.sin(pitch))
    q = matrix_to_quaternion(look_rotation(forward))
    return Pose(tuple(position), q, frame_id, timestamp)


def pixel_rays(intr: Intrinsics) -> np.ndarray:
    """Camera-frame ray per pixel, scaled so the z component is 1; shape (H, W, 3)."""
    v, u = np.mgrid[0 : intr.height, 0 : intr.width].astype(np.float64)
    return np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)


def _slab(origin, dirs, lo, hi):
    """Entry/exit ray parameters against a box for rays ``origin + t * dirs``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (np.asarray(lo) - origin) * inv
        t1 = (np.asarray(hi) - origin) * inv
    # rays parallel to a slab: inside -> unbounded, outside -> empty
    par = dirs == 0.0
    if np.any(par):
        inside = (origin >= np.asarray(lo)) & (origin <= np.asarray(hi))
        inside = np.broadcast_to(inside, dirs.shape)
        t0 = np.where(par, np.where(inside, -np.inf, np.inf), t0)
        t1 = np.where(par, np.where(inside, np.inf, -np.inf), t1)
    tmin = np.minimum(t0, t1).max(axis=-1)
    tmax = np.maximum(t0, t1).min(axis=-1)
    return tmin, tmax


def render_frame(objects, room: AABB3, pose: Pose, intr: Intrinsics):
    """Ray-cast z-depth and per-pixel object index (-1 for the room shell)."""
    rays_cam = pixel_rays(intr)
    dirs = rays_cam @ pose.rotation.T
    origin = pose.t
    _, t_room = _slab(origin, dirs, room.min, room.max)
    depth = t_room.copy()
    ids = np.full(depth.shape, -1, dtype=np.int64)
    for k, obj in enumerate(objects):
        box = obj.aabb if isinstance(obj, SceneObject) else obj
        tmin, tmax = _slab(origin, dirs, box.min, box.max)
        hit = (tmin <= tmax) & (tmin > 0) & (tmin < depth)
        depth = np.where(hit, tmin, depth)
        ids = np.where(hit, k, ids)
    return depth, ids


def project_box_bbox(box: AABB3, pose: Pose, intr: Intrinsics) -> PixelBBox | None:
    """Pixel bbox covering the projection of the box's 8 corners, clipped to the image.

    Returns None if any corner lies behind the near plane or nothing is left after clipping.
    """
    pts = (box.corners() - pose.t) @ pose.rotation
    if np.any(pts[:, 2] <= NEAR_PLANE):
        return None
    u = intr.fx * pts[:, 0] / pts[:, 2] + intr.cx
    v = intr.fy * pts[:, 1] / pts[:, 2] + intr.cy
    # pixel i is covered when its center (the integer i) lies within the projected span
    xmin = max(int(math.ceil(u.min())), 0)
    ymin = max(int(math.ceil(v.min())), 0)
    xmax = min(int(math.floor(u.max())) + 1, intr.width)
    ymax = min(int(math.floor(v.max())) + 1, intr.height)
    if xmin >= xmax or ymin >= ymax:
        return None
    return PixelBBox(xmin, ymin, xmax, ymax)


def _center_visible(k: int, objects, pose: Pose, intr: Intrinsics) -> bool:
    target = objects[k].aabb
    c_cam = (target.center - pose.t) @ pose.rotation
    if c_cam[2] <= NEAR_PLANE:
        return False
    u = intr.fx * c_cam[0] / c_cam[2] + intr.cx
    v = intr.fy * c_cam[1] / c_cam[2] + intr.cy
    if not (-0.5 <= u < intr.width - 0.5 and -0.5 <= v < intr.height - 0.5):
        return False
    d = target.center - pose.t
    t_target, _ = _slab(pose.t, d[None, :], target.min, target.max)
    for j, other in enumerate(objects):
        if j == k:
            continue
        tmin, tmax = _slab(pose.t, d[None, :], other.aabb.min, other.aabb.max)
        if tmin[0] <= tmax[0] and 0 < tmin[0] < t_target[0]:
            return False
    return True


def observe(objects, room: AABB3, pose: Pose, intr: Intrinsics):
    """Render one frame and emit detections for every visible object.

    An object is a candidate when its box center is in view and unoccluded.
    Inside the bbox of each detected object, pixels that show anything other
    than that object are written as invalid depth, so the valid pixels of a
    detection always lie on the detected box. Candidates left without a single
    valid pixel are dropped.
    """
    depth, ids = render_frame(objects, room, pose, intr)
    cands: dict[int, PixelBBox] = {}
    for k, obj in enumerate(objects):
        if not _center_visible(k, objects, pose, intr):
            continue
        bbox = project_box_bbox(obj.aabb, pose, intr)
        if bbox is not None:
            cands[k] = bbox

    while True:
        # owner[p]: -2 outside every bbox, k if only bboxes of object k cover p, -3 if mixed
        owner = np.full(ids.shape, -2, dtype=np.int64)
        for k, b in cands.items():
            region = owner[b.ymin : b.ymax, b.xmin : b.xmax]
            region[:] = np.where(region == -2, k, np.where(region == k, k, -3))
        invalid = (owner != -2) & (owner != ids)
        empty = [k for k, b in cands.items() if not np.any(~invalid[b.ymin : b.ymax, b.xmin : b.xmax])]
        if not empty:
            break
        for k in empty:
            del cands[k]

    detections = [Detection(pose.frame_id, objects[k].label, 1.0, b) for k, b in sorted(cands.items())]
    return np.where(invalid, 0.0, depth), detections


def _place_objects(cfg: SyntheticConfig, rng: np.random.Generator) -> list[SceneObject]:
    X, Y, _ = cfg.room_extents
    if cfg.object_count <= len(HOUSEHOLD_LABELS):
        picks = rng.choice(len(HOUSEHOLD_LABELS), size=cfg.object_count, replace=False)
    else:
        picks = rng.choice(len(HOUSEHOLD_LABELS), size=cfg.object_count, replace=True)
    lo, hi = cfg.object_size_range
    placed: list[SceneObject] = []
    counts: dict[str, int] = {}
    for idx in picks:
        label = HOUSEHOLD_LABELS[int(idx)]
        for _ in range(PLACEMENT_RETRIES):
            sx, sy, sz = rng.uniform(lo, hi, size=3)
            sz = min(sz, cfg.camera_height - 0.1)
            x0 = rng.uniform(WALL_MARGIN, X - WALL_MARGIN - sx) if X - 2 * WALL_MARGIN > sx else None
            y0 = rng.uniform(WALL_MARGIN, Y - WALL_MARGIN - sy) if Y - 2 * WALL_MARGIN > sy else None
            if x0 is None or y0 is None:
                continue
            box = AABB3((x0, y0, 0.0), (x0 + sx, y0 + sy, sz))
            if any(box.overlaps(o.aabb, OBJECT_GAP) for o in placed):
                continue
            n = counts.get(label, 0)
            counts[label] = n + 1
            slug = label.replace(" ", "_")
            placed.append(SceneObject(f"{slug}_{n}", label, box))
            break
        else:
            raise PlacementFailure(
                f"could not place object {len(placed) + 1}/{cfg.object_count} "
                f"after {PLACEMENT_RETRIES} attempts"
            )
    return placed


def _sample_waypoints(cfg: SyntheticConfig, objects, rng: np.random.Generator) -> list[tuple[float, float]]:
    X, Y, _ = cfg.room_extents
    pts = []
    # spread waypoints over a coarse grid of room sectors, one random point per visit
    cols = max(1, int(math.ceil(math.sqrt(cfg.waypoint_count * X / Y))))
    rows = max(1, int(math.ceil(cfg.waypoint_count / cols)))
    sectors = [(i, j) for j in range(rows) for i in range(cols)]
    for n in range(cfg.waypoint_count):
        i, j = sectors[n % len(sectors)]
        for attempt in range(PLACEMENT_RETRIES):
            if attempt < PLACEMENT_RETRIES // 4:
                x = rng.uniform(i * X / cols, (i + 1) * X / cols)
                y = rng.uniform(j * Y / rows, (j + 1) * Y / rows)
            else:  # sector is crowded, take any free spot
                x = rng.uniform(0.0, X)
                y = rng.uniform(0.0, Y)
            if not (ROBOT_CLEARANCE <= x <= X - ROBOT_CLEARANCE and ROBOT_CLEARANCE <= y <= Y - ROBOT_CLEARANCE):
                continue
            probe = AABB3((x, y, 0.0), (x, y, cfg.camera_height))
            if any(probe.overlaps(o.aabb, ROBOT_CLEARANCE) for o in objects):
                continue
            pts.append((x, y))
            break
        else:
            raise PlacementFailure(f"could not find free space for waypoint {n}")
    return pts


def generate_synthetic(config: SyntheticConfig | None = None, scene_id: str | None = None):
    """Build ``(trajectory, scene_truth, queries)`` as a pure function of ``config``."""
    cfg = config or SyntheticConfig()
    rng = np.random.default_rng(cfg.seed)
    scene_id = scene_id or f"synthetic-{cfg.seed}"
    X, Y, Z = cfg.room_extents
    room = AABB3((0.0, 0.0, 0.0), (X, Y, Z))
    intr = intrinsics_for(cfg.image_width, cfg.image_height, cfg.fov_deg)

    objects = _place_objects(cfg, rng)
    waypoints = _sample_waypoints(cfg, objects, rng)
    noise_rng = np.random.default_rng([cfg.seed, 1])
    pitch = math.radians(cfg.camera_pitch_deg)

    frames = []
    fid = 0
    for x, y in waypoints:
        offset = rng.uniform(0.0, 2 * math.pi / cfg.headings_per_waypoint)
        for h in range(cfg.headings_per_waypoint):
            yaw = offset + 2 * math.pi * h / cfg.headings_per_waypoint
            pose = camera_pose((x, y, cfg.camera_height), yaw, pitch, fid, 0.5 * fid)
            depth, dets = observe(objects, room, pose, intr)
            if cfg.depth_noise_sigma > 0:
                valid = depth > 0
                noise = noise_rng.normal(0.0, cfg.depth_noise_sigma, size=depth.shape)
                depth = np.where(valid, depth + noise, depth)
            frames.append(Frame(pose, depth.astype(np.float32), tuple(dets)))
            fid += 1

    truth = SceneTruth(scene_id, tuple(objects))
    queries = [
        Query(f"{scene_id}-explicit-{i:02d}", QueryType.EXPLICIT, f"go to the {o.label}", (o.label,))
        for i, o in enumerate(objects)
    ]
    return Trajectory(intr, tuple(frames)), truth, queries
