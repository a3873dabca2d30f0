"""On-disk formats for trajectories, scenes and query sets.

A trajectory directory holds::

    manifest.json       intrinsics, frame count, depth file pattern
    poses.jsonl         {"frame_id", "timestamp", "position", "quaternion"} per line
    detections.jsonl    {"frame_id", "label", "confidence", "bbox"} per line
    depth/000000.cdpt   one depth image per frame

Depth files (``.cdpt``) are the magic ``b"CDPT"``, then little-endian u32
version (1), width and height, then ``width * height`` little-endian float32
depths in meters, row-major from the top-left pixel. Values <= 0 or NaN mark
invalid pixels.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import (
    CartierError,
    DatasetError,
    MalformedRecord,
    ManifestMismatch,
    MissingFile,
)
from ..geometry import AABB3, Intrinsics, PixelBBox, Pose
from .types import Detection, Frame, Query, QueryType, SceneObject, SceneTruth, Trajectory

CDPT_MAGIC = b"CDPT"
CDPT_VERSION = 1
_HEADER = struct.Struct("<4sIII")
DEFAULT_DEPTH_PATTERN = "depth/{frame_id:06d}.cdpt"


def write_cdpt(path, depth: np.ndarray) -> None:
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise ValueError(f"depth must be 2-D, got shape {depth.shape}")
    h, w = depth.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(CDPT_MAGIC, CDPT_VERSION, w, h))
        f.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def read_cdpt(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"depth file not found: {path}")
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise MalformedRecord("truncated depth header", path)
    magic, version, w, h = _HEADER.unpack_from(data)
    if magic != CDPT_MAGIC:
        raise MalformedRecord(f"bad magic {magic!r}", path)
    if version != CDPT_VERSION:
        raise MalformedRecord(f"unsupported depth version {version}", path)
    expected = _HEADER.size + 4 * w * h
    if len(data) != expected:
        raise MalformedRecord(f"expected {expected} bytes for {w}x{h} depth, found {len(data)}", path)
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(h, w)
    return arr.astype(np.float32)


def read_cdpt_shape(path) -> tuple[int, int]:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise MalformedRecord("truncated depth header", path)
    _, _, w, h = _HEADER.unpack(head)
    return w, h


def _read_jsonl(path: Path):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(f"invalid JSON: {e.msg}", path, lineno) from None


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingFile(f"required file not found: {path}")
    return path


def load_trajectory(directory) -> Trajectory:
    root = Path(directory)
    if not root.is_dir():
        raise MissingFile(f"trajectory directory not found: {root}")
    manifest_path = _require(root / "manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        intr = Intrinsics.from_dict(manifest["intrinsics"])
        frame_count = int(manifest["frame_count"])
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedRecord(f"bad manifest: {e}", manifest_path) from None
    pattern = manifest.get("depth_pattern", DEFAULT_DEPTH_PATTERN)

    poses_path = _require(root / "poses.jsonl")
    poses: list[Pose] = []
    for lineno, rec in _read_jsonl(poses_path):
        try:
            pose = Pose(
                position=tuple(rec["position"]),
                orientation=tuple(rec["quaternion"]),
                frame_id=rec["frame_id"],
                timestamp=rec.get("timestamp", 0.0),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedRecord(f"bad pose record: {e}", poses_path, lineno) from None
        if poses and pose.frame_id <= poses[-1].frame_id:
            raise MalformedRecord(
                f"frame_id {pose.frame_id} not greater than previous {poses[-1].frame_id}",
                poses_path,
                lineno,
            )
        poses.append(pose)
    if len(poses) != frame_count:
        raise ManifestMismatch(f"manifest declares {frame_count} frames, poses.jsonl has {len(poses)}")

    known = {p.frame_id for p in poses}
    dets: dict[int, list[Detection]] = {fid: [] for fid in known}
    det_path = _require(root / "detections.jsonl")
    for lineno, rec in _read_jsonl(det_path):
        try:
            bbox = PixelBBox(*rec["bbox"])
            det = Detection(rec["frame_id"], rec["label"], rec["confidence"], bbox)
        except (KeyError, TypeError, ValueError, CartierError) as e:
            raise MalformedRecord(f"bad detection record: {e}", det_path, lineno) from None
        if det.frame_id not in known:
            raise MalformedRecord(f"detection references unknown frame_id {det.frame_id}", det_path, lineno)
        if not bbox.fits(intr.width, intr.height):
            raise MalformedRecord(
                f"bbox {bbox.as_list()} exceeds {intr.width}x{intr.height} image", det_path, lineno
            )
        dets[det.frame_id].append(det)

    frames = []
    for pose in poses:
        dpath = root / pattern.format(frame_id=pose.frame_id)
        if not dpath.is_file():
            raise MissingFile(f"depth file not found: {dpath}")
        w, h = read_cdpt_shape(dpath)
        if (w, h) != (intr.width, intr.height):
            raise ManifestMismatch(
                f"{dpath}: depth is {w}x{h}, manifest intrinsics say {intr.width}x{intr.height}"
            )
        frames.append(Frame(pose=pose, depth=read_cdpt(dpath), detections=tuple(dets[pose.frame_id])))
    return Trajectory(intr, tuple(frames))


def save_trajectory(traj: Trajectory, directory, depth_pattern: str = DEFAULT_DEPTH_PATTERN) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": 1,
        "intrinsics": traj.intrinsics.to_dict(),
        "frame_count": len(traj.frames),
        "depth_pattern": depth_pattern,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    with open(root / "poses.jsonl", "w", encoding="utf-8") as f:
        for fr in traj.frames:
            p = fr.pose
            rec = {
                "frame_id": p.frame_id,
                "timestamp": p.timestamp,
                "position": list(p.position),
                "quaternion": list(p.orientation),
            }
            f.write(json.dumps(rec) + "\n")
    with open(root / "detections.jsonl", "w", encoding="utf-8") as f:
        for fr in traj.frames:
            for d in fr.detections:
                rec = {
                    "frame_id": d.frame_id,
                    "label": d.label,
                    "confidence": d.confidence,
                    "bbox": d.bbox.as_list(),
                }
                f.write(json.dumps(rec) + "\n")
    for fr in traj.frames:
        write_cdpt(root / depth_pattern.format(frame_id=fr.frame_id), fr.depth)
    return root


def load_scene_truth(path) -> SceneTruth:
    path = _require(Path(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        objects = tuple(
            SceneObject(str(o["instance_id"]), str(o["label"]), AABB3.from_dict(o["aabb"]))
            for o in data["objects"]
        )
        return SceneTruth(str(data["scene_id"]), objects)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise MalformedRecord(f"bad scene file: {e}", path) from None


def save_scene_truth(truth: SceneTruth, path) -> None:
    data = {
        "scene_id": truth.scene_id,
        "objects": [
            {"instance_id": o.instance_id, "label": o.label, "aabb": o.aabb.to_dict()} for o in truth.objects
        ],
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def load_queries(path, truth: SceneTruth | None = None) -> list[Query]:
    path = _require(Path(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedRecord(f"invalid JSON: {e.msg}", path, e.lineno) from None
    if not isinstance(data, list):
        raise MalformedRecord("queries file must hold a JSON list", path)
    queries = []
    for i, rec in enumerate(data):
        try:
            qtype = QueryType.parse(rec["query_type"])
            q = Query(str(rec["query_id"]), qtype, str(rec["text"]), tuple(rec["plausible_labels"]))
        except (KeyError, TypeError) as e:
            raise MalformedRecord(f"query #{i}: missing or bad field {e}", path) from None
        except DatasetError as e:
            if type(e) is DatasetError:
                raise MalformedRecord(f"query #{i}: {e}", path) from None
            raise
        if truth is not None:
            q.check_against(truth)
        queries.append(q)
    ids = [q.query_id for q in queries]
    if len(set(ids)) != len(ids):
        raise MalformedRecord("duplicate query_id", path)
    return queries


def save_queries(queries, path) -> None:
    data = [
        {
            "query_id": q.query_id,
            "query_type": q.query_type.value,
            "text": q.text,
            "plausible_labels": list(q.plausible_labels),
        }
        for q in queries
    ]
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def detector_vocabulary(traj: Trajectory, confidence_threshold: float = 0.8) -> list[str]:
    """Unique labels detected with confidence strictly above the threshold, first-seen order."""
    seen: dict[str, None] = {}
    for fr in traj.frames:
        best: dict[str, float] = {}
        for det in fr.detections:
            if det.confidence > confidence_threshold:
                best[det.label] = max(det.confidence, best.get(det.label, 0.0))
        # within a frame, order by confidence then label so list order does not matter
        for label in sorted(best, key=lambda lb: (-best[lb], lb)):
            seen.setdefault(label, None)
    return list(seen)
