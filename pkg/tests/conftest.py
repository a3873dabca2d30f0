from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from cartier.data import bundled_path
from cartier.dataset import (
    Detection,
    Frame,
    SyntheticConfig,
    Trajectory,
    generate_synthetic,
    load_queries,
    load_scene_truth,
    load_trajectory,
)
from cartier.geometry import Intrinsics, PixelBBox, Pose

FIXTURES = Path(__file__).parent / "fixtures"


def make_traj(dets_per_frame, width=64, height=48, depth=2.0, poses=None):
    """Trajectory with constant depth; ``dets_per_frame`` is a list of [(label, conf, bbox)]."""
    intr = Intrinsics(50.0, 50.0, (width - 1) / 2, (height - 1) / 2, width, height)
    frames = []
    for i, dets in enumerate(dets_per_frame):
        pose = poses[i] if poses else Pose((float(i), 0.0, 1.5), (1, 0, 0, 0), i, 0.5 * i)
        d = np.full((height, width), depth, np.float32)
        frames.append(Frame(pose, d, tuple(Detection(i, lb, c, PixelBBox(*b)) for lb, c, b in dets)))
    return Trajectory(intr, tuple(frames))


@pytest.fixture(scope="session")
def traj3():
    return load_trajectory(FIXTURES / "traj3")


@pytest.fixture(scope="session")
def synth7():
    return generate_synthetic(SyntheticConfig(seed=7))


@pytest.fixture(scope="session")
def bundled():
    root = bundled_path()
    truth = load_scene_truth(root / "scene.json")
    return load_trajectory(root / "trajectory"), truth, load_queries(root / "queries.json", truth)


# -- acceptance reporting: one PASS/FAIL line per criterion

_CRITERIA: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _CRITERIA.append(("PASS" if rep.passed else "FAIL", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, name in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name}")
