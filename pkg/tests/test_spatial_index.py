import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cartier.dataset import Frame, SceneObject, Trajectory
from cartier.dataset.synthetic import camera_pose, intrinsics_for, observe
from cartier.errors import (
    EmbedderLacksPixelCapability,
    EmbedderMismatch,
    EmptyGrid,
    LabelNotIndexed,
    NoValidDepth,
)
from cartier.geometry import AABB3, Pose
from cartier.index import (
    EmbeddingGrid,
    GridAccumulator,
    HashingEmbedder,
    SyntheticPixelEmbedder,
    accumulate_grid,
    build_object_depth,
    build_object_viewpoint,
    compensated_area,
    load_index,
    lookup,
    query_grid,
    save_index,
)

from conftest import make_traj
from oracles import batch_cell_means


def test_object_depth_face_center_at_constant_depth():
    # cube face fills a symmetric patch around the principal point at depth 2.0
    cube = AABB3((2.0, -0.3, 1.2), (2.6, 0.3, 1.8))
    room = AABB3((-5, -5, 0), (5, 5, 3))
    intr = intrinsics_for(101, 101, 60.0)
    pose = camera_pose((0.0, 0.0, 1.5), 0.0, 0.0, 0)
    depth, dets = observe([SceneObject("c", "cube", cube)], room, pose, intr)
    traj = Trajectory(intr, (Frame(pose, depth.astype(np.float32), tuple(dets)),))
    p = build_object_depth(traj).lookup("cube")
    np.testing.assert_allclose(p, [2.0, 0.0, 1.5], atol=1e-6)


def test_object_depth_picks_largest_bbox():
    traj = make_traj(
        [
            [("mug", 0.9, (0, 0, 20, 20))],  # 400 px²
            [("mug", 0.9, (10, 10, 40, 40))],  # 900 px²
        ]
    )
    e = build_object_depth(traj).get("mug")
    assert e.source_frame == 1 and e.score == 900


def test_object_depth_falls_back_when_bbox_has_no_valid_depth():
    traj = make_traj([[("mug", 0.9, (0, 0, 20, 20))], [("mug", 0.9, (10, 10, 40, 40))]])
    traj.frames[1].depth[10:40, 10:40] = 0.0
    e = build_object_depth(traj).get("mug")
    assert e.source_frame == 0
    traj.frames[0].depth[:20, :20] = np.nan
    with pytest.raises(NoValidDepth):
        build_object_depth(traj)
    assert "mug" not in build_object_depth(traj, on_missing="skip")


def test_object_depth_mean_of_backprojected_points(traj3):
    idx = build_object_depth(traj3)
    # sofa: frame 1 (900 px²) has 4 valid pixels at depth 1.25, rows/cols 10..11
    intr = traj3.intrinsics
    xs = [(u - intr.cx) * 1.25 / intr.fx for u in (10, 11)]
    ys = [(v - intr.cy) * 1.25 / intr.fy for v in (10, 11)]
    expected = np.array([np.mean(xs) + 1.0, np.mean(ys), 1.25 + 1.5])
    np.testing.assert_allclose(idx.lookup("sofa"), expected, atol=1e-12)
    # mug at 0.80 is filtered; frame 0's 0.81 detection remains
    assert idx.get("mug").source_frame == 0
    assert "lamp" not in idx


def test_object_depth_parallel_matches_serial(synth7):
    traj, _, _ = synth7
    a = build_object_depth(traj, workers=1).to_json()
    b = build_object_depth(traj, workers=4).to_json()
    assert a == b


def test_viewpoint_compensation_worked_example():
    # two frames: 1000 px² seen at 60 degrees off axis, 300 px² on axis
    f = 50.0
    off = math.tan(math.radians(60)) * f
    traj = make_traj([[], []], width=400, height=48)
    intr = traj.intrinsics
    cx = intr.cx
    # bbox 1: 50 x 20 = 1000 px² centered at cx + off (center uses (min + max - 1) / 2)
    c1 = cx + off
    b1 = (int(c1 - 24.5), 14, int(c1 - 24.5) + 50, 34)
    b2 = (int(cx - 14.5), 19, int(cx - 14.5) + 30, 29)  # 30 x 10 = 300 px², on axis
    traj = make_traj([[("tv", 0.9, b1)], [("tv", 0.9, b2)]], width=400, height=48)
    from cartier.geometry import PixelBBox, bbox_view_angle

    assert bbox_view_angle(PixelBBox(*b1), traj.intrinsics) == pytest.approx(math.radians(60), abs=0.01)
    assert bbox_view_angle(PixelBBox(*b2), traj.intrinsics) == 0.0
    assert compensated_area(1000, math.radians(60)) == pytest.approx(125.0, abs=1e-9)
    on = build_object_viewpoint(traj, compensate=True).get("tv")
    off_ = build_object_viewpoint(traj, compensate=False).get("tv")
    assert on.source_frame == 1 and on.score == 300
    assert off_.source_frame == 0 and off_.score == 1000
    np.testing.assert_array_equal(on.point, traj.frames[1].pose.position)


@given(area=st.floats(1, 1e6), t1=st.floats(0, 1.5), t2=st.floats(0, 1.5))
def test_compensated_area_monotone(area, t1, t2):
    assert compensated_area(area, 0.0) == area
    lo, hi = sorted((t1, t2))
    assert compensated_area(area, hi) <= compensated_area(area, lo)


def test_lookup_is_case_insensitive(traj3, tmp_path):
    idx = build_object_depth(traj3)
    np.testing.assert_array_equal(lookup(idx, "Sofa"), lookup(idx, "sofa"))
    with pytest.raises(LabelNotIndexed):
        lookup(idx, "bed")
    save_index(idx, tmp_path / "index.json")
    back = load_index(tmp_path / "index.json")
    np.testing.assert_array_equal(back.lookup("SOFA"), idx.lookup("sofa"))
    assert back.to_json() == idx.to_json()


# -- embedding grid


def _tiny_frame(emb_pixels, depth=1.0):
    """One frame looking straight down from z=1 so pixels map onto the floor plane."""
    h, w = emb_pixels.shape[:2]
    intr_f = 10.0
    from cartier.geometry import Intrinsics

    intr = Intrinsics(intr_f, intr_f, (w - 1) / 2, (h - 1) / 2, w, h)
    # camera z (optical axis) -> world -z, camera x -> world x, camera y -> world -y
    pose = Pose((0.5, 0.5, 1.0), (0.0, 1.0, 0.0, 0.0), 0)
    return intr, Frame(pose, np.full((h, w), depth, np.float32), ())


def test_single_pixel_cell_equals_its_embedding():
    e = np.array([0.6, 0.8, 0.0])
    emb = np.zeros((1, 1, 3))
    emb[0, 0] = e
    intr, fr = _tiny_frame(emb)
    traj = Trajectory(intr, (fr,))
    g = accumulate_grid(traj, None, 0.1, {0: emb}, embedder_id="pre")
    assert g.counts.sum() == 1
    np.testing.assert_allclose(g.means[g.counts > 0][0], e)


def test_opposite_embeddings_cancel_and_are_skipped():
    emb = np.zeros((1, 2, 3))
    emb[0, 0] = [1, 0, 0]
    emb[0, 1] = [-1, 0, 0]
    intr, fr = _tiny_frame(emb)
    traj = Trajectory(intr, (fr,))
    g = accumulate_grid(traj, None, 10.0, {0: emb}, embedder_id="pre")  # one big cell
    assert g.counts.sum() == 2 and np.all(g.means == 0)

    class Fixed:
        identity = "pre"
        dimension = 3
        similarity_bound = 1.0

        def embed_text(self, text):
            return np.array([1.0, 0, 0])

    with pytest.raises(EmptyGrid):
        query_grid(g, "x", Fixed())


def test_grid_means_match_batch_oracle():
    from cartier.dataset import SyntheticConfig, generate_synthetic

    traj, _, _ = generate_synthetic(SyntheticConfig(seed=11, waypoint_count=1, headings_per_waypoint=3,
                                                    image_width=40, image_height=30))
    emb = SyntheticPixelEmbedder(8)
    g = accumulate_grid(traj, emb, cell_size=0.25)
    means, counts = batch_cell_means(traj, emb.embed_pixels, 0.25)
    assert int(g.counts.sum()) == sum(counts.values())
    for (ix, iy), m in means.items():
        r = iy - round(g.origin[1] / 0.25)
        c = ix - round(g.origin[0] / 0.25)
        assert g.counts[r, c] == counts[(ix, iy)]
        np.testing.assert_allclose(g.means[r, c], m, atol=1e-6)


def test_grid_is_frame_order_independent(synth7):
    traj, _, _ = synth7
    emb = SyntheticPixelEmbedder(16)
    fwd = GridAccumulator(traj.intrinsics, 0.1)
    rev = GridAccumulator(traj.intrinsics, 0.1)
    for fr in traj.frames:
        fwd.add_frame(fr, emb.embed_pixels(fr))
    for fr in reversed(traj.frames):
        rev.add_frame(fr, emb.embed_pixels(fr))
    a, b = fwd.finalize(emb.identity), rev.finalize(emb.identity)
    assert np.array_equal(a.means, b.means) and np.array_equal(a.counts, b.counts)
    par = accumulate_grid(traj, emb, 0.1, workers=3)
    assert np.array_equal(par.means, a.means)


def test_query_grid_finds_labeled_region(synth7):
    traj, truth, _ = synth7
    emb = SyntheticPixelEmbedder()
    g = accumulate_grid(traj, emb)
    for o in truth.objects:
        entry = query_grid(g, o.label, emb)
        x, y, _ = entry.point
        lo, hi = o.aabb.min, o.aabb.max
        # the returned cell overlaps the object's footprint
        assert lo[0] - g.cell_size <= x <= hi[0] + g.cell_size
        assert lo[1] - g.cell_size <= y <= hi[1] + g.cell_size


def test_query_grid_tie_breaks_lexicographically():
    means = np.zeros((2, 2, 2))
    means[0, 1] = [1, 0]
    means[1, 0] = [1, 0]
    means[1, 1] = [0, 1]
    counts = np.array([[0, 3], [5, 1]])
    g = EmbeddingGrid(0.5, (0.0, 0.0), means, counts, np.full((2, 2), 0.4), "e")

    class E:
        identity = "e"
        dimension = 2
        similarity_bound = 1.0

        def embed_text(self, text):
            return np.array([2.0, 0.0])

    entry = query_grid(g, "q", E())
    # cells (0, 1) and (1, 0) tie; (0, 1) comes first
    np.testing.assert_allclose(entry.point, [0.75, 0.25, 0.4])
    assert entry.score == 1.0


def test_dropped_dims():
    means = np.zeros((1, 2, 3))
    means[0, 0] = [1, 0, 5]
    means[0, 1] = [0, 1, 0]
    g = EmbeddingGrid(1.0, (0.0, 0.0), means, np.ones((1, 2), int), np.zeros((1, 2)), "e")

    class E:
        identity = "e"
        dimension = 3
        similarity_bound = 1.0

        def embed_text(self, text):
            return np.array([0.0, 0.1, 1.0])

    assert query_grid(g, "q", E()).point[0] == 0.5  # dominated by the large third dim
    assert query_grid(g.with_dropped_dims([2]), "q", E()).point[0] == 1.5
    with pytest.raises(EmptyGrid):
        query_grid(g.with_dropped_dims([0, 1, 2]), "q", E())


def test_grid_errors(traj3):
    with pytest.raises(EmbedderLacksPixelCapability):
        accumulate_grid(traj3, HashingEmbedder())
    g = accumulate_grid(traj3, SyntheticPixelEmbedder(8))
    with pytest.raises(EmbedderMismatch):
        query_grid(g, "sofa", SyntheticPixelEmbedder(16))


def test_grid_serialization_round_trip(tmp_path, synth7):
    traj, truth, _ = synth7
    emb = SyntheticPixelEmbedder()
    g = accumulate_grid(traj, emb)
    save_index(g, tmp_path / "grid.json")
    assert (tmp_path / "grid.bin").stat().st_size == g.shape[0] * g.shape[1] * g.dimension * 4
    back = load_index(tmp_path / "grid.json")
    assert isinstance(back, EmbeddingGrid)
    np.testing.assert_allclose(back.embeddings, g.embeddings, atol=1e-6)
    for o in truth.objects[:3]:
        a, b = query_grid(g, o.label, emb), query_grid(back, o.label, emb)
        np.testing.assert_allclose(a.point, b.point)
