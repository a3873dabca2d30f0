import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cartier.dataset import Query, SceneObject, SceneTruth
from cartier.errors import NoSurvivingProposals, UnknownPlausibleLabel
from cartier.evaluation import (
    ALL_METHODS,
    EquivalenceConfig,
    EvalScene,
    EvalSettings,
    FixedListProposer,
    MatchOutcome,
    MethodSpec,
    PredictionRecord,
    Report,
    adjudicate,
    distance_metric,
    evaluate,
    object_match,
    read_records_csv,
    run_proposal_threshold,
    surviving_proposals,
    truncate_query,
    write_records_csv,
)
from cartier.evaluation.report import aggregate, mean
from cartier.geometry import AABB3
from cartier.grounding import DEFAULT_TEMPLATE, MockBackend
from cartier.index import OBJECT_DEPTH, SyntheticPixelEmbedder, accumulate_grid

from oracles import surface_distance_bruteforce

TRUTH = SceneTruth(
    "s",
    (
        SceneObject("bed_0", "bed", AABB3((0, 0, 0), (2, 1.5, 0.5))),
        SceneObject("bed_1", "bed", AABB3((5, 0, 0), (7, 1.5, 0.5))),
        SceneObject("mug_0", "mug", AABB3((3, 3, 0.9), (3.1, 3.1, 1.0))),
    ),
)


def test_distance_metric_examples():
    assert distance_metric([1, 1, 0.2], TRUTH, ["bed"]) == 0.0
    assert distance_metric([3.5, 0.5, 0.25], TRUTH, ["bed"]) == pytest.approx(1.5)
    # nearest over all plausible labels and instances
    assert distance_metric([3.05, 3.05, 1.5], TRUTH, ["bed", "mug"]) == pytest.approx(0.5)


def test_distance_metric_unknown_label():
    with pytest.raises(UnknownPlausibleLabel):
        distance_metric([0, 0, 0], TRUTH, ["sofa"])
    with pytest.raises(UnknownPlausibleLabel):
        distance_metric([0, 0, 0], TRUTH, [])


@given(st.tuples(*[st.floats(-3, 10)] * 3))
def test_distance_metric_matches_bruteforce(p):
    got = distance_metric(p, TRUTH, ["bed", "mug"])
    ref = min(surface_distance_bruteforce(np.array(p), o.aabb.min, o.aabb.max) for o in TRUTH.objects)
    inside = any(o.aabb.contains(p) for o in TRUTH.objects)
    if inside:
        assert got == 0.0
    else:
        assert got == pytest.approx(ref, abs=1e-9)


EQ = EquivalenceConfig(
    synonym_groups=[["trash can", "trash bin", "garbage can"], ["tv", "television"]],
    colocations={("faucet", "sink"): "accept", ("sheets", "bed"): "ambiguous", ("rug", "bed"): "reject"},
)


@pytest.mark.parametrize(
    "pred, plausible, expected",
    [
        ("bed", ["bed"], MatchOutcome.MATCH),
        ("Bed", ["bed"], MatchOutcome.MATCH),
        ("trash bin", ["garbage can"], MatchOutcome.MATCH),
        ("faucet", ["sink"], MatchOutcome.MATCH),
        ("sheets", ["bed"], MatchOutcome.NEEDS_ADJUDICATION),
        ("rug", ["bed"], MatchOutcome.NO_MATCH),
        ("sofa", ["bed", "mug"], MatchOutcome.NO_MATCH),
        ("TV", ["television"], MatchOutcome.MATCH),
    ],
)
def test_object_match_examples(pred, plausible, expected):
    assert object_match(pred, plausible, EQ) is expected


@given(st.sampled_from(["trash can", "trash bin", "garbage can"]), st.sampled_from(["trash can", "trash bin", "garbage can"]))
def test_synonyms_are_symmetric(a, b):
    assert object_match(a, [b], EQ) is object_match(b, [a], EQ) is MatchOutcome.MATCH


def test_equivalence_round_trip(tmp_path):
    EQ.save(tmp_path / "eq.json")
    back = EquivalenceConfig.load(tmp_path / "eq.json")
    assert back.to_dict() == EQ.to_dict()
    assert EquivalenceConfig.load(tmp_path / "missing.json").to_dict() == {"synonyms": [], "colocations": []}


# -- truncation


def test_truncation():
    words = [f"w{i}" for i in range(80)]
    text = " ".join(words)
    out = truncate_query(text)
    assert out.split() == words[:77]
    short = "  go to   the bed "
    assert truncate_query(short) is short


@given(st.lists(st.text("abc", min_size=1, max_size=3), max_size=120))
def test_truncation_is_prefix(words):
    text = " ".join(words)
    out = truncate_query(text).split()
    assert len(out) <= 77 and out == text.split()[: len(out)]


# -- proposal threshold


@pytest.fixture(scope="module")
def small_grid(synth7):
    traj, truth, queries = synth7
    emb = SyntheticPixelEmbedder()
    return accumulate_grid(traj, emb), emb, truth, queries


def test_no_survivors(small_grid):
    grid, emb, truth, queries = small_grid
    with pytest.raises(NoSurvivingProposals):
        surviving_proposals(["spaceship", "volcano"], grid, emb, 0.5)


def test_single_survivor_is_grounded(small_grid):
    grid, emb, truth, queries = small_grid
    target = truth.objects[0].label
    assert surviving_proposals(["volcano", target], grid, emb, 0.5) == [target]
    q = Query("q", "implicit", "whatever", (target,))
    rec = run_proposal_threshold(
        q, grid, emb, FixedListProposer(["volcano", target]), truth,
        MockBackend.first_object(DEFAULT_TEMPLATE, "m"), threshold=0.5,
    )
    assert rec.label == target and rec.match is MatchOutcome.MATCH
    assert rec.distance < 0.2


def test_threshold_above_scale_warns(small_grid):
    grid, emb, truth, _ = small_grid
    with pytest.warns(RuntimeWarning):
        with pytest.raises(NoSurvivingProposals):
            surviving_proposals([truth.objects[0].label], grid, emb, 12.05)


# -- runner and report


def _scene(synth7):
    traj, truth, queries = synth7
    return EvalScene(truth, traj, list(queries))


def _oracle(queries):
    return MockBackend.oracle(DEFAULT_TEMPLATE, {q.text: q.plausible_labels[0] for q in queries}, "oracle")


def test_evaluate_is_deterministic_across_workers(synth7):
    queries = synth7[2]
    s = EvalSettings(embedder=SyntheticPixelEmbedder(), proposer=FixedListProposer([o.label for o in synth7[1].objects]))
    a = evaluate([_scene(synth7)], ALL_METHODS, {"oracle": _oracle(queries)}, s, workers=1)
    b = evaluate([_scene(synth7)], ALL_METHODS, {"oracle": _oracle(queries)}, s, workers=4)
    assert a.to_csv() == b.to_csv()
    assert a.to_markdown() == b.to_markdown()
    assert len(a.records) == len(queries) * len(ALL_METHODS)
    depth = [r for r in a.records if r.index == OBJECT_DEPTH]
    assert all(r.match is MatchOutcome.MATCH for r in depth)
    assert max(r.distance for r in depth) < 1e-6


def test_report_recomputes_from_csv(tmp_path, synth7):
    queries = synth7[2]
    rep = evaluate([_scene(synth7)], [MethodSpec("cartier", "object-viewpoint")], {"oracle": _oracle(queries)})
    write_records_csv(rep.records, tmp_path / "r.csv")
    back = Report(read_records_csv(tmp_path / "r.csv"))
    assert back.to_markdown() == rep.to_markdown()
    assert back.to_csv() == rep.to_csv()
    cell = next(iter(back.cells.values()))
    assert cell.mean_distance == mean(r.distance for r in rep.records)


def _rec(qid, dist=None, match=None, error="", label="bed"):
    return PredictionRecord(
        qid, "s", "cartier", "object-depth", "m", "explicit", ("bed",),
        None if error else label, None if error else np.zeros(3), match, dist, error,
    )


def test_failures_are_excluded_from_means():
    recs = [
        _rec("a", 1.0, MatchOutcome.MATCH),
        _rec("b", 3.0, MatchOutcome.NO_MATCH),
        _rec("c", error="NoMatch: nothing"),
        _rec("d", 0.5, MatchOutcome.NEEDS_ADJUDICATION, label="sheets"),
    ]
    cell = aggregate(recs)[("m", "explicit", "cartier", "object-depth")]
    assert cell.failures == 1 and cell.n == 4
    assert cell.mean_distance == pytest.approx(1.5)
    assert cell.match_rate == 0.5 and cell.pending == 1
    md = Report(recs).to_markdown()
    assert "1.50 (1 failed)" in md and "50% (1 pending)" in md
    assert math.isnan(aggregate([_rec("x", error="E: e")])[("m", "explicit", "cartier", "object-depth")].mean_distance)


def test_adjudicate_asks_each_pair_once():
    eq = EquivalenceConfig(colocations={("sheets", "bed"): "ambiguous"})
    recs = [_rec(q, 0.5, MatchOutcome.NEEDS_ADJUDICATION, label="sheets") for q in "ab"]
    asked = []
    out, n = adjudicate(recs, eq, lambda r, p, t: asked.append((p, t)) or True)
    assert n == 1 and asked == [("sheets", "bed")]
    assert all(r.match is MatchOutcome.MATCH for r in out)
    assert eq.colocation("sheets", "bed") == "accept"
