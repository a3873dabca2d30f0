"""Regenerate src/cartier/data/bundled.

The LLM responses below are hand-written fixtures in the style of chat-model
answers; they are written into the response cache through record mode so the
replay path can be exercised without network access.

    python scripts/make_bundled_data.py
"""

from __future__ import annotations

import shutil
from pathlib import Path

from cartier.data import BUNDLED_DIR
from cartier.dataset import (
    Query,
    QueryType,
    SyntheticConfig,
    detector_vocabulary,
    generate_synthetic,
    save_queries,
    save_scene_truth,
    save_trajectory,
)
from cartier.evaluation import EquivalenceConfig, EvalScene, EvalSettings, MethodSpec, evaluate, write_records_csv
from cartier.grounding import DEFAULT_TEMPLATE, LlmParams, ResponseCache, ScriptedBackend, build_prompt, complete

SEED = 7
MODEL = "fixture-chat"

# (query text, plausible labels, recorded response)
CONVERSATIONAL = [
    (
        "My sister called this morning and we talked for an hour about her new job in Lisbon. "
        "Anyway, I'm freezing after walking the dog in the rain, and a hot cup of tea would really help right now.",
        ["kettle"],
        "In order to fulfil the user request, the robot should navigate to the object called `Kettle'.",
    ),
    (
        "The heating has been broken since Tuesday and the landlord still hasn't called back. "
        "My hands are numb and I just want to sit somewhere warm for a while.",
        ["fireplace"],
        "Fireplace",
    ),
    (
        "I finally finished the report my manager kept asking about. "
        "The big match starts in ten minutes and I don't want to miss the kickoff.",
        ["television"],
        "The robot should go to the television.",
    ),
    (
        "The kids had a birthday party here yesterday, there were twelve of them and a piñata. "
        "Now there are crumbs and confetti all over the carpet.",
        ["vacuum cleaner"],
        "vacuum_cleaner",
    ),
    (
        "I've been repotting my basil and tomatoes on the balcony all afternoon. "
        "My hands are covered in soil and I need to wash them before dinner.",
        ["sink"],
        "The user needs to wash their hands, so the robot should navigate to the sink.",
    ),
    (
        "I have a job interview over video in fifteen minutes. "
        "My cousin says the blue shirt looks fine but I want to check that my tie is straight.",
        ["mirror"],
        "Mirror.",
    ),
    (
        "I walked around the museum for five hours today, my grandmother insisted we see every single painting. "
        "My feet are killing me and I need to sit down.",
        ["armchair"],
        "The best object is the armchair, where the user can rest.",
    ),
    (
        "My neighbor is away for the week and asked me to look after her goldfish. "
        "I promised I'd feed them every evening, and I almost forgot today.",
        ["fish tank"],
        "The robot should navigate to the fish tank.",
    ),
    (
        "The power came back but the ceiling light in here is still dead. "
        "I'm trying to finish this crossword and I can barely see the clues.",
        ["lamp"],
        "Lamp",
    ),
    (
        "We're leaving for the coast at six tomorrow morning and I still haven't packed. "
        "I need to grab some clean socks and a couple of t-shirts.",
        ["dresser"],
        "The user needs clean clothes. Not the mirror; the robot should go to the dresser.",
    ),
    (
        "My daughter spilled juice all over the table at breakfast, then the cat knocked over a glass too. "
        "I need to rinse out this sponge and get some water.",
        ["sink"],
        "The robot should navigate to the sink.",
    ),
    (
        "It's been a long week of night shifts at the hospital. "
        "I just want to put my feet up and watch something mindless for an hour.",
        ["television", "armchair"],
        "The robot should go to the armchair so the user can sit down; the television is nearby too.",
    ),
    (
        "I spilled coffee on my shirt right before the meeting and the others are already waiting. "
        "I need to see how bad the stain is.",
        ["mirror"],
        "Go to the dresser.",
    ),
]

IMPLICIT = [
    ("I'd like some hot tea.", ["kettle"], "Kettle"),
    ("I'm cold.", ["fireplace"], "The fireplace."),
    ("I want to watch the news.", ["television"], "Television"),
    ("The floor is dusty.", ["vacuum cleaner"], "Vacuum cleaner"),
    ("I need to wash my hands.", ["sink"], "Sink"),
    ("I want to check my hair.", ["mirror"], "Mirror"),
    ("I need to sit down.", ["armchair"], "Armchair"),
    ("The fish need feeding.", ["fish tank"], "Fish tank"),
    ("It's too dark to read.", ["lamp"], "Lamp"),
    ("I need a clean shirt.", ["dresser"], "The dresser"),
]

EQUIVALENCE = EquivalenceConfig(
    synonym_groups=[
        ["trash can", "trash bin", "garbage can"],
        ["television", "tv"],
        ["sofa", "couch"],
    ],
    colocations={
        ("faucet", "sink"): "accept",
        ("sheets", "bed"): "ambiguous",
        ("dresser", "mirror"): "ambiguous",
    },
)


def main() -> None:
    out = BUNDLED_DIR
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    traj, truth, explicit = generate_synthetic(SyntheticConfig(seed=SEED))
    save_trajectory(traj, out / "trajectory")
    save_scene_truth(truth, out / "scene.json")

    queries = list(explicit)
    scripted = {}
    vocab = detector_vocabulary(traj)
    for kind, rows in ((QueryType.CONVERSATIONAL, CONVERSATIONAL), (QueryType.IMPLICIT, IMPLICIT)):
        for i, (text, plausible, response) in enumerate(rows):
            q = Query(f"{truth.scene_id}-{kind.value}-{i:02d}", kind, text, tuple(plausible))
            q.check_against(truth)
            queries.append(q)
            scripted[build_prompt(DEFAULT_TEMPLATE, vocab, text)] = response
    save_queries(queries, out / "queries.json")
    EQUIVALENCE.save(out / "equivalence.json")

    cache = ResponseCache(out / "llm_cache.jsonl")
    backend = ScriptedBackend(scripted, MODEL)
    params = LlmParams(model=MODEL)
    for prompt in scripted:
        complete(backend, prompt, params, cache, "record", DEFAULT_TEMPLATE.template_id)

    scene = EvalScene(truth, traj, [q for q in queries if q.query_type is not QueryType.EXPLICIT])
    specs = [MethodSpec("cartier", "object-depth"), MethodSpec("cartier", "object-viewpoint")]
    settings = EvalSettings(cache=ResponseCache(out / "llm_cache.jsonl"), mode="replay", eq=EQUIVALENCE)
    report = evaluate([scene], specs, {MODEL: None}, settings)
    write_records_csv(report.records, out / "expected_replay.csv")
    (out / "expected_replay.md").write_text(report.to_markdown(), encoding="utf-8")
    print(report.to_markdown())


if __name__ == "__main__":
    main()
