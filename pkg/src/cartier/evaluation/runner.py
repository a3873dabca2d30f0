"""Batch evaluation over (query, scene) pairs."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from ..dataset.io import detector_vocabulary
from ..dataset.types import Query, SceneTruth, Trajectory
from ..errors import CartierError
from ..grounding.llm import LlmParams, ResponseCache
from ..grounding.pipeline import ground_query
from ..grounding.prompt import DEFAULT_TEMPLATE, PromptTemplate
from ..index import (
    EMBEDDING_GRID,
    OBJECT_DEPTH,
    OBJECT_VIEWPOINT,
    accumulate_grid,
    build_object_depth,
    build_object_viewpoint,
)
from .baselines import TOKEN_LIMIT, run_direct_index, run_proposal_threshold
from .metrics import EquivalenceConfig, distance_metric, object_match
from .records import CARTIER, DIRECT_INDEX, NO_MODEL, PROPOSAL_THRESHOLD, PredictionRecord
from .report import Report

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MethodSpec:
    method: str
    index: str

    def __post_init__(self):
        valid = {
            CARTIER: (OBJECT_DEPTH, OBJECT_VIEWPOINT, EMBEDDING_GRID),
            DIRECT_INDEX: (EMBEDDING_GRID,),
            PROPOSAL_THRESHOLD: (EMBEDDING_GRID,),
        }
        if self.method not in valid:
            raise ValueError(f"unknown method {self.method!r}")
        if self.index not in valid[self.method]:
            raise ValueError(f"method {self.method!r} cannot use index {self.index!r}")

    @property
    def uses_llm(self) -> bool:
        return self.method != DIRECT_INDEX


ALL_METHODS = (
    MethodSpec(CARTIER, OBJECT_DEPTH),
    MethodSpec(CARTIER, OBJECT_VIEWPOINT),
    MethodSpec(CARTIER, EMBEDDING_GRID),
    MethodSpec(PROPOSAL_THRESHOLD, EMBEDDING_GRID),
    MethodSpec(DIRECT_INDEX, EMBEDDING_GRID),
)


@dataclass
class EvalScene:
    truth: SceneTruth
    trajectory: Trajectory
    queries: list[Query]
    indices: dict = field(default_factory=dict)

    @property
    def scene_id(self) -> str:
        return self.truth.scene_id

    def ensure_indices(self, variants, embedder=None, threshold: float = 0.8, workers: int = 1) -> None:
        for v in variants:
            if v in self.indices:
                continue
            if v == OBJECT_DEPTH:
                self.indices[v] = build_object_depth(self.trajectory, threshold, workers, on_missing="skip")
            elif v == OBJECT_VIEWPOINT:
                self.indices[v] = build_object_viewpoint(self.trajectory, threshold)
            elif v == EMBEDDING_GRID:
                self.indices[v] = accumulate_grid(self.trajectory, embedder, workers=workers)


@dataclass
class EvalSettings:
    template: PromptTemplate = DEFAULT_TEMPLATE
    base_params: LlmParams = field(default_factory=LlmParams)
    cache: ResponseCache | None = None
    mode: str = "live"
    embedder: object = None
    proposer: object = None
    proposal_threshold: float | None = None
    token_limit: int = TOKEN_LIMIT
    confidence_threshold: float = 0.8
    eq: EquivalenceConfig = field(default_factory=EquivalenceConfig)


def _failed(scene: EvalScene, q: Query, spec: MethodSpec, model: str, err: Exception) -> PredictionRecord:
    return PredictionRecord(
        query_id=q.query_id,
        scene_id=scene.scene_id,
        method=spec.method,
        index=spec.index,
        model=model,
        query_type=q.query_type.value,
        plausible=q.plausible_labels,
        error=f"{type(err).__name__}: {err}",
    )


def evaluate_one(scene: EvalScene, q: Query, spec: MethodSpec, model: str, backend, s: EvalSettings):
    """One prediction record; library errors become a failed record."""
    params = replace(s.base_params, model=model) if model != NO_MODEL else s.base_params
    index = scene.indices[spec.index]
    try:
        if spec.method == DIRECT_INDEX:
            return run_direct_index(q, index, s.embedder, scene.truth, s.token_limit)
        if spec.method == PROPOSAL_THRESHOLD:
            return run_proposal_threshold(
                q, index, s.embedder, s.proposer, scene.truth, backend, s.template, params,
                s.cache, s.mode, s.proposal_threshold, s.eq,
            )
        vocab = detector_vocabulary(scene.trajectory, s.confidence_threshold)
        g = ground_query(vocab, q.text, backend, index, s.template, params, s.cache, s.mode, s.embedder)
        return PredictionRecord(
            query_id=q.query_id,
            scene_id=scene.scene_id,
            method=spec.method,
            index=spec.index,
            model=model,
            query_type=q.query_type.value,
            plausible=q.plausible_labels,
            label=g.label,
            point=g.point,
            match=object_match(g.label, q.plausible_labels, s.eq),
            distance=distance_metric(g.point, scene.truth, q.plausible_labels),
        )
    except CartierError as e:
        log.info("query %s (%s/%s, %s) failed: %s", q.query_id, spec.method, spec.index, model, e)
        return _failed(scene, q, spec, model, e)


def evaluate(
    scenes,
    methods,
    backends: dict,
    settings: EvalSettings | None = None,
    workers: int = 1,
) -> Report:
    """Run every (scene, query, method, model) combination and collect a :class:`Report`.

    ``backends`` maps model name to backend (``None`` is fine in replay mode).
    Records come back in task order whatever the worker count.
    """
    s = settings or EvalSettings()
    methods = list(methods)
    if any(m.method == PROPOSAL_THRESHOLD for m in methods) and s.proposer is None:
        raise ValueError("the proposal-threshold method needs a proposer")
    variants = list(dict.fromkeys(m.index for m in methods))
    tasks = []
    for scene in scenes:
        scene.ensure_indices(variants, s.embedder, s.confidence_threshold)
        for q in scene.queries:
            for spec in methods:
                models = list(backends) if spec.uses_llm else [NO_MODEL]
                for model in models:
                    tasks.append((scene, q, spec, model, backends.get(model)))

    def run(task):
        return evaluate_one(*task, s)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            records = list(pool.map(run, tasks))
    else:
        records = [run(t) for t in tasks]
    return Report(records)
