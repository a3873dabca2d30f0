"""The two comparison methods: direct grid query and thresholded proposals."""

from __future__ import annotations

import math
import re
import warnings
from typing import Protocol

from ..dataset.types import Query, SceneTruth
from ..errors import NoSurvivingProposals
from ..grounding.llm import LlmParams, ResponseCache, complete
from ..grounding.pipeline import ground_query
from ..grounding.prompt import DEFAULT_TEMPLATE, PromptTemplate, dedupe
from ..index.grid import EMBEDDING_GRID, EmbeddingGrid, query_grid
from .metrics import EquivalenceConfig, distance_metric, object_match
from .records import DIRECT_INDEX, NO_MODEL, PROPOSAL_THRESHOLD, PredictionRecord

TOKEN_LIMIT = 77
# Lives on an unnormalized CLIP logit scale.
CLIP_PROPOSAL_THRESHOLD = 12.05
COSINE_PROPOSAL_THRESHOLD = 0.5


class Tokenizer(Protocol):
    def tokenize(self, text: str) -> list[str]: ...

    def detokenize(self, tokens: list[str]) -> str: ...


class WhitespaceTokenizer:
    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def detokenize(self, tokens: list[str]) -> str:
        return " ".join(tokens)


def truncate_query(text: str, limit: int = TOKEN_LIMIT, tokenizer: Tokenizer | None = None) -> str:
    """First ``limit`` tokens of ``text``; shorter queries come back untouched."""
    tok = tokenizer or WhitespaceTokenizer()
    tokens = tok.tokenize(text)
    if len(tokens) <= limit:
        return text
    return tok.detokenize(tokens[:limit])


def run_direct_index(
    query: Query,
    grid: EmbeddingGrid,
    embedder,
    truth: SceneTruth,
    token_limit: int = TOKEN_LIMIT,
    tokenizer: Tokenizer | None = None,
) -> PredictionRecord:
    text = truncate_query(query.text, token_limit, tokenizer)
    entry = query_grid(grid, text, embedder)
    return PredictionRecord(
        query_id=query.query_id,
        scene_id=truth.scene_id,
        method=DIRECT_INDEX,
        index=EMBEDDING_GRID,
        model=NO_MODEL,
        query_type=query.query_type.value,
        plausible=query.plausible_labels,
        point=entry.point,
        distance=distance_metric(entry.point, truth, query.plausible_labels),
    )


class Proposer(Protocol):
    def propose(self, query: str) -> list[str]: ...


class FixedListProposer:
    """Proposes the same candidate names for every query."""

    def __init__(self, names):
        self.names = dedupe(names)

    def propose(self, query: str) -> list[str]:
        return list(self.names)


class LlmProposer:
    """Asks an LLM for candidate object names and splits its comma/newline list.

    ``template`` must contain ``{query}``; the proposal prompt itself is supplied
    by the caller.
    """

    def __init__(
        self,
        template: str,
        backend,
        params: LlmParams | None = None,
        cache: ResponseCache | None = None,
        mode: str = "live",
        max_proposals: int | None = None,
        template_id: str = "proposer",
    ):
        if template.count("{query}") != 1:
            raise ValueError("proposal template must contain {query} exactly once")
        self.template = template
        self.backend = backend
        self.params = params or LlmParams()
        self.cache = cache
        self.mode = mode
        self.max_proposals = max_proposals
        self.template_id = template_id

    def propose(self, query: str) -> list[str]:
        prompt = self.template.replace("{query}", query)
        text = complete(self.backend, prompt, self.params, self.cache, self.mode, self.template_id)
        names = []
        for part in re.split(r"[,\n]", text):
            name = re.sub(r"^\s*(?:[-*•]|\d+[.)])\s*", "", part).strip().strip(".\"'").strip()
            if name:
                names.append(name)
        names = dedupe(names)
        return names[: self.max_proposals] if self.max_proposals else names


def default_proposal_threshold(embedder) -> float:
    bound = getattr(embedder, "similarity_bound", math.inf)
    return COSINE_PROPOSAL_THRESHOLD if bound <= 1.0 else CLIP_PROPOSAL_THRESHOLD


def surviving_proposals(proposals, grid: EmbeddingGrid, embedder, threshold: float) -> list[str]:
    names = dedupe(p for p in proposals if p.strip() and "," not in p)
    out = [n for n in names if query_grid(grid, n, embedder).score >= threshold]
    if not out:
        bound = getattr(embedder, "similarity_bound", math.inf)
        msg = f"no proposal reached similarity {threshold} (proposals: {names})"
        if threshold > bound:
            msg += f"; threshold exceeds the embedder's maximum similarity {bound}"
            warnings.warn(
                f"proposal threshold {threshold} is above the similarity scale bound {bound}; "
                "nothing can survive",
                RuntimeWarning,
                stacklevel=2,
            )
        raise NoSurvivingProposals(msg)
    return out


def run_proposal_threshold(
    query: Query,
    grid: EmbeddingGrid,
    embedder,
    proposer: Proposer,
    truth: SceneTruth,
    backend,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    params: LlmParams | None = None,
    cache: ResponseCache | None = None,
    mode: str = "live",
    threshold: float | None = None,
    eq: EquivalenceConfig | None = None,
) -> PredictionRecord:
    """Filter proposals by grid similarity, let the LLM choose among survivors, then locate it."""
    params = params or LlmParams()
    if threshold is None:
        threshold = default_proposal_threshold(embedder)
    survivors = surviving_proposals(proposer.propose(query.text), grid, embedder, threshold)
    g = ground_query(survivors, query.text, backend, grid, template, params, cache, mode, embedder)
    return PredictionRecord(
        query_id=query.query_id,
        scene_id=truth.scene_id,
        method=PROPOSAL_THRESHOLD,
        index=EMBEDDING_GRID,
        model=params.model,
        query_type=query.query_type.value,
        plausible=query.plausible_labels,
        label=g.label,
        point=g.point,
        match=object_match(g.label, query.plausible_labels, eq),
        distance=distance_metric(g.point, truth, query.plausible_labels),
    )
