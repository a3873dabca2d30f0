from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset.io import detector_vocabulary
from ..dataset.types import Trajectory
from ..errors import NoMatch
from ..index import lookup
from .llm import LlmParams, ResponseCache, complete
from .parse import parse_object
from .prompt import DEFAULT_TEMPLATE, PromptTemplate, build_prompt, dedupe


@dataclass(frozen=True, eq=False)
class Grounding:
    label: str
    point: np.ndarray
    prompt: str
    response: str


class GroundingFailed(NoMatch):
    """Parser could not find a vocabulary label; carries the prompt and raw response."""

    def __init__(self, message: str, response: str, prompt: str):
        super().__init__(message, response)
        self.prompt = prompt


def ground_query(
    source,
    query: str,
    backend,
    index,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    params: LlmParams | None = None,
    cache: ResponseCache | None = None,
    mode: str = "live",
    embedder=None,
    confidence_threshold: float = 0.8,
) -> Grounding:
    """Prompt the LLM with the scene's object list and the user query, then locate its answer.

    ``source`` is either a :class:`Trajectory` (its detector vocabulary is
    used) or an ordered list of labels.
    """
    if isinstance(source, Trajectory):
        vocabulary = detector_vocabulary(source, confidence_threshold)
    else:
        vocabulary = dedupe(source)
    params = params or LlmParams()
    prompt = build_prompt(template, vocabulary, query)
    response = complete(backend, prompt, params, cache, mode, template.template_id)
    try:
        label = parse_object(response, vocabulary)
    except NoMatch as e:
        raise GroundingFailed(str(e), response, prompt) from None
    point = lookup(index, label, embedder)
    return Grounding(label, point, prompt, response)
