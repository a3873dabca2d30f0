"""Prompt construction, LLM calls and answer parsing."""

from .llm import (
    ENV_API_KEY,
    ENV_BASE_URL,
    ENV_MODEL,
    LlmBackend,
    LlmParams,
    MockBackend,
    OpenAICompatibleBackend,
    ResponseCache,
    ScriptedBackend,
    cache_key,
    complete,
)
from .parse import find_mentions, parse_object
from .pipeline import Grounding, GroundingFailed, ground_query
from .prompt import DEFAULT_TEMPLATE, PromptTemplate, build_prompt, parse_prompt

__all__ = [
    "DEFAULT_TEMPLATE",
    "ENV_API_KEY",
    "ENV_BASE_URL",
    "ENV_MODEL",
    "Grounding",
    "GroundingFailed",
    "LlmBackend",
    "LlmParams",
    "MockBackend",
    "OpenAICompatibleBackend",
    "PromptTemplate",
    "ResponseCache",
    "ScriptedBackend",
    "build_prompt",
    "cache_key",
    "complete",
    "find_mentions",
    "ground_query",
    "parse_object",
    "parse_prompt",
]
