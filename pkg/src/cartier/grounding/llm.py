"""LLM backends, the response cache and the live/record/replay call path."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from ..errors import AuthFailure, CacheMiss, MalformedRecord, NetworkError, RateLimited
from .prompt import PromptTemplate, parse_prompt

log = logging.getLogger(__name__)

ENV_API_KEY = "CARTIER_LLM_API_KEY"
ENV_BASE_URL = "CARTIER_LLM_BASE_URL"
ENV_MODEL = "CARTIER_LLM_MODEL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4"

MODES = ("live", "record", "replay")


@dataclass(frozen=True)
class LlmParams:
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_tokens: int = 256
    stop: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.temperature >= 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


class LlmBackend(Protocol):
    model: str
    endpoint: str

    def complete(self, prompt: str, params: LlmParams) -> str: ...


class MockBackend:
    """Offline backend answering from the prompt's parsed object list and query.

    ``policy(objects, query)`` returns the response text.
    """

    endpoint = "mock://"

    def __init__(self, template: PromptTemplate, policy: Callable[[list[str], str], str], model: str = "mock"):
        self.template = template
        self.policy = policy
        self.model = model
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str, params: LlmParams) -> str:
        with self._lock:
            self.calls += 1
        objects, query = parse_prompt(self.template, prompt)
        return self.policy(objects, query)

    @classmethod
    def first_object(cls, template: PromptTemplate, model: str = "mock-first") -> "MockBackend":
        return cls(template, lambda objects, query: objects[0], model)

    @classmethod
    def oracle(cls, template: PromptTemplate, answers: dict[str, str], model: str = "mock-oracle") -> "MockBackend":
        """Answer each known query text with a fixed label, phrased like a chat model would."""

        def policy(objects, query):
            label = answers.get(query)
            if label is None:
                return "I am not sure which object fits this request."
            return f"The robot should navigate to the {label}."

        return cls(template, policy, model)


class ScriptedBackend:
    """Backend returning canned responses keyed by exact prompt text."""

    endpoint = "scripted://"

    def __init__(self, responses: dict[str, str], model: str = "scripted"):
        self.responses = dict(responses)
        self.model = model

    def complete(self, prompt: str, params: LlmParams) -> str:
        try:
            return self.responses[prompt]
        except KeyError:
            raise NetworkError("scripted backend has no response for this prompt") from None


class OpenAICompatibleBackend:
    """Chat-completions client over HTTPS with retries and an in-flight cap."""

    def __init__(
        self,
        api_key: str | None,
        base_url: str = DEFAULT_BASE_URL,
        model: str = DEFAULT_MODEL,
        timeout: float = 60.0,
        max_retries: int = 4,
        backoff_base: float = 1.0,
        backoff_cap: float = 30.0,
        max_in_flight: int = 4,
        transport=None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not api_key:
            raise AuthFailure(f"no API key; set {ENV_API_KEY}")
        import httpx

        self.model = model
        self.endpoint = base_url.rstrip("/")
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(
            base_url=self.endpoint,
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}"},
        )

    @classmethod
    def from_env(cls, model: str | None = None, **kwargs) -> "OpenAICompatibleBackend":
        return cls(
            os.environ.get(ENV_API_KEY),
            os.environ.get(ENV_BASE_URL, DEFAULT_BASE_URL),
            model or os.environ.get(ENV_MODEL, DEFAULT_MODEL),
            **kwargs,
        )

    def request_body(self, prompt: str, params: LlmParams) -> dict:
        body = {
            "model": params.model or self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.stop:
            body["stop"] = list(params.stop)
        return body

    def _post_once(self, body: dict) -> str:
        import httpx

        try:
            resp = self._client.post("/chat/completions", json=body)
        except httpx.TransportError as e:
            raise NetworkError(f"request failed: {e}") from e
        if resp.status_code in (401, 403):
            raise AuthFailure(f"backend rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429:
            retry_after = resp.headers.get("retry-after")
            try:
                delay = float(retry_after) if retry_after is not None else None
            except ValueError:
                delay = None
            raise RateLimited("rate limited by backend", delay)
        if resp.status_code >= 500:
            raise NetworkError(f"backend error HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise NetworkError(f"request rejected HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise NetworkError(f"unexpected response payload: {e}") from None

    def complete(self, prompt: str, params: LlmParams) -> str:
        body = self.request_body(prompt, params)
        attempt = 0
        with self._slots:
            while True:
                try:
                    return self._post_once(body)
                except (NetworkError, RateLimited) as e:
                    if attempt >= self.max_retries:
                        raise
                    delay = min(self.backoff_cap, self.backoff_base * 2**attempt)
                    if isinstance(e, RateLimited) and e.retry_after is not None:
                        delay = min(self.backoff_cap, max(delay, e.retry_after))
                    log.warning("LLM call failed (%s); retry %d in %.1fs", e, attempt + 1, delay)
                    self._sleep(delay)
                    attempt += 1

    def close(self) -> None:
        self._client.close()


def cache_key(model: str, template_id: str, prompt: str, params: LlmParams) -> str:
    payload = json.dumps(
        {
            "model": model,
            "template_id": template_id,
            "prompt_sha256": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "stop": list(params.stop) if params.stop else None,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class ResponseCache:
    """Append-only JSONL record of LLM requests and responses.

    Each line is ``{"key", "request", "response"}``; a later line with the
    same key supersedes an earlier one. With ``path=None`` the cache lives in
    memory only.
    """

    path: Path | None = None
    _entries: dict[str, str] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.path is not None:
            self.path = Path(self.path)
            if self.path.exists():
                self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    self._entries[rec["key"]] = rec["response"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    raise MalformedRecord("bad cache record", self.path, lineno) from None

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, key: str) -> str | None:
        return self._entries.get(key)

    def put(self, key: str, request: dict, response: str) -> None:
        with self._lock:
            self._entries[key] = response
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps({"key": key, "request": request, "response": response}) + "\n")


def complete(
    backend: LlmBackend | None,
    prompt: str,
    params: LlmParams,
    cache: ResponseCache | None = None,
    mode: str = "live",
    template_id: str = "",
) -> str:
    """Run one completion in ``live``, ``record`` or ``replay`` mode.

    Replay never touches ``backend`` and fails with :class:`CacheMiss` on an
    unseen request.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    key = cache_key(params.model, template_id, prompt, params)
    if mode == "replay":
        hit = cache.get(key) if cache is not None else None
        if hit is None:
            raise CacheMiss(f"no recorded response for model {params.model!r} and this prompt")
        return hit
    if backend is None:
        raise ValueError(f"mode {mode!r} needs a backend")
    text = backend.complete(prompt, params)
    if mode == "record":
        if cache is None:
            raise ValueError("record mode needs a cache")
        request = asdict(params) | {
            "endpoint": getattr(backend, "endpoint", ""),
            "template_id": template_id,
            "prompt": prompt,
        }
        cache.put(key, request, text)
    return text
