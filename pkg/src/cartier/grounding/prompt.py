from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path

from ..errors import EmptyQuery, EmptyVocabulary, InvalidTemplate

OBJECTS = "{objects}"
QUERY = "{query}"

DEFAULT_TEMPLATE_TEXT = (
    "You are helping a mobile robot choose a navigation target. "
    "The robot has detected the following objects in its environment: {objects}. "
    'A user says: "{query}". '
    "Reply with the single object from the list that the robot should navigate to "
    "in order to help the user."
)

_PLACEHOLDER = re.compile(r"\{objects\}|\{query\}")


@dataclass(frozen=True)
class PromptTemplate:
    text: str
    template_id: str = ""

    def __post_init__(self):
        for ph in (OBJECTS, QUERY):
            n = self.text.count(ph)
            if n != 1:
                raise InvalidTemplate(f"template must contain {ph} exactly once, found {n}")
        if not self.template_id:
            digest = hashlib.sha256(self.text.encode("utf-8")).hexdigest()[:12]
            object.__setattr__(self, "template_id", f"sha256:{digest}")

    @classmethod
    def from_file(cls, path, template_id: str | None = None) -> "PromptTemplate":
        path = Path(path)
        text = path.read_text(encoding="utf-8").rstrip("\n")
        return cls(text, template_id or "")


DEFAULT_TEMPLATE = PromptTemplate(DEFAULT_TEMPLATE_TEXT, "cartier-default-v1")


def dedupe(labels) -> list[str]:
    seen: dict[str, None] = {}
    for lb in labels:
        seen.setdefault(lb, None)
    return list(seen)


def build_prompt(template: PromptTemplate, vocabulary, query: str) -> str:
    """Fill the template with the comma-separated vocabulary and the verbatim query."""
    labels = dedupe(vocabulary)
    if not labels:
        raise EmptyVocabulary("cannot build a prompt from an empty object list")
    if not query or not query.strip():
        raise EmptyQuery("query text is empty")
    for lb in labels:
        if not lb.strip() or "," in lb or "\n" in lb:
            raise EmptyVocabulary(f"label {lb!r} cannot be listed in a comma-separated prompt")
    values = {OBJECTS: ", ".join(labels), QUERY: query}
    # single pass, so placeholder-like text inside the query is left alone
    return _PLACEHOLDER.sub(lambda m: values[m.group(0)], template.text)


def parse_prompt(template: PromptTemplate, prompt: str) -> tuple[list[str], str]:
    """Recover ``(vocabulary, query)`` from a prompt built with ``template``."""
    pattern = "".join(
        {"{objects}": "(?P<objects>.*?)", "{query}": "(?P<query>.*?)"}.get(part, re.escape(part))
        for part in re.split(r"(\{objects\}|\{query\})", template.text)
    )
    m = re.fullmatch(pattern, prompt, flags=re.DOTALL)
    if m is None:
        raise InvalidTemplate("prompt was not produced by this template")
    return m.group("objects").split(", "), m.group("query")
