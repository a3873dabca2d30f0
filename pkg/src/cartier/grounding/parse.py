from __future__ import annotations

import re

from ..errors import EmptyVocabulary, NoMatch

_SEP = re.compile(r"[\s_\-]+")


def _norm(text: str) -> str:
    return _SEP.sub(" ", text.lower()).strip()


def _label_pattern(label: str) -> re.Pattern:
    words = [re.escape(w) for w in _norm(label).split(" ") if w]
    return re.compile(r"(?<![a-z0-9])" + r"[\s_\-]+".join(words) + r"(?![a-z0-9])")


def find_mentions(response: str, vocabulary) -> dict[str, int]:
    """End offset of the last mention of each vocabulary label found in ``response``."""
    text = response.lower()
    found: dict[str, int] = {}
    for label in vocabulary:
        if not _norm(label):
            continue
        last = None
        for m in _label_pattern(label).finditer(text):
            last = m.end()
        if last is not None:
            found[label] = last
    return found


def parse_object(response: str, vocabulary) -> str:
    """Pick the vocabulary label named in an LLM response.

    Matching is case-insensitive on word boundaries, with spaces, underscores
    and hyphens interchangeable. When several labels appear, the one mentioned
    last wins; a tie on position goes to the longer label.
    """
    vocab = list(dict.fromkeys(vocabulary))
    if not vocab:
        raise EmptyVocabulary("cannot parse against an empty vocabulary")
    found = find_mentions(response, vocab)
    if not found:
        raise NoMatch(f"no known object named in response: {response[:200]!r}", response)
    return max(found, key=lambda lb: (found[lb], len(_norm(lb))))
