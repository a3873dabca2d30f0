from __future__ import annotations

from typing import Callable

from .metrics import EquivalenceConfig, MatchOutcome, object_match, pending_pairs
from .records import PredictionRecord


def rematch(records, eq: EquivalenceConfig) -> list[PredictionRecord]:
    """Recompute object-match for records that carry a label."""
    return [r.with_match(object_match(r.label, r.plausible, eq)) if r.label and not r.failed else r for r in records]


def adjudicate(
    records,
    eq: EquivalenceConfig,
    ask: Callable[[PredictionRecord, str, str], bool],
) -> tuple[list[PredictionRecord], int]:
    """Ask a human about each unresolved colocation pair and fold decisions into ``eq``.

    ``ask(record, predicted, target)`` returns True to accept the pair as a
    match. Each pair is asked once. Returns the re-matched records and the
    number of decisions taken.
    """
    decided = 0
    for r in records:
        if r.match is not MatchOutcome.NEEDS_ADJUDICATION:
            continue
        for pred, target in pending_pairs(r.label, r.plausible, eq):
            if eq.colocation(pred, target) != "ambiguous":
                continue
            eq.decide(pred, target, ask(r, pred, target))
            decided += 1
    return rematch(records, eq), decided
