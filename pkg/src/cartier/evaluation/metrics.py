from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from ..dataset.types import SceneTruth
from ..errors import DatasetError, MalformedRecord, UnknownPlausibleLabel
from ..geometry import point_to_aabb_distance
from ..index.object_index import normalize_label


def distance_metric(point, truth: SceneTruth, plausible) -> float:
    """Minimum distance from ``point`` to any box whose label is plausible."""
    plausible = list(plausible)
    if not plausible:
        raise UnknownPlausibleLabel("plausible label list is empty")
    present = set(truth.labels)
    for label in plausible:
        if label not in present:
            raise UnknownPlausibleLabel(f"label {label!r} not in scene {truth.scene_id!r}")
    return min(point_to_aabb_distance(point, box) for box in truth.boxes_for(plausible))


class MatchOutcome(str, Enum):
    MATCH = "match"
    NO_MATCH = "no-match"
    NEEDS_ADJUDICATION = "needs-adjudication"


COLOCATION_STATUSES = ("accept", "ambiguous", "reject")


@dataclass
class EquivalenceConfig:
    """Synonym groups and (predicted, target) colocation rules for object matching.

    Colocation status ``accept`` counts the pair as a match, ``ambiguous``
    routes it to human adjudication and ``reject`` records a decided failure.
    """

    synonym_groups: list[list[str]] = field(default_factory=list)
    colocations: dict[tuple[str, str], str] = field(default_factory=dict)

    def __post_init__(self):
        self._canon: dict[str, str] = {}
        for group in self.synonym_groups:
            if not group:
                continue
            rep = normalize_label(group[0])
            for label in group:
                key = normalize_label(label)
                if key in self._canon and self._canon[key] != rep:
                    raise DatasetError(f"label {label!r} appears in two synonym groups")
                self._canon[key] = rep
        colo = {}
        for (pred, target), status in self.colocations.items():
            if status not in COLOCATION_STATUSES:
                raise DatasetError(f"colocation status must be one of {COLOCATION_STATUSES}, got {status!r}")
            colo[(self.canonical(pred), self.canonical(target))] = status
        self.colocations = colo

    def canonical(self, label: str) -> str:
        key = normalize_label(label)
        return self._canon.get(key, key)

    def colocation(self, pred: str, target: str) -> str | None:
        return self.colocations.get((self.canonical(pred), self.canonical(target)))

    def decide(self, pred: str, target: str, accept: bool) -> None:
        self.colocations[(self.canonical(pred), self.canonical(target))] = "accept" if accept else "reject"

    def to_dict(self) -> dict:
        return {
            "synonyms": [list(g) for g in self.synonym_groups],
            "colocations": [
                {"predicted": p, "target": t, "status": s} for (p, t), s in sorted(self.colocations.items())
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EquivalenceConfig":
        path = Path(path)
        if not path.exists():
            return cls()
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            colo = {(c["predicted"], c["target"]): c["status"] for c in data.get("colocations", [])}
            return cls([list(g) for g in data.get("synonyms", [])], colo)
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise MalformedRecord(f"bad equivalence config: {e}", path) from None


def object_match(pred: str, plausible, eq: EquivalenceConfig | None = None) -> MatchOutcome:
    eq = eq or EquivalenceConfig()
    p = eq.canonical(pred)
    targets = [eq.canonical(t) for t in plausible]
    if p in targets:
        return MatchOutcome.MATCH
    statuses = {eq.colocations.get((p, t)) for t in targets}
    if "accept" in statuses:
        return MatchOutcome.MATCH
    if "ambiguous" in statuses:
        return MatchOutcome.NEEDS_ADJUDICATION
    return MatchOutcome.NO_MATCH


def pending_pairs(pred: str, plausible, eq: EquivalenceConfig) -> list[tuple[str, str]]:
    """Ambiguous (predicted, target) pairs that would settle this prediction."""
    p = eq.canonical(pred)
    return [(p, eq.canonical(t)) for t in plausible if eq.colocations.get((p, eq.canonical(t))) == "ambiguous"]
