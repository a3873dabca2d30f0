from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..dataset.types import QueryType
from ..index import EMBEDDING_GRID, OBJECT_DEPTH, OBJECT_VIEWPOINT
from .metrics import MatchOutcome
from .records import CARTIER, DIRECT_INDEX, NO_MODEL, PROPOSAL_THRESHOLD, PredictionRecord, records_to_csv

# Column order and headings of the summary table.
COLUMNS = (
    ((CARTIER, OBJECT_DEPTH), "CARTIER ObjectDepth"),
    ((CARTIER, OBJECT_VIEWPOINT), "CARTIER ObjectViewpoint"),
    ((CARTIER, EMBEDDING_GRID), "CARTIER VLMaps"),
    ((PROPOSAL_THRESHOLD, EMBEDDING_GRID), "NLMap"),
    ((DIRECT_INDEX, EMBEDDING_GRID), "VLMaps Baseline"),
)
TYPE_ORDER = (QueryType.CONVERSATIONAL.value, QueryType.IMPLICIT.value, QueryType.EXPLICIT.value)


def mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


@dataclass
class Cell:
    n: int = 0
    failures: int = 0
    distances: list[float] = field(default_factory=list)
    matches: int = 0
    no_matches: int = 0
    pending: int = 0

    @property
    def mean_distance(self) -> float:
        return mean(self.distances)

    @property
    def match_rate(self) -> float:
        decided = self.matches + self.no_matches
        return self.matches / decided if decided else math.nan


def cell_key(r: PredictionRecord) -> tuple[str, str, str, str]:
    return (r.model, r.query_type, r.method, r.index)


def aggregate(records) -> dict[tuple[str, str, str, str], Cell]:
    cells: dict[tuple[str, str, str, str], Cell] = {}
    for r in records:
        c = cells.setdefault(cell_key(r), Cell())
        c.n += 1
        if r.failed:
            c.failures += 1
            continue
        c.distances.append(float(r.distance))
        if r.match is MatchOutcome.MATCH:
            c.matches += 1
        elif r.match is MatchOutcome.NO_MATCH:
            c.no_matches += 1
        elif r.match is MatchOutcome.NEEDS_ADJUDICATION:
            c.pending += 1
    return cells


@dataclass
class Report:
    records: list[PredictionRecord]

    @property
    def cells(self):
        return aggregate(self.records)

    @property
    def failures(self) -> int:
        return sum(r.failed for r in self.records)

    @property
    def pending(self) -> list[PredictionRecord]:
        return [r for r in self.records if r.match is MatchOutcome.NEEDS_ADJUDICATION]

    def to_csv(self) -> str:
        return records_to_csv(self.records)

    def models(self) -> list[str]:
        out = []
        for r in self.records:
            if r.model != NO_MODEL and r.model not in out:
                out.append(r.model)
        return out or [NO_MODEL]

    def to_markdown(self) -> str:
        cells = self.cells
        present = {(m, i) for (_, _, m, i) in cells}
        cols = [(key, title) for key, title in COLUMNS if key in present]
        types = [t for t in TYPE_ORDER if any(k[1] == t for k in cells)]
        head = "| Model | Type | " + " | ".join(t for _, t in cols) + " |"
        rule = "|---|---|" + "---|" * len(cols)

        def lookup(model, qtype, key):
            c = cells.get((model, qtype, *key))
            if c is None and key[0] == DIRECT_INDEX:
                # model-free baseline: same value in every model row
                c = cells.get((NO_MODEL, qtype, *key))
            return c

        def fmt(x, pattern):
            return "n/a" if x is None or math.isnan(x) else pattern.format(x)

        dist_lines = ["Mean distance to the nearest plausible object (m)", "", head, rule]
        match_lines = ["Object-match rate", "", head, rule]
        for model in self.models():
            for qtype in types:
                d_cells, m_cells = [], []
                for key, _ in cols:
                    c = lookup(model, qtype, key)
                    d = fmt(c.mean_distance if c else None, "{:.2f}")
                    if c and c.failures:
                        d += f" ({c.failures} failed)"
                    d_cells.append(d)
                    m = "n/a" if key[0] == DIRECT_INDEX else fmt(c.match_rate if c else None, "{:.0%}")
                    if c and c.pending:
                        m += f" ({c.pending} pending)"
                    m_cells.append(m)
                dist_lines.append(f"| {model} | {qtype} | " + " | ".join(d_cells) + " |")
                match_lines.append(f"| {model} | {qtype} | " + " | ".join(m_cells) + " |")
        footer = [f"Records: {len(self.records)}; failed: {self.failures}; pending adjudication: {len(self.pending)}"]
        return "\n".join(dist_lines + [""] + match_lines + [""] + footer) + "\n"
