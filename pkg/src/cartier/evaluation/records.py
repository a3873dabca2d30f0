from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import MalformedRecord, MissingFile
from .metrics import MatchOutcome

CARTIER = "cartier"
DIRECT_INDEX = "direct-index"
PROPOSAL_THRESHOLD = "proposal-threshold"
METHODS = (CARTIER, DIRECT_INDEX, PROPOSAL_THRESHOLD)
NO_MODEL = "-"

CSV_HEADER = (
    "query_id",
    "scene_id",
    "method",
    "index",
    "model",
    "query_type",
    "plausible_labels",
    "label",
    "x",
    "y",
    "z",
    "object_match",
    "distance",
    "status",
    "error",
)


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    query_id: str
    scene_id: str
    method: str
    index: str
    model: str
    query_type: str
    plausible: tuple[str, ...]
    label: str | None = None
    point: np.ndarray | None = None
    match: MatchOutcome | None = None
    distance: float | None = None
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)

    @property
    def status(self) -> str:
        return "failed" if self.failed else "ok"

    def with_match(self, match: MatchOutcome | None) -> "PredictionRecord":
        return replace(self, match=match)

    def row(self) -> list[str]:
        pt = ["", "", ""] if self.point is None else [repr(float(c)) for c in self.point]
        return [
            self.query_id,
            self.scene_id,
            self.method,
            self.index,
            self.model,
            self.query_type,
            "|".join(self.plausible),
            self.label or "",
            *pt,
            self.match.value if self.match is not None else "",
            "" if self.distance is None else repr(float(self.distance)),
            self.status,
            self.error,
        ]

    @classmethod
    def from_row(cls, row: dict) -> "PredictionRecord":
        point = None
        if row["x"] != "":
            point = np.array([float(row["x"]), float(row["y"]), float(row["z"])])
        return cls(
            query_id=row["query_id"],
            scene_id=row["scene_id"],
            method=row["method"],
            index=row["index"],
            model=row["model"],
            query_type=row["query_type"],
            plausible=tuple(row["plausible_labels"].split("|")) if row["plausible_labels"] else (),
            label=row["label"] or None,
            point=point,
            match=MatchOutcome(row["object_match"]) if row["object_match"] else None,
            distance=float(row["distance"]) if row["distance"] != "" else None,
            error=row["error"],
        )


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def write_records_csv(records, path) -> None:
    Path(path).write_text(records_to_csv(records), encoding="utf-8")


def read_records_csv(path) -> list[PredictionRecord]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"records file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise MalformedRecord(f"unexpected CSV header {reader.fieldnames}", path)
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(PredictionRecord.from_row(row))
            except (KeyError, ValueError) as e:
                raise MalformedRecord(f"bad record: {e}", path, lineno) from None
        return out
