"""
Experiment reports and their CSV form.

Body rows are sorted by (shape_id, quantity) before writing and floats are
written with ``repr`` so a report re-reads to identical values. Metadata
lines start with ``#`` and precede the header row.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

COLUMNS = ("experiment", "shape_id", "delta", "q", "h", "quantity", "value",
           "error_bound", "pass")


class Verdict(Enum):
    """Outcome of a row: a check that passed or failed, or a row carrying no
    assertion (measurements, exploratory cases, skipped shapes)."""

    TRUE = "true"
    FALSE = "false"
    NA = "na"

    @classmethod
    def of(cls, ok: bool) -> Verdict:
        return cls.TRUE if ok else cls.FALSE


@dataclass(frozen=True)
class Row:
    experiment: str
    shape_id: str
    delta: float
    q: float
    h: float
    quantity: str
    value: float
    error_bound: float = 0.0
    passed: Verdict = Verdict.NA

    def __post_init__(self):
        if self.error_bound is None or math.isnan(self.error_bound):
            raise ValueError(f"row {self.shape_id}/{self.quantity} lacks an error bound")

    @property
    def key(self):
        return (self.shape_id, self.quantity)

    def cells(self) -> list[str]:
        return [self.experiment, self.shape_id, repr(float(self.delta)), repr(float(self.q)),
                repr(float(self.h)), self.quantity, repr(float(self.value)),
                repr(float(self.error_bound)), self.passed.value]


@dataclass
class Report:
    rows: list[Row] = field(default_factory=list)
    metadata: list[tuple[str, str]] = field(default_factory=list)

    def add(self, row: Row) -> None:
        self.rows.append(row)

    def extend(self, rows) -> None:
        self.rows.extend(rows)

    def sorted_rows(self) -> list[Row]:
        return sorted(self.rows, key=lambda r: r.key)

    @property
    def failures(self) -> list[Row]:
        return [r for r in self.rows if r.passed is Verdict.FALSE]

    @property
    def all_passed(self) -> bool:
        return not self.failures

    def find(self, shape_id: str, quantity: str) -> Row:
        for r in self.rows:
            if r.key == (shape_id, quantity):
                return r
        raise KeyError((shape_id, quantity))

    def body_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.sorted_rows():
            w.writerow(r.cells())
        return buf.getvalue()

    def to_csv(self) -> str:
        head = "".join(f"# {k}: {v}\n" for k, v in self.metadata)
        return head + self.body_csv()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def stamp(report: Report, version: str, config_lines) -> None:
    """Attach tool version, UTC timestamp and the config echo as metadata."""
    report.metadata.append(("version", version))
    report.metadata.append(("timestamp", datetime.now(timezone.utc).isoformat(timespec="seconds")))
    for line in config_lines:
        report.metadata.append(("config", line))


def parse_csv(text: str) -> Report:
    meta, body = [], []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(": ")
            meta.append((key, value))
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader, None)
    if tuple(header or ()) != COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    rows = []
    for cells in reader:
        exp, sid, delta, q, h, qty, value, err, ok = cells
        rows.append(Row(exp, sid, float(delta), float(q), float(h), qty, float(value),
                        float(err), Verdict(ok)))
    return Report(rows, meta)


def read_csv(path) -> Report:
    return parse_csv(Path(path).read_text())
