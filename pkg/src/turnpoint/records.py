"""Canonical sample-record format: per-token log-probability data as JSONL.

One record per line, fields in a fixed order so writes are deterministic.
Logits are base-temperature (T=1) log-scores, meaningful up to a per-step
additive constant.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import RejectedDuplicate, TurnpointError


@dataclass
class StepDist:
    """One decoding step: the chosen token and its top-k (token, logit) alternatives."""

    chosen: str
    topk: list[tuple[str, float]]

    def validate(self) -> None:
        if not self.topk:
            raise ValueError("step topk must be nonempty")
        for tok, logit in self.topk:
            if not isinstance(tok, str):
                raise ValueError(f"token must be text, got {tok!r}")
            if not math.isfinite(logit):
                raise ValueError(f"non-finite logit {logit!r} for token {tok!r}")


@dataclass
class SampleRecord:
    """One generated sequence with its per-step top-k logit data."""

    problem_id: str
    temperature: float
    sample_index: int
    steps: list[StepDist] = field(default_factory=list)
    answer: str | None = None
    correct: bool | None = None
    score: float | None = None
    meta: dict[str, str] | None = None

    @property
    def key(self) -> tuple[str, float, int]:
        return (self.problem_id, self.temperature, self.sample_index)

    def validate(self) -> None:
        if not self.problem_id:
            raise ValueError("problem_id must be nonempty")
        if not math.isfinite(self.temperature) or self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature!r}")
        for step in self.steps:
            step.validate()

    def to_json_dict(self) -> dict:
        d: dict = {
            "problem_id": self.problem_id,
            "temperature": self.temperature,
            "sample_index": self.sample_index,
            "steps": [
                {"chosen": s.chosen, "topk": [[t, l] for t, l in s.topk]} for s in self.steps
            ],
        }
        if self.answer is not None:
            d["answer"] = self.answer
        if self.correct is not None:
            d["correct"] = self.correct
        if self.score is not None:
            d["score"] = self.score
        if self.meta is not None:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "SampleRecord":
        steps = [
            StepDist(chosen=s["chosen"], topk=[(t, float(l)) for t, l in s["topk"]])
            for s in d.get("steps", [])
        ]
        rec = cls(
            problem_id=d["problem_id"],
            temperature=float(d["temperature"]),
            sample_index=int(d["sample_index"]),
            steps=steps,
            answer=d.get("answer"),
            correct=d.get("correct"),
            score=d.get("score"),
            meta=d.get("meta"),
        )
        rec.validate()
        return rec


@dataclass
class IngestReport:
    """Per-file validation outcome: which lines were rejected and why."""

    path: str
    n_valid: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.rejected


class RecordSet:
    """An ordered collection of validated sample records."""

    def __init__(self, records: Iterable[SampleRecord] = (), report: IngestReport | None = None):
        self.records: list[SampleRecord] = list(records)
        self.report = report

    def __iter__(self) -> Iterator[SampleRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def sorted(self) -> list[SampleRecord]:
        return sorted(self.records, key=lambda r: r.key)

    def by_temperature(self, tol: float = 1e-9) -> dict[float, list[SampleRecord]]:
        """Group records by generation temperature (exact float match after rounding)."""
        groups: dict[float, list[SampleRecord]] = {}
        for rec in self.records:
            t = round(rec.temperature, 9)
            groups.setdefault(t, []).append(rec)
        return groups

    def temperatures(self) -> list[float]:
        return sorted(self.by_temperature())


def read_records(path: str | Path, strict: bool = False) -> RecordSet:
    """Load a JSONL record file, validating every line.

    Invalid lines are collected into the ingest report rather than aborting,
    unless ``strict`` is set.  Duplicate (problem_id, temperature,
    sample_index) triples are rejected.
    """
    path = Path(path)
    report = IngestReport(path=str(path))
    records: list[SampleRecord] = []
    seen: set[tuple[str, float, int]] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = SampleRecord.from_json_dict(json.loads(line))
                if rec.key in seen:
                    raise RejectedDuplicate(f"duplicate record key {rec.key}")
            except RejectedDuplicate as exc:
                if strict:
                    raise
                report.rejected.append((line_no, str(exc)))
                continue
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if strict:
                    raise TurnpointError(f"{path}:{line_no}: {exc}") from exc
                report.rejected.append((line_no, str(exc)))
                continue
            seen.add(rec.key)
            records.append(rec)
            report.n_valid += 1
    return RecordSet(records, report)


def write_records(records: Iterable[SampleRecord], path: str | Path) -> None:
    """Write records as JSONL, sorted by (problem_id, temperature, sample_index)."""
    recs = sorted(records, key=lambda r: r.key)
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in recs:
            fh.write(json.dumps(rec.to_json_dict(), ensure_ascii=False))
            fh.write("\n")


_BOXED_RE = re.compile(r"\\boxed\{([^{}]*)\}")


def extract_answer(text: str) -> str:
    """Default answer extractor: last ``\\boxed{...}`` group, else last nonempty line."""
    matches = _BOXED_RE.findall(text)
    if matches:
        return matches[-1].strip()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    return lines[-1] if lines else ""
