"""Entropy-curve estimation over a uniform temperature grid.

A curve point is the mean per-token entropy of sequences generated at that
temperature.  Trajectory mode scores each record at its own generation
temperature; counterfactual mode re-scores one fixed set of trajectories at
every grid temperature by rescaling their stored base-temperature logits.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dist import step_entropy_from_logits
from .errors import EmptyInput, InvalidArgument, MissingTemperatureData, SampleSizeTooLarge
from .records import RecordSet, SampleRecord


@dataclass(frozen=True)
class TemperatureGrid:
    """Uniform grid start, start+step, ..., up to and including max."""

    start: float = 0.1
    step: float = 0.1
    max: float = 1.5

    def __post_init__(self):
        if self.step <= 0:
            raise InvalidArgument(f"grid step must be positive, got {self.step}")
        if self.start <= 0:
            raise InvalidArgument(f"grid start must be positive, got {self.start}")
        if self.max < self.start:
            raise InvalidArgument(f"grid max {self.max} below start {self.start}")

    @property
    def count(self) -> int:
        return int(np.floor((self.max - self.start) / self.step + 1e-9)) + 1

    @property
    def values(self) -> list[float]:
        return [round(self.start + j * self.step, 10) for j in range(self.count)]

    def index_of(self, temperature: float, tol: float = 1e-9) -> int:
        j = int(round((temperature - self.start) / self.step))
        if 0 <= j < self.count and abs(self.values[j] - temperature) <= tol:
            return j
        raise InvalidArgument(f"temperature {temperature} is not on the grid")


@dataclass(frozen=True)
class CurvePoint:
    temperature: float
    mean_entropy: float
    n_samples: int
    variance: float


@dataclass
class EntropyCurve:
    """Mean per-token entropy at each grid temperature."""

    grid_start: float
    grid_step: float
    points: list[CurvePoint]

    def __post_init__(self):
        temps = [p.temperature for p in self.points]
        for j, t in enumerate(temps):
            expected = self.grid_start + j * self.grid_step
            if abs(t - expected) > 1e-9:
                raise InvalidArgument(f"point {j} at {t}, expected {expected} (non-uniform grid)")
        for p in self.points:
            if p.n_samples < 1:
                raise InvalidArgument(f"point at {p.temperature} has n_samples={p.n_samples}")
            if p.mean_entropy < 0:
                raise InvalidArgument(f"negative entropy at {p.temperature}")

    @property
    def temperatures(self) -> np.ndarray:
        return np.array([p.temperature for p in self.points])

    @property
    def entropies(self) -> np.ndarray:
        return np.array([p.mean_entropy for p in self.points])

    def __len__(self) -> int:
        return len(self.points)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["temperature", "mean_entropy", "n_samples", "variance"])
        for p in self.points:
            w.writerow([repr(p.temperature), repr(p.mean_entropy), p.n_samples, repr(p.variance)])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def from_csv(cls, text: str) -> "EntropyCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise EmptyInput("curve CSV has no rows")
        points = [
            CurvePoint(
                temperature=float(r["temperature"]),
                mean_entropy=float(r["mean_entropy"]),
                n_samples=int(r["n_samples"]),
                variance=float(r["variance"]),
            )
            for r in rows
        ]
        start = points[0].temperature
        step = points[1].temperature - start if len(points) > 1 else 0.1
        return cls(grid_start=start, grid_step=round(step, 10), points=points)

    @classmethod
    def read_csv(cls, path: str | Path) -> "EntropyCurve":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


@dataclass
class CurveDiagnostics:
    """Tally of records skipped during estimation."""

    skipped_empty: int = 0


def _record_step_logits(record: SampleRecord) -> list[np.ndarray]:
    return [np.array([l for _, l in step.topk], dtype=np.float64) for step in record.steps]


def _record_mean_entropy(
    step_logits: Sequence[np.ndarray], temperature: float, top_k: int | None
) -> float:
    ents = [step_entropy_from_logits(z, temperature, top_k) for z in step_logits]
    return float(np.mean(ents))


def _point_from_values(temperature: float, values: list[float]) -> CurvePoint:
    arr = np.asarray(values, dtype=np.float64)
    var = float(np.var(arr, ddof=1)) if arr.size > 1 else 0.0
    return CurvePoint(
        temperature=temperature,
        mean_entropy=float(np.mean(arr)),
        n_samples=arr.size,
        variance=var,
    )


def estimate_curve(
    records: RecordSet | Iterable[SampleRecord],
    grid: TemperatureGrid,
    top_k: int | None = 1000,
    weighting: str = "sequence",
    diagnostics: CurveDiagnostics | None = None,
) -> EntropyCurve:
    """Trajectory-mode entropy curve: each record scored at its own temperature.

    Per record, per step: top-K truncation, temperature-scaled softmax, then
    Shannon entropy; per-record mean over steps; per-temperature mean over
    records.  ``weighting="token"`` instead pools all steps at a temperature
    with equal weight.
    """
    if weighting not in ("sequence", "token"):
        raise InvalidArgument(f"unknown weighting {weighting!r}")
    recs = records.sorted() if isinstance(records, RecordSet) else sorted(records, key=lambda r: r.key)
    diagnostics = diagnostics if diagnostics is not None else CurveDiagnostics()
    groups: dict[float, list[SampleRecord]] = {}
    for rec in recs:
        groups.setdefault(round(rec.temperature, 9), []).append(rec)

    points = []
    for t in grid.values:
        recs_at_t = groups.get(round(t, 9))
        if not recs_at_t:
            raise MissingTemperatureData(t)
        values: list[float] = []
        for rec in recs_at_t:
            if not rec.steps:
                warnings.warn(f"record {rec.key} has no steps; skipped", stacklevel=2)
                diagnostics.skipped_empty += 1
                continue
            step_logits = _record_step_logits(rec)
            if weighting == "sequence":
                values.append(_record_mean_entropy(step_logits, rec.temperature, top_k))
            else:
                values.extend(
                    step_entropy_from_logits(z, rec.temperature, top_k) for z in step_logits
                )
        if not values:
            raise MissingTemperatureData(t)
        points.append(_point_from_values(t, values))
    return EntropyCurve(grid_start=grid.start, grid_step=grid.step, points=points)


def counterfactual_curve(
    fixed_records: RecordSet | Iterable[SampleRecord],
    grid: TemperatureGrid,
    top_k: int | None = 1000,
    weighting: str = "sequence",
) -> EntropyCurve:
    """Re-score one fixed set of trajectories at every grid temperature.

    All records must share a single generation temperature (typically the
    lowest, near-greedy one); their stored base-temperature logits are
    rescaled as p_T proportional to exp(logit / T).
    """
    recs = list(fixed_records)
    if not recs:
        raise EmptyInput("no records given")
    base_temps = {round(r.temperature, 9) for r in recs}
    if len(base_temps) != 1:
        raise InvalidArgument(f"counterfactual records span temperatures {sorted(base_temps)}")
    recs = sorted(recs, key=lambda r: r.key)

    per_record = []
    for rec in recs:
        if not rec.steps:
            warnings.warn(f"record {rec.key} has no steps; skipped", stacklevel=2)
            continue
        per_record.append(_record_step_logits(rec))
    if not per_record:
        raise EmptyInput("all records empty")

    points = []
    for t in grid.values:
        if weighting == "sequence":
            values = [_record_mean_entropy(steps, t, top_k) for steps in per_record]
        else:
            values = [
                step_entropy_from_logits(z, t, top_k) for steps in per_record for z in steps
            ]
        points.append(_point_from_values(t, values))
    return EntropyCurve(grid_start=grid.start, grid_step=grid.step, points=points)


@dataclass(frozen=True)
class StabilityRow:
    sample_size: int
    resamples: int
    mean_point_variance: float
    prediction_variance: float
    prediction_spread: float
    predictions: tuple[float, ...]
    failures: int


def curve_stability_report(
    records: RecordSet | Iterable[SampleRecord],
    grid: TemperatureGrid,
    sample_sizes: Sequence[int],
    resamples: int = 20,
    seed: int = 0,
    top_k: int | None = 1000,
    aggregation=None,
) -> list[StabilityRow]:
    """Prediction stability under subsampling.

    For each sample size n, draw ``resamples`` random without-replacement
    subsets of n records per grid temperature, re-estimate the curve and the
    predicted temperature, and report the variance of curve points and
    predictions.
    """
    from .turning import AggregationKind, select_temperature  # local import to avoid a cycle
    from .errors import NoTurningPoint

    if aggregation is None:
        aggregation = AggregationKind.MAJORITY_VOTING
    recs = records.sorted() if isinstance(records, RecordSet) else sorted(records, key=lambda r: r.key)
    groups: dict[float, list[SampleRecord]] = {}
    for rec in recs:
        groups.setdefault(round(rec.temperature, 9), []).append(rec)
    for t in grid.values:
        if round(t, 9) not in groups:
            raise MissingTemperatureData(t)

    rows = []
    for n_idx, n in enumerate(sample_sizes):
        for t, g in groups.items():
            if n > len(g):
                raise SampleSizeTooLarge(f"requested {n} records at T={t}, only {len(g)} available")
        predictions: list[float] = []
        failures = 0
        point_values: list[list[float]] = [[] for _ in grid.values]
        for r in range(resamples):
            rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence((seed & (2**64 - 1), n_idx, r)))
            )
            subset: list[SampleRecord] = []
            for t in grid.values:
                g = groups[round(t, 9)]
                idx = rng.choice(len(g), size=n, replace=False)
                subset.extend(g[i] for i in sorted(idx))
            curve = estimate_curve(subset, grid, top_k=top_k)
            for j, p in enumerate(curve.points):
                point_values[j].append(p.mean_entropy)
            try:
                result = select_temperature(curve, aggregation)
                predictions.append(result.predicted_temperature)
            except NoTurningPoint:
                failures += 1
        preds = np.asarray(predictions, dtype=np.float64)
        pred_var = float(np.var(preds, ddof=1)) if preds.size > 1 else 0.0
        spread = float(preds.max() - preds.min()) if preds.size else 0.0
        mean_pt_var = float(
            np.mean([np.var(v, ddof=1) if len(v) > 1 else 0.0 for v in point_values])
        )
        rows.append(
            StabilityRow(
                sample_size=n,
                resamples=resamples,
                mean_point_variance=mean_pt_var,
                prediction_variance=pred_var,
                prediction_spread=spread,
                predictions=tuple(float(p) for p in preds),
                failures=failures,
            )
        )
    return rows
