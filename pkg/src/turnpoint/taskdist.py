"""Model-task distance: mean per-token entropy of a model's own generations,
measured at a fixed low temperature.  Lower distance indicates a model more
specialized toward the task."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .curves import _record_mean_entropy, _record_step_logits
from .errors import DegenerateVariance, EmptyInput, PairedInputMismatch
from .records import RecordSet, SampleRecord

DEFAULT_MEASUREMENT_TEMPERATURE = 0.5


@dataclass
class DistanceReport:
    distance: float
    n_instances: int
    per_instance_means: list[float]
    measurement_temperature: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "distance": self.distance,
                "n_instances": self.n_instances,
                "per_instance_means": self.per_instance_means,
                "measurement_temperature": self.measurement_temperature,
            },
            indent=2,
        )


def model_task_distance(
    records: RecordSet | Iterable[SampleRecord],
    top_k: int | None = 1000,
    measurement_temperature: float = DEFAULT_MEASUREMENT_TEMPERATURE,
) -> DistanceReport:
    """Mean over task instances of the mean per-step entropy of generations.

    Multiple records for one instance are averaged first, so every instance
    carries equal weight.  Records are expected at the measurement
    temperature; a mismatch warns but still computes.
    """
    recs = records.sorted() if isinstance(records, RecordSet) else sorted(records, key=lambda r: r.key)
    recs = [r for r in recs if r.steps]
    if not recs:
        raise EmptyInput("no records with steps")
    off_temp = {r.temperature for r in recs if abs(r.temperature - measurement_temperature) > 1e-9}
    if off_temp:
        warnings.warn(
            f"records generated at {sorted(off_temp)}, not at the measurement "
            f"temperature {measurement_temperature}",
            stacklevel=2,
        )
    by_instance: dict[str, list[float]] = {}
    for rec in recs:
        ent = _record_mean_entropy(_record_step_logits(rec), rec.temperature, top_k)
        by_instance.setdefault(rec.problem_id, []).append(ent)
    instance_means = [float(np.mean(v)) for _, v in sorted(by_instance.items())]
    return DistanceReport(
        distance=float(np.mean(instance_means)),
        n_instances=len(instance_means),
        per_instance_means=instance_means,
        measurement_temperature=measurement_temperature,
    )


def pearson_correlation(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation coefficient."""
    if len(xs) != len(ys):
        raise PairedInputMismatch(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise EmptyInput("need at least two points")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    xd = x - x.mean()
    yd = y - y.mean()
    sx = float(np.sqrt((xd * xd).sum()))
    sy = float(np.sqrt((yd * yd).sum()))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateVariance("correlation of a constant sequence is undefined")
    r = float((xd * yd).sum() / (sx * sy))
    return max(-1.0, min(1.0, r))
