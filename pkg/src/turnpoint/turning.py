"""Turning-point detection on log-entropy curves and temperature selection.

The detector works on discrete second differences of the log curve: the
selected index is the first interior grid point where the second difference
crosses from non-positive to positive, marking the onset of the entropy
spike.  The predicted temperature adds a per-aggregation adaptation offset.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .curves import EntropyCurve
from .errors import CurveTooShort, NoTurningPoint

# Entropies are floored here before taking logs so near-deterministic
# low-temperature points do not produce -inf.
LOG_FLOOR = 1e-9


class AggregationKind(enum.Enum):
    MAJORITY_VOTING = "majority-voting"
    BEST_OF_N = "best-of-n"

    @property
    def beta(self) -> float:
        return _BETA[self]

    @classmethod
    def parse(cls, name: str) -> "AggregationKind":
        key = name.strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown aggregation {name!r}")


_BETA = {AggregationKind.MAJORITY_VOTING: 0.0, AggregationKind.BEST_OF_N: 0.1}


@dataclass
class TurnResult:
    """Detected turning point plus the final temperature prediction."""

    entp_index: int
    entp_temperature: float
    beta: float
    predicted_temperature: float
    second_differences: list[float]
    fallback_used: bool
    clamped: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "entp_index": self.entp_index,
                "entp_temperature": self.entp_temperature,
                "beta": self.beta,
                "predicted_temperature": self.predicted_temperature,
                "second_differences": self.second_differences,
                "fallback_used": self.fallback_used,
                "clamped": self.clamped,
            },
            indent=2,
        )


def _smooth(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; points whose full window would overrun the
    boundary are left unsmoothed (shrinking the window there would fabricate
    curvature at the ends)."""
    if window <= 1:
        return values
    if window % 2 == 0:
        raise ValueError(f"smoothing window must be odd, got {window}")
    half = window // 2
    out = values.astype(np.float64, copy=True)
    for j in range(half, values.size - half):
        out[j] = values[j - half : j + half + 1].mean()
    return out


def log_second_differences(curve: EntropyCurve, smoothing_window: int = 1) -> np.ndarray:
    """Second differences of the (optionally smoothed) log-entropy curve.

    Entry i corresponds to interior grid point i+1.
    """
    if len(curve) < 3:
        raise CurveTooShort(f"need at least 3 points, got {len(curve)}")
    ell = np.log(np.maximum(curve.entropies, LOG_FLOOR))
    ell = _smooth(ell, smoothing_window)
    return ell[2:] - 2.0 * ell[1:-1] + ell[:-2]


def find_turning_point(
    curve: EntropyCurve,
    smoothing_window: int = 1,
    zero_tol: float = 1e-6,
) -> tuple[int, np.ndarray]:
    """First interior index where the log-curve's second difference turns positive.

    Returns (index into curve.points, second-difference array).  The index
    qualifies when its second difference exceeds ``zero_tol`` and the previous
    interior point (when there is one) does not.
    """
    d2 = log_second_differences(curve, smoothing_window)
    for i in range(d2.size):
        if d2[i] > zero_tol and (i == 0 or d2[i - 1] <= zero_tol):
            return i + 1, d2
    raise NoTurningPoint(diagnostics=d2.tolist())


def select_temperature(
    curve: EntropyCurve,
    aggregation: AggregationKind,
    smoothing_window: int = 1,
    zero_tol: float = 1e-6,
    retry_smoothing: int | None = 3,
) -> TurnResult:
    """Turning-point temperature plus the aggregation adaptation offset.

    On NoTurningPoint the detection is retried once with a smoothed curve
    (``retry_smoothing`` window); if that also fails the error propagates.
    The prediction is clamped into the curve's grid span.
    """
    fallback = False
    try:
        index, d2 = find_turning_point(curve, smoothing_window, zero_tol)
    except NoTurningPoint:
        if retry_smoothing is None or retry_smoothing <= smoothing_window:
            raise
        index, d2 = find_turning_point(curve, retry_smoothing, zero_tol)
        fallback = True

    entp_t = curve.points[index].temperature
    lo = curve.points[0].temperature
    hi = curve.points[-1].temperature
    raw = entp_t + aggregation.beta
    predicted = min(max(raw, lo), hi)
    return TurnResult(
        entp_index=index,
        entp_temperature=entp_t,
        beta=aggregation.beta,
        predicted_temperature=round(predicted, 10),
        second_differences=[float(v) for v in d2],
        fallback_used=fallback,
        clamped=bool(predicted != raw),
    )
