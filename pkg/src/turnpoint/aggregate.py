"""Multi-sample aggregation: voting, best-of-N, pass@K, accuracy surfaces,
epsilon-optimal temperature ranges, and prediction metrics."""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    EmptySampleSet,
    InvalidArgument,
    MissingReward,
    PairedInputMismatch,
    RejectedDuplicate,
    SampleSizeTooLarge,
)
from .records import SampleRecord
from .turning import AggregationKind

_WS_RE = re.compile(r"\s+")


def normalize_answer(raw: str) -> str:
    """Default normalizer: trim, collapse internal whitespace, case-fold."""
    return _WS_RE.sub(" ", raw.strip()).casefold()


def identity_normalizer(raw: str) -> str:
    return raw


@dataclass(frozen=True)
class AggSample:
    """One sample's answer and bookkeeping for aggregation."""

    answer: str
    normalized_answer: str
    temperature: float
    sample_index: int
    correct: bool | None = None
    score: float | None = None


class SampleSet:
    """Samples grouped by problem id, with a configured answer normalizer."""

    def __init__(self, normalizer: Callable[[str], str] = normalize_answer):
        self.normalizer = normalizer
        self.problems: dict[str, list[AggSample]] = {}
        self._keys: set[tuple[str, float, int]] = set()

    def add(
        self,
        problem_id: str,
        answer: str,
        temperature: float,
        sample_index: int,
        correct: bool | None = None,
        score: float | None = None,
    ) -> AggSample:
        key = (problem_id, round(temperature, 9), sample_index)
        if key in self._keys:
            raise RejectedDuplicate(f"duplicate sample key {key}")
        self._keys.add(key)
        sample = AggSample(
            answer=answer,
            normalized_answer=self.normalizer(answer),
            temperature=temperature,
            sample_index=sample_index,
            correct=correct,
            score=score,
        )
        self.problems.setdefault(problem_id, []).append(sample)
        return sample

    @classmethod
    def from_records(
        cls,
        records: Iterable[SampleRecord],
        normalizer: Callable[[str], str] = normalize_answer,
    ) -> "SampleSet":
        out = cls(normalizer)
        for rec in sorted(records, key=lambda r: r.key):
            out.add(
                rec.problem_id,
                rec.answer if rec.answer is not None else "",
                rec.temperature,
                rec.sample_index,
                correct=rec.correct,
                score=rec.score,
            )
        return out

    def problem_ids(self) -> list[str]:
        return sorted(self.problems)

    def temperatures(self) -> list[float]:
        return sorted({s.temperature for samples in self.problems.values() for s in samples})

    def at_temperature(self, problem_id: str, temperature: float, tol: float = 1e-9) -> list[AggSample]:
        return [
            s
            for s in self.problems.get(problem_id, [])
            if abs(s.temperature - temperature) <= tol
        ]

    def split_by_temperature(self) -> dict[float, "SampleSet"]:
        out: dict[float, SampleSet] = {}
        for pid, samples in self.problems.items():
            for s in samples:
                t = round(s.temperature, 9)
                sub = out.setdefault(t, SampleSet(self.normalizer))
                sub.problems.setdefault(pid, []).append(s)
        return out


@dataclass(frozen=True)
class VoteTally:
    """Majority-vote outcome with its count table and tie flag."""

    answer: str
    counts: dict[str, int]
    tie: bool


def tally_votes(samples: Sequence[AggSample]) -> VoteTally:
    """Count normalized answers; ties go to the answer holding the earliest sample_index."""
    if not samples:
        raise EmptySampleSet("cannot vote over zero samples")
    counts: dict[str, int] = {}
    earliest: dict[str, int] = {}
    for s in samples:
        counts[s.normalized_answer] = counts.get(s.normalized_answer, 0) + 1
        if s.normalized_answer not in earliest or s.sample_index < earliest[s.normalized_answer]:
            earliest[s.normalized_answer] = s.sample_index
    best = max(counts.values())
    tied = [a for a, c in counts.items() if c == best]
    winner = min(tied, key=lambda a: earliest[a])
    return VoteTally(answer=winner, counts=counts, tie=len(tied) > 1)


def majority_vote(samples: Sequence[AggSample]) -> str:
    return tally_votes(samples).answer


def best_of_n(samples: Sequence[AggSample]) -> AggSample:
    """Highest-score sample; ties go to the earliest sample_index."""
    if not samples:
        raise EmptySampleSet("cannot select from zero samples")
    for s in samples:
        if s.score is None:
            raise MissingReward(f"sample {s.sample_index} has no score")
    return min(samples, key=lambda s: (-s.score, s.sample_index))


def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that at least one of k drawn samples is correct.

    1 - prod_{i=0}^{k-1} (n-c-i)/(n-i); exactly the binomial-coefficient form,
    evaluated as a product of ratios so it stays stable for large n.
    """
    if not (0 <= c <= n):
        raise InvalidArgument(f"need 0 <= c <= n, got c={c}, n={n}")
    if not (1 <= k <= n):
        raise InvalidArgument(f"need 1 <= k <= n, got k={k}, n={n}")
    if k > n - c:
        return 1.0
    prod = 1.0
    for i in range(k):
        prod *= (n - c - i) / (n - i)
    return 1.0 - prod


@dataclass
class AccuracyHeatmap:
    """Aggregated accuracy over (sample size, temperature) cells."""

    temperatures: list[float]
    sample_sizes: list[int]
    accuracy: np.ndarray  # shape (len(sample_sizes), len(temperatures))
    resamples: int
    seed: int

    def __post_init__(self):
        self.accuracy = np.asarray(self.accuracy, dtype=np.float64)
        if self.accuracy.shape != (len(self.sample_sizes), len(self.temperatures)):
            raise InvalidArgument("heatmap matrix shape does not match its axes")
        if ((self.accuracy < 0) | (self.accuracy > 1)).any():
            raise InvalidArgument("accuracies must lie in [0, 1]")

    def row(self, sample_size: int) -> dict[float, float]:
        i = self.sample_sizes.index(sample_size)
        return {t: float(a) for t, a in zip(self.temperatures, self.accuracy[i])}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_size"] + [repr(t) for t in self.temperatures])
        for i, s in enumerate(self.sample_sizes):
            w.writerow([s] + [repr(float(a)) for a in self.accuracy[i]])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def from_csv(cls, text: str, resamples: int = 0, seed: int = 0) -> "AccuracyHeatmap":
        rows = list(csv.reader(io.StringIO(text)))
        if len(rows) < 2:
            raise EmptyInput("heatmap CSV has no data rows")
        temps = [float(v) for v in rows[0][1:]]
        sizes = [int(r[0]) for r in rows[1:]]
        acc = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(temperatures=temps, sample_sizes=sizes, accuracy=acc, resamples=resamples, seed=seed)


def _vote_correct(samples: list[AggSample]) -> bool:
    tally = tally_votes(samples)
    for s in sorted(samples, key=lambda s: s.sample_index):
        if s.normalized_answer == tally.answer:
            if s.correct is None:
                raise InvalidArgument(f"sample {s.sample_index} lacks a correctness flag")
            return s.correct
    raise AssertionError("winning answer not among samples")


def accuracy_heatmap(
    sets_by_temperature: Mapping[float, SampleSet],
    sample_sizes: Sequence[int],
    aggregation: AggregationKind,
    resamples: int = 100,
    seed: int = 0,
) -> AccuracyHeatmap:
    """Accuracy per (temperature, sample size) cell.

    Majority voting resamples without-replacement subsets and averages the
    vote-correctness indicator over problems and resamples.  Best-of-N with a
    perfect verifier (correctness flags) is computed analytically via pass@K,
    with no resampling.
    """
    temps = sorted(sets_by_temperature)
    sizes = sorted(sample_sizes)
    acc = np.zeros((len(sizes), len(temps)))
    for ti, t in enumerate(temps):
        sset = sets_by_temperature[t]
        problems = sset.problem_ids()
        if not problems:
            raise EmptyInput(f"no problems at temperature {t}")
        per_problem = {pid: sorted(sset.problems[pid], key=lambda s: s.sample_index) for pid in problems}
        for si, s in enumerate(sizes):
            for pid, samples in per_problem.items():
                if s > len(samples):
                    raise SampleSizeTooLarge(
                        f"sample size {s} exceeds {len(samples)} samples for problem {pid} at T={t}"
                    )
            if aggregation is AggregationKind.BEST_OF_N:
                vals = []
                for pid in problems:
                    samples = per_problem[pid]
                    n = len(samples)
                    correct_flags = [smp.correct for smp in samples]
                    if any(c is None for c in correct_flags):
                        raise InvalidArgument(f"problem {pid} lacks correctness flags at T={t}")
                    vals.append(pass_at_k(n, sum(correct_flags), s))
                acc[si, ti] = float(np.mean(vals))
            else:
                hits = 0
                total = 0
                for r in range(resamples):
                    rng = np.random.Generator(
                        np.random.Philox(np.random.SeedSequence((seed & (2**64 - 1), ti, si, r)))
                    )
                    for pid in problems:
                        samples = per_problem[pid]
                        if s == len(samples):
                            subset = samples
                        else:
                            idx = rng.choice(len(samples), size=s, replace=False)
                            subset = [samples[i] for i in idx]
                        hits += _vote_correct(subset)
                        total += 1
                acc[si, ti] = hits / total
    return AccuracyHeatmap(
        temperatures=temps, sample_sizes=sizes, accuracy=acc, resamples=resamples, seed=seed
    )


@dataclass
class EpsRange:
    """Contiguous temperature interval around the accuracy peak."""

    epsilon: float
    low: float
    high: float
    midpoint: float
    peak_temperature: float
    peak_accuracy: float
    excluded_qualifying: list[float] = field(default_factory=list)

    def contains(self, temperature: float) -> bool:
        return self.low <= temperature <= self.high

    def to_json_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "low": self.low,
            "high": self.high,
            "midpoint": self.midpoint,
            "peak_temperature": self.peak_temperature,
            "peak_accuracy": self.peak_accuracy,
            "excluded_qualifying": self.excluded_qualifying,
        }


def eps_optimal_range(
    accuracy_by_temperature: Mapping[float, float],
    epsilon: float = 0.02,
) -> EpsRange:
    """Maximal contiguous grid interval around the peak with accuracy >= peak - epsilon.

    Peak ties resolve to the lowest temperature.  Qualifying points outside
    the contiguous interval are reported, not included.
    """
    if not accuracy_by_temperature:
        raise EmptyInput("empty accuracy map")
    temps = sorted(accuracy_by_temperature)
    accs = [accuracy_by_temperature[t] for t in temps]
    peak_idx = int(np.argmax(accs))  # argmax returns the first (lowest-T) maximum
    peak_acc = accs[peak_idx]
    threshold = peak_acc - epsilon
    lo = peak_idx
    while lo > 0 and accs[lo - 1] >= threshold:
        lo -= 1
    hi = peak_idx
    while hi < len(temps) - 1 and accs[hi + 1] >= threshold:
        hi += 1
    excluded = [
        t
        for j, t in enumerate(temps)
        if (j < lo or j > hi) and accs[j] >= threshold
    ]
    return EpsRange(
        epsilon=epsilon,
        low=temps[lo],
        high=temps[hi],
        midpoint=round((temps[lo] + temps[hi]) / 2.0, 10),
        peak_temperature=temps[peak_idx],
        peak_accuracy=float(peak_acc),
        excluded_qualifying=excluded,
    )


@dataclass
class PredictionScore:
    """Hit/gap/drop metrics for one predicted temperature."""

    hit: bool
    temperature_gap: float
    performance_drop: float

    def to_json_dict(self) -> dict:
        return {
            "hit": self.hit,
            "temperature_gap": self.temperature_gap,
            "performance_drop": self.performance_drop,
        }


def evaluate_prediction(
    predicted: float,
    eps_range: EpsRange,
    accuracy_by_temperature: Mapping[float, float],
) -> PredictionScore:
    """Hit = prediction inside the range; gap = distance to the nearest boundary;
    drop = peak accuracy minus accuracy at the nearest grid temperature."""
    hit = eps_range.contains(predicted)
    gap = 0.0 if hit else min(abs(predicted - eps_range.low), abs(predicted - eps_range.high))
    temps = sorted(accuracy_by_temperature)
    snapped = min(temps, key=lambda t: (abs(t - predicted), t))
    drop = eps_range.peak_accuracy - accuracy_by_temperature[snapped]
    return PredictionScore(hit=hit, temperature_gap=float(gap), performance_drop=float(drop))


@dataclass
class BetaCalibration:
    """Mean midpoints of two paired aggregation families and their difference."""

    mean_a: float
    mean_b: float
    difference: float
    rounded: float

    def to_json_dict(self) -> dict:
        return {
            "mean_a": self.mean_a,
            "mean_b": self.mean_b,
            "difference": self.difference,
            "rounded": self.rounded,
        }


def calibrate_beta(midpoints_a: Sequence[float], midpoints_b: Sequence[float]) -> BetaCalibration:
    """Difference between mean optimal-range midpoints, rounded to one decimal."""
    if len(midpoints_a) != len(midpoints_b):
        raise PairedInputMismatch(
            f"paired lists differ in length: {len(midpoints_a)} vs {len(midpoints_b)}"
        )
    if not midpoints_a:
        raise EmptyInput("empty midpoint lists")
    mean_a = float(np.mean(midpoints_a))
    mean_b = float(np.mean(midpoints_b))
    diff = mean_a - mean_b
    return BetaCalibration(mean_a=mean_a, mean_b=mean_b, difference=diff, rounded=round(diff, 1))
