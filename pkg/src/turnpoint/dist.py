"""Temperature-scaled categorical distributions and Shannon entropy.

Logits are natural-log scores at base temperature 1.0, meaningful up to a
shared additive constant per step.  All entropies are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidArgument, InvalidDistribution, InvalidTemperature

# Probabilities below this floor contribute zero entropy.
PROB_FLOOR = 1e-300

DEFAULT_T_MAX = 2.0


class Temperature(float):
    """A positive sampling temperature, bounded by ``t_max``.

    Subclasses float so it participates in arithmetic directly.
    """

    def __new__(cls, value: float, t_max: float = DEFAULT_T_MAX) -> "Temperature":
        v = float(value)
        if not math.isfinite(v) or v <= 0.0:
            raise InvalidTemperature(f"temperature must be positive and finite, got {value!r}")
        if v > t_max:
            raise InvalidTemperature(f"temperature {v} exceeds t_max={t_max}")
        return super().__new__(cls, v)

    @property
    def value(self) -> float:
        return float(self)


def _check_temperature(temperature: float) -> float:
    t = float(temperature)
    if not math.isfinite(t) or t <= 0.0:
        raise InvalidTemperature(f"temperature must be positive and finite, got {temperature!r}")
    return t


@dataclass(frozen=True)
class TokenDist:
    """One decoding step's (token, logit) entries, in generation order."""

    tokens: tuple[str, ...]
    logits: tuple[float, ...]

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise InvalidDistribution("token distribution must be nonempty")
        if len(self.tokens) != len(self.logits):
            raise InvalidDistribution("tokens and logits must have equal length")
        if not all(math.isfinite(l) for l in self.logits):
            raise InvalidDistribution("all logits must be finite")
        if len(set(self.tokens)) != len(self.tokens):
            raise InvalidDistribution("duplicate token within one step")

    @classmethod
    def from_pairs(cls, entries: Iterable[tuple[str, float]]) -> "TokenDist":
        pairs = list(entries)
        return cls(tuple(t for t, _ in pairs), tuple(float(l) for _, l in pairs))

    @property
    def entries(self) -> list[tuple[str, float]]:
        return list(zip(self.tokens, self.logits))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class ProbDist:
    """Token probabilities; ``truncated`` marks a top-K slice that may sum below 1."""

    tokens: tuple[str, ...]
    probs: tuple[float, ...]
    truncated: bool = False

    def __post_init__(self):
        if any(p < 0.0 or p > 1.0 or not math.isfinite(p) for p in self.probs):
            raise InvalidDistribution("probabilities must lie in [0, 1]")
        total = math.fsum(self.probs)
        if self.truncated:
            if total > 1.0 + 1e-9:
                raise InvalidDistribution(f"truncated distribution sums to {total} > 1")
        elif abs(total - 1.0) > 1e-9:
            raise InvalidDistribution(f"complete distribution sums to {total}, expected 1")

    @property
    def entries(self) -> list[tuple[str, float]]:
        return list(zip(self.tokens, self.probs))

    def __len__(self) -> int:
        return len(self.tokens)


def softmax_probs(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Softmax of ``logits / temperature`` with max-subtraction, over the given entries."""
    t = _check_temperature(temperature)
    z = np.asarray(logits, dtype=np.float64) / t
    z = z - z.max()
    p = np.exp(z)
    return p / p.sum()


def scale_by_temperature(dist: TokenDist, temperature: float) -> ProbDist:
    """Temperature-scaled softmax over the distribution's entries.

    The result is complete (sums to 1) over the given entries and preserves
    input order.  Adding a constant to every logit leaves the result unchanged.
    """
    p = softmax_probs(np.asarray(dist.logits), temperature)
    return ProbDist(dist.tokens, tuple(float(v) for v in p))


def entropy_from_probs(probs: np.ndarray) -> float:
    """Shannon entropy in nats; entries below PROB_FLOOR contribute zero."""
    p = np.asarray(probs, dtype=np.float64)
    mask = p > PROB_FLOOR
    p = p[mask]
    if p.size == 0:
        return 0.0
    return float(-(p * np.log(p)).sum())


def shannon_entropy(dist: ProbDist, renormalize_truncated: bool = False) -> float:
    """Shannon entropy of a probability distribution, in nats.

    For a truncated distribution the sum runs over the retained entries only;
    the retained mass is not renormalized unless ``renormalize_truncated`` is
    set.
    """
    p = np.asarray(dist.probs, dtype=np.float64)
    if dist.truncated and renormalize_truncated:
        total = p.sum()
        if total <= 0.0:
            return 0.0
        p = p / total
    return entropy_from_probs(p)


def topk_truncate(dist: TokenDist, k: int) -> TokenDist:
    """Retain the k highest-logit entries, ordered by descending logit.

    Ties keep input order.  When k covers every entry the distribution is
    returned unchanged.
    """
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    n = len(dist)
    if k >= n:
        return dist
    # stable argsort on negated logits: descending, ties in input order
    order = np.argsort(-np.asarray(dist.logits), kind="stable")[:k]
    return TokenDist(
        tuple(dist.tokens[i] for i in order),
        tuple(dist.logits[i] for i in order),
    )


def step_entropy_from_logits(
    logits: np.ndarray,
    temperature: float,
    top_k: int | None = None,
) -> float:
    """Entropy of the top-K temperature-scaled softmax of raw step logits.

    Equivalent to topk_truncate -> scale_by_temperature -> shannon_entropy but
    skips the token bookkeeping; used on hot paths.
    """
    z = np.asarray(logits, dtype=np.float64)
    if top_k is not None and top_k < z.size:
        if top_k < 1:
            raise InvalidArgument(f"top_k must be >= 1, got {top_k}")
        z = np.sort(z)[-top_k:]
    return entropy_from_probs(softmax_probs(z, temperature))
