"""Stochastic error-propagation model of temperature-driven quality collapse.

Vocabulary is split into a small proper block (Gaussian logits) and a large
improper block (one shared low logit).  A per-step error rate x_t gives the
total improper probability mass; sampling an improper token amplifies it
(x' = 1-(1-x)^alpha) and a proper token decays it (x' = max(x^alpha, x_init)).
The initial rate is the temperature-scaled softmax mass of the improper block,
which ties temperature to collapse onset.

Randomness comes from counter-based streams keyed by (seed, temperature,
trial), so trials can run in any order or in parallel and still reproduce the
sequential results bit for bit.
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregate import SampleSet
from .curves import CurvePoint, EntropyCurve, TemperatureGrid
from .dist import _check_temperature
from .errors import InvalidArgument
from .records import SampleRecord, StepDist

PROPER = "proper"
IMPROPER = "improper"

_MASK64 = (1 << 64) - 1
_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class SimConfig:
    """Hyperparameters of the stochastic process model."""

    n_proper: int = 10
    n_improper: int = 30000
    proper_logit_mean: float = 0.0
    proper_logit_sigma: float = 1.0
    improper_logit: float = -10.0
    steps: int = 512
    alpha: float = 2.0
    trials: int = 500
    seed: int = 0
    grid: TemperatureGrid = field(default_factory=TemperatureGrid)
    literal_proper_softmax: bool = False

    def __post_init__(self):
        if self.n_proper < 1 or self.n_improper < 1:
            raise InvalidArgument("token counts must be positive")
        if self.proper_logit_sigma < 0:
            raise InvalidArgument("proper_logit_sigma must be nonnegative")
        if self.proper_logit_mean <= self.improper_logit:
            raise InvalidArgument("proper_logit_mean must exceed improper_logit")
        if self.alpha <= 1:
            raise InvalidArgument(f"alpha must exceed 1, got {self.alpha}")
        if self.steps < 1 or self.trials < 1:
            raise InvalidArgument("steps and trials must be positive")
        if self.n_proper >= self.n_improper:
            warnings.warn(
                f"n_proper={self.n_proper} >= n_improper={self.n_improper}; "
                "the model assumes a much larger improper block",
                stacklevel=2,
            )

    @classmethod
    def from_mapping(cls, data: dict) -> "SimConfig":
        kwargs = dict(data)
        grid = kwargs.pop("grid", None)
        if grid is None:
            grid = kwargs.pop("temp_grid", None)  # accepted alias
        if grid is not None:
            kwargs["grid"] = TemperatureGrid(**grid)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "SimConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".toml":
            try:
                import tomllib  # Python >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
        return cls.from_mapping(data)

    def to_mapping(self) -> dict:
        return {
            "n_proper": self.n_proper,
            "n_improper": self.n_improper,
            "proper_logit_mean": self.proper_logit_mean,
            "proper_logit_sigma": self.proper_logit_sigma,
            "improper_logit": self.improper_logit,
            "steps": self.steps,
            "alpha": self.alpha,
            "trials": self.trials,
            "seed": self.seed,
            "grid": {"start": self.grid.start, "step": self.grid.step, "max": self.grid.max},
            "literal_proper_softmax": self.literal_proper_softmax,
        }


@dataclass(frozen=True)
class SimTrace:
    """One trial: per-step error rate (pre-update), outcome, and entropy."""

    x_init: float
    error_rates: tuple[float, ...]
    outcomes: tuple[str, ...]
    entropies: tuple[float, ...]

    @property
    def mean_entropy(self) -> float:
        return float(np.mean(self.entropies))

    @property
    def first_error(self) -> int | None:
        for i, o in enumerate(self.outcomes):
            if o == IMPROPER:
                return i
        return None

    @property
    def proper_fraction(self) -> float:
        return sum(o == PROPER for o in self.outcomes) / len(self.outcomes)


def trial_rng(seed: int, temperature: float, trial_index: int) -> np.random.Generator:
    """Counter-based stream for one (temperature, trial) pair.

    Keyed on the temperature value (quantized at 1e-9) rather than a grid
    position, so on-grid and off-grid runs use the same stream.
    """
    key = (seed & _MASK64, int(round(float(temperature) * 1e9)), int(trial_index))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def draw_proper_logits(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Proper-block logits: n_proper draws from Normal(mean, sigma^2)."""
    return rng.normal(config.proper_logit_mean, config.proper_logit_sigma, config.n_proper)


def initial_error_rate(
    proper_logits: np.ndarray, config: SimConfig, temperature: float
) -> float:
    """Improper-block softmax mass at the given temperature.

    x_init = N1 exp(L1/T) / (sum_j exp(l0_j/T) + N1 exp(L1/T)), evaluated in
    log space so extreme temperatures neither overflow nor lose the tail.
    """
    t = _check_temperature(temperature)
    zp = np.asarray(proper_logits, dtype=np.float64) / t
    m = zp.max()
    lse_proper = m + math.log(np.exp(zp - m).sum())
    a = math.log(config.n_improper) + config.improper_logit / t
    d = a - lse_proper
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


def update_error_rate(x: float, outcome: str, alpha: float, x_init: float) -> float:
    """Amplify after an improper token, decay (floored at x_init) after a proper one."""
    if outcome == IMPROPER:
        return 1.0 - (1.0 - x) ** alpha
    if outcome == PROPER:
        return max(x**alpha, x_init)
    raise InvalidArgument(f"outcome must be {PROPER!r} or {IMPROPER!r}, got {outcome!r}")


def _proper_softmax(proper_logits: np.ndarray, temperature: float, literal: bool) -> np.ndarray:
    """Softmax over the proper block; rows are trials when given a matrix."""
    z = np.asarray(proper_logits, dtype=np.float64)
    if not literal:
        z = z / temperature
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def step_distribution(
    x_t: float,
    proper_logits: np.ndarray,
    temperature: float,
    n_improper: int,
    literal_proper_softmax: bool = False,
) -> tuple[np.ndarray, float]:
    """Token probabilities at error rate x_t: proper probs and the shared per-token
    improper probability x_t / N1."""
    t = _check_temperature(temperature)
    s = _proper_softmax(proper_logits, t, literal_proper_softmax)
    return (1.0 - x_t) * s, x_t / n_improper


def _block_entropy(x: np.ndarray, proper_entropy: np.ndarray, n_improper: int) -> np.ndarray:
    """Closed-form two-block entropy; never iterates the improper block.

    H = -(1-x)ln(1-x) + (1-x) H_proper + x (ln N1 - ln x), with the x=0 and
    x=1 limits taken as 0 for their vanishing terms.
    """
    x = np.asarray(x, dtype=np.float64)
    one_m = 1.0 - x
    safe_one_m = np.where(one_m > 0, one_m, 1.0)
    safe_x = np.where(x > 0, x, 1.0)
    t_mix = np.where(one_m > 0, -safe_one_m * np.log(safe_one_m), 0.0)
    t_prop = one_m * proper_entropy
    t_imp = np.where(x > 0, x * (math.log(n_improper) - np.log(safe_x)), 0.0)
    return t_mix + t_prop + t_imp


def step_entropy(
    x_t: float,
    proper_logits: np.ndarray,
    temperature: float,
    n_improper: int,
    literal_proper_softmax: bool = False,
) -> float:
    """Entropy (nats) of the full step distribution at error rate x_t."""
    t = _check_temperature(temperature)
    s = _proper_softmax(proper_logits, t, literal_proper_softmax)
    hs = float(-(np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0)).sum())
    return float(_block_entropy(np.asarray([x_t]), np.asarray([hs]), n_improper)[0])


@dataclass
class BatchResult:
    """Vectorized trial results at one temperature; rows are trials."""

    x_init: np.ndarray  # (n,)
    proper_logits: np.ndarray  # (n, n_proper)
    proper_softmax: np.ndarray  # (n, n_proper)
    error_rates: np.ndarray  # (n, steps), pre-update x_t
    errors: np.ndarray  # (n, steps), True where the step sampled an improper token
    entropies: np.ndarray  # (n, steps)


def run_trials(
    config: SimConfig,
    temperature: float,
    trial_indices: Sequence[int],
    steps: int | None = None,
) -> BatchResult:
    """Run a batch of trials at one temperature.

    Each trial consumes its own (seed, temperature, trial) stream: first the
    proper-logit draws, then one uniform per step.  Batches therefore
    reproduce single-trial runs exactly.
    """
    t = _check_temperature(temperature)
    k = config.steps if steps is None else steps
    n = len(trial_indices)
    logit_mat = np.empty((n, config.n_proper))
    uniforms = np.empty((n, k))
    for i, tr in enumerate(trial_indices):
        rng = trial_rng(config.seed, t, tr)
        logit_mat[i] = draw_proper_logits(config, rng)
        uniforms[i] = rng.random(k)

    s = _proper_softmax(logit_mat, t, config.literal_proper_softmax)
    hs = -(np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0)).sum(axis=1)

    # x_init per trial, from the temperature-scaled full-vocabulary softmax
    zp = logit_mat / t
    m = zp.max(axis=1)
    lse = m + np.log(np.exp(zp - m[:, None]).sum(axis=1))
    d = math.log(config.n_improper) + config.improper_logit / t - lse
    x0 = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    x = x0.copy()
    error_rates = np.empty((n, k))
    errors = np.empty((n, k), dtype=bool)
    entropies = np.empty((n, k))
    alpha = config.alpha
    for step in range(k):
        error_rates[:, step] = x
        entropies[:, step] = _block_entropy(x, hs, config.n_improper)
        err = uniforms[:, step] < x
        errors[:, step] = err
        x = np.where(err, 1.0 - (1.0 - x) ** alpha, np.maximum(x**alpha, x0))
    return BatchResult(
        x_init=x0,
        proper_logits=logit_mat,
        proper_softmax=s,
        error_rates=error_rates,
        errors=errors,
        entropies=entropies,
    )


def run_trial(
    config: SimConfig, temperature: float, trial_index: int, steps: int | None = None
) -> SimTrace:
    """One trial as a SimTrace; identical to the corresponding batch row."""
    batch = run_trials(config, temperature, [trial_index], steps)
    outcomes = tuple(IMPROPER if e else PROPER for e in batch.errors[0])
    return SimTrace(
        x_init=float(batch.x_init[0]),
        error_rates=tuple(float(v) for v in batch.error_rates[0]),
        outcomes=outcomes,
        entropies=tuple(float(v) for v in batch.entropies[0]),
    )


@dataclass
class SimCurves:
    """Mean entropy curve and improper-token fraction per grid temperature."""

    curve: EntropyCurve
    improper_fraction: list[float]

    def __iter__(self):
        return iter((self.curve, self.improper_fraction))

    def to_csv(self, alpha: float | None = None) -> str:
        import csv as _csv
        import io as _io

        buf = _io.StringIO()
        w = _csv.writer(buf, lineterminator="\n")
        if alpha is None:
            w.writerow(["temperature", "mean_entropy", "improper_fraction"])
            for p, f in zip(self.curve.points, self.improper_fraction):
                w.writerow([repr(p.temperature), repr(p.mean_entropy), repr(f)])
        else:
            w.writerow(["alpha", "temperature", "mean_entropy", "improper_fraction"])
            for p, f in zip(self.curve.points, self.improper_fraction):
                w.writerow([repr(alpha), repr(p.temperature), repr(p.mean_entropy), repr(f)])
        return buf.getvalue()


def simulate_curves(
    config: SimConfig,
    workers: int = 1,
    trials: int | None = None,
    steps: int | None = None,
) -> SimCurves:
    """Entropy curve and improper fraction over the config's temperature grid.

    Per temperature: the mean over trials of each trace's mean step entropy,
    and the fraction of all (trial, step) outcomes that were improper.
    Results are independent of ``workers``.
    """
    n_trials = config.trials if trials is None else trials
    temps = config.grid.values

    def one(t: float) -> tuple[CurvePoint, float]:
        batch = run_trials(config, t, range(n_trials), steps)
        per_trial = batch.entropies.mean(axis=1)
        var = float(np.var(per_trial, ddof=1)) if n_trials > 1 else 0.0
        point = CurvePoint(
            temperature=t,
            mean_entropy=float(per_trial.mean()),
            n_samples=n_trials,
            variance=var,
        )
        return point, float(batch.errors.mean())

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, temps))
    else:
        results = [one(t) for t in temps]
    points = [p for p, _ in results]
    fractions = [f for _, f in results]
    curve = EntropyCurve(grid_start=config.grid.start, grid_step=config.grid.step, points=points)
    return SimCurves(curve=curve, improper_fraction=fractions)


def _answer_for(errors_row: np.ndarray) -> tuple[str, bool, float]:
    if errors_row.any():
        answer = f"err-{int(np.argmax(errors_row))}"
        return answer, False, float(1.0 - errors_row.mean())
    return "ok", True, 1.0


def synth_task_samples(
    config: SimConfig,
    temperature: float,
    n_samples: int,
    steps_override: int = 16,
    rng_seed: int | None = None,
    problem_id: str = "sim-0",
    into: SampleSet | None = None,
) -> SampleSet:
    """Synthetic task samples for end-to-end pipeline tests.

    Each sample is one trial; the answer is "ok" when no improper token
    occurred, else "err-<i>" for the first improper step, so vote quality
    degrades smoothly as temperature rises.  The score is the proper-step
    fraction.
    """
    cfg = config if rng_seed is None else replace(config, seed=rng_seed)
    sset = into if into is not None else SampleSet()
    if n_samples == 0:
        return sset
    batch = run_trials(cfg, temperature, range(n_samples), steps=steps_override)
    for i in range(n_samples):
        answer, correct, score = _answer_for(batch.errors[i])
        sset.add(problem_id, answer, temperature, i, correct=correct, score=score)
    return sset


def export_step_records(
    config: SimConfig,
    temperature: float,
    n_records: int,
    steps: int | None = None,
    rng_seed: int | None = None,
    problem_id: str = "sim-0",
) -> list[SampleRecord]:
    """Trials rendered as sample records with full per-step token distributions.

    Stored logits are temperature * ln(p), i.e. base-temperature logits whose
    softmax at the generation temperature reproduces the step distribution
    exactly.  Entry count per step is n_proper + n_improper, so this is meant
    for reduced configurations, not the default 30000-token improper block.
    """
    cfg = config if rng_seed is None else replace(config, seed=rng_seed)
    t = _check_temperature(temperature)
    k = cfg.steps if steps is None else steps
    batch = run_trials(cfg, t, range(n_records), steps=k)
    proper_tokens = [f"p{j}" for j in range(cfg.n_proper)]
    improper_tokens = [f"i{j}" for j in range(cfg.n_improper)]

    records = []
    for i in range(n_records):
        s = batch.proper_softmax[i]
        step_dists = []
        for step in range(k):
            x = batch.error_rates[i, step]
            p_prop = (1.0 - x) * s
            p_imp = x / cfg.n_improper
            topk: list[tuple[str, float]] = []
            for j, tok in enumerate(proper_tokens):
                if p_prop[j] >= _PROB_FLOOR:
                    topk.append((tok, t * math.log(p_prop[j])))
            if p_imp >= _PROB_FLOOR:
                logit_imp = t * math.log(p_imp)
                topk.extend((tok, logit_imp) for tok in improper_tokens)
            chosen = "i0" if batch.errors[i, step] else proper_tokens[int(np.argmax(s))]
            step_dists.append(StepDist(chosen=chosen, topk=topk))
        answer, correct, score = _answer_for(batch.errors[i])
        records.append(
            SampleRecord(
                problem_id=problem_id,
                temperature=t,
                sample_index=i,
                steps=step_dists,
                answer=answer,
                correct=correct,
                score=score,
            )
        )
    return records
