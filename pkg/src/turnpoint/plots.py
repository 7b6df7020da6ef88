"""Figure rendering for the CLI report paths.

Every plot is drawn from the same data that lands in the CSV next to it, so
figures are a view, never a second source of truth.  PNG metadata is pinned
to keep repeated runs byte-identical.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .aggregate import AccuracyHeatmap
from .curves import EntropyCurve
from .turning import LOG_FLOOR, TurnResult

_PNG_METADATA = {"Software": "turnpoint"}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def plot_entropy_curve(
    curve: EntropyCurve,
    path: str | Path,
    turn: TurnResult | None = None,
    counterfactual: EntropyCurve | None = None,
    title: str = "Token-level entropy vs temperature",
) -> Path:
    """Entropy curve with its log-scale twin; optional turning-point marker
    and counterfactual (fixed-trajectory) overlay."""
    temps = curve.temperatures
    ents = curve.entropies
    fig, (ax, ax_log) = plt.subplots(1, 2, figsize=(9.5, 3.6))
    ax.plot(temps, ents, "o-", color="tab:blue", label="trajectory")
    if counterfactual is not None:
        ax.plot(
            counterfactual.temperatures,
            counterfactual.entropies,
            "s--",
            color="tab:cyan",
            label="fixed trajectories",
        )
    ax.set_xlabel("temperature")
    ax.set_ylabel("mean entropy (nats)")
    ax.legend(loc="upper left", fontsize=8)

    ax_log.plot(temps, np.log(np.maximum(ents, LOG_FLOOR)), "o-", color="tab:red")
    ax_log.set_xlabel("temperature")
    ax_log.set_ylabel("log mean entropy")
    if turn is not None:
        for a in (ax, ax_log):
            a.axvline(turn.entp_temperature, color="gray", ls=":", lw=1)
        ax_log.axvline(
            turn.predicted_temperature, color="tab:green", ls="-", lw=1.5, label="predicted"
        )
        ax_log.legend(loc="upper left", fontsize=8)
    fig.suptitle(title)
    return _save(fig, path)


def plot_sim_curves(
    families: dict[float, tuple[EntropyCurve, list[float]]],
    path: str | Path,
    title: str = "Process model: entropy and improper fraction",
) -> Path:
    """Per-alpha entropy curves beside improper-token fractions."""
    fig, (ax_h, ax_f) = plt.subplots(1, 2, figsize=(9.5, 3.6))
    for alpha, (curve, fractions) in sorted(families.items()):
        label = f"alpha={alpha:g}"
        ax_h.plot(curve.temperatures, curve.entropies, "o-", ms=3, label=label)
        ax_f.plot(curve.temperatures, np.asarray(fractions) * 100.0, "o-", ms=3, label=label)
    ax_h.set_xlabel("temperature")
    ax_h.set_ylabel("mean entropy (nats)")
    ax_h.legend(fontsize=8)
    ax_f.set_xlabel("temperature")
    ax_f.set_ylabel("improper tokens (%)")
    ax_f.legend(fontsize=8)
    fig.suptitle(title)
    return _save(fig, path)


def plot_heatmap(
    heatmap: AccuracyHeatmap,
    path: str | Path,
    predicted: float | None = None,
    title: str = "Accuracy by temperature and sample size",
) -> Path:
    """Accuracy matrix with sample-size rows; optional predicted-temperature line."""
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    im = ax.imshow(
        heatmap.accuracy,
        aspect="auto",
        origin="lower",
        cmap="viridis",
        vmin=0.0,
        vmax=1.0,
        extent=(
            heatmap.temperatures[0] - 0.05,
            heatmap.temperatures[-1] + 0.05,
            -0.5,
            len(heatmap.sample_sizes) - 0.5,
        ),
    )
    ax.set_yticks(range(len(heatmap.sample_sizes)))
    ax.set_yticklabels([str(s) for s in heatmap.sample_sizes])
    ax.set_xlabel("temperature")
    ax.set_ylabel("sample size")
    if predicted is not None:
        ax.axvline(predicted, color="lime", lw=2)
    fig.colorbar(im, ax=ax, label="accuracy")
    ax.set_title(title)
    return _save(fig, path)
