"""Batch command surface for the pipeline.

Every subcommand is deterministic given (inputs, flags, seed): outputs are
written atomically and repeated runs produce byte-identical files.  Exit
codes: 0 success, 2 input/config error, 3 no algorithmic result, 4 network
failure.
"""
from __future__ import annotations

import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import click

from . import __version__
from .aggregate import (
    AccuracyHeatmap,
    SampleSet,
    accuracy_heatmap,
    calibrate_beta,
    eps_optimal_range,
    evaluate_prediction,
)
from .client import ENDPOINT_ENV, EndpointConfig, SamplingParams, fetch_samples
from .curves import EntropyCurve, TemperatureGrid, counterfactual_curve, estimate_curve
from .errors import CurveTooShort, FetchFailed, NoTurningPoint, TurnpointError
from .records import read_records, write_records
from .simulate import SimConfig, simulate_curves
from .taskdist import model_task_distance, pearson_correlation
from .turning import AggregationKind, select_temperature

EXIT_INPUT = 2
EXIT_NO_RESULT = 3
EXIT_NETWORK = 4

# anything malformed in user-supplied files maps to the input-error exit code
_INPUT_ERRORS = (TurnpointError, ValueError, KeyError, TypeError, OSError)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2) + "\n")


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


class Ctx:
    def __init__(self, seed, grid_start, grid_step, grid_max, top_k, out_dir):
        self.seed = seed
        self.grid = TemperatureGrid(grid_start, grid_step, grid_max)
        self.top_k = top_k
        self.out_dir = Path(out_dir)

    def path(self, name: str) -> Path:
        return self.out_dir / name


@click.group()
@click.version_option(version=__version__, prog_name="turnpoint")
@click.option("--seed", type=int, default=0, show_default=True, help="Master RNG seed.")
@click.option("--grid-start", type=float, default=0.1, show_default=True)
@click.option("--grid-step", type=float, default=0.1, show_default=True)
@click.option("--grid-max", type=float, default=1.5, show_default=True)
@click.option("--top-k", type=int, default=1000, show_default=True, help="Entropy truncation depth.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.pass_context
def main(ctx, seed, grid_start, grid_step, grid_max, top_k, out_dir):
    """Entropy-based automatic sampling-temperature selection toolkit."""
    try:
        ctx.obj = Ctx(seed, grid_start, grid_step, grid_max, top_k, out_dir)
    except TurnpointError as exc:
        _fail(EXIT_INPUT, str(exc))


def _sim_config(ctx: Ctx, config, n_proper, n_improper, proper_logit_mean, proper_logit_sigma,
                improper_logit, steps, trials, alpha) -> SimConfig:
    if config is not None:
        cfg = SimConfig.from_file(config)
        cfg = replace(cfg, seed=ctx.seed, grid=ctx.grid)
    else:
        cfg = SimConfig(
            n_proper=n_proper,
            n_improper=n_improper,
            proper_logit_mean=proper_logit_mean,
            proper_logit_sigma=proper_logit_sigma,
            improper_logit=improper_logit,
            steps=steps,
            trials=trials,
            alpha=alpha,
            seed=ctx.seed,
            grid=ctx.grid,
        )
    return cfg


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="SimConfig as TOML or JSON; grid/seed come from global flags.")
@click.option("--n-proper", type=int, default=10, show_default=True)
@click.option("--n-improper", type=int, default=30000, show_default=True)
@click.option("--proper-logit-mean", type=float, default=0.0, show_default=True)
@click.option("--proper-logit-sigma", type=float, default=1.0, show_default=True)
@click.option("--improper-logit", type=float, default=-10.0, show_default=True)
@click.option("--steps", type=int, default=512, show_default=True)
@click.option("--trials", type=int, default=500, show_default=True)
@click.option("--alpha", "alphas", type=float, multiple=True,
              help="Noise tolerance rate; repeat for a family sweep.  [default: 2.0]")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.pass_obj
def simulate(ctx: Ctx, config, n_proper, n_improper, proper_logit_mean, proper_logit_sigma,
             improper_logit, steps, trials, alphas, workers, plot):
    """Run the stochastic process model and emit its temperature curves."""
    alphas = list(alphas) or [2.0]
    try:
        families = {}
        for alpha in alphas:
            cfg = _sim_config(ctx, config, n_proper, n_improper, proper_logit_mean,
                              proper_logit_sigma, improper_logit, steps, trials, alpha)
            families[alpha] = simulate_curves(cfg, workers=workers)
    except _INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, str(exc))

    out = ctx.path("sim_curve.csv")
    if len(alphas) == 1:
        _atomic_write(out, families[alphas[0]].to_csv())
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "temperature", "mean_entropy", "improper_fraction"])
        for alpha in alphas:
            res = families[alpha]
            for p, f in zip(res.curve.points, res.improper_fraction):
                w.writerow([repr(alpha), repr(p.temperature), repr(p.mean_entropy), repr(f)])
        _atomic_write(out, buf.getvalue())
    _atomic_write_json(
        ctx.path("sim_curve.meta.json"),
        {"command": "simulate", "seed": ctx.seed, "alphas": alphas, "trials": trials,
         "steps": steps, "grid": {"start": ctx.grid.start, "step": ctx.grid.step, "max": ctx.grid.max}},
    )
    if plot:
        from .plots import plot_sim_curves

        plot_sim_curves(
            {a: (res.curve, res.improper_fraction) for a, res in families.items()},
            ctx.path("sim_curve.png"),
        )
    click.echo(f"wrote {out}")


def _load_records(path: str, strict: bool):
    rs = read_records(path, strict=strict)
    if rs.report and rs.report.rejected:
        for line_no, reason in rs.report.rejected:
            click.echo(f"rejected line {line_no}: {reason}", err=True)
    return rs


@main.command()
@click.option("--records", "records_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--mode", type=click.Choice(["trajectory", "counterfactual"]), default="trajectory",
              show_default=True)
@click.option("--weighting", type=click.Choice(["sequence", "token"]), default="sequence",
              show_default=True)
@click.option("--strict", is_flag=True, help="Abort on any invalid record line.")
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.pass_obj
def curve(ctx: Ctx, records_path, mode, weighting, strict, plot):
    """Estimate the entropy curve from a records file."""
    try:
        rs = _load_records(records_path, strict)
        if mode == "trajectory":
            result = estimate_curve(rs, ctx.grid, top_k=ctx.top_k, weighting=weighting)
        else:
            result = counterfactual_curve(rs, ctx.grid, top_k=ctx.top_k, weighting=weighting)
    except _INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, str(exc))
    out = ctx.path("curve.csv")
    _atomic_write(out, result.to_csv())
    _atomic_write_json(
        ctx.path("curve.meta.json"),
        {"command": "curve", "mode": mode, "weighting": weighting, "top_k": ctx.top_k,
         "seed": ctx.seed, "records": str(records_path)},
    )
    if plot:
        from .plots import plot_entropy_curve

        plot_entropy_curve(result, ctx.path("curve.png"))
    click.echo(f"wrote {out}")


@main.command()
@click.option("--records", "records_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--curve", "curve_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Precomputed curve CSV; alternative to --records.")
@click.option("--aggregation", type=click.Choice([k.value for k in AggregationKind]),
              default=AggregationKind.MAJORITY_VOTING.value, show_default=True)
@click.option("--mode", type=click.Choice(["trajectory", "counterfactual"]), default="trajectory",
              show_default=True)
@click.option("--smoothing-window", type=int, default=1, show_default=True)
@click.option("--strict", is_flag=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.pass_obj
def select(ctx: Ctx, records_path, curve_path, aggregation, mode, smoothing_window, strict, plot):
    """Detect the turning point and predict the sampling temperature."""
    if (records_path is None) == (curve_path is None):
        _fail(EXIT_INPUT, "provide exactly one of --records or --curve")
    kind = AggregationKind.parse(aggregation)
    try:
        if curve_path is not None:
            crv = EntropyCurve.read_csv(curve_path)
        else:
            rs = _load_records(records_path, strict)
            if mode == "trajectory":
                crv = estimate_curve(rs, ctx.grid, top_k=ctx.top_k)
            else:
                crv = counterfactual_curve(rs, ctx.grid, top_k=ctx.top_k)
    except _INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, str(exc))

    curve_out = ctx.path("curve.csv")
    _atomic_write(curve_out, crv.to_csv())
    try:
        result = select_temperature(crv, kind, smoothing_window=smoothing_window)
    except CurveTooShort as exc:
        _fail(EXIT_INPUT, str(exc))
    except NoTurningPoint as exc:
        _atomic_write_json(
            ctx.path("turn_diagnostics.json"),
            {"error": "no turning point", "second_differences": exc.diagnostics,
             "aggregation": kind.value, "seed": ctx.seed},
        )
        _fail(EXIT_NO_RESULT, "no turning point found (diagnostics written)")
    out = ctx.path("turn_result.json")
    _atomic_write(out, result.to_json() + "\n")
    if plot:
        from .plots import plot_entropy_curve

        plot_entropy_curve(crv, ctx.path("curve.png"), turn=result)
    click.echo(f"predicted temperature: {result.predicted_temperature} (turning point "
               f"{result.entp_temperature} + beta {result.beta})")
    click.echo(f"wrote {out}")


def _heatmap_from_file(ctx: Ctx, samples_path, sample_sizes, aggregation, resamples, strict):
    rs = _load_records(samples_path, strict)
    sset = SampleSet.from_records(rs)
    return accuracy_heatmap(
        sset.split_by_temperature(),
        sample_sizes,
        AggregationKind.parse(aggregation),
        resamples=resamples,
        seed=ctx.seed,
    )


@main.command()
@click.option("--samples", "samples_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Records JSONL with answers/correctness across temperatures.")
@click.option("--sample-size", "sample_sizes", type=int, multiple=True,
              help="Repeatable.  [default: 1 2 4 8 16 32 64 128]")
@click.option("--aggregation", type=click.Choice([k.value for k in AggregationKind]),
              default=AggregationKind.MAJORITY_VOTING.value, show_default=True)
@click.option("--resamples", type=int, default=100, show_default=True)
@click.option("--strict", is_flag=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.pass_obj
def heatmap(ctx: Ctx, samples_path, sample_sizes, aggregation, resamples, strict, plot):
    """Accuracy heatmap over (sample size, temperature)."""
    sizes = list(sample_sizes) or [1, 2, 4, 8, 16, 32, 64, 128]
    try:
        hm = _heatmap_from_file(ctx, samples_path, sizes, aggregation, resamples, strict)
    except _INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, str(exc))
    out = ctx.path("heatmap.csv")
    _atomic_write(out, hm.to_csv())
    _atomic_write_json(
        ctx.path("heatmap.meta.json"),
        {"command": "heatmap", "seed": ctx.seed, "aggregation": aggregation,
         "resamples": resamples, "sample_sizes": sizes},
    )
    if plot:
        from .plots import plot_heatmap

        plot_heatmap(hm, ctx.path("heatmap.png"))
    click.echo(f"wrote {out}")


@main.command()
@click.option("--samples", "samples_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--predicted", type=float, required=True, help="Predicted temperature to score.")
@click.option("--sample-size", type=int, default=128, show_default=True,
              help="Sample size at which metrics are computed.")
@click.option("--aggregation", type=click.Choice([k.value for k in AggregationKind]),
              default=AggregationKind.MAJORITY_VOTING.value, show_default=True)
@click.option("--epsilon", type=float, default=0.02, show_default=True)
@click.option("--resamples", type=int, default=100, show_default=True)
@click.option("--strict", is_flag=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.pass_obj
def evaluate(ctx: Ctx, samples_path, predicted, sample_size, aggregation, epsilon, resamples,
             strict, plot):
    """Score a predicted temperature against the accuracy surface."""
    try:
        hm = _heatmap_from_file(ctx, samples_path, [sample_size], aggregation, resamples, strict)
        accuracy = hm.row(sample_size)
        rng = eps_optimal_range(accuracy, epsilon)
        score = evaluate_prediction(predicted, rng, accuracy)
    except _INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, str(exc))
    _atomic_write(ctx.path("heatmap.csv"), hm.to_csv())
    _atomic_write_json(ctx.path("eps_range.json"), rng.to_json_dict() | {"seed": ctx.seed})
    _atomic_write_json(
        ctx.path("prediction_score.json"),
        score.to_json_dict() | {"predicted_temperature": predicted, "sample_size": sample_size,
                                "seed": ctx.seed},
    )
    if plot:
        from .plots import plot_heatmap

        plot_heatmap(hm, ctx.path("heatmap.png"), predicted=predicted)
    click.echo(
        f"hit={score.hit} temperature_gap={score.temperature_gap} "
        f"performance_drop={score.performance_drop}"
    )


@main.command("calibrate-beta")
@click.option("--midpoints", "midpoints_path", type=click.Path(exists=True, dir_okay=False),
              required=True,
              help="CSV: one row per aggregation family, label first, midpoints after.")
@click.pass_obj
def calibrate_beta_cmd(ctx: Ctx, midpoints_path):
    """Aggregation adaptation from paired optimal-range midpoints."""
    try:
        rows = list(csv.reader(Path(midpoints_path).read_text(encoding="utf-8").splitlines()))
        rows = [r for r in rows if r]
        if len(rows) != 2:
            raise TurnpointError(f"expected exactly 2 midpoint rows, got {len(rows)}")
        label_a, *vals_a = rows[0]
        label_b, *vals_b = rows[1]
        result = calibrate_beta([float(v) for v in vals_a], [float(v) for v in vals_b])
    except _INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, str(exc))
    out = ctx.path("beta_calibration.json")
    _atomic_write_json(
        out,
        {"family_a": label_a, "family_b": label_b} | result.to_json_dict(),
    )
    click.echo(f"mean({label_a})={result.mean_a:.4f} mean({label_b})={result.mean_b:.4f} "
               f"difference={result.difference:.4f} rounded={result.rounded}")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--records", "records_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--measurement-temperature", type=float, default=0.5, show_default=True)
@click.option("--correlate", "correlate_path", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="CSV of (model_label, distance, midpoint) rows; emits their correlation.")
@click.option("--strict", is_flag=True)
@click.pass_obj
def distance(ctx: Ctx, records_path, measurement_temperature, correlate_path, strict):
    """Model-task distance from records, or a correlation study from a table."""
    if records_path is None and correlate_path is None:
        _fail(EXIT_INPUT, "provide --records and/or --correlate")
    payload = {"command": "distance", "seed": ctx.seed}
    try:
        if records_path is not None:
            rs = _load_records(records_path, strict)
            report = model_task_distance(
                rs, top_k=ctx.top_k, measurement_temperature=measurement_temperature
            )
            payload["distance"] = json.loads(report.to_json())
        if correlate_path is not None:
            rows = list(csv.DictReader(io.StringIO(Path(correlate_path).read_text(encoding="utf-8"))))
            ds = [float(r["distance"]) for r in rows]
            mids = [float(r["midpoint"]) for r in rows]
            payload["correlation"] = {
                "n_models": len(rows),
                "pearson_r": pearson_correlation(ds, mids),
            }
    except _INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, str(exc))
    out = ctx.path("distance.json")
    _atomic_write_json(out, payload)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--prompts", "prompts_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Text file (one prompt per line) or JSONL with {id, prompt}.")
@click.option("--endpoint", envvar=ENDPOINT_ENV, required=True,
              help=f"Base URL of the completions endpoint (or ${ENDPOINT_ENV}).")
@click.option("--model", default="default", show_default=True)
@click.option("--temperature", "temperatures", type=float, multiple=True,
              help="Repeatable; defaults to the global grid.")
@click.option("--n-per-temperature", type=int, default=1, show_default=True)
@click.option("--max-tokens", type=int, default=1024, show_default=True)
@click.option("--logprob-depth", type=int, default=5, show_default=True)
@click.option("--top-p", type=float, default=None)
@click.option("--sampling-top-k", type=int, default=None, help="Server-side top-k regularization.")
@click.option("--timeout", type=float, default=120.0, show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None,
              help="Records path.  [default: <out-dir>/records.jsonl]")
@click.pass_obj
def fetch(ctx: Ctx, prompts_path, endpoint, model, temperatures, n_per_temperature, max_tokens,
          logprob_depth, top_p, sampling_top_k, timeout, output):
    """Fetch logprob-annotated samples from a completions endpoint."""
    prompts: list[tuple[str, str]] = []
    try:
        text = Path(prompts_path).read_text(encoding="utf-8")
        if prompts_path.endswith(".jsonl"):
            for line in text.splitlines():
                if line.strip():
                    d = json.loads(line)
                    prompts.append((str(d["id"]), str(d["prompt"])))
        else:
            for i, line in enumerate(ln for ln in text.splitlines() if ln.strip()):
                prompts.append((f"prompt-{i:04d}", line))
        params = SamplingParams(
            temperatures=list(temperatures) or ctx.grid.values,
            n_per_temperature=n_per_temperature,
            max_tokens=max_tokens,
            top_k=sampling_top_k,
            top_p=top_p,
            logprob_depth=logprob_depth,
        )
        cfg = EndpointConfig(base_url=endpoint, model=model, timeout=timeout)
        rs = fetch_samples(cfg, prompts, params)
    except FetchFailed as exc:
        _fail(EXIT_NETWORK, str(exc))
    except _INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, str(exc))
    out = Path(output) if output else ctx.path("records.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_suffix(out.suffix + ".tmp")
    write_records(rs.records, tmp)
    os.replace(tmp, out)
    click.echo(f"wrote {len(rs.records)} records to {out}")


if __name__ == "__main__":
    main()
