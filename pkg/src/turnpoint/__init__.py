"""Entropy-based automatic sampling-temperature selection for multi-sample
inference, with a stochastic collapse simulator and aggregation metrics."""

__version__ = "0.1.0"

from .aggregate import (
    AccuracyHeatmap,
    AggSample,
    BetaCalibration,
    EpsRange,
    PredictionScore,
    SampleSet,
    VoteTally,
    accuracy_heatmap,
    best_of_n,
    calibrate_beta,
    eps_optimal_range,
    evaluate_prediction,
    majority_vote,
    normalize_answer,
    pass_at_k,
    tally_votes,
)
from .client import EndpointConfig, SamplingParams, fetch_samples
from .curves import (
    CurvePoint,
    EntropyCurve,
    TemperatureGrid,
    counterfactual_curve,
    curve_stability_report,
    estimate_curve,
)
from .dist import (
    ProbDist,
    Temperature,
    TokenDist,
    scale_by_temperature,
    shannon_entropy,
    topk_truncate,
)
from .records import RecordSet, SampleRecord, StepDist, extract_answer, read_records, write_records
from .simulate import (
    SimConfig,
    SimTrace,
    draw_proper_logits,
    export_step_records,
    initial_error_rate,
    run_trial,
    run_trials,
    simulate_curves,
    step_distribution,
    step_entropy,
    synth_task_samples,
    update_error_rate,
)
from .taskdist import DistanceReport, model_task_distance, pearson_correlation
from .turning import AggregationKind, TurnResult, find_turning_point, select_temperature

__all__ = [
    "AccuracyHeatmap",
    "AggSample",
    "AggregationKind",
    "BetaCalibration",
    "CurvePoint",
    "DistanceReport",
    "EndpointConfig",
    "EntropyCurve",
    "EpsRange",
    "PredictionScore",
    "ProbDist",
    "RecordSet",
    "SampleRecord",
    "SampleSet",
    "SamplingParams",
    "SimConfig",
    "SimTrace",
    "StepDist",
    "Temperature",
    "TemperatureGrid",
    "TokenDist",
    "TurnResult",
    "VoteTally",
    "accuracy_heatmap",
    "best_of_n",
    "calibrate_beta",
    "counterfactual_curve",
    "curve_stability_report",
    "draw_proper_logits",
    "eps_optimal_range",
    "estimate_curve",
    "evaluate_prediction",
    "export_step_records",
    "extract_answer",
    "fetch_samples",
    "find_turning_point",
    "initial_error_rate",
    "majority_vote",
    "model_task_distance",
    "normalize_answer",
    "pass_at_k",
    "pearson_correlation",
    "read_records",
    "run_trial",
    "run_trials",
    "scale_by_temperature",
    "select_temperature",
    "shannon_entropy",
    "simulate_curves",
    "step_distribution",
    "step_entropy",
    "synth_task_samples",
    "tally_votes",
    "topk_truncate",
    "update_error_rate",
    "write_records",
]
