import math

import numpy as np
import pytest

from turnpoint.curves import CurvePoint, EntropyCurve
from turnpoint.errors import CurveTooShort, NoTurningPoint
from turnpoint.turning import (
    AggregationKind,
    find_turning_point,
    log_second_differences,
    select_temperature,
)


def curve_from_entropies(entropies, start=0.1, step=0.1):
    points = [
        CurvePoint(round(start + j * step, 10), h, 1, 0.0) for j, h in enumerate(entropies)
    ]
    return EntropyCurve(grid_start=start, grid_step=step, points=points)


def curve_from_log_entropies(ells, start=0.1, step=0.1):
    return curve_from_entropies([math.exp(e) for e in ells], start, step)


class TestFindTurningPoint:
    def test_hand_second_difference_oracle(self):
        # log-entropies with second differences -0.5, -0.2, -0.1, +0.1, +0.2, +0.3
        ells = [-3.0, -2.0, -1.5, -1.2, -1.0, -0.7, -0.2, 0.6]
        curve = curve_from_log_entropies(ells)
        d2 = log_second_differences(curve)
        assert d2 == pytest.approx([-0.5, -0.2, -0.1, 0.1, 0.2, 0.3], abs=1e-9)
        idx, diag = find_turning_point(curve)
        assert curve.points[idx].temperature == pytest.approx(0.5)
        assert diag[idx - 1] > 1e-6

    def test_exponential_curve_has_no_turning_point(self):
        # H = exp(c t) makes the log curve linear: all second differences ~ 0
        temps = [0.1 * (j + 1) for j in range(10)]
        curve = curve_from_entropies([math.exp(1.7 * t) for t in temps])
        with pytest.raises(NoTurningPoint):
            find_turning_point(curve)

    def test_too_short(self):
        with pytest.raises(CurveTooShort):
            find_turning_point(curve_from_entropies([1.0, 2.0]))

    def test_first_transition_wins_over_later_ones(self):
        # D2 sequence: -0.6, +0.1, -0.3, -0.1, +0.6 -- two sign changes,
        # the earlier one (index 2) must win even though the later is larger
        ells = [-2.0, -1.0, -0.6, -0.1, 0.1, 0.2, 0.9]
        curve = curve_from_log_entropies(ells)
        d2 = log_second_differences(curve)
        assert d2 == pytest.approx([-0.6, 0.1, -0.3, -0.1, 0.6], abs=1e-9)
        idx, _ = find_turning_point(curve)
        assert idx == 2

    def test_scale_invariance(self):
        ells = [-3.0, -2.0, -1.5, -1.2, -1.0, -0.7, -0.2, 0.6]
        base = curve_from_log_entropies(ells)
        scaled = curve_from_entropies([7.3 * p.mean_entropy for p in base.points])
        i1, d1 = find_turning_point(base)
        i2, d2 = find_turning_point(scaled)
        assert i1 == i2
        assert np.allclose(d1, d2, atol=1e-9)

    def test_returned_index_exceeds_tolerance(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            h = np.cumsum(rng.uniform(0.01, 0.5, size=12)) + 0.05
            curve = curve_from_entropies(list(h))
            try:
                idx, d2 = find_turning_point(curve)
            except NoTurningPoint:
                continue
            assert d2[idx - 1] > 1e-6


class TestSelectTemperature:
    def _spiky_curve(self):
        ells = [-3.0, -2.0, -1.5, -1.2, -1.0, -0.7, -0.2, 0.6]
        return curve_from_log_entropies(ells)

    def test_majority_voting_keeps_entp_exactly(self):
        result = select_temperature(self._spiky_curve(), AggregationKind.MAJORITY_VOTING)
        assert result.beta == 0.0
        assert result.predicted_temperature == result.entp_temperature

    def test_best_of_n_adds_point_one(self):
        result = select_temperature(self._spiky_curve(), AggregationKind.BEST_OF_N)
        assert result.beta == 0.1
        assert result.predicted_temperature == pytest.approx(0.6)
        assert not result.clamped

    def test_clamped_at_grid_top(self):
        # turning point at the last interior index: beta pushes past grid max
        ells = [-2.0, -1.5, -1.1, -0.8, -0.6, -0.45, -0.2, 0.4]
        result = select_temperature(
            curve_from_log_entropies(ells), AggregationKind.BEST_OF_N
        )
        if result.entp_temperature + 0.1 > 0.8:
            assert result.clamped
            assert result.predicted_temperature == pytest.approx(0.8)

    def test_fallback_used_when_raw_detection_fails(self):
        # strictly concave curve + one convex kink visible only after smoothing
        ells = [-3.0, -1.9, -1.3, -1.05, -0.9, -0.8, -0.72, -0.655, -0.4, -0.384, -0.1]
        curve = curve_from_log_entropies(ells)
        try:
            raw_idx, _ = find_turning_point(curve)
            raw_found = True
        except NoTurningPoint:
            raw_found = False
        result = select_temperature(curve, AggregationKind.MAJORITY_VOTING)
        assert result.fallback_used == (not raw_found)

    def test_propagates_when_nothing_found(self):
        temps = [0.1 * (j + 1) for j in range(8)]
        curve = curve_from_entropies([math.exp(1.3 * t) for t in temps])
        with pytest.raises(NoTurningPoint):
            select_temperature(curve, AggregationKind.MAJORITY_VOTING)

    def test_json_round_trip_field_names(self):
        import json

        result = select_temperature(self._spiky_curve(), AggregationKind.BEST_OF_N)
        payload = json.loads(result.to_json())
        assert set(payload) == {
            "entp_index",
            "entp_temperature",
            "beta",
            "predicted_temperature",
            "second_differences",
            "fallback_used",
            "clamped",
        }


class TestAggregationKind:
    def test_beta_table(self):
        assert AggregationKind.MAJORITY_VOTING.beta == 0.0
        assert AggregationKind.BEST_OF_N.beta == 0.1

    def test_parse(self):
        assert AggregationKind.parse("best-of-n") is AggregationKind.BEST_OF_N
        assert AggregationKind.parse("MAJORITY_VOTING") is AggregationKind.MAJORITY_VOTING
        with pytest.raises(ValueError):
            AggregationKind.parse("weighted")
