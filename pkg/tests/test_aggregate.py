import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turnpoint.aggregate import (
    AggSample,
    SampleSet,
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
from turnpoint.errors import (
    EmptyInput,
    EmptySampleSet,
    InvalidArgument,
    MissingReward,
    PairedInputMismatch,
    RejectedDuplicate,
    SampleSizeTooLarge,
)
from turnpoint.turning import AggregationKind


def samples(*answers, scores=None, correct=None, temperature=0.7):
    out = []
    for i, a in enumerate(answers):
        out.append(
            AggSample(
                answer=a,
                normalized_answer=normalize_answer(a),
                temperature=temperature,
                sample_index=i,
                correct=None if correct is None else correct[i],
                score=None if scores is None else scores[i],
            )
        )
    return out


class TestNormalizeAnswer:
    def test_trims_and_collapses(self):
        assert normalize_answer("  4 ") == "4"
        assert normalize_answer("a   b\tc") == "a b c"

    def test_case_folds(self):
        assert normalize_answer("Ok") == normalize_answer("ok")

    def test_identity_normalizer_is_pluggable(self):
        sset = SampleSet(normalizer=lambda s: s)
        a = sset.add("p", "1/2", 0.5, 0)
        b = sset.add("p", "0.5", 0.5, 1)
        assert a.normalized_answer != b.normalized_answer


class TestMajorityVote:
    def test_plain_majority(self):
        assert majority_vote(samples("4", "4", "5")) == "4"

    def test_tie_goes_to_earliest_sample_index(self):
        assert majority_vote(samples("a", "b")) == "a"
        assert majority_vote(samples("b", "a")) == "b"

    def test_large_tie_is_flagged(self):
        answers = ["x"] * 64 + ["y"] * 64
        tally = tally_votes(samples(*answers))
        assert tally.tie
        assert tally.answer == "x"
        assert tally.counts == {"x": 64, "y": 64}

    def test_empty_rejected(self):
        with pytest.raises(EmptySampleSet):
            majority_vote([])

    @given(st.permutations(list(range(7))))
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariance(self, order):
        base = samples("a", "b", "a", "c", "b", "a", "c")
        shuffled = [base[i] for i in order]
        assert majority_vote(shuffled) == majority_vote(base)


class TestBestOfN:
    def test_max_score_wins(self):
        chosen = best_of_n(samples("a", "b", "c", scores=[0.1, 0.9, 0.5]))
        assert chosen.answer == "b"

    def test_ties_go_to_earliest(self):
        chosen = best_of_n(samples("a", "b", "c", scores=[0.5, 0.5, 0.5]))
        assert chosen.sample_index == 0

    def test_missing_score_rejected(self):
        with pytest.raises(MissingReward):
            best_of_n(samples("a", "b"))

    def test_perfect_reward_reduces_to_any_correct(self):
        # 0/1 scores from a verifier: the winner is correct iff any sample is
        s = samples("a", "b", "c", scores=[0.0, 1.0, 0.0], correct=[False, True, False])
        assert best_of_n(s).correct is True
        s2 = samples("a", "b", scores=[0.0, 0.0], correct=[False, False])
        assert best_of_n(s2).correct is False


def pass_at_k_oracle(n: int, c: int, k: int) -> Fraction:
    """Exhaustive enumeration: fraction of k-subsets containing a correct sample."""
    hits = sum(
        1 for subset in itertools.combinations(range(n), k) if any(i < c for i in subset)
    )
    return Fraction(hits, math.comb(n, k))


class TestPassAtK:
    def test_enumerated_example(self):
        assert pass_at_k_oracle(4, 2, 2) == Fraction(5, 6)
        assert pass_at_k(4, 2, 2) == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_no_correct_samples(self):
        for n, k in [(5, 1), (8, 3), (256, 128)]:
            assert pass_at_k(n, 0, k) == 0.0

    def test_all_correct(self):
        assert pass_at_k(7, 7, 1) == 1.0

    def test_k_exceeding_incorrect_pool(self):
        assert pass_at_k(10, 4, 8) == 1.0

    def test_invalid_arguments(self):
        with pytest.raises(InvalidArgument):
            pass_at_k(4, 5, 1)
        with pytest.raises(InvalidArgument):
            pass_at_k(4, 2, 5)
        with pytest.raises(InvalidArgument):
            pass_at_k(4, 2, 0)

    def test_monotone_in_k_and_c(self):
        for n in (6, 17, 256):
            for c in (1, n // 3, n - 1):
                vals = [pass_at_k(n, c, k) for k in range(1, n + 1)]
                assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))
            for k in (1, n // 2):
                vals = [pass_at_k(n, c, k) for c in range(0, n + 1)]
                assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))

    def test_full_draw_hits_iff_any_correct(self):
        assert pass_at_k(9, 0, 9) == 0.0
        assert pass_at_k(9, 1, 9) == 1.0

    def test_matches_enumeration_on_small_n(self):
        for n in range(1, 9):
            for c in range(0, n + 1):
                for k in range(1, n + 1):
                    expected = float(pass_at_k_oracle(n, c, k))
                    assert pass_at_k(n, c, k) == pytest.approx(expected, abs=1e-12)


def _make_sets(per_temp: dict, n_per_problem: int, correct_fn, temperature_list=None):
    """per_temp: T -> dict(problem -> correct flags list)"""
    sets = {}
    for t, problems in per_temp.items():
        sset = SampleSet()
        for pid, flags in problems.items():
            for i, ok in enumerate(flags):
                sset.add(pid, "ok" if ok else f"bad-{i}", t, i, correct=ok,
                         score=1.0 if ok else 0.0)
        sets[t] = sset
    return sets


class TestAccuracyHeatmap:
    def test_sample_size_one_equals_mean_correctness(self):
        flags = [True, True, False, False, True, False, True, False]
        sets = _make_sets({0.5: {"p0": flags}}, 8, None)
        for kind in AggregationKind:
            hm = accuracy_heatmap(sets, [1], kind, resamples=4000, seed=1)
            assert hm.accuracy[0, 0] == pytest.approx(0.5, abs=0.03)

    def test_all_correct_gives_ones(self):
        sets = _make_sets({0.3: {"p0": [True] * 8}, 0.9: {"p0": [True] * 8}}, 8, None)
        hm = accuracy_heatmap(sets, [1, 2, 4], AggregationKind.MAJORITY_VOTING,
                              resamples=10, seed=0)
        assert np.all(hm.accuracy == 1.0)

    def test_best_of_n_is_analytic_pass_at_k(self):
        flags = [True, False, False, True, False, False, False, False]
        sets = _make_sets({0.5: {"p0": flags}}, 8, None)
        hm = accuracy_heatmap(sets, [1, 2, 4, 8], AggregationKind.BEST_OF_N,
                              resamples=1, seed=0)
        for si, s in enumerate([1, 2, 4, 8]):
            assert hm.accuracy[si, 0] == pytest.approx(pass_at_k(8, 2, s), abs=1e-12)

    def test_best_of_n_matches_monte_carlo_subsets(self):
        # independent oracle: resample subsets, take any-correct indicator
        flags = [True, False, False, False, True, False, False, False, False, False]
        s = 3
        rng = np.random.default_rng(7)
        hits = 0
        n_mc = 10_000
        for _ in range(n_mc):
            idx = rng.choice(10, size=s, replace=False)
            hits += any(flags[i] for i in idx)
        mc = hits / n_mc
        sets = _make_sets({0.5: {"p0": flags}}, 10, None)
        hm = accuracy_heatmap(sets, [s], AggregationKind.BEST_OF_N, resamples=1, seed=0)
        assert hm.accuracy[0, 0] == pytest.approx(mc, abs=0.02)

    def test_sample_size_too_large(self):
        sets = _make_sets({0.5: {"p0": [True] * 4}}, 4, None)
        with pytest.raises(SampleSizeTooLarge):
            accuracy_heatmap(sets, [8], AggregationKind.MAJORITY_VOTING, resamples=2, seed=0)

    def test_deterministic_given_seed(self):
        flags = [True, False, True, False, True, False, True, False]
        sets = _make_sets({0.5: {"p0": flags, "p1": flags[::-1]}}, 8, None)
        a = accuracy_heatmap(sets, [2, 4], AggregationKind.MAJORITY_VOTING, resamples=50, seed=9)
        b = accuracy_heatmap(sets, [2, 4], AggregationKind.MAJORITY_VOTING, resamples=50, seed=9)
        assert np.array_equal(a.accuracy, b.accuracy)

    def test_csv_round_trip(self):
        sets = _make_sets({0.5: {"p0": [True] * 4}, 1.0: {"p0": [False] * 4}}, 4, None)
        hm = accuracy_heatmap(sets, [1, 4], AggregationKind.MAJORITY_VOTING, resamples=5, seed=0)
        from turnpoint.aggregate import AccuracyHeatmap

        text = hm.to_csv()
        back = AccuracyHeatmap.from_csv(text)
        assert back.temperatures == hm.temperatures
        assert back.sample_sizes == hm.sample_sizes
        assert np.array_equal(back.accuracy, hm.accuracy)


class TestEpsOptimalRange:
    def test_inspection_example(self):
        acc = {0.5: 0.60, 0.7: 0.64, 0.9: 0.63, 1.1: 0.58}
        r = eps_optimal_range(acc, 0.02)
        assert (r.low, r.high) == (0.7, 0.9)
        assert r.midpoint == pytest.approx(0.8)
        assert r.peak_temperature == 0.7
        assert r.peak_accuracy == 0.64

    def test_single_temperature_degenerates(self):
        r = eps_optimal_range({0.5: 0.4}, 0.02)
        assert (r.low, r.high, r.midpoint) == (0.5, 0.5, 0.5)

    def test_flat_curve_spans_grid(self):
        acc = {t: 0.5 for t in (0.1, 0.3, 0.5, 0.7)}
        r = eps_optimal_range(acc, 0.02)
        assert (r.low, r.high) == (0.1, 0.7)

    def test_eps_zero_returns_peak_plateau(self):
        acc = {0.1: 0.3, 0.3: 0.5, 0.5: 0.5, 0.7: 0.4}
        r = eps_optimal_range(acc, 0.0)
        assert (r.low, r.high) == (0.3, 0.5)

    def test_peak_tie_resolves_to_lowest_temperature(self):
        acc = {0.1: 0.2, 0.3: 0.6, 0.5: 0.1, 0.7: 0.6}
        r = eps_optimal_range(acc, 0.02)
        assert r.peak_temperature == 0.3
        assert (r.low, r.high) == (0.3, 0.3)
        assert r.excluded_qualifying == [0.7]

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            eps_optimal_range({}, 0.02)


class TestEvaluatePrediction:
    acc = {0.5: 0.60, 0.7: 0.64, 0.9: 0.63, 1.1: 0.58}

    def _range(self):
        return eps_optimal_range(self.acc, 0.02)

    def test_hit_inside_range(self):
        score = evaluate_prediction(0.8, self._range(), self.acc)
        assert score.hit and score.temperature_gap == 0.0

    def test_gap_outside_range(self):
        score = evaluate_prediction(1.0, self._range(), self.acc)
        assert not score.hit
        assert score.temperature_gap == pytest.approx(0.1)

    def test_drop_is_zero_at_peak(self):
        score = evaluate_prediction(0.7, self._range(), self.acc)
        assert score.performance_drop == pytest.approx(0.0)

    def test_drop_at_snapped_prediction(self):
        score = evaluate_prediction(1.05, self._range(), self.acc)
        assert score.performance_drop == pytest.approx(0.64 - 0.58)

    def test_hit_iff_zero_gap(self):
        for pred in (0.5, 0.65, 0.7, 0.9, 0.95, 1.2):
            score = evaluate_prediction(pred, self._range(), self.acc)
            assert score.hit == (score.temperature_gap == 0.0)


class TestCalibrateBeta:
    BEST_OF_N = [0.6, 0.8, 0.6, 0.6, 0.7, 0.5, 0.6, 1.1, 1.2, 0.5, 0.6, 1.3, 1.0]
    MAJORITY = [0.6, 0.9, 0.6, 0.5, 0.3, 0.6, 0.5, 1.1, 0.9, 0.5, 0.6, 1.0, 0.8]

    def test_reference_midpoint_table(self):
        result = calibrate_beta(self.BEST_OF_N, self.MAJORITY)
        assert result.mean_a == pytest.approx(0.7769, abs=1e-4)
        assert result.mean_b == pytest.approx(0.6846, abs=1e-4)
        assert result.difference == pytest.approx(0.0923, abs=1e-4)
        assert result.rounded == 0.1

    def test_mismatched_lengths(self):
        with pytest.raises(PairedInputMismatch):
            calibrate_beta([0.5], [0.5, 0.6])


class TestSampleSet:
    def test_duplicate_key_rejected(self):
        sset = SampleSet()
        sset.add("p", "a", 0.5, 0)
        with pytest.raises(RejectedDuplicate):
            sset.add("p", "b", 0.5, 0)

    def test_split_by_temperature(self):
        sset = SampleSet()
        sset.add("p", "a", 0.5, 0)
        sset.add("p", "b", 1.0, 0)
        split = sset.split_by_temperature()
        assert set(split) == {0.5, 1.0}
        assert split[0.5].problems["p"][0].answer == "a"
