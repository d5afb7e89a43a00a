"""Risk factors, injury model training, explanations and length sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize
from scipy.special import expit

from helpers import make_fixtures, make_player, make_season
from squadplan.core import Appearance, InjuryRecord, PlayerLog, SquadplanError, log_from_history
from squadplan.injury import (
    BASELINE,
    CALIBRATED,
    FEATURE_NAMES,
    FitError,
    LengthDistribution,
    RiskFactors,
    TrainingError,
    UnsupportedModelError,
    attribution_base,
    binary_log_loss,
    compute_risk_factors,
    expected_clamped_days,
    explain_prediction,
    fit_length_distribution,
    fixed_risk_model,
    global_feature_importance,
    load_model,
    model_from_dict,
    model_to_dict,
    predict_injury_prob,
    predict_injury_probs,
    sample_injury_days,
    sample_injury_length,
    save_model,
    train_injury_model,
)


def log_with_games(days_and_km, as_of_ref=0):
    log = PlayerLog()
    for day, km in sorted(days_and_km):
        log = log.with_appearance(Appearance(day, km, 1.0))
    return log


class TestRiskFactors:
    def test_worked_example(self):
        # Games 2, 5 and 9 days before the reference day, 10 km each: the
        # 7-day window holds two of them, the 28-day window all three.
        player = make_player("x", "MID", 2.0)
        log = log_with_games([(-2, 10.0), (-5, 10.0), (-9, 10.0)])
        f = compute_risk_factors(player, log, as_of_day=0)
        assert f.acute_workload == pytest.approx(20.0)
        assert f.chronic_workload == pytest.approx(30.0 * 7 / 28)
        assert f.acute_chronic_ratio == pytest.approx(20.0 / 7.5)

    def test_window_boundaries_are_half_open(self):
        player = make_player("x", "MID", 2.0)
        log = log_with_games([(-7, 10.0), (-28, 8.0), (0, 5.0)])
        f = compute_risk_factors(player, log, as_of_day=0)
        # Day -7 is outside the acute window, day -28 outside the chronic one,
        # day 0 inside both.
        assert f.acute_workload == pytest.approx(5.0)
        assert f.chronic_workload == pytest.approx((10.0 + 5.0) * 7 / 28)

    def test_empty_history_is_all_zeros(self):
        player = make_player("x", "MID", 2.0)
        f = compute_risk_factors(player, PlayerLog(), as_of_day=100)
        assert f.as_vector().tolist() == [0.0] * len(FEATURE_NAMES)

    def test_ratio_zero_when_windows_empty(self):
        player = make_player("x", "MID", 2.0)
        log = log_with_games([(-100, 10.0)])
        f = compute_risk_factors(player, log, as_of_day=0)
        assert f.acute_chronic_ratio == 0.0

    def test_recent_means_use_last_three_games(self):
        player = make_player("x", "MID", 2.0)
        log = PlayerLog()
        for day, km, dr in [(-40, 4.0, 0.0), (-30, 6.0, 1.0), (-20, 8.0, 2.0), (-10, 10.0, 3.0)]:
            log = log.with_appearance(Appearance(day, km, dr))
        f = compute_risk_factors(player, log, as_of_day=0)
        assert f.distance_covered_recent == pytest.approx((6 + 8 + 10) / 3)
        assert f.dribbles_recent == pytest.approx(2.0)

    def test_career_tallies_flow_from_log(self):
        player = make_player("x", "MID", 2.0, history=[InjuryRecord(-200, 30)])
        log = log_from_history(player).with_injury(12.0)
        f = compute_risk_factors(player, log, as_of_day=0)
        assert f.past_injury_count == 2.0
        assert f.career_days_injured == pytest.approx(42.0)

    @given(
        days=st.lists(st.integers(-60, 0), min_size=0, max_size=15, unique=True),
        km=st.floats(0, 15, allow_nan=False),
    )
    @settings(max_examples=60)
    def test_acute_never_exceeds_chronic_total(self, days, km):
        player = make_player("x", "MID", 2.0)
        log = log_with_games([(d, km) for d in days])
        f = compute_risk_factors(player, log, as_of_day=0)
        assert f.acute_workload <= f.chronic_workload * 4 + 1e-9
        assert f.acute_workload >= 0 and f.chronic_workload >= 0


def synthetic_rows(n, rng, true_w=None, bias=-2.0):
    """Labelled rows from a known logistic ground truth over three features."""
    true_w = true_w if true_w is not None else {"acute_workload": 0.08, "past_injury_count": 0.35}
    rows = []
    for _ in range(n):
        acute = float(rng.uniform(0, 40))
        past = float(rng.integers(0, 6))
        chronic = float(rng.uniform(5, 20))
        f = RiskFactors(
            acute_workload=acute,
            chronic_workload=chronic,
            acute_chronic_ratio=acute / chronic,
            past_injury_count=past,
            career_days_injured=float(rng.uniform(0, 120)),
            distance_covered_recent=float(rng.uniform(6, 12)),
            dribbles_recent=float(rng.uniform(0, 4)),
        )
        z = bias + true_w["acute_workload"] * acute + true_w["past_injury_count"] * past
        rows.append((f, bool(rng.random() < expit(z))))
    return rows


class TestCalibratedModel:
    def test_loss_matches_independent_optimizer(self):
        rng = np.random.default_rng(7)
        rows = synthetic_rows(1500, rng)
        model = train_injury_model(rows)
        X = np.array([f.as_vector() for f, _ in rows])
        y = np.array([1.0 if i else 0.0 for _, i in rows])

        ours = binary_log_loss(y, expit(X @ np.array(model.weights) + model.bias))

        def nll(theta):
            z = X @ theta[:-1] + theta[-1]
            return float(np.mean(np.logaddexp(0.0, z) - y * z))

        ref = minimize(nll, np.zeros(X.shape[1] + 1), method="L-BFGS-B", options={"maxiter": 2000})
        assert ours <= ref.fun + 1e-6

    def test_gradient_vanishes_at_reported_weights(self):
        rng = np.random.default_rng(3)
        rows = synthetic_rows(800, rng)
        model = train_injury_model(rows)
        X = np.array([f.as_vector() for f, _ in rows])
        y = np.array([1.0 if i else 0.0 for _, i in rows])
        p = expit(X @ np.array(model.weights) + model.bias)
        grad_w = X.T @ (p - y) / len(y)
        grad_b = float(np.mean(p - y))
        # Raw-space gradient scales with the feature magnitudes; the optimizer
        # converges in standardized space, so allow a loose bound here.
        assert max(float(np.max(np.abs(grad_w))), abs(grad_b)) < 1e-5

    def test_recovers_planted_coefficients(self):
        rng = np.random.default_rng(11)
        rows = synthetic_rows(20000, rng)
        model = train_injury_model(rows)
        w = dict(zip(model.feature_names, model.weights))
        assert w["acute_workload"] == pytest.approx(0.08, abs=0.02)
        assert w["past_injury_count"] == pytest.approx(0.35, abs=0.1)

    def test_single_class_data_rejected(self):
        f = RiskFactors()
        with pytest.raises(TrainingError):
            train_injury_model([(f, False)] * 50)
        with pytest.raises(TrainingError):
            train_injury_model([(f, True)] * 50)

    def test_too_few_rows_rejected(self):
        f = RiskFactors()
        with pytest.raises(TrainingError):
            train_injury_model([(f, True), (f, False)])

    def test_unknown_kind_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(TrainingError):
            train_injury_model(synthetic_rows(20, rng), kind="forest")

    @given(
        acute=st.floats(0, 100, allow_nan=False),
        past=st.floats(0, 20, allow_nan=False),
    )
    @settings(max_examples=40, deadline=None)
    def test_predictions_are_probabilities(self, acute, past):
        model = _small_model()
        p = predict_injury_prob(model, RiskFactors(acute_workload=acute, past_injury_count=past))
        assert 0.0 <= p <= 1.0

    def test_batch_prediction_matches_scalar(self):
        model = _small_model()
        rng = np.random.default_rng(5)
        factors = [f for f, _ in synthetic_rows(20, rng)]
        batch = predict_injury_probs(model, factors)
        singles = [predict_injury_prob(model, f) for f in factors]
        assert np.allclose(batch, singles)


_CACHED_MODEL = None


def _small_model():
    global _CACHED_MODEL
    if _CACHED_MODEL is None:
        _CACHED_MODEL = train_injury_model(synthetic_rows(600, np.random.default_rng(42)))
    return _CACHED_MODEL


class TestBaseline:
    def test_per_player_rates(self):
        f = RiskFactors()
        rows, ids = [], []
        # One player with 2 injuries in 40 games; another never injured in 10.
        for i in range(40):
            rows.append((f, i < 2))
            ids.append("risky")
        for _ in range(10):
            rows.append((f, False))
            ids.append("safe")
        rows.append((f, True))
        ids.append("glass")
        model = train_injury_model(rows, kind=BASELINE, player_ids=ids)
        assert predict_injury_prob(model, f, "risky") == pytest.approx(0.05)
        assert predict_injury_prob(model, f, "safe") == 0.0
        assert predict_injury_prob(model, f, "unseen") == pytest.approx(3 / 51)

    def test_misaligned_ids_rejected(self):
        f = RiskFactors()
        with pytest.raises(TrainingError):
            train_injury_model([(f, True)] * 4 + [(f, False)] * 4, kind=BASELINE, player_ids=["a"])

    def test_global_rate_without_ids(self):
        f = RiskFactors()
        model = train_injury_model([(f, True)] * 3 + [(f, False)] * 7, kind=BASELINE)
        assert predict_injury_prob(model, f, "anyone") == pytest.approx(0.3)

    def test_fixed_risk_model(self):
        model = fixed_risk_model({"a": 0.5}, default=0.1)
        assert predict_injury_prob(model, RiskFactors(), "a") == 0.5
        assert predict_injury_prob(model, RiskFactors(), "b") == pytest.approx(0.1)
        assert not model.uses_features
        with pytest.raises(SquadplanError):
            fixed_risk_model({"a": 1.5})


class TestExplanations:
    def test_contributions_sum_to_link_output(self):
        model = _small_model()
        rng = np.random.default_rng(9)
        for f, _ in synthetic_rows(100, rng):
            parts = explain_prediction(model, f, top_k=len(FEATURE_NAMES))
            total = attribution_base(model) + sum(c for _, c, _ in parts)
            z = float(np.dot(model.weights, f.as_vector()) + model.bias)
            assert total == pytest.approx(z, abs=1e-9)

    def test_sorted_by_magnitude_and_truncated(self):
        model = _small_model()
        f = RiskFactors(acute_workload=35, past_injury_count=4)
        parts = explain_prediction(model, f, top_k=3)
        assert len(parts) == 3
        mags = [abs(c) for _, c, _ in parts]
        assert mags == sorted(mags, reverse=True)

    def test_feature_values_echoed(self):
        model = _small_model()
        f = RiskFactors(acute_workload=35.0)
        parts = explain_prediction(model, f, top_k=len(FEATURE_NAMES))
        by_name = {name: (c, v) for name, c, v in parts}
        assert by_name["acute_workload"][1] == pytest.approx(35.0)

    def test_baseline_has_no_explanations(self):
        model = fixed_risk_model({}, default=0.1)
        with pytest.raises(UnsupportedModelError):
            explain_prediction(model, RiskFactors())
        with pytest.raises(UnsupportedModelError):
            global_feature_importance(model, [RiskFactors()])

    def test_global_importance_highlights_signal_features(self):
        model = _small_model()
        rng = np.random.default_rng(21)
        rows = [f for f, _ in synthetic_rows(400, rng)]
        ranking = global_feature_importance(model, rows)
        assert all(v >= 0 for _, v in ranking)
        values = [v for _, v in ranking]
        assert values == sorted(values, reverse=True)
        top2 = {name for name, _ in ranking[:2]}
        assert "acute_workload" in top2 or "past_injury_count" in top2


class TestLengths:
    def test_worked_example(self):
        dist = fit_length_distribution([InjuryRecord(0, 10), InjuryRecord(5, 20)])
        assert dist.mean_days == pytest.approx(15.0)
        assert dist.std_days == pytest.approx(math.sqrt(50.0))

    def test_needs_two_distinct_durations(self):
        with pytest.raises(FitError):
            fit_length_distribution([InjuryRecord(0, 10)])
        with pytest.raises(FitError):
            fit_length_distribution([InjuryRecord(0, 10), InjuryRecord(5, 10)])

    def test_invalid_spread_rejected(self):
        with pytest.raises(FitError):
            LengthDistribution(10.0, 0.0)

    def test_negative_draws_clamp_to_zero(self):
        dist = LengthDistribution(-5.0, 1.0)
        rng = np.random.default_rng(0)
        draws = [sample_injury_days(dist, rng) for _ in range(200)]
        assert all(d == 0.0 for d in draws)

    def test_clamped_mean_closed_form_matches_monte_carlo(self):
        dist = LengthDistribution(18.0, 15.0)
        rng = np.random.default_rng(123)
        mc = np.maximum(rng.normal(18.0, 15.0, 400_000), 0.0).mean()
        assert expected_clamped_days(dist) == pytest.approx(mc, rel=0.01)

    def test_clamped_mean_of_safe_distribution_is_its_mean(self):
        dist = LengthDistribution(30.0, 1.0)
        assert expected_clamped_days(dist) == pytest.approx(30.0, abs=1e-6)

    def test_sample_length_counts_games_in_window(self):
        season = make_season(days=(10, 14, 17, 21, 24, 28))
        dist = LengthDistribution(14.0, 1e-9 + 0.001)
        rng = np.random.default_rng(1)
        games = sample_injury_length(dist, rng, season.fixtures[0], season)
        assert games == 4


class TestSerialization:
    def test_calibrated_round_trip(self, tmp_path):
        model = _small_model()
        path = tmp_path / "m.json"
        save_model(model, path)
        again = load_model(path)
        assert again == model

    def test_baseline_round_trip(self, tmp_path):
        model = fixed_risk_model({"a": 0.25}, default=0.05)
        path = tmp_path / "m.json"
        save_model(model, path)
        assert load_model(path) == model

    def test_unknown_kind_rejected(self):
        with pytest.raises(SquadplanError):
            model_from_dict({"kind": "mystery"})

    def test_dict_shape(self):
        doc = model_to_dict(_small_model())
        assert set(doc) == {"kind", "feature_names", "weights", "bias", "feature_means"}
        assert doc["kind"] == CALIBRATED


class TestLogLoss:
    def test_matches_hand_computation(self):
        y = np.array([1.0, 0.0])
        p = np.array([0.8, 0.4])
        want = -(math.log(0.8) + math.log(0.6)) / 2
        assert binary_log_loss(y, p) == pytest.approx(want)

    def test_clipping_keeps_loss_finite(self):
        assert math.isfinite(binary_log_loss(np.array([1.0]), np.array([0.0])))
