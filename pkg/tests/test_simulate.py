"""The synthetic-trial generator and the replication study around it."""

import math

import numpy as np
import pytest

from eventcast.distributions import (CureModelParams, CureModelSpec,
                                     Exponential, FamilyKind, Weibull)
from eventcast.domain import Group
from eventcast.simulate import (MONTH_DAYS, SimConfig, recovery_study,
                                simulate_trial)

EXP_TRUTH = CureModelParams(Exponential(0.005), Exponential(0.0005), cure_prob=0.2)


def small_config(**kwargs):
    kwargs.setdefault("truth", EXP_TRUTH)
    kwargs.setdefault("n_patients", 120)
    kwargs.setdefault("n_centres", 8)
    kwargs.setdefault("interim_month", 7.0)
    kwargs.setdefault("target_events", 60)
    kwargs.setdefault("seed", 90)
    return SimConfig(**kwargs)


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(n_patients=0)
    with pytest.raises(ValueError):
        small_config(interim_month=0.0)
    with pytest.raises(ValueError):
        small_config(centre_rates=(0.1, 0.2))  # wrong length for 8 centres


def test_same_seed_reproduces_the_trial():
    a = simulate_trial(small_config())
    b = simulate_trial(small_config())
    assert a.snapshot.n_events == b.snapshot.n_events
    np.testing.assert_array_equal(a.event_days, b.event_days)
    np.testing.assert_array_equal(a.recruit_days, b.recruit_days)
    c = simulate_trial(small_config(seed=91))
    assert not np.array_equal(a.event_days, c.event_days)


def test_staggered_enrolment_fills_the_sample():
    trial = simulate_trial(small_config())
    assert len(trial.recruit_days) == 120
    assert math.isfinite(trial.recruit_complete_day)
    assert trial.interim_day == pytest.approx(7.0 * MONTH_DAYS)
    # only patients randomised by the cut-off appear in the snapshot
    n_on_study = int(np.sum(trial.recruit_days <= trial.interim_day))
    assert len(trial.snapshot.patients) == n_on_study
    for p in trial.snapshot.patients:
        assert p.randomisation_day + p.exposure_days <= trial.interim_day + 1e-9


def test_snapshot_groups_are_consistent_with_latents():
    trial = simulate_trial(small_config())
    snap = trial.snapshot
    assert snap.n_events + snap.n_at_risk + snap.n_dropouts == len(snap.patients)
    assert snap.n_events == trial.events_by(trial.interim_day)
    # at-risk exposure runs exactly to the cut-off
    for p in snap.patients:
        if p.group is Group.AT_RISK:
            assert p.randomisation_day + p.exposure_days == pytest.approx(
                trial.interim_day)


def test_instant_enrolment_mode():
    trial = simulate_trial(small_config(recruit_months=0.0,
                                        initiation_window_months=0.0))
    assert np.all(trial.recruit_days == 0.0)
    assert trial.recruit_complete_day == 0.0
    snap = trial.snapshot
    assert len(snap.patients) == 120
    assert snap.centres == ()
    assert snap.remaining_patients == 0
    assert all(p.randomisation_day == 0.0 for p in snap.patients)


def test_events_by_and_target_hit_day():
    trial = simulate_trial(small_config())
    days = trial.event_days
    assert np.all(np.diff(days) >= 0.0)
    assert trial.events_by(-1.0) == 0
    assert trial.events_by(days[0]) == 1
    assert trial.events_by(1e9) == len(days)
    hit = trial.target_hit_day(10)
    assert hit == pytest.approx(days[9])
    assert trial.target_hit_day(len(days) + 1) is None


def test_centre_windows_respect_interim():
    trial = simulate_trial(small_config())
    window_end = min(trial.interim_day, trial.recruit_complete_day)
    for centre, open_day in zip(trial.snapshot.centres, trial.centre_open_days):
        assert centre.window_days <= window_end + 1e-9


def test_explicit_centre_rates_are_used():
    rates = tuple([0.05] * 8)
    trial = simulate_trial(small_config(centre_rates=rates))
    np.testing.assert_allclose(trial.centre_rates, 0.05)


def test_recovery_study_smoke():
    config = small_config(recruit_months=0.0, initiation_window_months=0.0,
                          target_events=70)
    study = recovery_study(config, n_reps=3, forecast=True)
    assert study.summary["n_reps"] == 3
    assert len(study.rows) == 3
    for row in study.rows:
        assert row["error"] is None
        assert row["converged"]
        assert 0.0 <= row["cure_prob"] <= 1.0
        assert row["k_remaining"] == 70 - row["n_events"]
        if row["realized_day"] is not None:
            assert isinstance(row["covered"], bool)
    assert "cure_prob" in study.summary
    assert set(study.summary["cure_prob"]) == {"q05", "median", "q95"}


def test_recovery_study_score_at_truth_uses_generating_parameters():
    config = small_config(recruit_months=0.0, initiation_window_months=0.0,
                          target_events=70)
    fitted = recovery_study(config, n_reps=2, forecast=True)
    at_truth = recovery_study(config, n_reps=2, forecast=True, score_at_truth=True)
    # same replications, same realized outcomes, different band centres
    for a, b in zip(fitted.rows, at_truth.rows):
        assert a["realized_day"] == b["realized_day"]
        assert a["n_events"] == b["n_events"]
    assert any(a["mean_day"] != b["mean_day"]
               for a, b in zip(fitted.rows, at_truth.rows))


def test_recovery_study_without_forecast_skips_scoring():
    config = small_config()
    study = recovery_study(config, n_reps=2, forecast=False)
    assert all("mean_day" not in row for row in study.rows)
    assert "coverage" not in study.summary


def test_recovery_study_custom_fit_spec():
    config = small_config(recruit_months=0.0, initiation_window_months=0.0)
    spec = CureModelSpec(FamilyKind.WEIBULL, FamilyKind.EXPONENTIAL)
    study = recovery_study(config, n_reps=1, fit_spec=spec, forecast=False)
    row = study.rows[0]
    assert "event_shape" in row and "dropout_rate" in row


def test_exponential_cure_truth_recovery():
    # 100 replications; the cured fraction lands within 0.1 of truth in >= 90
    config = SimConfig(truth=EXP_TRUTH, n_patients=1000, n_centres=50,
                       initiation_window_months=0.0, recruit_months=0.0,
                       interim_month=24.0, target_events=550, seed=92)
    study = recovery_study(config, n_reps=100, forecast=False)
    errors = np.array([abs(row["cure_prob"] - 0.2) for row in study.rows
                       if row["error"] is None])
    assert len(errors) == 100
    assert np.mean(errors <= 0.1) >= 0.90


def test_weibull_truth_round_trip():
    truth = CureModelParams(Weibull.from_shape_scale(0.8, 182.0),
                            Weibull.from_shape_scale(0.6, 2611.0), cure_prob=0.2)
    config = SimConfig(truth=truth, n_patients=400, n_centres=20,
                       initiation_window_months=0.0, recruit_months=0.0,
                       interim_month=7.0, target_events=220, seed=93)
    study = recovery_study(config, n_reps=1, forecast=False)
    row = study.rows[0]
    assert row["error"] is None
    assert row["event_shape"] == pytest.approx(0.8, abs=0.25)
