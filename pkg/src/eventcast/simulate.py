"""Synthetic trials with known truth, for validating the forecasting pipeline.

The generator enrols patients through Poisson centre streams, draws latent
cure/event/dropout outcomes, snapshots the trial at an interim month, and
keeps the full future so forecasts can be scored against what actually
happens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .atrisk import time_to_target
from .combined import time_to_target_combined
from .distributions import (CureModelParams, CureModelSpec, describe_family,
                            inverse_survival, kind_of)
from .domain import (CentreRecord, Group, PatientRecord, TrialSnapshot,
                     UnreachableTargetError)
from .eventprob import QuadratureError
from .likelihood import InsufficientDataError, fit
from .recruitment import PGFit, fit_pg, plan_closure, posteriors

MONTH_DAYS = 365.25 / 12.0


@dataclass(frozen=True)
class SimConfig:
    """Trial-generating truth and schedule."""

    truth: CureModelParams
    n_patients: int = 1000
    n_centres: int = 100
    initiation_window_months: float = 6.0
    recruit_months: float = 6.0  # sizes default centre rates; 0 enrols everyone at day 0
    centre_rates: Optional[tuple[float, ...]] = None
    rate_prior: Optional[PGFit] = None  # draw centre rates from this gamma instead
    interim_month: float = 7.0
    target_events: int = 550
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 1 or self.n_centres < 1:
            raise ValueError("n_patients and n_centres must be >= 1")
        if self.interim_month <= 0:
            raise ValueError("interim_month must be > 0")
        if self.centre_rates is not None and len(self.centre_rates) != self.n_centres:
            raise ValueError("centre_rates length must equal n_centres")


@dataclass(frozen=True)
class SimulatedTrial:
    """One realized trial: the interim snapshot plus the hidden future."""

    config: SimConfig
    snapshot: TrialSnapshot
    centre_open_days: np.ndarray
    centre_rates: np.ndarray
    recruit_days: np.ndarray       # absolute arrival day per enrolled patient
    event_days: np.ndarray         # absolute day of every eventual endpoint, sorted
    recruit_complete_day: float    # inf if enrolment never finishes

    @property
    def interim_day(self) -> float:
        return self.snapshot.cutoff_day

    def events_by(self, day: float) -> int:
        return int(np.searchsorted(self.event_days, day, side="right"))

    def target_hit_day(self, target: Optional[int] = None) -> Optional[float]:
        k = self.config.target_events if target is None else target
        if len(self.event_days) < k:
            return None
        return float(self.event_days[k - 1])


def _centre_rates(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    if config.centre_rates is not None:
        return np.asarray(config.centre_rates, dtype=float)
    if config.rate_prior is not None:
        return rng.gamma(config.rate_prior.shape, 1.0 / config.rate_prior.rate,
                         size=config.n_centres)
    window = config.initiation_window_months * MONTH_DAYS
    span = config.recruit_months * MONTH_DAYS
    # equal rates sized so expected enrolment hits n_patients at recruit_months
    per_centre_days = max(span - window / 2.0, 1.0)
    return np.full(config.n_centres, config.n_patients
                   / (config.n_centres * per_centre_days))


def simulate_trial(config: SimConfig,
                   rng: Optional[np.random.Generator] = None) -> SimulatedTrial:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    truth = config.truth
    opens = rng.uniform(0.0, config.initiation_window_months * MONTH_DAYS,
                        size=config.n_centres)
    rates = _centre_rates(config, rng)

    if config.recruit_months == 0.0:
        # administrative design: full cohort randomised at study start
        arrivals = np.zeros(config.n_patients)
        centre_of = np.arange(config.n_patients) % config.n_centres
        complete = 0.0
    else:
        span = config.recruit_months * MONTH_DAYS * 1.5 + 60.0
        arrivals = np.empty(0)
        centre_of = np.empty(0, dtype=int)
        for _ in range(8):
            parts, owners = [], []
            for i in range(config.n_centres):
                dur = max(span - opens[i], 0.0)
                count = rng.poisson(rates[i] * dur)
                if count:
                    parts.append(opens[i] + rng.uniform(0.0, dur, size=count))
                    owners.append(np.full(count, i))
            arrivals = np.concatenate(parts) if parts else np.empty(0)
            centre_of = (np.concatenate(owners).astype(int) if owners
                         else np.empty(0, dtype=int))
            if len(arrivals) >= config.n_patients or rates.max(initial=0.0) <= 0.0:
                break
            span *= 2.0

        order = np.argsort(arrivals, kind="stable")
        take = order[:config.n_patients]
        arrivals = arrivals[take]
        centre_of = centre_of[take]
        complete = (float(arrivals.max()) if len(arrivals) >= config.n_patients
                    else math.inf)

    n = len(arrivals)
    cured = rng.random(n) < truth.cure_prob
    event_wait = np.asarray(inverse_survival(truth.event, 1.0 - rng.random(n)))
    event_wait[cured] = math.inf
    dropout_wait = np.asarray(inverse_survival(truth.dropout, 1.0 - rng.random(n)))

    has_event = event_wait < dropout_wait
    event_days = np.sort(arrivals[has_event] + event_wait[has_event])

    t1 = config.interim_month * MONTH_DAYS
    on_study = arrivals <= t1
    patients = []
    for s, ev, dr in zip(arrivals[on_study], event_wait[on_study],
                         dropout_wait[on_study]):
        cap = t1 - s
        if ev <= min(dr, cap):
            patients.append(PatientRecord(ev, Group.EVENT, randomisation_day=s))
        elif dr <= cap:
            patients.append(PatientRecord(dr, Group.DROPOUT, randomisation_day=s))
        else:
            patients.append(PatientRecord(cap, Group.AT_RISK, randomisation_day=s))

    window_end = min(t1, complete)
    centres = []
    for i in range(config.n_centres):
        window = window_end - opens[i]
        if window <= 0:
            continue
        enrolled = int(np.sum((centre_of == i) & on_study))
        centres.append(CentreRecord(centre_id=f"c{i:03d}", enrolled_count=enrolled,
                                    window_days=window))
    snapshot = TrialSnapshot(patients=tuple(patients), centres=tuple(centres),
                             cutoff_day=t1, target_events=config.target_events,
                             sample_size=config.n_patients)
    return SimulatedTrial(config=config, snapshot=snapshot, centre_open_days=opens,
                          centre_rates=rates, recruit_days=arrivals,
                          event_days=event_days, recruit_complete_day=complete)


def _flatten_params(params: CureModelParams) -> dict:
    out = {}
    for prefix, fam in (("event", params.event), ("dropout", params.dropout)):
        for key, val in describe_family(fam).items():
            if key != "family":
                out[f"{prefix}_{key}"] = float(val)
    out["cure_prob"] = float(params.cure_prob)
    return out


@dataclass(frozen=True)
class RecoveryStudy:
    """Replication rows plus aggregate parameter-recovery and coverage stats."""

    rows: list
    summary: dict


def recovery_study(config: SimConfig, n_reps: int,
                   fit_spec: Optional[CureModelSpec] = None,
                   delta: float = 0.10, forecast: bool = True,
                   score_at_truth: bool = False) -> RecoveryStudy:
    """Repeatedly simulate, refit at the interim, and score the forecasts.

    Each replication draws its generator from SeedSequence((seed, rep)), so
    results do not depend on execution order. With score_at_truth the bands
    come from the generating parameters, isolating the calibration of the
    predictive machinery from estimation error.
    """
    if fit_spec is None:
        fit_spec = CureModelSpec(event=kind_of(config.truth.event),
                                 dropout=kind_of(config.truth.dropout))
    rows = []
    for rep in range(n_reps):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, rep)))
        trial = simulate_trial(config, rng)
        snap = trial.snapshot
        row = {"rep": rep, "n_events": snap.n_events, "n_at_risk": snap.n_at_risk,
               "n_dropouts": snap.n_dropouts, "error": None}
        try:
            fitted = fit(fit_spec, snap)
        except InsufficientDataError as exc:
            row["error"] = f"fit: {exc}"
            rows.append(row)
            continue
        row.update(_flatten_params(fitted.params))
        row["loglik"] = fitted.loglik
        row["converged"] = fitted.converged
        if forecast:
            band_params = config.truth if score_at_truth else fitted.params
            try:
                _score_forecast(trial, band_params, delta, row)
            except (UnreachableTargetError, QuadratureError, ValueError) as exc:
                row["error"] = f"forecast: {exc}"
        rows.append(row)
    return RecoveryStudy(rows=rows, summary=_summarize_rows(rows))


def _score_forecast(trial: SimulatedTrial, params: CureModelParams, delta: float,
                    row: dict) -> None:
    snap = trial.snapshot
    k_remaining = snap.remaining_events
    row["k_remaining"] = k_remaining
    realized = trial.target_hit_day()
    row["realized_day"] = (None if realized is None
                           else float(realized - trial.interim_day))
    if snap.remaining_patients > 0:
        pg = fit_pg(snap.centres)
        post = posteriors(pg, snap.centres)
        plan = plan_closure(post, (), snap.remaining_patients, delta=delta,
                            pg_prior=pg)
        row["pg_shape"], row["pg_rate"] = pg.shape, pg.rate
        row["recruit_close_day"] = plan.closure_day
        milestone, _ = time_to_target_combined(
            params, plan.centre_posteriors, plan.new_centres,
            snap.exposures(Group.AT_RISK), k_remaining, delta=delta, pg_prior=pg)
    else:
        milestone, _ = time_to_target(params, snap.exposures(Group.AT_RISK),
                                      k_remaining, delta=delta)
    row["mean_day"] = milestone.mean_day
    row["lower_day"] = milestone.lower_day
    row["upper_day"] = milestone.upper_day
    if row["realized_day"] is None:
        row["covered"] = None
    else:
        row["covered"] = bool(milestone.lower_day <= row["realized_day"]
                              <= milestone.upper_day)


_SUMMARY_QUANTILE_KEYS = ("event_rate", "event_shape", "event_scale", "dropout_rate",
                          "dropout_shape", "dropout_scale", "cure_prob",
                          "mean_day", "realized_day")


def _summarize_rows(rows: list) -> dict:
    ok = [r for r in rows if r["error"] is None]
    summary = {"n_reps": len(rows), "n_failed": len(rows) - len(ok),
               "n_nonconverged": sum(1 for r in ok if not r.get("converged", False))}
    for key in _SUMMARY_QUANTILE_KEYS:
        vals = np.array([r[key] for r in ok
                         if r.get(key) is not None and np.isfinite(r[key])])
        if len(vals):
            q05, q50, q95 = np.quantile(vals, [0.05, 0.50, 0.95])
            summary[key] = {"q05": float(q05), "median": float(q50),
                            "q95": float(q95)}
    scored = [r["covered"] for r in ok if r.get("covered") is not None]
    if scored:
        summary["coverage"] = float(np.mean(scored))
        summary["n_scored"] = len(scored)
    return summary
