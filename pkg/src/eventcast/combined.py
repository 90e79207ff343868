"""Whole-trial event forecasts: on-study patients plus patients yet to enrol.

Future recruits arrive through the fitted recruitment model; each converts to
an endpoint with a probability depending on when they arrive. Their count is
a mixed Poisson, independent of the at-risk cohort's Poisson-binomial, so
means and variances add.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .atrisk import _prob_matrix, asymptotic_event_ceiling, make_table
from .distributions import CureModelParams
from .domain import (ForecastCurve, Milestone, NewCentrePlan,
                     UnreachableTargetError, first_crossing)
from .eventprob import (EventIntegralTable, event_density_integral,
                        is_exponential_pair, prob_event_by,
                        prob_event_eventually)
from .recruitment import CentrePosterior, PGFit, _new_centre_rate

_HORIZON_CAP_DAYS = 36525.0


def p_event_unconditional(params: CureModelParams, x: float) -> float:
    """P(endpoint within x days of randomisation), before any follow-up."""
    return prob_event_by(params, x)


def _yield_closed_exponential(params: CureModelParams, t, open_day, close_day):
    mu_a, mu_l = params.event.rate, params.dropout.rate
    r = params.cure_prob
    mu = mu_a + mu_l
    t = np.asarray(t, dtype=float)
    if mu == 0.0 or r >= 1.0:
        return np.zeros_like(t)
    end = np.minimum(t, close_day)
    d = np.clip(end - open_day, 0.0, None)
    # integral of the event probability over arrival days in the open window
    bracket = d - (np.exp(-mu * (t - end)) - np.exp(-mu * np.clip(t - open_day, 0.0, None))) / mu
    return np.where(d > 0, (1.0 - r) * (mu_a / mu) * bracket, 0.0)


def event_yield(params: CureModelParams, t, open_day: float = 0.0,
                close_day: Optional[float] = None,
                table: Optional[EventIntegralTable] = None):
    """Expected events by day t per unit recruitment rate of one centre.

    The centre recruits uniformly in time while open over
    [open_day, close_day]; each arrival then converts with the
    time-remaining event probability.
    """
    b = math.inf if close_day is None else float(close_day)
    if is_exponential_pair(params):
        out = _yield_closed_exponential(params, t, open_day, b)
        return out if np.ndim(out) else float(out)
    t_arr = np.asarray(t, dtype=float)
    w_hi = np.clip(t_arr - open_day, 0.0, None)
    w_lo = np.clip(t_arr - b, 0.0, None)
    r = params.cure_prob
    if table is not None:
        out = (1.0 - r) * np.asarray(table.cumulative_integral(w_lo, w_hi))
        return out if out.ndim else float(out)
    if t_arr.ndim:
        raise ValueError("array arguments need a precomputed table")

    def cum(w):
        return event_density_integral(params, 0.0, w)

    from .eventprob import _quad
    out = (1.0 - r) * _quad(cum, float(w_lo), float(w_hi)) if w_hi > w_lo else 0.0
    return float(out)


@dataclass(frozen=True)
class CombinedPrediction:
    """Predictive event counts split by where the patients come from."""

    days: np.ndarray
    onstudy_mean: np.ndarray
    onstudy_variance: np.ndarray
    recruit_mean: np.ndarray
    recruit_variance: np.ndarray
    confidence_level: float = 0.90

    @property
    def mean(self) -> np.ndarray:
        return self.onstudy_mean + self.recruit_mean

    @property
    def variance(self) -> np.ndarray:
        return self.onstudy_variance + self.recruit_variance

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def band(self) -> tuple[np.ndarray, np.ndarray]:
        zq = float(ndtri(0.5 + self.confidence_level / 2.0))
        return np.clip(self.mean - zq * self.sd, 0.0, None), self.mean + zq * self.sd

    def curve(self) -> ForecastCurve:
        lower, upper = self.band()
        return ForecastCurve(days=self.days, mean=self.mean, lower=lower, upper=upper,
                             confidence_level=self.confidence_level,
                             components={"on_study_mean": self.onstudy_mean,
                                         "future_recruit_mean": self.recruit_mean})


def combined_curve(params: CureModelParams,
                   centre_posteriors: Sequence[CentrePosterior],
                   new_centres: Sequence[NewCentrePlan],
                   atrisk_exposures, days: np.ndarray, delta: float = 0.10,
                   pg_prior: Optional[PGFit] = None,
                   table: Optional[EventIntegralTable] = None) -> CombinedPrediction:
    """Mean/variance of total further events over a day grid."""
    z = np.asarray(atrisk_exposures, dtype=float)
    days = np.asarray(days, dtype=float)
    if table is None and not is_exponential_pair(params):
        table = make_table(params, float(days.max(initial=0.0)), z)
    probs = _prob_matrix(params, z, days, table)
    onstudy_mean = probs.sum(axis=0)
    onstudy_var = (probs * (1.0 - probs)).sum(axis=0)
    recruit_mean = np.zeros_like(days)
    recruit_var = np.zeros_like(days)
    for p in centre_posteriors:
        y = np.asarray(event_yield(params, days, 0.0, p.closure_day, table=table))
        recruit_mean += p.mean * y
        recruit_var += p.mean * y + p.variance * y * y
    for plan in new_centres:
        lam = _new_centre_rate(plan, pg_prior)
        y = np.asarray(event_yield(params, days, plan.open_day, plan.closure_day,
                                   table=table))
        recruit_mean += lam * y
        recruit_var += lam * y
    return CombinedPrediction(days=days, onstudy_mean=onstudy_mean,
                              onstudy_variance=onstudy_var,
                              recruit_mean=recruit_mean,
                              recruit_variance=recruit_var,
                              confidence_level=1.0 - delta)


def combined_distribution(params: CureModelParams,
                          centre_posteriors: Sequence[CentrePosterior],
                          new_centres: Sequence[NewCentrePlan],
                          atrisk_exposures, horizon_days: float,
                          delta: float = 0.10,
                          pg_prior: Optional[PGFit] = None,
                          table: Optional[EventIntegralTable] = None) -> CombinedPrediction:
    """Single-horizon prediction; arrays hold one entry."""
    return combined_curve(params, centre_posteriors, new_centres, atrisk_exposures,
                          np.array([float(horizon_days)]), delta=delta,
                          pg_prior=pg_prior, table=table)


def _asymptotic_total(params, centre_posteriors, new_centres, atrisk_exposures,
                      pg_prior, table) -> float:
    total = asymptotic_event_ceiling(params, atrisk_exposures, table=table)
    p_ever = prob_event_eventually(params)
    for p in centre_posteriors:
        if p.closure_day is None:
            if p.mean > 0 and p_ever > 0:
                return math.inf
        else:
            total += p.mean * p.closure_day * p_ever
    for plan in new_centres:
        lam = _new_centre_rate(plan, pg_prior)
        if plan.closure_day is None:
            if lam > 0 and p_ever > 0:
                return math.inf
        else:
            total += lam * (plan.closure_day - plan.open_day) * p_ever
    return total


def probability_of_success_combined(params: CureModelParams,
                                    centre_posteriors: Sequence[CentrePosterior],
                                    new_centres: Sequence[NewCentrePlan],
                                    atrisk_exposures, horizon_days: float,
                                    k_remaining: int,
                                    pg_prior: Optional[PGFit] = None) -> float:
    """Normal-approximation P(at least k_remaining further events by the horizon)."""
    if k_remaining <= 0:
        return 1.0
    pred = combined_distribution(params, centre_posteriors, new_centres,
                                 atrisk_exposures, horizon_days, pg_prior=pg_prior)
    mean, sd = float(pred.mean[0]), float(pred.sd[0])
    if sd == 0.0:
        return 1.0 if mean >= k_remaining else 0.0
    return float(ndtr((mean - k_remaining) / sd))


def time_to_target_combined(params: CureModelParams,
                            centre_posteriors: Sequence[CentrePosterior],
                            new_centres: Sequence[NewCentrePlan],
                            atrisk_exposures, k_remaining: int,
                            delta: float = 0.10, grid_days: float = 1.0,
                            horizon_days: Optional[float] = None,
                            pg_prior: Optional[PGFit] = None
                            ) -> tuple[Milestone, CombinedPrediction]:
    """Days until the whole trial delivers k_remaining further events.

    Raises UnreachableTargetError when the model's infinite-horizon mean
    falls short of the target.
    """
    z = np.asarray(atrisk_exposures, dtype=float)
    if k_remaining <= 0:
        pred = combined_distribution(params, centre_posteriors, new_centres, z, 0.0,
                                     delta=delta, pg_prior=pg_prior)
        return Milestone(0.0, 0.0, 0.0, median_day=0.0), pred

    probe_table = (None if is_exponential_pair(params)
                   else make_table(params, horizon_days or 1024.0, z))
    ceiling = _asymptotic_total(params, centre_posteriors, new_centres, z,
                                pg_prior, probe_table)
    if ceiling < k_remaining:
        raise UnreachableTargetError(
            f"expected events cap out at {ceiling:.2f}; target of {k_remaining} "
            f"more is unreachable", ceiling)

    if horizon_days is not None:
        days = np.arange(0.0, horizon_days + grid_days, grid_days)
        pred = combined_curve(params, centre_posteriors, new_centres, z, days,
                              delta=delta, pg_prior=pg_prior, table=probe_table)
    else:
        horizon = 256.0
        while True:
            days = np.arange(0.0, horizon + grid_days, grid_days)
            table = (None if is_exponential_pair(params)
                     else make_table(params, float(days[-1]), z))
            pred = combined_curve(params, centre_posteriors, new_centres, z, days,
                                  delta=delta, pg_prior=pg_prior, table=table)
            lower, _ = pred.band()
            done = (first_crossing(days, pred.mean, k_remaining) < math.inf
                    and first_crossing(days, lower, k_remaining) < math.inf)
            if done or horizon >= _HORIZON_CAP_DAYS:
                break
            horizon = min(horizon * 2.0, _HORIZON_CAP_DAYS)

    lower, upper = pred.band()
    mean_day = first_crossing(pred.days, pred.mean, k_remaining)
    lower_day = first_crossing(pred.days, upper, k_remaining)
    upper_day = first_crossing(pred.days, lower, k_remaining)
    sd = pred.sd
    with np.errstate(divide="ignore", invalid="ignore"):
        hit = np.where(sd > 0, ndtr((pred.mean - k_remaining) / np.where(sd > 0, sd, 1.0)),
                       (pred.mean >= k_remaining).astype(float))
    median_day = first_crossing(pred.days, hit, 0.5)
    milestone = Milestone(mean_day=mean_day, lower_day=lower_day, upper_day=upper_day,
                          median_day=median_day,
                          asymptotic_mean=ceiling if math.isfinite(ceiling) else None)
    return milestone, pred
