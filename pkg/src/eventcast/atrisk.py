"""Event forecasts for patients already on study and still at risk.

Each at-risk patient contributes an independent Bernoulli event inside the
forecast window; the count is Poisson-binomial. Small cohorts get the exact
pmf by dynamic programming, large ones a moment-matched normal band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri

from .distributions import CureModelParams, log_survival, survival
from .domain import (ForecastCurve, Milestone, UnreachableTargetError,
                     first_crossing)
from .eventprob import (EventIntegralTable, event_density_integral,
                        is_exponential_pair)

EXACT_PMF_MAX = 1000   # O(n^2) pmf recursion cutoff
EXACT_GRID_MAX = 200   # per-grid-day exact quantile columns cutoff


def p_event_given_atrisk(params: CureModelParams, x, z, table: Optional[EventIntegralTable] = None):
    """P(endpoint within the next x days | at risk with exposure z).

    Conditioning on being at risk at z means no dropout and no endpoint yet;
    dropout before the endpoint still censors it afterwards.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    r = params.cure_prob
    if r >= 1.0:
        out = np.zeros(np.broadcast(x, z).shape)
        return out if out.ndim else 0.0
    if is_exponential_pair(params):
        mu_a, mu_l = params.event.rate, params.dropout.rate
        mu = mu_a + mu_l
        if mu == 0.0:
            out = np.zeros(np.broadcast(x, z).shape)
            return out if out.ndim else 0.0
        surv_event = np.exp(-mu_a * z)
        out = ((1.0 - r) * (mu_a / mu) * surv_event * -np.expm1(-mu * x)
               / (r + (1.0 - r) * surv_event))
        return out if out.ndim else float(out)
    mix = r + (1.0 - r) * np.asarray(survival(params.event, z))
    denom_log = np.asarray(log_survival(params.dropout, z))
    if table is not None:
        numer = np.maximum(table.cumulative(z + x) - table.cumulative(z), 0.0)
        out = (1.0 - r) * numer * np.exp(-denom_log) / mix
    else:
        if x.ndim or z.ndim:
            raise ValueError("array arguments need a precomputed table")
        numer = event_density_integral(params, float(z), float(z) + float(x))
        out = (1.0 - r) * numer * math.exp(-float(denom_log)) / float(mix)
    out = np.clip(out, 0.0, 1.0)
    return out if np.ndim(out) else float(out)


def make_table(params: CureModelParams, horizon: float,
               atrisk_exposures=()) -> Optional[EventIntegralTable]:
    """Shared integral table covering ``horizon`` days past every exposure.

    Exponential pairs need no table and get None.
    """
    if is_exponential_pair(params):
        return None
    z_max = float(np.max(atrisk_exposures)) if len(atrisk_exposures) else 0.0
    return EventIntegralTable(params, horizon=horizon + z_max + 1.0)


def poisson_binomial_pmf(probs) -> np.ndarray:
    """Exact pmf of a sum of independent Bernoullis, by convolution."""
    probs = np.asarray(probs, dtype=float)
    pmf = np.zeros(len(probs) + 1)
    pmf[0] = 1.0
    for j, p in enumerate(probs):
        pmf[1:j + 2] = pmf[1:j + 2] * (1.0 - p) + pmf[:j + 1] * p
        pmf[0] *= 1.0 - p
    return pmf


@dataclass(frozen=True)
class AtRiskPrediction:
    """Predictive distribution of extra events from the at-risk cohort by a horizon."""

    horizon_days: float
    probs: np.ndarray
    mean: float
    variance: float
    exact_pmf: Optional[np.ndarray] = None

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)


def atrisk_distribution(params: CureModelParams, atrisk_exposures, horizon_days: float,
                        exact_threshold: int = EXACT_PMF_MAX,
                        table: Optional[EventIntegralTable] = None) -> AtRiskPrediction:
    z = np.asarray(atrisk_exposures, dtype=float)
    if table is None and not is_exponential_pair(params) and len(z):
        table = make_table(params, horizon_days, z)
    probs = np.asarray(p_event_given_atrisk(params, np.full_like(z, horizon_days), z,
                                            table=table))
    mean = float(probs.sum())
    variance = float((probs * (1.0 - probs)).sum())
    exact = poisson_binomial_pmf(probs) if len(probs) <= exact_threshold else None
    return AtRiskPrediction(horizon_days=float(horizon_days), probs=probs,
                            mean=mean, variance=variance, exact_pmf=exact)


def quantiles_normal(prediction: AtRiskPrediction, delta: float = 0.10) -> tuple[float, float]:
    """Central normal band for the predicted count, clamped to [0, n]."""
    zq = float(ndtri(1.0 - delta / 2.0))
    sd = prediction.sd
    n = len(prediction.probs)
    lo = min(max(prediction.mean - zq * sd, 0.0), float(n))
    hi = min(max(prediction.mean + zq * sd, 0.0), float(n))
    return lo, hi


def probability_of_success(params: CureModelParams, atrisk_exposures,
                           horizon_days: float, k_remaining: int,
                           exact_threshold: int = EXACT_PMF_MAX) -> float:
    """P(at least k_remaining further events by the horizon)."""
    z = np.asarray(atrisk_exposures, dtype=float)
    if k_remaining <= 0:
        return 1.0
    if k_remaining > len(z):
        return 0.0
    pred = atrisk_distribution(params, z, horizon_days, exact_threshold=exact_threshold)
    if pred.exact_pmf is not None:
        return float(pred.exact_pmf[k_remaining:].sum())
    if pred.variance == 0.0:
        return 1.0 if pred.mean >= k_remaining else 0.0
    return float(ndtr((pred.mean - k_remaining) / pred.sd))


def asymptotic_event_ceiling(params: CureModelParams, atrisk_exposures,
                             table: Optional[EventIntegralTable] = None) -> float:
    """Expected events from the at-risk cohort with unlimited follow-up."""
    z = np.asarray(atrisk_exposures, dtype=float)
    if len(z) == 0:
        return 0.0
    r = params.cure_prob
    if r >= 1.0:
        return 0.0
    if is_exponential_pair(params):
        mu_a, mu_l = params.event.rate, params.dropout.rate
        mu = mu_a + mu_l
        if mu == 0.0:
            return 0.0
        surv_event = np.exp(-mu_a * z)
        probs = (1.0 - r) * (mu_a / mu) * surv_event / (r + (1.0 - r) * surv_event)
        return float(probs.sum())
    unlimited = event_density_integral(params, 0.0, math.inf)
    upto = table.cumulative(z) if table is not None else np.array(
        [event_density_integral(params, 0.0, float(zi)) for zi in z])
    mix = r + (1.0 - r) * np.asarray(survival(params.event, z))
    numer = np.maximum(unlimited - upto, 0.0)
    probs = np.clip((1.0 - r) * numer
                    * np.exp(-np.asarray(log_survival(params.dropout, z))) / mix,
                    0.0, 1.0)
    return float(probs.sum())


def _prob_matrix(params: CureModelParams, z: np.ndarray, days: np.ndarray,
                 table: Optional[EventIntegralTable]) -> np.ndarray:
    """Per-patient, per-day event probabilities (patients on rows)."""
    if len(z) == 0:
        return np.zeros((0, len(days)))
    return np.asarray(p_event_given_atrisk(params, days[None, :], z[:, None],
                                           table=table))


def forecast_curve(params: CureModelParams, atrisk_exposures, days: np.ndarray,
                   delta: float = 0.10, table: Optional[EventIntegralTable] = None,
                   exact_grid_max: int = EXACT_GRID_MAX) -> ForecastCurve:
    """Mean and central band of the at-risk event count over a day grid.

    Cohorts small enough also get exact Poisson-binomial quantile columns.
    """
    z = np.asarray(atrisk_exposures, dtype=float)
    days = np.asarray(days, dtype=float)
    if table is None and not is_exponential_pair(params) and len(z):
        table = make_table(params, float(days.max(initial=0.0)), z)
    if len(z) == 0:
        zero = np.zeros_like(days)
        return ForecastCurve(days=days, mean=zero, lower=zero, upper=zero,
                             confidence_level=1.0 - delta)
    probs = _prob_matrix(params, z, days, table)
    mean = probs.sum(axis=0)
    sd = np.sqrt((probs * (1.0 - probs)).sum(axis=0))
    zq = float(ndtri(1.0 - delta / 2.0))
    lower = np.clip(mean - zq * sd, 0.0, float(len(z)))
    upper = np.clip(mean + zq * sd, 0.0, float(len(z)))
    components = {}
    if len(z) <= exact_grid_max:
        exact_lo = np.empty_like(mean)
        exact_hi = np.empty_like(mean)
        for i in range(len(days)):
            cdf_vals = np.cumsum(poisson_binomial_pmf(probs[:, i]))
            exact_lo[i] = float(np.searchsorted(cdf_vals, delta / 2.0))
            exact_hi[i] = float(np.searchsorted(cdf_vals, 1.0 - delta / 2.0))
        components = {"exact_lower": exact_lo, "exact_upper": exact_hi}
    return ForecastCurve(days=days, mean=mean, lower=lower, upper=upper,
                         confidence_level=1.0 - delta, components=components)


def _hit_probability(probs_by_day: np.ndarray, k: int, exact: bool) -> np.ndarray:
    """P(count >= k) per grid day from the per-patient probability matrix."""
    n_days = probs_by_day.shape[1]
    out = np.empty(n_days)
    if exact:
        for i in range(n_days):
            pmf = poisson_binomial_pmf(probs_by_day[:, i])
            out[i] = pmf[k:].sum()
        return out
    mean = probs_by_day.sum(axis=0)
    var = (probs_by_day * (1.0 - probs_by_day)).sum(axis=0)
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        zscores = np.where(sd > 0, (mean - k) / np.where(sd > 0, sd, 1.0),
                           np.where(mean >= k, np.inf, -np.inf))
    return ndtr(zscores)


def time_to_target(params: CureModelParams, atrisk_exposures, k_remaining: int,
                   delta: float = 0.10, grid_days: float = 1.0,
                   horizon_days: Optional[float] = None,
                   table: Optional[EventIntegralTable] = None,
                   exact_grid_max: int = EXACT_GRID_MAX
                   ) -> tuple[Milestone, ForecastCurve]:
    """Days until k_remaining further at-risk events are expected.

    Raises UnreachableTargetError when even unlimited follow-up cannot
    deliver k_remaining events in expectation.
    """
    z = np.asarray(atrisk_exposures, dtype=float)
    if k_remaining <= 0:
        curve = forecast_curve(params, z, np.array([0.0]), delta=delta, table=table)
        return Milestone(0.0, 0.0, 0.0, median_day=0.0), curve
    if horizon_days is None:
        horizon_days = 20.0 * max(float(z.max(initial=0.0)), 30.0)
    if table is None and not is_exponential_pair(params) and len(z):
        table = make_table(params, horizon_days, z)
    ceiling = asymptotic_event_ceiling(params, z, table=table)
    if ceiling < k_remaining:
        raise UnreachableTargetError(
            f"at most {ceiling:.2f} further events expected from the at-risk cohort; "
            f"target of {k_remaining} is unreachable", ceiling)
    days = np.arange(0.0, horizon_days + grid_days, grid_days)
    curve = forecast_curve(params, z, days, delta=delta, table=table,
                           exact_grid_max=exact_grid_max)
    mean_day = first_crossing(days, curve.mean, k_remaining)
    lower_day = first_crossing(days, curve.upper, k_remaining)
    upper_day = first_crossing(days, curve.lower, k_remaining)
    probs = _prob_matrix(params, z, days, table)
    hit = _hit_probability(probs, k_remaining, exact=len(z) <= exact_grid_max)
    median_day = first_crossing(days, hit, 0.5)
    milestone = Milestone(mean_day=mean_day, lower_day=lower_day, upper_day=upper_day,
                          median_day=median_day, asymptotic_mean=ceiling)
    return milestone, curve
