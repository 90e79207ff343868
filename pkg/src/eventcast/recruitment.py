"""Gamma-mixed Poisson recruitment: empirical-Bayes fit and predictive counts.

Centre enrolment counts over their open windows estimate a gamma prior on
per-centre daily rates; per-centre posteriors then drive a predictive curve
for future enrolment, including centres that have not opened yet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, ndtri

from .domain import (CentreRecord, ForecastCurve, Milestone, NewCentrePlan,
                     UnreachableTargetError, ValidationError, first_crossing)

NELDER_MEAD_OPTIONS = {"xatol": 1e-8, "fatol": 1e-9, "maxiter": 5000, "maxfev": 10000}
_HORIZON_CAP_DAYS = 36525.0  # a century; past this the target counts as unreachable
_DEGENERATE_SHAPE = 1e-6


@dataclass(frozen=True)
class PGFit:
    """Fitted gamma prior over centre recruitment rates."""

    shape: float
    rate: float
    loglik: float
    converged: bool
    degenerate: bool = False  # no enrolments anywhere; prior pinned near zero

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate ** 2


@dataclass(frozen=True)
class CentrePosterior:
    """Gamma posterior for one centre's rate, plus its closure day if any."""

    centre_id: str
    shape: float
    rate: float
    closure_day: Optional[float] = None

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate ** 2


def pg_log_pmf(count, window_days, shape: float, rate: float):
    """Log pmf of enrolment over a window under the gamma-mixed Poisson."""
    k = np.asarray(count, dtype=float)
    t = np.asarray(window_days, dtype=float)
    if shape <= 0 or rate <= 0:
        raise ValueError("shape and rate must be > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (gammaln(shape + k) - gammaln(shape) - gammaln(k + 1.0)
               + k * np.log(t) + shape * math.log(rate)
               - (shape + k) * np.log(rate + t))
        out = np.where(t > 0, out, np.where(k == 0, 0.0, -np.inf))
    return out if out.ndim else float(out)


def pg_pmf(count, window_days, shape: float, rate: float):
    out = np.exp(pg_log_pmf(count, window_days, shape, rate))
    return out if np.ndim(out) else float(out)


def fit_pg(centres: Sequence[CentreRecord]) -> PGFit:
    """Marginal maximum likelihood for the gamma prior from centre counts."""
    usable = [c for c in centres if c.window_days > 0]
    if len(usable) < 2:
        raise ValidationError("need at least 2 centres with positive windows to fit")
    k = np.array([c.enrolled_count for c in usable], dtype=float)
    v = np.array([c.window_days for c in usable], dtype=float)
    if k.sum() == 0:
        # all-zero counts push the prior to a point mass at rate 0
        shape = _DEGENERATE_SHAPE
        rate = 1.0
        ll = float(np.sum(pg_log_pmf(k, v, shape, rate)))
        return PGFit(shape=shape, rate=rate, loglik=ll, converged=False, degenerate=True)

    rates = k / v
    m = float(rates.mean())
    excess = float(rates.var(ddof=1) - m * np.mean(1.0 / v))  # subtract Poisson noise
    shape0 = m * m / excess if excess > 0 else 4.0
    rate0 = shape0 / m

    def objective(theta):
        ll = float(np.sum(pg_log_pmf(k, v, math.exp(theta[0]), math.exp(theta[1]))))
        return -ll if math.isfinite(ll) else 1e300

    start = np.log([shape0, rate0])
    res = minimize(objective, start, method="Nelder-Mead", options=NELDER_MEAD_OPTIONS)
    res = minimize(objective, res.x, method="Nelder-Mead", options=NELDER_MEAD_OPTIONS)
    shape, rate = (math.exp(t) for t in res.x)
    return PGFit(shape=shape, rate=rate, loglik=-res.fun, converged=bool(res.success))


def posteriors(fit: PGFit, centres: Sequence[CentreRecord],
               closure_day: Optional[float] = None) -> list[CentrePosterior]:
    """Conjugate update per centre; ``closure_day`` overrides every record's own."""
    out = []
    for c in centres:
        b = closure_day if closure_day is not None else c.closure_day
        out.append(CentrePosterior(centre_id=c.centre_id,
                                   shape=fit.shape + c.enrolled_count,
                                   rate=fit.rate + c.window_days,
                                   closure_day=b))
    return out


def _new_centre_rate(plan: NewCentrePlan, pg_prior: Optional[PGFit]) -> float:
    if plan.rate is not None:
        return plan.rate
    if pg_prior is None:
        raise ValidationError("new-centre plan has no rate and no fitted prior to default to")
    return pg_prior.mean


def recruitment_mean_var(centre_posteriors: Sequence[CentrePosterior],
                         new_centres: Sequence[NewCentrePlan],
                         days: np.ndarray,
                         pg_prior: Optional[PGFit] = None
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of enrolment from the cut-off onward, per grid day.

    Active centres keep their posterior rate uncertainty; planned centres
    enter as known-rate Poisson streams.
    """
    days = np.asarray(days, dtype=float)
    mean = np.zeros_like(days)
    var = np.zeros_like(days)
    for p in centre_posteriors:
        b = math.inf if p.closure_day is None else p.closure_day
        d = np.minimum(days, b)
        mean += p.mean * d
        var += p.mean * d + p.variance * d * d
    for plan in new_centres:
        lam = _new_centre_rate(plan, pg_prior)
        b = math.inf if plan.closure_day is None else plan.closure_day
        d = np.clip(np.minimum(days, b) - plan.open_day, 0.0, None)
        mean += lam * d
        var += lam * d
    return mean, var


def _asymptotic_enrolment(centre_posteriors, new_centres, pg_prior) -> float:
    total = 0.0
    for p in centre_posteriors:
        if p.closure_day is None:
            if p.mean > 0:
                return math.inf
        else:
            total += p.mean * p.closure_day
    for plan in new_centres:
        lam = _new_centre_rate(plan, pg_prior)
        if plan.closure_day is None:
            if lam > 0:
                return math.inf
        else:
            total += lam * (plan.closure_day - plan.open_day)
    return total


@dataclass(frozen=True)
class RecruitmentForecast:
    curve: ForecastCurve
    milestone: Milestone


def predict_recruitment(centre_posteriors: Sequence[CentrePosterior],
                        new_centres: Sequence[NewCentrePlan] = (),
                        n_remaining: int = 0, delta: float = 0.10,
                        grid_days: float = 1.0,
                        horizon_days: Optional[float] = None,
                        pg_prior: Optional[PGFit] = None) -> RecruitmentForecast:
    """Predictive enrolment curve and the days the remaining target is hit.

    Raises UnreachableTargetError when the closure schedule caps expected
    enrolment below ``n_remaining``.
    """
    zq = float(ndtri(1.0 - delta / 2.0))

    def build(days):
        mean, var = recruitment_mean_var(centre_posteriors, new_centres, days, pg_prior)
        sd = np.sqrt(var)
        return mean, np.clip(mean - zq * sd, 0.0, None), mean + zq * sd

    if n_remaining <= 0:
        days = np.array([0.0])
        mean, lower, upper = build(days)
        curve = ForecastCurve(days=days, mean=mean, lower=lower, upper=upper,
                              confidence_level=1.0 - delta)
        return RecruitmentForecast(curve, Milestone(0.0, 0.0, 0.0, median_day=0.0))

    asymptote = _asymptotic_enrolment(centre_posteriors, new_centres, pg_prior)
    if asymptote < n_remaining:
        raise UnreachableTargetError(
            f"closure schedule caps expected enrolment at {asymptote:.2f}; "
            f"{n_remaining} more patients are needed", asymptote)

    finite_ends = [p.closure_day for p in centre_posteriors if p.closure_day is not None]
    finite_ends += [pl.closure_day for pl in new_centres if pl.closure_day is not None]
    plateau = max(finite_ends) + grid_days if finite_ends else math.inf

    if horizon_days is None:
        horizon_days = 64.0
        while True:
            days = np.arange(0.0, horizon_days + grid_days, grid_days)
            mean, lower, upper = build(days)
            done = (first_crossing(days, mean, n_remaining) < math.inf
                    and first_crossing(days, lower, n_remaining) < math.inf)
            if done or horizon_days >= min(plateau, _HORIZON_CAP_DAYS):
                break
            horizon_days = min(horizon_days * 2.0, min(plateau, _HORIZON_CAP_DAYS))
    else:
        days = np.arange(0.0, horizon_days + grid_days, grid_days)
        mean, lower, upper = build(days)

    curve = ForecastCurve(days=days, mean=mean, lower=lower, upper=upper,
                          confidence_level=1.0 - delta)
    milestone = Milestone(mean_day=first_crossing(days, mean, n_remaining),
                          lower_day=first_crossing(days, upper, n_remaining),
                          upper_day=first_crossing(days, lower, n_remaining),
                          asymptotic_mean=asymptote if math.isfinite(asymptote) else None)
    return RecruitmentForecast(curve, milestone)


@dataclass(frozen=True)
class ClosurePlan:
    """Closure day chosen so centres stop once the target is expected to be hit."""

    closure_day: float
    curve: ForecastCurve
    milestone: Milestone
    centre_posteriors: tuple[CentrePosterior, ...]
    new_centres: tuple[NewCentrePlan, ...]


def plan_closure(centre_posteriors: Sequence[CentrePosterior],
                 new_centres: Sequence[NewCentrePlan] = (),
                 n_remaining: int = 0, delta: float = 0.10, grid_days: float = 1.0,
                 pg_prior: Optional[PGFit] = None) -> ClosurePlan:
    """Close every open-ended centre at the predicted mean hit day.

    The milestone triple comes from the pre-closure process: closure happens
    at the realized hit time, so counts up to the hit are unaffected by it.
    One refinement pass then rebuilds the curve under the chosen schedule.
    """
    open_ended = predict_recruitment(centre_posteriors, new_centres, n_remaining,
                                     delta=delta, grid_days=grid_days,
                                     pg_prior=pg_prior)
    hit_day = open_ended.milestone.mean_day
    if not math.isfinite(hit_day):
        asym = open_ended.milestone.asymptotic_mean
        raise UnreachableTargetError(
            f"mean enrolment does not reach the target within {_HORIZON_CAP_DAYS:.0f} days",
            asym if asym is not None else math.inf)
    closed_posteriors = tuple(
        p if p.closure_day is not None else
        CentrePosterior(p.centre_id, p.shape, p.rate, closure_day=hit_day)
        for p in centre_posteriors)
    closed_new = tuple(
        pl if pl.closure_day is not None else
        NewCentrePlan(pl.open_day, _new_centre_rate(pl, pg_prior),
                      closure_day=max(hit_day, pl.open_day))
        for pl in new_centres)
    days = open_ended.curve.days
    mean, var = recruitment_mean_var(closed_posteriors, closed_new, days, pg_prior)
    sd = np.sqrt(var)
    zq = float(ndtri(1.0 - delta / 2.0))
    curve = ForecastCurve(days=days, mean=mean,
                          lower=np.clip(mean - zq * sd, 0.0, None),
                          upper=mean + zq * sd, confidence_level=1.0 - delta)
    return ClosurePlan(closure_day=hit_day, curve=curve,
                       milestone=open_ended.milestone,
                       centre_posteriors=closed_posteriors, new_centres=closed_new)
