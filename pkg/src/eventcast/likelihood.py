"""Maximum likelihood for the cured-fraction event/dropout model.

Fitting runs Nelder-Mead on unconstrained transforms (log for positive
parameters, logit for the cured fraction), restarted over a grid of cure
starting values, and keeps the best restart by log-likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .distributions import (CureModelParams, CureModelSpec, Exponential, Family,
                            FamilyKind, LogNormal, Weibull, cure_prob_to_theta,
                            family_to_theta, log_pdf, log_survival,
                            params_from_vector)
from .domain import TrialSnapshot, grouped_exposures

DEFAULT_RESTART_CURE_PROBS = (0.1, 0.3, 0.5, 0.7, 0.9)
NELDER_MEAD_OPTIONS = {"xatol": 1e-8, "fatol": 1e-9, "maxiter": 5000, "maxfev": 10000}
_LOGLIK_TIE_TOL = 1e-9
_OBJECTIVE_PENALTY = 1e300  # stands in for +inf so the simplex stays numeric


class InsufficientDataError(ValueError):
    """The snapshot cannot identify the requested model."""


def _log_cure_survival(event: Family, cure_prob: float, t: np.ndarray) -> np.ndarray:
    ls = log_survival(event, t)
    if cure_prob == 0.0:
        return np.asarray(ls, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(cure_prob + (1.0 - cure_prob) * np.exp(ls))


def loglik_general(params: CureModelParams, event_exposures, atrisk_exposures,
                   dropout_exposures) -> float:
    """Log-likelihood of grouped interim data under any family pair.

    Log of a zero density or survival contributes -inf; no exception is
    raised, so optimizers can step back out of degenerate corners.
    """
    x = np.asarray(event_exposures, dtype=float)
    z = np.asarray(atrisk_exposures, dtype=float)
    y = np.asarray(dropout_exposures, dtype=float)
    r = params.cure_prob
    total = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        if len(x):
            if r >= 1.0:
                return -math.inf
            total += len(x) * math.log1p(-r)
            total += float(np.sum(log_pdf(params.event, x)))
            total += float(np.sum(log_survival(params.dropout, x)))
        if len(z):
            total += float(np.sum(log_survival(params.dropout, z)))
            total += float(np.sum(_log_cure_survival(params.event, r, z)))
        if len(y):
            total += float(np.sum(log_pdf(params.dropout, y)))
            total += float(np.sum(_log_cure_survival(params.event, r, y)))
    if math.isnan(total):  # -inf and +inf met; treat as impossible
        return -math.inf
    return total


def loglik_exponential(event_rate: float, dropout_rate: float, cure_prob: float,
                       event_exposures, atrisk_exposures, dropout_exposures) -> float:
    """Closed-form log-likelihood for the exponential/exponential pair."""
    x = np.asarray(event_exposures, dtype=float)
    z = np.asarray(atrisk_exposures, dtype=float)
    y = np.asarray(dropout_exposures, dtype=float)
    n_events, n_dropouts = len(x), len(y)
    total_exposure = float(x.sum() + z.sum() + y.sum())
    r = cure_prob
    def log_mix(t):
        if r == 0.0:
            return -event_rate * t
        return np.log(r + (1.0 - r) * np.exp(-event_rate * t))

    total = -event_rate * float(x.sum()) - dropout_rate * total_exposure
    with np.errstate(divide="ignore"):
        if n_events:
            if r >= 1.0 or event_rate <= 0.0:
                return -math.inf
            total += n_events * (math.log1p(-r) + math.log(event_rate))
        if n_dropouts:
            if dropout_rate <= 0.0:
                return -math.inf
            total += n_dropouts * math.log(dropout_rate)
        if len(z):
            total += float(np.sum(log_mix(z)))
        if n_dropouts:
            total += float(np.sum(log_mix(y)))
    if math.isnan(total):
        return -math.inf
    return total


def profiled_dropout_rate(event_exposures, atrisk_exposures, dropout_exposures) -> float:
    """Exponential dropout rate maximizing the likelihood: dropouts per unit exposure."""
    x = np.asarray(event_exposures, dtype=float)
    z = np.asarray(atrisk_exposures, dtype=float)
    y = np.asarray(dropout_exposures, dtype=float)
    total_exposure = float(x.sum() + z.sum() + y.sum())
    if total_exposure <= 0.0:
        raise InsufficientDataError("total exposure is zero; dropout rate undefined")
    return len(y) / total_exposure


def loglik_exponential_profiled(event_rate: float, cure_prob: float,
                                event_exposures, atrisk_exposures,
                                dropout_exposures) -> float:
    """Exponential closed form with the dropout rate profiled out."""
    dropout_rate = profiled_dropout_rate(event_exposures, atrisk_exposures,
                                         dropout_exposures)
    if dropout_rate == 0.0:
        # no dropouts: the dropout factor drops from the likelihood entirely
        return loglik_exponential(event_rate, 0.0, cure_prob, event_exposures,
                                  atrisk_exposures, dropout_exposures)
    return loglik_exponential(event_rate, dropout_rate, cure_prob, event_exposures,
                              atrisk_exposures, dropout_exposures)


@dataclass(frozen=True)
class CureModelFit:
    """A fitted model with its optimizer provenance."""

    params: CureModelParams
    spec: CureModelSpec
    with_cure: bool
    dropout_modelled: bool
    loglik: float
    n_params: int
    converged: bool
    n_restarts_used: int


def _initial_family(kind: FamilyKind, n: int, total_exposure: float) -> Family:
    # crude rate: observed count over total exposure; time scale from its inverse
    rate = max(n, 1) / total_exposure
    if kind is FamilyKind.EXPONENTIAL:
        return Exponential(rate=rate)
    if kind is FamilyKind.WEIBULL:
        return Weibull(shape=1.0, rateparam=rate)
    return LogNormal(meanlog=math.log(1.0 / rate), sdlog=1.0)


def fit_grouped(spec: CureModelSpec, event_exposures, atrisk_exposures,
                dropout_exposures, with_cure: bool = True,
                restart_cure_probs=DEFAULT_RESTART_CURE_PROBS) -> CureModelFit:
    x = np.asarray(event_exposures, dtype=float)
    z = np.asarray(atrisk_exposures, dtype=float)
    y = np.asarray(dropout_exposures, dtype=float)
    if len(x) == 0:
        raise InsufficientDataError("no events observed; event-time model is unidentifiable")
    total_exposure = float(x.sum() + z.sum() + y.sum())
    if total_exposure <= 0.0:
        raise InsufficientDataError("total exposure is zero")
    include_dropout = len(y) > 0

    base = family_to_theta(_initial_family(spec.event, len(x), total_exposure))
    if include_dropout:
        base = base + family_to_theta(_initial_family(spec.dropout, len(y), total_exposure))

    def objective(vec):
        params = params_from_vector(spec, vec, with_cure=with_cure,
                                    include_dropout=include_dropout)
        ll = loglik_general(params, x, z, y)
        return -ll if math.isfinite(ll) else _OBJECTIVE_PENALTY

    starts = []
    if with_cure:
        for r0 in restart_cure_probs:
            starts.append(np.array(base + [cure_prob_to_theta(r0)], dtype=float))
    else:
        starts.append(np.array(base, dtype=float))

    candidates = []
    for start in starts:
        res = minimize(objective, start, method="Nelder-Mead",
                       options=NELDER_MEAD_OPTIONS)
        res = minimize(objective, res.x, method="Nelder-Mead",
                       options=NELDER_MEAD_OPTIONS)  # polish from the optimum
        params = params_from_vector(spec, res.x, with_cure=with_cure,
                                    include_dropout=include_dropout)
        candidates.append((loglik_general(params, x, z, y), params, bool(res.success)))

    best_ll = max(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] >= best_ll - _LOGLIK_TIE_TOL]
    loglik, params, success = min(tied, key=lambda c: c[1].cure_prob)

    n_params = spec.event.n_params
    if include_dropout:
        n_params += spec.dropout.n_params
    if with_cure:
        n_params += 1
    return CureModelFit(params=params, spec=spec, with_cure=with_cure,
                        dropout_modelled=include_dropout, loglik=loglik,
                        n_params=n_params, converged=success,
                        n_restarts_used=len(starts))


def fit(spec: CureModelSpec, snapshot: TrialSnapshot,
        with_cure: bool = True) -> CureModelFit:
    """Fit the model to a snapshot's grouped exposures."""
    x, z, y = grouped_exposures(snapshot)
    return fit_grouped(spec, x, z, y, with_cure=with_cure)


def information_criteria(fit_result: CureModelFit, n_observations: int) -> tuple[float, float]:
    """(AIC, BIC) for a fitted model over ``n_observations`` patients."""
    k, ll = fit_result.n_params, fit_result.loglik
    aic = 2.0 * k - 2.0 * ll
    bic = k * math.log(n_observations) - 2.0 * ll
    return aic, bic
