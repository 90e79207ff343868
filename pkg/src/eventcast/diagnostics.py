"""Model criticism: Kaplan-Meier curves, survival overlays, model comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .distributions import CureModelSpec, FamilyKind, cure_survival
from .domain import Group, PatientRecord, TrialSnapshot, ValidationError
from .likelihood import (CureModelFit, InsufficientDataError, fit,
                         information_criteria)


@dataclass(frozen=True)
class KaplanMeierEstimate:
    """Product-limit survival with log(-log) confidence bands at event times."""

    times: np.ndarray
    survival: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_risk: np.ndarray
    n_events: np.ndarray
    confidence_level: float

    def survival_at(self, t) -> np.ndarray:
        """Right-continuous step lookup; 1.0 before the first event."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        padded = np.concatenate([[1.0], self.survival])
        out = padded[idx]
        return out if out.ndim else float(out)


def kaplan_meier(patients: Sequence[PatientRecord], confidence_level: float = 0.90,
                 endpoint: Group = Group.EVENT) -> KaplanMeierEstimate:
    """Kaplan-Meier estimate treating ``endpoint`` occurrences as events.

    Every other exposure is censoring. endpoint=Group.DROPOUT gives the
    time-to-dropout curve instead of time-to-endpoint.
    """
    if endpoint is Group.AT_RISK:
        raise ValidationError("endpoint must be EVENT or DROPOUT")
    if not patients:
        raise ValidationError("no patients")
    if not 0.0 < confidence_level < 1.0:
        raise ValidationError("confidence_level must be in (0, 1)")
    times = np.array([p.exposure_days for p in patients], dtype=float)
    observed = np.array([p.group is endpoint for p in patients], dtype=bool)
    if not observed.any():
        raise ValidationError(f"no {endpoint.value} occurrences to estimate from")

    event_times = np.unique(times[observed])
    d = np.array([np.sum(observed & (times == t)) for t in event_times], dtype=float)
    n = np.array([np.sum(times >= t) for t in event_times], dtype=float)
    surv = np.cumprod(1.0 - d / n)
    with np.errstate(divide="ignore"):
        greenwood = np.cumsum(np.where(n > d, d / (n * (n - d)), np.inf))

    zq = float(ndtri(0.5 + confidence_level / 2.0))
    lower = np.zeros_like(surv)
    upper = np.zeros_like(surv)
    for j, s in enumerate(surv):
        if 0.0 < s < 1.0 and math.isfinite(greenwood[j]):
            se = math.sqrt(greenwood[j]) / abs(math.log(s))
            lower[j] = s ** math.exp(zq * se)
            upper[j] = s ** math.exp(-zq * se)
        else:
            lower[j] = upper[j] = s
    return KaplanMeierEstimate(times=event_times, survival=surv, lower=lower,
                               upper=upper, n_risk=n, n_events=d,
                               confidence_level=confidence_level)


@dataclass(frozen=True)
class SurvivalOverlay:
    """Fitted cure-survival curves evaluated on the Kaplan-Meier time grid."""

    times: np.ndarray
    km_survival: np.ndarray
    km_lower: np.ndarray
    km_upper: np.ndarray
    model_curves: dict
    sup_distance: dict


def overlay(km: KaplanMeierEstimate, models: dict) -> SurvivalOverlay:
    """Evaluate each named parameter set against the step estimate.

    sup_distance is the largest gap between the model curve and either side
    of each Kaplan-Meier step.
    """
    step_after = km.survival
    step_before = np.concatenate([[1.0], km.survival[:-1]])
    curves, sups = {}, {}
    for name, params in models.items():
        vals = np.asarray(cure_survival(params, km.times))
        curves[name] = vals
        sups[name] = float(np.max(np.maximum(np.abs(vals - step_after),
                                             np.abs(vals - step_before))))
    return SurvivalOverlay(times=km.times, km_survival=km.survival,
                           km_lower=km.lower, km_upper=km.upper,
                           model_curves=curves, sup_distance=sups)


@dataclass(frozen=True)
class ModelRow:
    """One candidate model's fit and information criteria; error if it failed."""

    name: str
    spec: CureModelSpec
    with_cure: bool
    fit: Optional[CureModelFit]
    aic: float
    bic: float
    error: Optional[str] = None


def candidate_models() -> list[tuple[str, CureModelSpec, bool]]:
    exp, wei = FamilyKind.EXPONENTIAL, FamilyKind.WEIBULL
    return [
        ("exponential", CureModelSpec(exp, exp), False),
        ("exponential cure", CureModelSpec(exp, exp), True),
        ("weibull-event cure", CureModelSpec(wei, exp), True),
        ("weibull-dropout cure", CureModelSpec(exp, wei), True),
        ("weibull cure", CureModelSpec(wei, wei), True),
    ]


def model_table(snapshot: TrialSnapshot) -> list[ModelRow]:
    """Fit the candidate set and order it by AIC; failed fits sink to the end."""
    n = len(snapshot.patients)
    rows = []
    for name, spec, with_cure in candidate_models():
        try:
            fitted = fit(spec, snapshot, with_cure=with_cure)
        except InsufficientDataError as exc:
            rows.append(ModelRow(name=name, spec=spec, with_cure=with_cure,
                                 fit=None, aic=math.nan, bic=math.nan,
                                 error=str(exc)))
            continue
        aic, bic = information_criteria(fitted, n)
        rows.append(ModelRow(name=name, spec=spec, with_cure=with_cure,
                             fit=fitted, aic=aic, bic=bic))
    rows.sort(key=lambda r: (math.isnan(r.aic), r.aic))
    return rows
