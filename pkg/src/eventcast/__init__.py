"""Event-count and recruitment forecasting for event-driven clinical trials."""

from .distributions import (CureModelParams, CureModelSpec, Exponential,
                            FamilyKind, LogNormal, Weibull, cure_survival)
from .domain import (CentreRecord, ForecastCurve, Group, Milestone,
                     NewCentrePlan, PatientRecord, TrialSnapshot,
                     UnreachableTargetError, ValidationError, classify,
                     summarize)
from .likelihood import (CureModelFit, InsufficientDataError, fit,
                         information_criteria, loglik_general)
from .recruitment import CentrePosterior, PGFit, fit_pg, posteriors

__version__ = "0.1.0"

__all__ = [
    "CentrePosterior", "CentreRecord", "CureModelFit", "CureModelParams",
    "CureModelSpec", "Exponential", "FamilyKind", "ForecastCurve", "Group",
    "InsufficientDataError", "LogNormal", "Milestone", "NewCentrePlan",
    "PGFit", "PatientRecord", "TrialSnapshot", "UnreachableTargetError",
    "ValidationError", "Weibull", "classify", "cure_survival", "fit",
    "fit_pg", "information_criteria", "loglik_general", "posteriors",
    "summarize",
]
