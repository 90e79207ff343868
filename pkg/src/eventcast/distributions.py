"""Parametric time-to-event families and the cured-fraction model built on them.

All families expose density/survival in log space so likelihoods and deep
tails stay finite. The Weibull is parametrized by (shape, rateparam) with
survival exp(-rateparam * x**shape); the conventional scale is
rateparam**(-1/shape).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.special import expit, log_ndtr, ndtri

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# fitted cure fractions stay strictly below 1 so log(1 - r) is finite
CURE_PROB_CAP = 1.0 - 1e-8


class FamilyKind(Enum):
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"
    LOGNORMAL = "lognormal"

    @classmethod
    def parse(cls, name: str) -> "FamilyKind":
        key = str(name).strip().lower().replace("-", "").replace("_", "")
        aliases = {"exponential": cls.EXPONENTIAL, "exp": cls.EXPONENTIAL,
                   "weibull": cls.WEIBULL, "lognormal": cls.LOGNORMAL}
        if key not in aliases:
            raise ValueError(f"unknown family {name!r}; expected one of "
                             f"{sorted({k.value for k in cls})}")
        return aliases[key]

    @property
    def n_params(self) -> int:
        return 1 if self is FamilyKind.EXPONENTIAL else 2


@dataclass(frozen=True)
class Exponential:
    """Constant-hazard family. rate 0 is the degenerate 'never occurs' case."""

    rate: float

    def __post_init__(self):
        if not math.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"rate must be finite and >= 0, got {self.rate}")


@dataclass(frozen=True)
class Weibull:
    shape: float
    rateparam: float

    def __post_init__(self):
        if not (math.isfinite(self.shape) and self.shape > 0):
            raise ValueError(f"shape must be finite and > 0, got {self.shape}")
        if not (math.isfinite(self.rateparam) and self.rateparam > 0):
            raise ValueError(f"rateparam must be finite and > 0, got {self.rateparam}")

    @property
    def scale(self) -> float:
        return self.rateparam ** (-1.0 / self.shape)

    @classmethod
    def from_shape_scale(cls, shape: float, scale: float) -> "Weibull":
        return cls(shape=shape, rateparam=scale ** (-shape))


@dataclass(frozen=True)
class LogNormal:
    meanlog: float
    sdlog: float

    def __post_init__(self):
        if not math.isfinite(self.meanlog):
            raise ValueError(f"meanlog must be finite, got {self.meanlog}")
        if not (math.isfinite(self.sdlog) and self.sdlog > 0):
            raise ValueError(f"sdlog must be finite and > 0, got {self.sdlog}")


Family = Union[Exponential, Weibull, LogNormal]


def kind_of(family: Family) -> FamilyKind:
    if isinstance(family, Exponential):
        return FamilyKind.EXPONENTIAL
    if isinstance(family, Weibull):
        return FamilyKind.WEIBULL
    if isinstance(family, LogNormal):
        return FamilyKind.LOGNORMAL
    raise TypeError(f"not a family: {family!r}")


def log_survival(family: Family, x):
    x = np.asarray(x, dtype=float)
    if isinstance(family, Exponential):
        out = -family.rate * x
    elif isinstance(family, Weibull):
        out = -family.rateparam * np.power(x, family.shape)
    else:
        with np.errstate(divide="ignore"):
            lx = np.log(x)
        out = np.where(x > 0, log_ndtr(-(lx - family.meanlog) / family.sdlog), 0.0)
    return out if out.ndim else float(out)


def survival(family: Family, x):
    out = np.exp(log_survival(family, np.asarray(x, dtype=float)))
    return out if np.ndim(out) else float(out)


def cdf(family: Family, x):
    out = -np.expm1(log_survival(family, np.asarray(x, dtype=float)))
    return out if np.ndim(out) else float(out)


def log_pdf(family: Family, x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if isinstance(family, Exponential):
            if family.rate == 0.0:
                out = np.full_like(x, -np.inf)
            else:
                out = math.log(family.rate) - family.rate * x
        elif isinstance(family, Weibull):
            a, g = family.shape, family.rateparam
            if a == 1.0:
                out = math.log(g) - g * x
            else:
                out = (math.log(a) + math.log(g) + (a - 1.0) * np.log(x)
                       - g * np.power(x, a))
                out = np.where(x > 0, out, -np.inf if a > 1.0 else np.inf)
        else:
            m, s = family.meanlog, family.sdlog
            lx = np.log(x)
            zscore = (lx - m) / s
            out = -lx - math.log(s) - _LOG_SQRT_2PI - 0.5 * zscore * zscore
            out = np.where(x > 0, out, -np.inf)
    return out if out.ndim else float(out)


def pdf(family: Family, x):
    out = np.exp(log_pdf(family, np.asarray(x, dtype=float)))
    return out if np.ndim(out) else float(out)


def inverse_survival(family: Family, u):
    """x with S(x) = u, for u in (0, 1]."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u > 1)):
        raise ValueError("u must lie in (0, 1]")
    with np.errstate(divide="ignore"):
        if isinstance(family, Exponential):
            out = np.full_like(u, np.inf) if family.rate == 0.0 else -np.log(u) / family.rate
        elif isinstance(family, Weibull):
            out = np.power(-np.log(u) / family.rateparam, 1.0 / family.shape)
        else:
            out = np.exp(family.meanlog - family.sdlog * ndtri(u))
    return out if out.ndim else float(out)


def sample(family: Family, rng: np.random.Generator, size=None):
    """Draw by inverting the survival function on a uniform in (0, 1]."""
    u = 1.0 - rng.random(size)
    return inverse_survival(family, u)


@dataclass(frozen=True)
class CureModelSpec:
    """Which family models the endpoint and which models dropout."""

    event: FamilyKind
    dropout: Optional[FamilyKind] = FamilyKind.EXPONENTIAL

    @property
    def n_params(self) -> int:
        n = self.event.n_params
        if self.dropout is not None:
            n += self.dropout.n_params
        return n


@dataclass(frozen=True)
class CureModelParams:
    """Endpoint and dropout time families plus the cured fraction.

    A cured patient never has the endpoint; dropout can still occur. The two
    latent times are independent.
    """

    event: Family
    dropout: Family
    cure_prob: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.cure_prob <= 1.0):
            raise ValueError(f"cure_prob must be in [0, 1], got {self.cure_prob}")

    @property
    def spec(self) -> CureModelSpec:
        return CureModelSpec(event=kind_of(self.event), dropout=kind_of(self.dropout))


def cure_survival(params: CureModelParams, x):
    """P(no endpoint by x) = cure_prob + (1 - cure_prob) * S_event(x)."""
    r = params.cure_prob
    out = r + (1.0 - r) * np.asarray(survival(params.event, x))
    return out if np.ndim(out) else float(out)


def sample_cure(params: CureModelParams, rng: np.random.Generator):
    """One patient draw: (cured, event_time or None, dropout_time)."""
    cured = rng.random() < params.cure_prob
    event_time = None if cured else sample(params.event, rng)
    dropout_time = sample(params.dropout, rng)
    return cured, event_time, dropout_time


# --- unconstrained parameter vectors for the optimizer ---------------------

def family_to_theta(family: Family) -> list[float]:
    if isinstance(family, Exponential):
        if family.rate <= 0:
            raise ValueError("cannot transform a zero rate to log scale")
        return [math.log(family.rate)]
    if isinstance(family, Weibull):
        return [math.log(family.shape), math.log(family.rateparam)]
    return [family.meanlog, math.log(family.sdlog)]


def family_from_theta(kind: FamilyKind, theta) -> Family:
    theta = list(theta)
    if kind is FamilyKind.EXPONENTIAL:
        return Exponential(rate=math.exp(theta[0]))
    if kind is FamilyKind.WEIBULL:
        return Weibull(shape=math.exp(theta[0]), rateparam=math.exp(theta[1]))
    return LogNormal(meanlog=theta[0], sdlog=math.exp(theta[1]))


def cure_prob_to_theta(r: float) -> float:
    if not 0.0 < r < 1.0:
        raise ValueError(f"cure_prob must be in (0, 1) to transform, got {r}")
    return math.log(r / (1.0 - r))


def cure_prob_from_theta(theta: float) -> float:
    return min(float(expit(theta)), CURE_PROB_CAP)


def params_to_vector(params: CureModelParams, with_cure: bool = True,
                     include_dropout: bool = True) -> np.ndarray:
    vec = family_to_theta(params.event)
    if include_dropout:
        vec += family_to_theta(params.dropout)
    if with_cure:
        vec.append(cure_prob_to_theta(params.cure_prob))
    return np.array(vec, dtype=float)


def params_from_vector(spec: CureModelSpec, vector, with_cure: bool = True,
                       include_dropout: bool = True) -> CureModelParams:
    vector = np.asarray(vector, dtype=float)
    i = spec.event.n_params
    event = family_from_theta(spec.event, vector[:i])
    if include_dropout:
        dropout = family_from_theta(spec.dropout, vector[i:i + spec.dropout.n_params])
        i += spec.dropout.n_params
    else:
        dropout = Exponential(rate=0.0)
    cure_prob = cure_prob_from_theta(vector[i]) if with_cure else 0.0
    return CureModelParams(event=event, dropout=dropout, cure_prob=cure_prob)


def describe_family(family: Family) -> dict:
    """Natural-scale parameters keyed for reports."""
    if isinstance(family, Exponential):
        return {"family": "exponential", "rate": family.rate}
    if isinstance(family, Weibull):
        return {"family": "weibull", "shape": family.shape,
                "scale": family.scale, "rateparam": family.rateparam}
    return {"family": "lognormal", "meanlog": family.meanlog, "sdlog": family.sdlog}
