"""Core trial data model: patient groups, centre records, snapshots, forecast curves."""

from __future__ import annotations

import datetime as _dt
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

EXPOSURE_DAY_SLACK = 1.0  # admin-censoring dates may round a day past the cut-off


class ValidationError(ValueError):
    """Input rows or snapshot fields violate the schema."""


class UnreachableTargetError(RuntimeError):
    """The forecast target exceeds what the fitted model can ever deliver.

    Carries ``asymptotic_mean``, the expected count in the infinite-horizon
    limit, so callers can report how far short the trial falls.
    """

    def __init__(self, message: str, asymptotic_mean: float):
        super().__init__(message)
        self.asymptotic_mean = float(asymptotic_mean)


class Group(Enum):
    """Patient status at the analysis cut-off."""

    EVENT = "event"        # endpoint observed during follow-up
    AT_RISK = "at_risk"    # still on study, endpoint not yet observed
    DROPOUT = "dropout"    # left the study before the endpoint


@dataclass(frozen=True)
class PatientRecord:
    """One patient's contribution to the interim data set.

    ``exposure_days`` is time from randomisation to the event, to dropout, or
    to the cut-off, depending on ``group``. ``randomisation_day`` is measured
    from the earliest randomisation in the data set.
    """

    exposure_days: float
    group: Group
    randomisation_day: float = 0.0

    def __post_init__(self):
        if not isinstance(self.group, Group):
            raise ValidationError(f"group must be a Group member, got {self.group!r}")
        object.__setattr__(self, "exposure_days", float(self.exposure_days))
        object.__setattr__(self, "randomisation_day", float(self.randomisation_day))
        if not math.isfinite(self.exposure_days) or self.exposure_days < 0:
            raise ValidationError(f"exposure_days must be finite and >= 0, got {self.exposure_days}")
        if not math.isfinite(self.randomisation_day) or self.randomisation_day < 0:
            raise ValidationError(f"randomisation_day must be finite and >= 0, got {self.randomisation_day}")


@dataclass(frozen=True)
class CentreRecord:
    """An initiated centre: patients enrolled so far over an open window of days."""

    centre_id: str
    enrolled_count: int
    window_days: float
    closure_day: Optional[float] = None  # forecast-time day the centre stops recruiting

    def __post_init__(self):
        if self.enrolled_count < 0:
            raise ValidationError(f"centre {self.centre_id}: enrolled_count must be >= 0")
        if not math.isfinite(self.window_days) or self.window_days <= 0:
            raise ValidationError(f"centre {self.centre_id}: window_days must be finite and > 0")
        if self.closure_day is not None and self.closure_day < 0:
            raise ValidationError(f"centre {self.centre_id}: closure_day must be >= 0")


@dataclass(frozen=True)
class NewCentrePlan:
    """A centre not yet open: starts at ``open_day`` (forecast time) with a known rate."""

    open_day: float
    rate: Optional[float] = None  # patients/day; None = use the fitted prior mean
    closure_day: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.open_day) or self.open_day < 0:
            raise ValidationError(f"open_day must be finite and >= 0, got {self.open_day}")
        if self.rate is not None and (not math.isfinite(self.rate) or self.rate < 0):
            raise ValidationError(f"rate must be finite and >= 0, got {self.rate}")
        if self.closure_day is not None and self.closure_day < self.open_day:
            raise ValidationError("closure_day must be >= open_day")


def classify(exposure_days: float, censor_flag: int, drop_out_flag: int,
             randomisation_day: float = 0.0) -> PatientRecord:
    """Map raw status flags to a patient group.

    ``censor_flag`` 0 means the endpoint was observed. Censored patients with
    ``drop_out_flag`` 1 left the study early; otherwise they are still at risk.
    """
    if censor_flag not in (0, 1):
        raise ValidationError(f"censor flag must be 0 or 1, got {censor_flag!r}")
    if drop_out_flag not in (0, 1):
        raise ValidationError(f"drop-out flag must be 0 or 1, got {drop_out_flag!r}")
    if censor_flag == 0:
        group = Group.EVENT
    elif drop_out_flag == 1:
        group = Group.DROPOUT
    else:
        group = Group.AT_RISK
    return PatientRecord(exposure_days=float(exposure_days), group=group,
                         randomisation_day=float(randomisation_day))


def patients_from_rows(rows: Iterable[tuple]) -> list[PatientRecord]:
    """Build patient records from (exposure_days, censor, drop_out, randomisation_date) rows.

    Dates are ISO strings; they convert to day offsets from the earliest date
    in the input. Bad rows raise ValidationError naming the offending row.
    """
    parsed = []
    for i, row in enumerate(rows):
        try:
            exposure, censor, drop, date_str = row
        except ValueError as exc:
            raise ValidationError(f"row {i}: expected 4 fields, got {row!r}") from exc
        try:
            date = _dt.date.fromisoformat(str(date_str).strip())
        except ValueError as exc:
            raise ValidationError(f"row {i}: unparsable randomisation date {date_str!r}") from exc
        try:
            exposure = float(exposure)
            censor = int(censor)
            drop = int(drop)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"row {i}: non-numeric field in {row!r}") from exc
        parsed.append((i, exposure, censor, drop, date))
    if not parsed:
        return []
    origin = min(p[4] for p in parsed)
    records = []
    for i, exposure, censor, drop, date in parsed:
        day = float((date - origin).days)
        try:
            records.append(classify(exposure, censor, drop, randomisation_day=day))
        except ValidationError as exc:
            raise ValidationError(f"row {i}: {exc}") from exc
    return records


@dataclass(frozen=True)
class TrialSnapshot:
    """Everything known at the analysis cut-off, plus the forecasting targets."""

    patients: tuple[PatientRecord, ...]
    centres: tuple[CentreRecord, ...] = ()
    new_centres: tuple[NewCentrePlan, ...] = ()
    cutoff_day: float = 0.0
    target_events: int = 1
    sample_size: int = 1
    confidence_level: float = 0.90

    def __post_init__(self):
        object.__setattr__(self, "patients", tuple(self.patients))
        object.__setattr__(self, "centres", tuple(self.centres))
        object.__setattr__(self, "new_centres", tuple(self.new_centres))
        if not math.isfinite(self.cutoff_day) or self.cutoff_day < 0:
            raise ValidationError(f"cutoff_day must be finite and >= 0, got {self.cutoff_day}")
        if self.target_events < 1:
            raise ValidationError(f"target_events must be >= 1, got {self.target_events}")
        if self.sample_size < 1:
            raise ValidationError(f"sample_size must be >= 1, got {self.sample_size}")
        if not 0.0 < self.confidence_level < 1.0:
            raise ValidationError(f"confidence_level must be in (0, 1), got {self.confidence_level}")
        for k, p in enumerate(self.patients):
            if p.randomisation_day + p.exposure_days > self.cutoff_day + EXPOSURE_DAY_SLACK:
                raise ValidationError(
                    f"patient {k}: randomisation_day + exposure_days "
                    f"({p.randomisation_day + p.exposure_days:.3f}) exceeds cutoff_day "
                    f"({self.cutoff_day:.3f})")
        if self.centres:
            enrolled = sum(c.enrolled_count for c in self.centres)
            if enrolled != len(self.patients):
                warnings.warn(
                    f"centre enrolled counts sum to {enrolled} but there are "
                    f"{len(self.patients)} patient rows", stacklevel=2)

    @property
    def n_events(self) -> int:
        return sum(1 for p in self.patients if p.group is Group.EVENT)

    @property
    def n_at_risk(self) -> int:
        return sum(1 for p in self.patients if p.group is Group.AT_RISK)

    @property
    def n_dropouts(self) -> int:
        return sum(1 for p in self.patients if p.group is Group.DROPOUT)

    def exposures(self, group: Group) -> np.ndarray:
        return np.array([p.exposure_days for p in self.patients if p.group is group], dtype=float)

    @property
    def remaining_events(self) -> int:
        return max(self.target_events - self.n_events, 0)

    @property
    def remaining_patients(self) -> int:
        return max(self.sample_size - len(self.patients), 0)


@dataclass(frozen=True)
class GroupSummary:
    """Group counts and exposure totals for an interim data set."""

    n_events: int
    n_at_risk: int
    n_dropouts: int
    event_exposure_total: float
    total_exposure: float

    @property
    def n_patients(self) -> int:
        return self.n_events + self.n_at_risk + self.n_dropouts


def summarize(snapshot: TrialSnapshot) -> GroupSummary:
    x = snapshot.exposures(Group.EVENT)
    z = snapshot.exposures(Group.AT_RISK)
    y = snapshot.exposures(Group.DROPOUT)
    return GroupSummary(
        n_events=len(x), n_at_risk=len(z), n_dropouts=len(y),
        event_exposure_total=float(x.sum()),
        total_exposure=float(x.sum() + z.sum() + y.sum()),
    )


def grouped_exposures(snapshot: TrialSnapshot) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exposure arrays in (event, at-risk, dropout) order."""
    return (snapshot.exposures(Group.EVENT),
            snapshot.exposures(Group.AT_RISK),
            snapshot.exposures(Group.DROPOUT))


@dataclass(frozen=True)
class ForecastCurve:
    """A predictive count over a day grid with central band bounds.

    Days are measured from the analysis cut-off. ``components`` holds named
    extra columns (for example the split between on-study and future patients).
    """

    days: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    confidence_level: float = 0.90
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.days)
        for name in ("mean", "lower", "upper"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"curve column {name} has length mismatch")
        for name, col in self.components.items():
            if len(col) != n:
                raise ValidationError(f"curve component {name!r} has length mismatch")

    def header(self) -> list[str]:
        return ["day", "mean", "lower", "upper", *self.components.keys()]

    def rows(self) -> Iterable[list[float]]:
        cols = [self.days, self.mean, self.lower, self.upper, *self.components.values()]
        for i in range(len(self.days)):
            yield [float(c[i]) for c in cols]

    def at(self, day: float) -> dict:
        """Values at the grid point closest to ``day``."""
        i = int(np.argmin(np.abs(self.days - day)))
        out = {"day": float(self.days[i]), "mean": float(self.mean[i]),
               "lower": float(self.lower[i]), "upper": float(self.upper[i])}
        for name, col in self.components.items():
            out[name] = float(col[i])
        return out


@dataclass(frozen=True)
class Milestone:
    """Days (from the cut-off) at which a count target is predicted to be hit.

    ``mean_day`` inverts the mean curve; ``lower_day``/``upper_day`` invert the
    optimistic/pessimistic band edges; ``median_day`` inverts the predictive
    hit-probability curve at 1/2 when available. ``math.inf`` marks a crossing
    that never happens inside the forecast horizon.
    """

    mean_day: float
    lower_day: float
    upper_day: float
    median_day: Optional[float] = None
    asymptotic_mean: Optional[float] = None


def first_crossing(days: np.ndarray, values: np.ndarray, level: float) -> float:
    """First grid day where ``values`` reaches ``level``; inf when it never does."""
    hits = np.nonzero(np.asarray(values) >= level)[0]
    if hits.size == 0:
        return math.inf
    return float(days[hits[0]])
