"""Command-line entry points: fit interim data, forecast, write the report bundle.

``eventcast forecast`` reads the interim CSVs, fits the configured model plus
the comparison set, and writes delimited output, JSON summaries, and figures
into one directory. ``eventcast simulate`` runs truth-recovery replications.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import atrisk, combined, diagnostics, likelihood, plots, recruitment
from .distributions import (CureModelParams, CureModelSpec, Exponential,
                            FamilyKind, LogNormal, Weibull, describe_family)
from .domain import (CentreRecord, Group, NewCentrePlan, PatientRecord,
                     TrialSnapshot, UnreachableTargetError, ValidationError,
                     patients_from_rows)
from .simulate import SimConfig, recovery_study

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_UNREACHABLE = 4

EVENTS_COLUMNS = ("exposure_days", "censor", "drop_out", "randomisation_date")
CENTRES_COLUMNS = ("centre_id", "enrolled", "window_days")
NEW_CENTRES_COLUMNS = ("open_day",)


@dataclass
class RunConfig:
    """Everything the forecast command needs, resolvable from flags or JSON."""

    events_csv: str
    out_dir: str = "eventcast_out"
    centres_csv: Optional[str] = None
    new_centres_csv: Optional[str] = None
    target_events: int = 1
    sample_size: Optional[int] = None
    cutoff_day: Optional[float] = None
    confidence_level: float = 0.90
    event_family: str = "exponential"
    dropout_family: str = "exponential"
    with_cure: bool = True
    planned_days: Optional[float] = None
    grid_days: float = 1.0
    horizon_days: Optional[float] = None
    write_plots: bool = True


def _check_header(fieldnames, required, path, optional=()):
    missing = [c for c in required if c not in (fieldnames or [])]
    if missing:
        raise ValidationError(f"{path}: missing required columns {missing}")
    known = set(required) | set(optional)
    extras = [c for c in fieldnames if c not in known]
    if extras:
        warnings.warn(f"{path}: ignoring unknown columns {extras}", stacklevel=2)


def read_events_csv(path) -> list[PatientRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, EVENTS_COLUMNS, path)
        rows = [(row["exposure_days"], row["censor"], row["drop_out"],
                 row["randomisation_date"]) for row in reader]
    if not rows:
        raise ValidationError(f"{path}: no patient rows")
    return patients_from_rows(rows)


def read_centres_csv(path) -> list[CentreRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, CENTRES_COLUMNS, path,
                      optional=("closure_day",))
        for i, row in enumerate(reader):
            try:
                closure = row.get("closure_day", "")
                out.append(CentreRecord(
                    centre_id=row["centre_id"].strip(),
                    enrolled_count=int(row["enrolled"]),
                    window_days=float(row["window_days"]),
                    closure_day=float(closure) if closure not in ("", None) else None))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path} row {i}: {exc}") from exc
    if not out:
        raise ValidationError(f"{path}: no centre rows")
    return out


def read_new_centres_csv(path) -> list[NewCentrePlan]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, NEW_CENTRES_COLUMNS, path,
                      optional=("rate", "closure_day"))
        for i, row in enumerate(reader):
            try:
                rate = row.get("rate", "")
                closure = row.get("closure_day", "")
                out.append(NewCentrePlan(
                    open_day=float(row["open_day"]),
                    rate=float(rate) if rate not in ("", None) else None,
                    closure_day=float(closure) if closure not in ("", None) else None))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path} row {i}: {exc}") from exc
    return out


def _family_from_config(entry) -> object:
    """Build a family from {'family': name, ...natural params} JSON."""
    kind = FamilyKind.parse(entry["family"])
    if kind is FamilyKind.EXPONENTIAL:
        return Exponential(rate=float(entry["rate"]))
    if kind is FamilyKind.WEIBULL:
        if "scale" in entry:
            return Weibull.from_shape_scale(float(entry["shape"]), float(entry["scale"]))
        return Weibull(shape=float(entry["shape"]), rateparam=float(entry["rateparam"]))
    return LogNormal(meanlog=float(entry["meanlog"]), sdlog=float(entry["sdlog"]))


def _jsonify(value):
    """JSON-safe copies: numpy scalars to python, non-finite floats to None."""
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonify(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    return repr(v) if math.isfinite(v) else ""


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_curve_csv(path: Path, curve) -> None:
    _write_csv(path, curve.header(), curve.rows())


def _slug(name: str) -> str:
    return name.replace(" ", "_").replace("-", "_")


def _milestone_dict(milestone, reachable: bool = True) -> dict:
    if milestone is None:
        return {"reachable": False}
    return {"reachable": reachable,
            "mean_day": milestone.mean_day, "lower_day": milestone.lower_day,
            "upper_day": milestone.upper_day, "median_day": milestone.median_day,
            "asymptotic_mean": milestone.asymptotic_mean}


@dataclass
class ForecastReport:
    """In-memory results of a forecast run; files land in ``out_dir``."""

    snapshot: TrialSnapshot
    primary: likelihood.CureModelFit
    table: list
    summary: dict
    exit_code: int
    out_dir: Path


def run_forecast(cfg: RunConfig) -> ForecastReport:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    delta = 1.0 - cfg.confidence_level

    patients = read_events_csv(cfg.events_csv)
    centres = read_centres_csv(cfg.centres_csv) if cfg.centres_csv else []
    new_centres = read_new_centres_csv(cfg.new_centres_csv) if cfg.new_centres_csv else []
    cutoff = cfg.cutoff_day
    if cutoff is None:
        cutoff = max(p.randomisation_day + p.exposure_days for p in patients)
    sample_size = cfg.sample_size if cfg.sample_size is not None else len(patients)
    snapshot = TrialSnapshot(patients=tuple(patients), centres=tuple(centres),
                             new_centres=tuple(new_centres), cutoff_day=cutoff,
                             target_events=cfg.target_events,
                             sample_size=sample_size,
                             confidence_level=cfg.confidence_level)
    if snapshot.remaining_patients > 0 and not (centres or new_centres):
        raise ValidationError(
            f"sample_size {sample_size} exceeds the {len(patients)} patients on file "
            "but no centres or new-centre plans were given to model recruitment")

    spec = CureModelSpec(event=FamilyKind.parse(cfg.event_family),
                         dropout=FamilyKind.parse(cfg.dropout_family))
    primary = likelihood.fit(spec, snapshot, with_cure=cfg.with_cure)
    aic, bic = likelihood.information_criteria(primary, len(patients))

    table = diagnostics.model_table(snapshot)
    _write_csv(out_dir / "model_table.csv",
               ["model", "n_params", "loglik", "aic", "bic", "converged", "error"],
               [[row.name, row.fit.n_params if row.fit else None,
                 row.fit.loglik if row.fit else None,
                 row.aic if not math.isnan(row.aic) else None,
                 row.bic if not math.isnan(row.bic) else None,
                 row.fit.converged if row.fit else None, row.error]
                for row in table])

    km = diagnostics.kaplan_meier(patients, confidence_level=cfg.confidence_level)
    fitted_models = {row.name: row.fit.params for row in table if row.fit is not None}
    ov = diagnostics.overlay(km, fitted_models)
    overlay_header = ["time", "km", "km_lower", "km_upper",
                      *(_slug(n) for n in ov.model_curves)]
    overlay_rows = []
    for i in range(len(ov.times)):
        row = [ov.times[i], ov.km_survival[i], ov.km_lower[i], ov.km_upper[i]]
        row += [vals[i] for vals in ov.model_curves.values()]
        overlay_rows.append(row)
    _write_csv(out_dir / "km_overlay.csv", overlay_header, overlay_rows)

    z_exposures = snapshot.exposures(Group.AT_RISK)
    k_remaining = snapshot.remaining_events
    horizon = cfg.horizon_days
    if horizon is None:
        horizon = 20.0 * max(cutoff, 1.0)

    recruit_summary = None
    pg = None
    events_milestone = None
    events_curve = None
    events_asymptote = None
    recruit_reachable = True
    events_reachable = True
    mode = "at_risk_only"
    if snapshot.remaining_patients > 0:
        mode = "combined"
        pg = recruitment.fit_pg(centres) if centres else None
        post = recruitment.posteriors(pg, centres) if pg else []
        try:
            plan = recruitment.plan_closure(post, new_centres,
                                            snapshot.remaining_patients,
                                            delta=delta, grid_days=cfg.grid_days,
                                            pg_prior=pg)
            recruit_curve = plan.curve
            recruit_milestone = plan.milestone
            post, new_plans = plan.centre_posteriors, plan.new_centres
            closure_day = plan.closure_day
        except UnreachableTargetError as exc:
            recruit_reachable = False
            fallback = recruitment.predict_recruitment(
                post, new_centres, 0, delta=delta, grid_days=cfg.grid_days,
                horizon_days=horizon, pg_prior=pg)
            recruit_curve = fallback.curve
            recruit_milestone = None
            new_plans = tuple(new_centres)
            closure_day = None
            recruit_summary = {"unreachable": str(exc),
                               "asymptotic_mean": exc.asymptotic_mean}
        _write_curve_csv(out_dir / "recruitment_curve.csv", recruit_curve)
        if cfg.write_plots:
            plots.save_forecast_figure(recruit_curve,
                                       out_dir / "recruitment_curve.png",
                                       "Predicted enrolment", ylabel="patients",
                                       target=snapshot.remaining_patients)
        if recruit_summary is None:
            recruit_summary = {"closure_day": closure_day,
                               "milestone": _milestone_dict(recruit_milestone)}
        if pg is not None:
            recruit_summary["prior"] = {"shape": pg.shape, "rate": pg.rate,
                                        "mean_rate": pg.mean,
                                        "converged": pg.converged,
                                        "degenerate": pg.degenerate}
        try:
            events_milestone, pred = combined.time_to_target_combined(
                primary.params, post, new_plans, z_exposures, k_remaining,
                delta=delta, grid_days=cfg.grid_days, pg_prior=pg)
            events_curve = pred.curve()
        except UnreachableTargetError as exc:
            events_reachable = False
            days = np.arange(0.0, horizon + cfg.grid_days, cfg.grid_days)
            pred = combined.combined_curve(primary.params, post, new_plans,
                                           z_exposures, days, delta=delta,
                                           pg_prior=pg)
            events_curve = pred.curve()
            events_milestone = None
            events_asymptote = exc.asymptotic_mean
        pos_value = None
        if cfg.planned_days is not None:
            pos_value = combined.probability_of_success_combined(
                primary.params, post, new_plans, z_exposures, cfg.planned_days,
                k_remaining, pg_prior=pg)
    else:
        try:
            events_milestone, events_curve = atrisk.time_to_target(
                primary.params, z_exposures, k_remaining, delta=delta,
                grid_days=cfg.grid_days, horizon_days=cfg.horizon_days)
        except UnreachableTargetError as exc:
            events_reachable = False
            days = np.arange(0.0, horizon + cfg.grid_days, cfg.grid_days)
            events_curve = atrisk.forecast_curve(primary.params, z_exposures, days,
                                                 delta=delta)
            events_milestone = None
            events_asymptote = exc.asymptotic_mean
        pos_value = None
        if cfg.planned_days is not None:
            pos_value = atrisk.probability_of_success(
                primary.params, z_exposures, cfg.planned_days, k_remaining)

    _write_curve_csv(out_dir / "events_curve.csv", events_curve)
    if cfg.write_plots:
        plots.save_forecast_figure(events_curve, out_dir / "events_curve.png",
                                   "Predicted events", ylabel="events",
                                   target=k_remaining)
        plots.save_overlay_figure(ov, out_dir / "km_overlay.png",
                                  "Survival overlay")

    params_payload = {
        "event": describe_family(primary.params.event),
        "dropout": describe_family(primary.params.dropout),
        "cure_prob": primary.params.cure_prob,
        "with_cure": primary.with_cure,
        "dropout_modelled": primary.dropout_modelled,
        "loglik": primary.loglik,
        "n_params": primary.n_params,
        "converged": primary.converged,
        "recruitment": None if pg is None else {"shape": pg.shape, "rate": pg.rate},
    }
    _write_json(out_dir / "params.json", params_payload)

    milestone_payload = _milestone_dict(events_milestone, reachable=events_reachable)
    if events_milestone is None and not events_reachable:
        milestone_payload["asymptotic_mean"] = events_asymptote

    exit_code = EXIT_OK
    if not (recruit_reachable and events_reachable):
        exit_code = EXIT_UNREACHABLE
    elif not primary.converged:
        exit_code = EXIT_NONCONVERGENCE

    summary = {
        "mode": mode,
        "groups": {"events": snapshot.n_events, "at_risk": snapshot.n_at_risk,
                   "dropouts": snapshot.n_dropouts, "total": len(patients)},
        "cutoff_day": cutoff,
        "target_events": cfg.target_events,
        "events_remaining": k_remaining,
        "sample_size": sample_size,
        "patients_remaining": snapshot.remaining_patients,
        "confidence_level": cfg.confidence_level,
        "primary_model": {"event_family": spec.event.value,
                          "dropout_family": spec.dropout.value,
                          "with_cure": cfg.with_cure, "loglik": primary.loglik,
                          "aic": aic, "bic": bic, "converged": primary.converged},
        "best_model_by_aic": table[0].name if table else None,
        "km_sup_distance": ov.sup_distance,
        "recruitment": recruit_summary,
        "events_milestone": milestone_payload,
        "probability_of_success": (None if cfg.planned_days is None else
                                   {"horizon_days": cfg.planned_days,
                                    "value": pos_value}),
        "exit_code": exit_code,
    }
    _write_json(out_dir / "summary.json", summary)
    return ForecastReport(snapshot=snapshot, primary=primary, table=table,
                          summary=summary, exit_code=exit_code, out_dir=out_dir)


def _load_json_config(path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def cmd_forecast(args: argparse.Namespace) -> int:
    base = {}
    if args.config:
        base = _load_json_config(args.config)
        unknown = set(base) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"{args.config}: unknown config keys {sorted(unknown)}")
    overrides = {k: v for k, v in vars(args).items()
                 if k in RunConfig.__dataclass_fields__ and v is not None}
    if args.no_cure:
        overrides["with_cure"] = False
    if args.no_plots:
        overrides["write_plots"] = False
    merged = {**base, **overrides}
    if "events_csv" not in merged:
        raise ValidationError("an events CSV is required (--events or config events_csv)")
    report = run_forecast(RunConfig(**merged))
    print(f"wrote report bundle to {report.out_dir}")
    milestone = report.summary["events_milestone"]
    if milestone.get("reachable"):
        print(f"target of {report.summary['target_events']} events: "
              f"mean day {milestone['mean_day']:.0f} "
              f"[{milestone['lower_day']:.0f}, {milestone['upper_day']:.0f}] "
              "after cut-off")
    else:
        print("target unreachable under the fitted model", file=sys.stderr)
    return report.exit_code


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg_dict = _load_json_config(args.config) if args.config else {}
    truth_entry = cfg_dict.pop("truth", None)
    if truth_entry is not None:
        truth = CureModelParams(
            event=_family_from_config(truth_entry["event"]),
            dropout=_family_from_config(truth_entry["dropout"]),
            cure_prob=float(truth_entry.get("cure_prob", 0.0)))
    else:
        truth = CureModelParams(event=Weibull.from_shape_scale(0.8, 182.0),
                                dropout=Weibull.from_shape_scale(0.6, 2611.0),
                                cure_prob=0.2)
    known = set(SimConfig.__dataclass_fields__) - {"truth", "centre_rates", "rate_prior"}
    unknown = set(cfg_dict) - known
    if unknown:
        raise ValidationError(f"{args.config}: unknown config keys {sorted(unknown)}")
    for flag in ("n_patients", "n_centres", "interim_month", "target_events", "seed"):
        val = getattr(args, flag, None)
        if val is not None:
            cfg_dict[flag] = val
    config = SimConfig(truth=truth, **cfg_dict)

    study = recovery_study(config, args.reps, delta=1.0 - args.confidence_level)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = ["rep", "n_events", "n_at_risk", "n_dropouts", "converged", "loglik",
               "event_rate", "event_shape", "event_scale", "dropout_rate",
               "dropout_shape", "dropout_scale", "cure_prob", "pg_shape", "pg_rate",
               "k_remaining", "recruit_close_day", "realized_day", "mean_day",
               "lower_day", "upper_day", "covered", "error"]
    _write_csv(out_dir / "recovery.csv", columns,
               [[row.get(c) for c in columns] for row in study.rows])
    _write_json(out_dir / "recovery_summary.json", study.summary)
    print(f"wrote {len(study.rows)} replications to {out_dir}")
    if "coverage" in study.summary:
        print(f"band coverage at the realized target day: "
              f"{study.summary['coverage']:.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eventcast",
        description="Forecast event counts and milestones for event-driven trials.")
    sub = parser.add_subparsers(dest="command", required=True)

    fc = sub.add_parser("forecast", help="fit interim data and write the report bundle")
    fc.add_argument("--events", dest="events_csv", help="interim patient CSV")
    fc.add_argument("--centres", dest="centres_csv", help="centre enrolment CSV")
    fc.add_argument("--new-centres", dest="new_centres_csv",
                    help="planned-centre CSV")
    fc.add_argument("--out", dest="out_dir", help="output directory")
    fc.add_argument("--config", help="JSON file with RunConfig fields")
    fc.add_argument("--target-events", dest="target_events", type=int)
    fc.add_argument("--sample-size", dest="sample_size", type=int)
    fc.add_argument("--cutoff-day", dest="cutoff_day", type=float)
    fc.add_argument("--confidence", dest="confidence_level", type=float)
    fc.add_argument("--event-family", dest="event_family",
                    choices=["exponential", "weibull", "lognormal"])
    fc.add_argument("--dropout-family", dest="dropout_family",
                    choices=["exponential", "weibull", "lognormal"])
    fc.add_argument("--no-cure", action="store_true",
                    help="fit without a cured fraction")
    fc.add_argument("--planned-days", dest="planned_days", type=float,
                    help="horizon for the probability of hitting the target")
    fc.add_argument("--grid-days", dest="grid_days", type=float)
    fc.add_argument("--horizon-days", dest="horizon_days", type=float)
    fc.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    fc.set_defaults(func=cmd_forecast)

    sim = sub.add_parser("simulate", help="truth-recovery replications")
    sim.add_argument("--out", dest="out_dir", default="eventcast_sim")
    sim.add_argument("--config", help="JSON file with SimConfig fields and truth")
    sim.add_argument("--reps", type=int, default=20)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--n-patients", dest="n_patients", type=int)
    sim.add_argument("--n-centres", dest="n_centres", type=int)
    sim.add_argument("--interim-month", dest="interim_month", type=float)
    sim.add_argument("--target-events", dest="target_events", type=int)
    sim.add_argument("--confidence", dest="confidence_level", type=float,
                     default=0.90)
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, likelihood.InsufficientDataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
