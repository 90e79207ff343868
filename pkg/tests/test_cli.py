"""Command-line round trips: CSV input, report bundles, exit codes, determinism."""

import csv
import json

import numpy as np
import pytest

from eventcast import cli
from eventcast.distributions import CureModelParams, Exponential
from eventcast.domain import ValidationError
from helpers import draw_grouped

TRUTH = CureModelParams(Exponential(0.005), Exponential(0.0008), cure_prob=0.25)


def write_events_csv(path, x, z, y, date="2026-01-05"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["exposure_days", "censor", "drop_out", "randomisation_date"])
        for v in x:
            writer.writerow([f"{v:.6f}", 0, 0, date])
        for v in z:
            writer.writerow([f"{v:.6f}", 1, 0, date])
        for v in y:
            writer.writerow([f"{v:.6f}", 1, 1, date])


def write_centres_csv(path, rows, header=("centre_id", "enrolled", "window_days")):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture(scope="module")
def interim_csvs(tmp_path_factory):
    """One deterministic interim data set shared by the CLI tests."""
    root = tmp_path_factory.mktemp("interim")
    rng = np.random.default_rng(140)
    x, z, y = draw_grouped(TRUTH, 80, 300.0, rng)
    events = root / "events.csv"
    write_events_csv(events, x, z, y)
    centres = root / "centres.csv"
    n_patients = len(x) + len(z) + len(y)
    counts = [n_patients // 4] * 3 + [n_patients - 3 * (n_patients // 4)]
    write_centres_csv(centres, [[f"s{i}", c, 220.0] for i, c in enumerate(counts)])
    return {"events": str(events), "centres": str(centres),
            "n_events": len(x), "n_at_risk": len(z), "n_dropouts": len(y),
            "n": n_patients}


BUNDLE = ("params.json", "summary.json", "model_table.csv", "events_curve.csv",
          "km_overlay.csv")


def test_forecast_at_risk_only(interim_csvs, tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(["forecast", "--events", interim_csvs["events"],
                     "--out", str(out), "--target-events", "50"])
    assert code == cli.EXIT_OK
    for name in BUNDLE + ("events_curve.png", "km_overlay.png"):
        assert (out / name).exists(), name
    assert not (out / "recruitment_curve.csv").exists()

    summary = json.loads((out / "summary.json").read_text())
    assert summary["mode"] == "at_risk_only"
    assert summary["groups"]["events"] == interim_csvs["n_events"]
    assert summary["groups"]["total"] == interim_csvs["n"]
    assert summary["events_milestone"]["reachable"]
    assert summary["exit_code"] == 0

    params = json.loads((out / "params.json").read_text())
    assert params["event"]["family"] == "exponential"
    assert params["converged"] is True
    assert 0.0 <= params["cure_prob"] <= 1.0

    printed = capsys.readouterr().out
    assert "mean day" in printed

    with open(out / "events_curve.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header[:4] == ["day", "mean", "lower", "upper"]


def test_forecast_combined_with_centres(interim_csvs, tmp_path):
    out = tmp_path / "run"
    code = cli.main(["forecast", "--events", interim_csvs["events"],
                     "--centres", interim_csvs["centres"],
                     "--out", str(out), "--target-events", "50",
                     "--sample-size", "110", "--planned-days", "365"])
    assert code == cli.EXIT_OK
    assert (out / "recruitment_curve.csv").exists()
    assert (out / "recruitment_curve.png").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mode"] == "combined"
    assert summary["patients_remaining"] == 110 - interim_csvs["n"]
    assert summary["recruitment"]["prior"]["shape"] > 0
    assert summary["recruitment"]["milestone"]["reachable"]
    pos = summary["probability_of_success"]
    assert pos["horizon_days"] == 365.0
    assert 0.0 <= pos["value"] <= 1.0


def test_forecast_unreachable_target_exit_code(interim_csvs, tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(["forecast", "--events", interim_csvs["events"],
                     "--out", str(out), "--target-events", "200"])
    assert code == cli.EXIT_UNREACHABLE
    summary = json.loads((out / "summary.json").read_text())
    assert summary["events_milestone"]["reachable"] is False
    assert summary["events_milestone"]["asymptotic_mean"] is not None
    assert "unreachable" in capsys.readouterr().err


def test_forecast_runs_are_byte_identical(interim_csvs, tmp_path):
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = cli.main(["forecast", "--events", interim_csvs["events"],
                         "--centres", interim_csvs["centres"],
                         "--out", str(out), "--target-events", "50",
                         "--sample-size", "110"])
        assert code == cli.EXIT_OK
        outs.append(out)
    first_files = sorted(p.name for p in outs[0].iterdir())
    assert first_files == sorted(p.name for p in outs[1].iterdir())
    for name in first_files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_validation_failures_exit_2(interim_csvs, tmp_path, capsys):
    missing = cli.main(["forecast", "--events", str(tmp_path / "nope.csv"),
                        "--out", str(tmp_path / "o1")])
    assert missing == cli.EXIT_VALIDATION

    bad = tmp_path / "bad.csv"
    bad.write_text("exposure_days,censor\n10,0\n")
    assert cli.main(["forecast", "--events", str(bad),
                     "--out", str(tmp_path / "o2")]) == cli.EXIT_VALIDATION

    # more patients promised than on file, but nothing models recruitment
    assert cli.main(["forecast", "--events", interim_csvs["events"],
                     "--out", str(tmp_path / "o3"),
                     "--sample-size", "500"]) == cli.EXIT_VALIDATION
    assert "error:" in capsys.readouterr().err


def test_config_json_with_flag_overrides(interim_csvs, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"events_csv": interim_csvs["events"],
                               "target_events": 40, "write_plots": False,
                               "out_dir": str(tmp_path / "from_config")}))
    code = cli.main(["forecast", "--config", str(cfg), "--target-events", "50"])
    assert code == cli.EXIT_OK
    summary = json.loads((tmp_path / "from_config" / "summary.json").read_text())
    assert summary["target_events"] == 50
    assert not (tmp_path / "from_config" / "events_curve.png").exists()

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"events_csv": interim_csvs["events"],
                               "not_a_field": 1}))
    assert cli.main(["forecast", "--config", str(bad)]) == cli.EXIT_VALIDATION


def test_no_cure_flag_fixes_cure_prob_at_zero(interim_csvs, tmp_path):
    out = tmp_path / "run"
    code = cli.main(["forecast", "--events", interim_csvs["events"],
                     "--out", str(out), "--target-events", "50", "--no-cure",
                     "--no-plots"])
    assert code == cli.EXIT_OK
    params = json.loads((out / "params.json").read_text())
    assert params["cure_prob"] == 0.0
    assert params["with_cure"] is False


def test_simulate_subcommand_and_determinism(tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({
        "truth": {"event": {"family": "exponential", "rate": 0.005},
                  "dropout": {"family": "exponential", "rate": 0.0005},
                  "cure_prob": 0.2},
        "n_patients": 120, "n_centres": 8, "target_events": 70,
        "recruit_months": 0.0, "initiation_window_months": 0.0}))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = cli.main(["simulate", "--config", str(cfg), "--reps", "2",
                         "--seed", "5", "--out", str(out)])
        assert code == cli.EXIT_OK
        outs.append(out)
    for name in ("recovery.csv", "recovery_summary.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    summary = json.loads((outs[0] / "recovery_summary.json").read_text())
    assert summary["n_reps"] == 2 and summary["n_failed"] == 0
    with open(outs[0] / "recovery.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert float(rows[0]["cure_prob"]) >= 0.0


def test_read_centres_csv_optional_columns(tmp_path):
    path = tmp_path / "centres.csv"
    write_centres_csv(path, [["s0", 4, 30.0, 90.0], ["s1", 0, 25.0, ""]],
                      header=("centre_id", "enrolled", "window_days", "closure_day"))
    centres = cli.read_centres_csv(path)
    assert centres[0].closure_day == 90.0
    assert centres[1].closure_day is None

    write_centres_csv(path, [["s0", "four", 30.0]])
    with pytest.raises(ValidationError, match="row 0"):
        cli.read_centres_csv(path)


def test_unknown_columns_warn(tmp_path):
    path = tmp_path / "centres.csv"
    write_centres_csv(path, [["s0", 4, 30.0, "x"], ["s1", 2, 25.0, "y"]],
                      header=("centre_id", "enrolled", "window_days", "surprise"))
    with pytest.warns(UserWarning, match="surprise"):
        cli.read_centres_csv(path)


def test_new_centres_csv_roundtrip(tmp_path):
    path = tmp_path / "new.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["open_day", "rate", "closure_day"])
        writer.writerow([10.0, 0.25, 120.0])
        writer.writerow([30.0, "", ""])
    plans = cli.read_new_centres_csv(path)
    assert plans[0].rate == 0.25 and plans[0].closure_day == 120.0
    assert plans[1].rate is None and plans[1].closure_day is None
