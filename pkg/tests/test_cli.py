import datetime as dt
import json

import numpy as np
import pytest

from gridsched import Calendar, CostModelParams, pearson, v_cost
from gridsched.cli import main

from conftest import SAMPLE_TEXT

START = "2020-11-02"
DAYS = 7


def week_cal() -> Calendar:
    return Calendar.from_start(dt.date(2020, 11, 2), DAYS)


def write_series(path, cal, values) -> None:
    lines = ["timestamp,value"]
    for i, v in enumerate(values):
        ts = cal.timestamp_of_period(i).isoformat(sep=" ")
        lines.append(f"{ts},{float(v)!r}")
    path.write_text("\n".join(lines) + "\n")


def write_prices(path, cal, halfhourly) -> None:
    lines = ["timestamp,price"]
    for i, v in enumerate(halfhourly):
        ts = cal.timestamp_of_period(2 * i).isoformat(sep=" ")
        lines.append(f"{ts},{float(v)!r}")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def workdir(tmp_path):
    cal = week_cal()
    rng = np.random.default_rng(11)
    (tmp_path / "instance.txt").write_text(SAMPLE_TEXT)
    write_series(tmp_path / "net.csv", cal, rng.uniform(20.0, 80.0, cal.horizon))
    write_prices(tmp_path / "prices.csv", cal,
                 rng.uniform(30.0, 200.0, cal.horizon // 2))
    return tmp_path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


class TestParse:
    def test_valid_instance(self, workdir, capsys):
        code, out = run(capsys, "parse", "--instance", workdir / "instance.txt")
        assert code == 0
        payload = json.loads(out)
        assert payload["valid"] is True
        assert payload["counts"] == {"buildings": 3, "solars": 2,
                                     "batteries": 1, "recurring": 4,
                                     "onceoff": 2}

    def test_domain_violation(self, tmp_path, capsys):
        # an activity needing more rooms than exist parses but fails validation
        bad = tmp_path / "bad.txt"
        bad.write_text("ppoi 1 0 0 1 0\nb 0 1 0\nr 0 3 S 5 4 0\n")
        code, out = run(capsys, "parse", "--instance", bad)
        assert code == 1
        payload = json.loads(out)
        assert payload["valid"] is False
        assert payload["violations"]

    def test_malformed_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("this is not an instance\n")
        code, _ = run(capsys, "parse", "--instance", bad)
        assert code == 2

    def test_missing_file(self, tmp_path, capsys):
        code, _ = run(capsys, "parse", "--instance", tmp_path / "absent.txt")
        assert code == 2


class TestStats:
    def test_single_file(self, tmp_path, capsys):
        path = tmp_path / "series.csv"
        path.write_text("timestamp,value\n"
                        "2020-11-02 00:00:00,1.0\n"
                        "2020-11-02 00:15:00,\n"
                        "2020-11-02 00:30:00,5.0\n")
        code, out = run(capsys, "stats", path)
        assert code == 0
        stats = json.loads(out)[str(path)]
        assert stats["mean"] == 3.0
        assert stats["min"] == 1.0
        assert stats["max"] == 5.0

    def test_bad_header(self, tmp_path, capsys):
        path = tmp_path / "series.csv"
        path.write_text("time,val\n1,2\n")
        code, _ = run(capsys, "stats", path)
        assert code == 2


class TestMetrics:
    def test_identity_forecast(self, workdir, capsys):
        code, out = run(capsys, "metrics", "--actual", workdir / "net.csv",
                        "--forecast", workdir / "net.csv")
        assert code == 0
        payload = json.loads(out)
        assert payload["mae"] == 0.0
        assert "mase" not in payload

    def test_train_enables_scaled_error(self, workdir, tmp_path, capsys):
        cal = week_cal()
        train = tmp_path / "train.csv"
        write_series(train, cal, np.arange(1.0, 41.0))
        code, out = run(capsys, "metrics", "--actual", workdir / "net.csv",
                        "--forecast", workdir / "net.csv",
                        "--train", train, "--season", 7)
        assert code == 0
        assert json.loads(out)["mase"] == 0.0

    def test_missing_file(self, workdir, capsys):
        code, _ = run(capsys, "metrics", "--actual", workdir / "net.csv",
                      "--forecast", workdir / "absent.csv")
        assert code == 2


class TestPerturb:
    def test_scales_values(self, workdir, capsys):
        out_csv = workdir / "forecast.csv"
        code, _ = run(capsys, "perturb", "--actual", workdir / "net.csv",
                      "--factor", 0.1, "--output", out_csv)
        assert code == 0
        base = [float(line.split(",")[1])
                for line in (workdir / "net.csv").read_text().splitlines()[1:]]
        scaled = [float(line.split(",")[1])
                  for line in out_csv.read_text().splitlines()[1:]]
        np.testing.assert_allclose(scaled, np.array(base) * 1.1, rtol=1e-12)

    def test_stdout_default(self, workdir, capsys):
        code, out = run(capsys, "perturb", "--actual", workdir / "net.csv",
                        "--factor", 0.0)
        assert code == 0
        assert out == (workdir / "net.csv").read_text()

    def test_factor_over_cap(self, workdir, capsys):
        code, _ = run(capsys, "perturb", "--actual", workdir / "net.csv",
                      "--factor", 0.6)
        assert code == 1

    def test_cap_override(self, workdir, capsys):
        code, _ = run(capsys, "perturb", "--actual", workdir / "net.csv",
                      "--factor", 0.6, "--max-factor", 0.7,
                      "--output", workdir / "big.csv")
        assert code == 0


def optimize_args(workdir, out, **overrides):
    args = ["optimize", "--instance", workdir / "instance.txt",
            "--forecast", workdir / "net.csv",
            "--prices", workdir / "prices.csv",
            "--start-date", START, "--days", DAYS,
            "--policy", overrides.pop("policy", "conservative"),
            "--warm-starts", overrides.pop("warm_starts", 6),
            "--iters", overrides.pop("iters", 40),
            "--seed", overrides.pop("seed", 3),
            "--out", out]
    assert not overrides
    return args


class TestOptimizeEvaluate:
    def test_pipeline(self, workdir, capsys):
        out_dir = workdir / "run1"
        code, out = run(capsys, *optimize_args(workdir, out_dir))
        assert code == 0
        cost = json.loads(out)["cost"]
        assert (out_dir / "schedule.json").is_file()
        report = json.loads((out_dir / "run_report.json").read_text())
        for key in ("policy", "seed", "warm_start_costs",
                    "best_warm_start_cost", "iterations", "accepted_moves",
                    "final_cost"):
            assert key in report
        assert report["final_cost"] == cost
        assert cost <= report["best_warm_start_cost"]

        code, out = run(capsys, "evaluate",
                        "--instance", workdir / "instance.txt",
                        "--schedule", out_dir / "schedule.json",
                        "--actual", workdir / "net.csv",
                        "--prices", workdir / "prices.csv",
                        "--start-date", START, "--days", DAYS,
                        "--policy", "conservative",
                        "--out", out_dir)
        assert code == 0
        record = json.loads(out)
        assert record["feasible"] is True
        # the actual equals the forecast, so realized cost matches planned
        assert record["cost"] == pytest.approx(cost, rel=1e-12)
        assert json.loads((out_dir / "record.json").read_text()) == record

    def test_evaluate_adds_metrics(self, workdir, capsys):
        out_dir = workdir / "run2"
        run(capsys, *optimize_args(workdir, out_dir))
        code, out = run(capsys, "evaluate",
                        "--instance", workdir / "instance.txt",
                        "--schedule", out_dir / "schedule.json",
                        "--actual", workdir / "net.csv",
                        "--prices", workdir / "prices.csv",
                        "--start-date", START, "--days", DAYS,
                        "--forecast", workdir / "net.csv")
        assert code == 0
        assert json.loads(out)["metrics"]["mae"] == 0.0

    def test_component_net_matches_single(self, workdir, capsys):
        cal = week_cal()
        rng = np.random.default_rng(21)
        b1 = rng.uniform(10.0, 50.0, cal.horizon)
        b2 = rng.uniform(5.0, 30.0, cal.horizon)
        s1 = rng.uniform(0.0, 20.0, cal.horizon)
        write_series(workdir / "b1.csv", cal, b1)
        write_series(workdir / "b2.csv", cal, b2)
        write_series(workdir / "s1.csv", cal, s1)
        write_series(workdir / "sum.csv", cal, b1 + b2 - s1)

        args = ["optimize", "--instance", workdir / "instance.txt",
                "--prices", workdir / "prices.csv",
                "--start-date", START, "--days", DAYS,
                "--warm-starts", 6, "--iters", 40, "--seed", 3]
        code, _ = run(capsys, *args, "--buildings", workdir / "b1.csv",
                      "--buildings", workdir / "b2.csv",
                      "--solars", workdir / "s1.csv",
                      "--out", workdir / "parts")
        assert code == 0
        code, _ = run(capsys, *args, "--forecast", workdir / "sum.csv",
                      "--out", workdir / "single")
        assert code == 0
        assert (workdir / "parts" / "schedule.json").read_bytes() == \
            (workdir / "single" / "schedule.json").read_bytes()

    def test_deterministic_reruns(self, workdir, capsys):
        code, _ = run(capsys, *optimize_args(
            workdir, workdir / "a", policy="no-forced-discharge", iters=30))
        assert code == 0
        code, _ = run(capsys, *optimize_args(
            workdir, workdir / "b", policy="no-forced-discharge", iters=30))
        assert code == 0
        for name in ("schedule.json", "run_report.json"):
            assert (workdir / "a" / name).read_bytes() == \
                (workdir / "b" / name).read_bytes()

    def test_evaluate_infeasible_schedule(self, workdir, capsys):
        out_dir = workdir / "run3"
        run(capsys, *optimize_args(workdir, out_dir))
        payload = json.loads((out_dir / "schedule.json").read_text())
        payload["placements"][0]["weekday"] = 6
        tampered = workdir / "tampered.json"
        tampered.write_text(json.dumps(payload))
        code, out = run(capsys, "evaluate",
                        "--instance", workdir / "instance.txt",
                        "--schedule", tampered,
                        "--actual", workdir / "net.csv",
                        "--prices", workdir / "prices.csv",
                        "--start-date", START, "--days", DAYS)
        assert code == 1
        assert json.loads(out)["feasible"] is False

    def test_evaluate_malformed_schedule(self, workdir, capsys):
        bad = workdir / "bad.json"
        bad.write_text("not json")
        code, _ = run(capsys, "evaluate",
                      "--instance", workdir / "instance.txt",
                      "--schedule", bad,
                      "--actual", workdir / "net.csv",
                      "--prices", workdir / "prices.csv",
                      "--start-date", START, "--days", DAYS)
        assert code == 2

    def test_calendar_flag_conflicts(self, workdir, capsys):
        code, _ = run(capsys, *optimize_args(workdir, workdir / "x"),
                      "--month", "2020-11")
        assert code == 2

    def test_calendar_flags_required(self, workdir, capsys):
        code, _ = run(capsys, "optimize",
                      "--instance", workdir / "instance.txt",
                      "--forecast", workdir / "net.csv",
                      "--prices", workdir / "prices.csv",
                      "--out", workdir / "x")
        assert code == 2

    def test_forecast_source_required(self, workdir, capsys):
        code, _ = run(capsys, "optimize",
                      "--instance", workdir / "instance.txt",
                      "--prices", workdir / "prices.csv",
                      "--start-date", START, "--days", DAYS,
                      "--out", workdir / "x")
        assert code == 2


class TestFitCorrectionAndCorrect:
    def build_manifest(self, tmp_path):
        cal = week_cal()
        rng = np.random.default_rng(42)
        actual = rng.normal(100.0, 30.0, cal.horizon)
        write_series(tmp_path / "actual.csv", cal, actual)
        planted = CostModelParams(0.8, 0.1)
        m, s = actual.mean(), actual.std()
        pairs = []
        for i, factor in enumerate(np.linspace(-0.2, 0.2, 7)):
            forecast = actual * (1.0 + factor)
            write_series(tmp_path / f"f{i}.csv", cal, forecast)
            cost = v_cost((actual - m) / s, (forecast - m) / s, planted)
            pairs.append({"forecast_csv": f"f{i}.csv", "cost": cost})
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps(
            {"actual_csv": "actual.csv", "pairs": pairs}))
        return manifest, planted

    def test_fit_recovers_planted_weights(self, tmp_path, capsys):
        manifest, planted = self.build_manifest(tmp_path)
        code, out = run(capsys, "fit-correction", "--manifest", manifest,
                        "--out", tmp_path / "fit")
        assert code == 0
        result = json.loads(out)
        assert result["gamma"] == pytest.approx(planted.gamma, abs=0.05)
        assert result["epsilon"] == pytest.approx(planted.epsilon, abs=0.05)
        assert result["correlation"] >= 0.999
        saved = json.loads((tmp_path / "fit" / "correction.json").read_text())
        assert saved == result

    def test_fit_equal_costs(self, tmp_path, capsys):
        manifest, _ = self.build_manifest(tmp_path)
        payload = json.loads(manifest.read_text())
        for item in payload["pairs"]:
            item["cost"] = 1.0
        manifest.write_text(json.dumps(payload))
        code, _ = run(capsys, "fit-correction", "--manifest", manifest)
        assert code == 1

    def test_fit_manifest_missing_keys(self, tmp_path, capsys):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({"pairs": []}))
        code, _ = run(capsys, "fit-correction", "--manifest", manifest)
        assert code == 2

    def test_fit_bad_json(self, tmp_path, capsys):
        manifest = tmp_path / "manifest.json"
        manifest.write_text("{broken")
        code, _ = run(capsys, "fit-correction", "--manifest", manifest)
        assert code == 2

    def test_correct_identity_round_trip(self, workdir, capsys):
        params = workdir / "params.json"
        params.write_text(json.dumps({"alpha": 1.0, "beta": 0.0}))
        out_csv = workdir / "corrected.csv"
        code, _ = run(capsys, "correct", "--forecast", workdir / "net.csv",
                      "--params", params, "--output", out_csv)
        assert code == 0
        assert out_csv.read_bytes() == (workdir / "net.csv").read_bytes()

    def test_correct_affine(self, workdir, capsys):
        params = workdir / "params.json"
        params.write_text(json.dumps({"alpha": 0.5, "beta": 3.0}))
        code, out = run(capsys, "correct", "--forecast", workdir / "net.csv",
                        "--params", params)
        assert code == 0
        base = [float(line.split(",")[1])
                for line in (workdir / "net.csv").read_text().splitlines()[1:]]
        got = [float(line.split(",")[1]) for line in out.splitlines()[1:]]
        np.testing.assert_allclose(got, 3.0 + 0.5 * np.array(base), rtol=1e-12)

    def test_correct_missing_params_key(self, workdir, capsys):
        params = workdir / "params.json"
        params.write_text(json.dumps({"alpha": 1.0}))
        code, _ = run(capsys, "correct", "--forecast", workdir / "net.csv",
                      "--params", params)
        assert code == 2


class TestReport:
    def build_runs(self, tmp_path, n=4, drop_mase_from=None):
        runs = tmp_path / "runs"
        runs.mkdir()
        rng = np.random.default_rng(5)
        for i in range(n):
            mae = 2.0 + 3.0 * i
            metrics = {
                "mae": mae,
                "mase": 0.4 + 0.1 * i,
                "mean_under": mae / 2 + 0.2 * rng.random(),
                "mean_over": mae / 2,
            }
            if drop_mase_from is not None and i == drop_mase_from:
                del metrics["mase"]
            record = {"cost": 100.0 + 10.0 * mae, "feasible": True,
                      "metrics": metrics}
            sub = runs / f"run{i}"
            sub.mkdir()
            (sub / "record.json").write_text(json.dumps(record))
        return runs

    def test_table_correlations_figures(self, tmp_path, capsys):
        runs = self.build_runs(tmp_path)
        out_dir = tmp_path / "report"
        code, out = run(capsys, "report", "--runs", runs, "--out", out_dir)
        assert code == 0
        payload = json.loads(out)
        assert payload["runs"] == 4

        lines = (out_dir / "report.csv").read_text().splitlines()
        assert lines[0] == "run,cost,mase,mae,mean_under,mean_over"
        assert len(lines) == 5
        costs = [float(line.split(",")[1]) for line in lines[1:]]
        maes = [float(line.split(",")[3]) for line in lines[1:]]

        correlations = json.loads((out_dir / "correlations.json").read_text())
        # cost was planted linear in mae
        assert correlations["mae"] == pytest.approx(1.0, abs=1e-12)
        assert correlations["mae"] == pytest.approx(pearson(maes, costs),
                                                    abs=1e-12)
        assert (out_dir / "cost_vs_mae.png").is_file()
        assert (out_dir / "correlations.png").is_file()

    def test_no_figures(self, tmp_path, capsys):
        runs = self.build_runs(tmp_path)
        out_dir = tmp_path / "report"
        code, _ = run(capsys, "report", "--runs", runs, "--out", out_dir,
                      "--no-figures")
        assert code == 0
        assert (out_dir / "report.csv").is_file()
        assert not list(out_dir.glob("*.png"))

    def test_partial_metrics_skipped(self, tmp_path, capsys):
        runs = self.build_runs(tmp_path, drop_mase_from=1)
        code, out = run(capsys, "report", "--runs", runs, "--no-figures")
        assert code == 0
        correlations = json.loads(out)["correlations"]
        assert "mase" not in correlations
        assert "mae" in correlations

    def test_deterministic_outputs(self, tmp_path, capsys):
        runs = self.build_runs(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        run(capsys, "report", "--runs", runs, "--out", a, "--no-figures")
        run(capsys, "report", "--runs", runs, "--out", b, "--no-figures")
        for name in ("report.csv", "correlations.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_empty_runs_dir(self, tmp_path, capsys):
        runs = tmp_path / "runs"
        runs.mkdir()
        code, _ = run(capsys, "report", "--runs", runs)
        assert code == 1

    def test_missing_runs_dir(self, tmp_path, capsys):
        code, _ = run(capsys, "report", "--runs", tmp_path / "absent")
        assert code == 2
