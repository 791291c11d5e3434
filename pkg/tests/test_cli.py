"""CLI contract: headers, determinism, config precedence, exit codes."""

import csv
import json
import time
from pathlib import Path

import pytest
from click.testing import CliRunner

from infreg import runs
from infreg.cli import main

GEN_SMALL = ["gen", "static", "--n", "250", "--dx", "4", "--dt", "2",
             "--seed", "7"]
TRAIN_FAST = ["--epochs", "2", "--dz", "8", "--hidden", "16",
              "--samples", "10"]


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, args, **kwargs):
    return runner.invoke(main, args, catch_exceptions=False, **kwargs)


def gen_small(runner, out):
    res = invoke(runner, GEN_SMALL + ["--out", str(out)])
    assert res.exit_code == 0, res.output
    return Path(out) / "dataset.csv"


class TestGen:
    def test_static_documented_header(self, runner, tmp_path):
        path = gen_small(runner, tmp_path / "d")
        header = path.read_text().splitlines()[0]
        assert header == ("id,x_0,x_1,x_2,x_3,t_0,t_1,y,"
                          "talt_0,talt_1,ite_true")
        assert (tmp_path / "d" / "dgp.json").exists()

    def test_regeneration_byte_identical(self, runner, tmp_path):
        p1 = gen_small(runner, tmp_path / "a")
        p2 = gen_small(runner, tmp_path / "b")
        assert p1.read_bytes() == p2.read_bytes()
        assert ((tmp_path / "a" / "dgp.json").read_bytes()
                == (tmp_path / "b" / "dgp.json").read_bytes())

    def test_dynamic_defaults_shape(self, runner, tmp_path):
        res = invoke(runner, ["gen", "dynamic", "--out",
                              str(tmp_path / "dyn")])
        assert res.exit_code == 0, res.output
        ds = runs.read_dynamic_csv(tmp_path / "dyn" / "dataset.csv")
        assert ds.x.shape == (1000, 10, 8)

    def test_nhanes_like_shape(self, runner, tmp_path):
        res = invoke(runner, ["gen", "nhanes-like", "--n", "120",
                              "--seed", "2", "--out", str(tmp_path / "nh")])
        assert res.exit_code == 0, res.output
        header = (tmp_path / "nh" / "dataset.csv").read_text().splitlines()[0]
        cols = header.split(",")
        assert sum(1 for c in cols if c.startswith("x_")) == 14
        assert sum(1 for c in cols if c.startswith("talt_")) == 82
        side = json.loads((tmp_path / "nh" / "dgp.json").read_text())
        assert side["sparse_beta_frac"] == 0.10


class TestTrain:
    def test_smoke_run_under_60s(self, runner, tmp_path):
        """Full default epochs on the default static dataset, timed."""
        res = invoke(runner, ["gen", "static", "--seed", "1",
                              "--out", str(tmp_path / "d")])
        assert res.exit_code == 0
        start = time.perf_counter()
        res = invoke(runner, ["train", "sice", str(tmp_path / "d"),
                              "--lambda", "1e-4",
                              "--out", str(tmp_path / "run")])
        elapsed = time.perf_counter() - start
        assert res.exit_code == 0, res.output
        assert elapsed < 60.0, f"smoke train took {elapsed:.1f}s"
        for name in ("metrics.csv", "history.csv", "model.txt", "run.json"):
            assert (tmp_path / "run" / name).exists()

    def test_effective_config_echoed(self, runner, tmp_path):
        gen_small(runner, tmp_path / "d")
        res = invoke(runner, ["train", "sice", str(tmp_path / "d"),
                              "--lambda", "0.5", *TRAIN_FAST,
                              "--out", str(tmp_path / "run")])
        assert res.exit_code == 0, res.output
        line = next(l for l in res.output.splitlines()
                    if l.startswith("train-sice config "))
        cfg = json.loads(line.removeprefix("train-sice config "))
        assert cfg["model"]["lam"] == 0.5
        assert cfg["model"]["epochs"] == 2
        assert cfg["data"]["n"] == 250

    def test_lambda_zero_supervised_curve(self, runner, tmp_path):
        """At lambda 0 the total loss is exactly the supervised loss."""
        gen_small(runner, tmp_path / "d")
        res = invoke(runner, ["train", "sice", str(tmp_path / "d"),
                              "--lambda", "0", *TRAIN_FAST,
                              "--out", str(tmp_path / "run")])
        assert res.exit_code == 0, res.output
        with open(tmp_path / "run" / "history.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows, "history should have epochs"
        for row in rows:
            assert row["total"] == row["supervised"]

    def test_retrain_byte_identical(self, runner, tmp_path):
        gen_small(runner, tmp_path / "d")
        for tag in ("r1", "r2"):
            res = invoke(runner, ["train", "sice", str(tmp_path / "d"),
                                  *TRAIN_FAST, "--seed", "3",
                                  "--out", str(tmp_path / tag)])
            assert res.exit_code == 0, res.output
        for name in ("metrics.csv", "history.csv", "model.txt"):
            assert ((tmp_path / "r1" / name).read_bytes()
                    == (tmp_path / "r2" / name).read_bytes()), name

    def test_dice_default_lambda(self, runner, tmp_path):
        res = invoke(runner, ["gen", "dynamic", "--n", "50", "--steps", "3",
                              "--dx", "4", "--dv", "2",
                              "--out", str(tmp_path / "d")])
        assert res.exit_code == 0, res.output
        res = invoke(runner, ["train", "dice", str(tmp_path / "d"),
                              "--epochs", "1", "--gru-hidden", "12",
                              "--dz", "6", "--hidden", "12",
                              "--samples", "5",
                              "--out", str(tmp_path / "run")])
        assert res.exit_code == 0, res.output
        line = next(l for l in res.output.splitlines()
                    if l.startswith("train-dice config "))
        cfg = json.loads(line.removeprefix("train-dice config "))
        assert cfg["model"]["lam"] == 1e-5

    def test_config_file_and_flag_precedence(self, runner, tmp_path):
        gen_small(runner, tmp_path / "d")
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(
            {"epochs": 2, "dz": 8, "hidden": 16, "eval_samples": 10,
             "seed": 9, "lambda": 0.25}))
        res = invoke(runner, ["train", "sice", str(tmp_path / "d"),
                              "--config", str(cfg_path), "--epochs", "1",
                              "--out", str(tmp_path / "run")])
        assert res.exit_code == 0, res.output
        line = next(l for l in res.output.splitlines()
                    if l.startswith("train-sice config "))
        cfg = json.loads(line.removeprefix("train-sice config "))
        assert cfg["model"]["epochs"] == 1  # flag beats config file
        assert cfg["model"]["lam"] == 0.25  # config file beats default
        assert cfg["model"]["seed"] == 9

    def test_unknown_config_key_rejected(self, runner, tmp_path):
        gen_small(runner, tmp_path / "d")
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"learning_rate": 0.1}))
        res = runner.invoke(main, ["train", "sice", str(tmp_path / "d"),
                                   "--config", str(cfg_path),
                                   "--out", str(tmp_path / "run")])
        assert res.exit_code == 2
        assert "learning_rate" in res.output


class TestExitCodes:
    def test_missing_dataset_is_io_error(self, runner, tmp_path):
        res = runner.invoke(main, ["train", "sice",
                                   str(tmp_path / "absent.csv"),
                                   "--out", str(tmp_path / "run")])
        assert res.exit_code == 4
        assert "absent.csv" in res.output

    def test_schema_error_names_column(self, runner, tmp_path):
        path = gen_small(runner, tmp_path / "d")
        text = path.read_text().replace("t_0", "tx_0", 1)
        bad = tmp_path / "bad.csv"
        bad.write_text(text)
        res = runner.invoke(main, ["train", "sice", str(bad),
                                   "--out", str(tmp_path / "run")])
        assert res.exit_code == 2
        assert "'t_0'" in res.output and "'tx_0'" in res.output

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exit_code(self, runner, tmp_path):
        gen_small(runner, tmp_path / "d")
        res = runner.invoke(main, ["train", "sice", str(tmp_path / "d"),
                                   "--lr", "1e40", "--epochs", "2",
                                   "--dz", "8", "--hidden", "16",
                                   "--samples", "5",
                                   "--out", str(tmp_path / "run")])
        assert res.exit_code == 3
        assert "divergence" in res.output

    def test_env_seed_used_and_overridden(self, runner, tmp_path):
        env = {"INFREG_SEED": "42"}
        res = invoke(runner, GEN_SMALL[:2] + ["--n", "50",
                     "--out", str(tmp_path / "a")], env=env)
        assert '"seed": 42' in res.output
        res = invoke(runner, GEN_SMALL[:2] + ["--n", "50", "--seed", "5",
                     "--out", str(tmp_path / "b")], env=env)
        assert '"seed": 5' in res.output

    def test_bad_env_seed_rejected(self, runner, tmp_path):
        res = runner.invoke(main, GEN_SMALL[:2] + [
            "--n", "50", "--out", str(tmp_path / "a")],
            env={"INFREG_SEED": "abc"})
        assert res.exit_code == 2
        assert "INFREG_SEED" in res.output


class TestSweepCli:
    def test_tiny_sweep_counts(self, runner, tmp_path):
        res = invoke(runner, ["sweep", "--lambdas", "1e-4,1",
                              "--dts", "2", "--repeats", "2",
                              "--n", "150", "--dx", "4", "--epochs", "2",
                              "--dz", "8", "--hidden", "16",
                              "--samples", "10", "--seed", "11",
                              "--out", str(tmp_path / "sw")])
        assert res.exit_code == 0, res.output
        with open(tmp_path / "sw" / "sweep_runs.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == runs.METRICS_HEADER
        assert len(rows) - 1 == 4
        with open(tmp_path / "sw" / "failures.csv") as fh:
            assert len(list(csv.reader(fh))) == 1  # header only


class TestBoundsCli:
    def test_small_run_all_pass(self, runner, tmp_path):
        res = invoke(runner, ["bounds", "--trials", "5", "--seed", "0",
                              "--out", str(tmp_path)])
        assert res.exit_code == 0, res.output
        with open(tmp_path / "bounds.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["checker"] for r in rows] == [
            "pinsker_chain", "risk_gap", "bayes_binary", "fano",
            "mi_decomposition", "probe_bound"]
        assert all(r["violations"] == "0" for r in rows)
        assert all(float(r["worst_slack"]) >= -1e-9 for r in rows)

    def test_zero_trials_empty_report(self, runner, tmp_path):
        res = invoke(runner, ["bounds", "--trials", "0",
                              "--out", str(tmp_path)])
        assert res.exit_code == 0
        assert "empty report" in res.output
        text = (tmp_path / "bounds.csv").read_text()
        assert text.strip() == "checker,trials,violations,worst_slack," \
                               "vacuous_links"

    def test_fixed_seed_identical_bytes(self, runner, tmp_path):
        for tag in ("a", "b"):
            res = invoke(runner, ["bounds", "--trials", "4", "--seed", "3",
                                  "--out", str(tmp_path / tag)])
            assert res.exit_code == 0
        assert ((tmp_path / "a" / "bounds.csv").read_bytes()
                == (tmp_path / "b" / "bounds.csv").read_bytes())


class TestReportCli:
    def test_no_runs_is_usage_error(self, runner, tmp_path):
        res = runner.invoke(main, ["report", str(tmp_path)])
        assert res.exit_code == 2

    def test_report_from_train_runs(self, runner, tmp_path):
        gen_small(runner, tmp_path / "d")
        for lam, tag in (("1e-4", "r1"), ("1", "r2"), ("10", "r3")):
            res = invoke(runner, ["train", "sice", str(tmp_path / "d"),
                                  "--lambda", lam, *TRAIN_FAST,
                                  "--out", str(tmp_path / tag)])
            assert res.exit_code == 0, res.output
        res = invoke(runner, ["report", str(tmp_path),
                              "--out", str(tmp_path / "rep")])
        assert res.exit_code == 0, res.output
        with open(tmp_path / "rep" / "report_by_lambda.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) - 1 == len(runs.METRICS_HEADER) - 3
        assert rows[0][1:4] == ["lambda=0.0001", "lambda=1.0",
                                "lambda=10.0"]

    def test_markers_match_reference_sort(self, runner, tmp_path):
        rows = [[0.1, 2, 7, 1.0, 1.0, 1.0, 1.0, 0.2, 1.0, 1.0, 1.0],
                [1.0, 2, 7, 2.0, 2.0, 2.0, 2.0, 0.1, 2.0, 2.0, 2.0]]
        runs.write_metrics_csv(tmp_path / "metrics.csv", rows)
        res = invoke(runner, ["report", str(tmp_path)])
        assert res.exit_code == 0
        with open(tmp_path / "report_by_lambda.csv") as fh:
            out = {r["metric"]: r for r in csv.DictReader(fh)}
        assert out["rmse_y"]["best"] == "lambda=0.1"
        assert out["auuc"]["best"] == "lambda=0.1"  # 0.2 > 0.1, maximized
        assert out["pehe"]["second"] == "lambda=1.0"

    def test_report_idempotent(self, runner, tmp_path):
        rows = [[0.1, 2, 7, 1.0, 1.0, 1.0, 1.0, 0.2, 1.0, 1.0, 1.0]]
        runs.write_metrics_csv(tmp_path / "metrics.csv", rows)
        outs = []
        for tag in ("a", "b"):
            res = invoke(runner, ["report", str(tmp_path),
                                  "--out", str(tmp_path / tag)])
            assert res.exit_code == 0
            outs.append((tmp_path / tag / "report.txt").read_bytes())
        assert outs[0] == outs[1]
