"""Command-line contract: exit codes, artifacts, idempotency."""

import json
import os

import numpy as np
import pytest

from eloss.cli import main
from eloss.config import (ConfigError, load_experiment_config,
                          parse_experiment_config)

TINY_EXPERIMENT = {
    "schema": "eloss-exp-1",
    "dataset": {"name": "blobs-mlp", "seed": 0,
                "train_size": 48, "val_size": 32, "test_size": 32},
    "train": {"epochs": 2, "alpha": 0.01, "eloss_coverage": 2,
              "lambda1": 0.001, "lambda2": 0.0, "seed": 0},
    "noise": ["noise1", "noise2"],
}


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(TINY_EXPERIMENT))
    return path


@pytest.fixture()
def samples_csv(tmp_path):
    path = tmp_path / "samples.csv"
    rng = np.random.default_rng(0)
    np.savetxt(path, rng.random((40, 3)), delimiter=",")
    return path


class TestExperimentConfig:
    def test_defaults_materialized(self):
        cfg = parse_experiment_config({"dataset": {"name": "blobs-mlp"}})
        doc = cfg.to_dict()
        assert doc["schema"] == "eloss-exp-1"
        assert doc["train"]["lr"] == 1e-3
        assert doc["model"]["blocks"] == 3
        assert doc["analysis"]["split"] == "test"

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            parse_experiment_config({"mystery": 1})
        with pytest.raises(ConfigError):
            parse_experiment_config({"train": {"learning_rate": 0.1}})

    def test_bad_schema_rejected(self):
        with pytest.raises(ConfigError):
            parse_experiment_config({"schema": "eloss-exp-0"})

    def test_noise_presets_expand(self):
        cfg = parse_experiment_config({"noise": ["noise1"]})
        assert cfg.noise[0]["ratio"] == 0.1 and cfg.noise[0]["sigma"] == 0.5

    def test_coverage_bound_checked(self):
        with pytest.raises(ConfigError):
            parse_experiment_config({"train": {"eloss_coverage": 4}})

    def test_hash_stable_and_seed_sensitive(self):
        a = parse_experiment_config({"train": {"seed": 0}})
        b = parse_experiment_config({"train": {"seed": 0}})
        c = parse_experiment_config({"train": {"seed": 1}})
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()


class TestEntropyCommand:
    def test_prints_estimate(self, samples_csv, capsys):
        assert main(["entropy", str(samples_csv), "-k", "2"]) == 0
        out = capsys.readouterr().out
        assert "H(X,k=2)" in out and "n=40" in out and "d=3" in out

    def test_json_output(self, samples_csv, capsys):
        assert main(["entropy", str(samples_csv), "--json"]) == 0
        record = json.loads(capsys.readouterr().out)
        assert set(record) == {"value", "k", "n", "d", "clamped_count"}

    def test_k_zero_is_usage_error(self, samples_csv):
        assert main(["entropy", str(samples_csv), "-k", "0"]) == 2

    def test_k_too_large_is_usage_error(self, samples_csv):
        assert main(["entropy", str(samples_csv), "-k", "40"]) == 2

    def test_malformed_csv(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1.0,2.0\nnot,a,number\n")
        assert main(["entropy", str(bad)]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["entropy", str(tmp_path / "nope.csv")]) == 2

    def test_epsilon_env_override(self, samples_csv, capsys, monkeypatch):
        # a huge clamp floor forces every distance to clamp
        monkeypatch.setenv("ELOSS_EPSILON", "1e6")
        assert main(["entropy", str(samples_csv), "--json"]) == 0
        record = json.loads(capsys.readouterr().out)
        assert record["clamped_count"] == 40


class TestTrainCommand:
    def test_writes_run_artifacts(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "runs"
        assert main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
        run_dirs = list(out.iterdir())
        assert len(run_dirs) == 1
        names = {p.name for p in run_dirs[0].iterdir()}
        assert {"config.json", "runlog.jsonl", "runlog.csv", "curve.csv",
                "ckpt.json", "timing.json"} <= names

    def test_rerun_is_byte_identical(self, tiny_config, tmp_path):
        out = tmp_path / "runs"
        main(["train", "--config", str(tiny_config), "--out", str(out)])
        run_dir = next(out.iterdir())
        deterministic = ("config.json", "runlog.jsonl", "runlog.csv",
                         "curve.csv", "ckpt.json")
        before = {n: (run_dir / n).read_bytes() for n in deterministic}
        main(["train", "--config", str(tiny_config), "--out", str(out)])
        for name in deterministic:
            assert (run_dir / name).read_bytes() == before[name], name

    def test_seed_override_changes_run_dir(self, tiny_config, tmp_path):
        out = tmp_path / "runs"
        main(["train", "--config", str(tiny_config), "--out", str(out)])
        main(["train", "--config", str(tiny_config), "--seed", "9",
              "--out", str(out)])
        assert len(list(out.iterdir())) == 2

    def test_invalid_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"train": {"epochs": 0}}))
        assert main(["train", "--config", str(bad), "--out", str(tmp_path / "r")]) == 2

    def test_unparseable_json_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        assert main(["train", "--config", str(bad), "--out", str(tmp_path / "r")]) == 2

    def test_coverage_out_of_range_exits_2(self, tmp_path):
        doc = json.loads(json.dumps(TINY_EXPERIMENT))
        doc["train"]["eloss_coverage"] = 7
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        assert main(["train", "--config", str(bad), "--out", str(tmp_path / "r")]) == 2

    def test_divergence_exits_3_with_partial_log(self, tmp_path):
        doc = json.loads(json.dumps(TINY_EXPERIMENT))
        doc["train"].update({"optimizer": "sgd", "lr": 1e5, "alpha": 0.0,
                             "eloss_coverage": 0, "epochs": 5})
        path = tmp_path / "div.json"
        path.write_text(json.dumps(doc))
        out = tmp_path / "runs"
        assert main(["train", "--config", str(path), "--out", str(out)]) == 3
        run_dir = next(out.iterdir())
        assert "diverged" in (run_dir / "runlog.jsonl").read_text()

    def test_parallel_configs(self, tmp_path):
        paths = []
        for seed in (0, 1):
            doc = json.loads(json.dumps(TINY_EXPERIMENT))
            doc["train"]["seed"] = seed
            p = tmp_path / f"exp{seed}.json"
            p.write_text(json.dumps(doc))
            paths.append(p)
        out = tmp_path / "runs"
        rc = main(["train", "--config", str(paths[0]), "--config", str(paths[1]),
                   "--out", str(out), "--parallel", "2"])
        assert rc == 0
        assert len(list(out.iterdir())) == 2


class TestReportCommand:
    @pytest.fixture()
    def two_runs(self, tmp_path):
        out = tmp_path / "runs"
        dirs = []
        for alpha in (0.0, 0.01):
            doc = json.loads(json.dumps(TINY_EXPERIMENT))
            doc["train"]["alpha"] = alpha
            p = tmp_path / f"exp-{alpha}.json"
            p.write_text(json.dumps(doc))
            before = set(out.iterdir()) if out.exists() else set()
            main(["train", "--config", str(p), "--out", str(out)])
            dirs.append(next(iter(set(out.iterdir()) - before)))
        return dirs

    def test_curves_mode_emits_table_and_svg(self, two_runs, tmp_path):
        report = tmp_path / "report"
        rc = main(["report", "curves", str(two_runs[0]), str(two_runs[1]),
                   "--out", str(report)])
        assert rc == 0
        lines = (report / "curves.csv").read_text().splitlines()
        assert lines[0] == "run,max,mavp_abs,mavp_literal"
        assert len(lines) == 4 and lines[-1].startswith("delta,")
        assert (report / "curves.svg").read_text().startswith("<svg")

    def test_curves_single_run_no_delta(self, two_runs, tmp_path):
        report = tmp_path / "single"
        main(["report", "curves", str(two_runs[0]), "--out", str(report)])
        lines = (report / "curves.csv").read_text().splitlines()
        assert len(lines) == 2 and not lines[-1].startswith("delta,")

    def test_anomaly_mode(self, two_runs, tmp_path):
        report = tmp_path / "anomaly"
        rc = main(["report", "anomaly", str(two_runs[1]), "--out", str(report)])
        assert rc == 0
        rows = (report / "anomaly.csv").read_text().splitlines()
        assert rows[0] == "condition,mean_confidence,mean_eloss,pct_conf,pct_eloss"
        clean = rows[1].split(",")
        assert clean[0] == "clean" and float(clean[3]) == 0.0 and float(clean[4]) == 0.0
        doc = json.loads((report / "anomaly.json").read_text())
        assert len(doc["rows"]) == 3

    def test_sweep_mode(self, tmp_path):
        out = tmp_path / "runs"
        dirs = []
        for cov in (0, 1):
            doc = json.loads(json.dumps(TINY_EXPERIMENT))
            doc["train"]["eloss_coverage"] = cov
            p = tmp_path / f"exp-c{cov}.json"
            p.write_text(json.dumps(doc))
            before = set(out.iterdir()) if out.exists() else set()
            main(["train", "--config", str(p), "--out", str(out)])
            dirs.append(next(iter(set(out.iterdir()) - before)))
        report = tmp_path / "sweep"
        rc = main(["report", "sweep", str(dirs[0]), str(dirs[1]), "--out", str(report)])
        assert rc == 0
        lines = (report / "sweep.csv").read_text().splitlines()
        assert lines[0] == "coverage,final_metric,max_metric,step_ms"
        assert lines[1].startswith("0,") and lines[2].startswith("1,")

    def test_missing_run_dir_exits_2(self, tmp_path):
        assert main(["report", "curves", str(tmp_path / "ghost"),
                     "--out", str(tmp_path / "r")]) == 2

    def test_usage_error_exit_code(self):
        assert main(["report", "nonsense-mode", "dir"]) == 2
