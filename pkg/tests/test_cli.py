"""Command-line interface: flags, artifacts, manifests, error reporting."""

import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from asht.cli import main, packaged_config_names, resolve_config_file
from asht.data import load_dataset
from asht.persist import file_sha256, load_manifest

TINY_PIPELINE = {
    "run_id": "tiny",
    "env": "two_sensor",
    "mode": "sequential",
    "threshold_c": 0.2,
    "t_cap": 8,
    "ppo": {"horizon": 8, "total_episodes": 256, "batch_episodes": 128,
            "hidden_size": 8, "eval_every": 256, "eval_episodes": 200},
    "monitor_size": 300, "monitor_horizon_min": 1, "monitor_horizon_max": 8,
    "inference_size": 300,
    "monitor_arch": {"hidden_size": 8},
    "inference_arch": {"hidden_size": 8, "bidirectional": True},
    "monitor_training": {"epochs": 6, "lr": 0.01, "batch_size": 32},
    "inference_training": {"epochs": 6, "lr": 0.01, "batch_size": 32},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny end-to-end pipeline run shared by the eval/sweep tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps(TINY_PIPELINE))
    assert main(["run-pipeline", "--config", str(cfg), "--out", str(root)]) == 0
    return root, cfg


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestConfigResolution:
    def test_repo_configs_match_packaged(self):
        # configs/ at the repo root mirrors the packaged files for browsing;
        # they must stay byte-identical.
        import asht

        pkg_dir = Path(asht.__file__).parent / "configs"
        repo_dir = Path(__file__).resolve().parent.parent / "configs"
        pkg = {p.name: p.read_bytes() for p in pkg_dir.glob("*.json")}
        repo = {p.name: p.read_bytes() for p in repo_dir.glob("*.json")}
        assert pkg and pkg == repo

    def test_packaged_names_cover_both_environments(self):
        names = packaged_config_names()
        for expected in ("two_sensor_T10", "two_sensor_seq",
                         "four_sensor_T50", "four_sensor_seq",
                         "two_sensor_env", "four_sensor_env"):
            assert expected in names

    def test_path_wins_over_name(self, tmp_path):
        p = tmp_path / "two_sensor_T10"
        p.write_text("{}")
        assert resolve_config_file(str(p)) == p

    def test_unknown_name_lists_options(self):
        with pytest.raises(FileNotFoundError, match="two_sensor_T10"):
            resolve_config_file("no_such_config")


class TestEnvValidate:
    def test_builtin_ok(self, capsys):
        assert main(["env-validate", "--config", "two_sensor"]) == 0
        assert "hypotheses=4 actions=2 observations=2" in capsys.readouterr().out

    def test_field_level_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        doc = {"hypotheses": 2, "actions": ["a"], "observations": ["0", "1"],
               "prior": [0.5, 0.5],
               "train": {"table": [[[0.5, 0.6], [0.5, 0.5]]]},
               "test": {"table": [[[0.5, 0.5], [0.5, 0.5]]]}}
        bad.write_text(json.dumps(doc))
        assert main(["env-validate", "--config", str(bad)]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert "table[0][0]" in err
        assert len(err.strip().splitlines()) == 1  # one-line machine-parsable

    def test_missing_config_flag(self, capsys):
        assert main(["env-validate"]) == 1
        assert "requires --config" in capsys.readouterr().err

    def test_unknown_subcommand_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2


class TestBaseline:
    def test_fixed_csv_row_and_manifest(self, tmp_path, capsys):
        rc = main(["baseline", "--config", "two_sensor", "--mode", "fixed",
                   "--T", "5", "--episodes", "80", "--seed", "7",
                   "--out", str(tmp_path)])
        assert rc == 0
        rows = _rows(capsys.readouterr().out)
        assert len(rows) == 1
        assert rows[0]["agent"] == "chernoff"
        assert rows[0]["T_or_c"] == "5"
        assert rows[0]["seconds"] == "0.000"
        run_dir = tmp_path / "baseline-chernoff-fixed-5-s7"
        manifest = load_manifest(run_dir / "manifest.json")
        assert manifest.seed == 7
        assert manifest.config["env_config"] == "two_sensor"
        # every artifact listed with a correct digest
        assert set(manifest.artifacts) == {"results.csv"}
        assert manifest.artifacts["results.csv"] == file_sha256(run_dir / "results.csv")

    def test_sequential_requires_c(self, tmp_path, capsys):
        rc = main(["baseline", "--config", "two_sensor", "--mode", "sequential",
                   "--episodes", "10", "--out", str(tmp_path)])
        assert rc == 1
        assert "--c" in capsys.readouterr().err

    def test_no_silent_overwrite(self, tmp_path, capsys):
        argv = ["baseline", "--config", "two_sensor", "--mode", "fixed", "--T", "3",
                "--episodes", "40", "--seed", "1", "--out", str(tmp_path)]
        assert main(argv) == 0
        assert main(argv) == 1
        assert "already exists" in capsys.readouterr().err
        assert main(argv + ["--force"]) == 0

    def test_rerun_and_workers_byte_identical(self, tmp_path, capsys):
        base = ["baseline", "--config", "two_sensor", "--mode", "sequential",
                "--c", "0.2", "--episodes", "1500", "--seed", "3"]
        outs = []
        for i, extra in enumerate(([], [], ["--workers", "2"])):
            rc = main(base + ["--out", str(tmp_path / str(i))] + extra)
            assert rc == 0
            outs.append(capsys.readouterr().out)
        assert outs[0] == outs[1] == outs[2]
        a = (tmp_path / "0/baseline-chernoff-sequential-0.2-s3/results.csv").read_bytes()
        b = (tmp_path / "2/baseline-chernoff-sequential-0.2-s3/results.csv").read_bytes()
        assert a == b

    def test_fast_flag_sets_2000_episodes(self, tmp_path, capsys):
        rc = main(["baseline", "--config", "two_sensor", "--mode", "fixed",
                   "--T", "2", "--fast", "--seed", "2", "--out", str(tmp_path)])
        assert rc == 0
        assert _rows(capsys.readouterr().out)[0]["episodes"] == "2000"

    def test_env_var_output_root(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("ASHT_RUN_DIR", str(tmp_path / "var_root"))
        rc = main(["baseline", "--config", "two_sensor", "--mode", "fixed",
                   "--T", "2", "--episodes", "30", "--seed", "9"])
        assert rc == 0
        capsys.readouterr()
        assert (tmp_path / "var_root/baseline-chernoff-fixed-2-s9/results.csv").exists()


class TestPipelineCommands:
    def test_run_pipeline_artifacts(self, workspace):
        root, _ = workspace
        run = root / "tiny"
        for name in ("policy.ckpt", "monitor.ckpt", "inference.ckpt",
                     "report.csv", "learning_curve.csv", "manifest.json"):
            assert (run / name).exists()

    def test_seed_flag_overrides_phase_seeds(self, workspace, tmp_path, capsys):
        root, cfg = workspace
        rc = main(["run-pipeline", "--config", str(cfg), "--seed", "42",
                   "--run-id", "tiny42", "--out", str(tmp_path)])
        assert rc == 0
        capsys.readouterr()
        manifest = load_manifest(tmp_path / "tiny42" / "manifest.json")
        assert manifest.config["seed_policy"] == 42
        assert manifest.config["seed_monitor"] == 43
        assert manifest.config["seed_inference"] == 44

    def test_train_policy_only(self, workspace, tmp_path, capsys):
        _, cfg = workspace
        rc = main(["train-policy", "--config", str(cfg), "--out", str(tmp_path)])
        assert rc == 0
        capsys.readouterr()
        run = tmp_path / "tiny-policy"
        assert (run / "policy.ckpt").exists()
        curve = (run / "learning_curve.csv").read_text()
        assert curve.startswith("episodes_trained,train_env_error,mean_episode_reward")
        report = (run / "report.csv").read_text()
        assert "policy,train_env_error," in report

    def test_eval_defaults_follow_run_config(self, workspace, capsys):
        root, _ = workspace
        rc = main(["eval", "--run", str(root / "tiny"), "--episodes", "200",
                   "--seed", "3", "--out", str(root / "evals")])
        assert rc == 0
        row = _rows(capsys.readouterr().out)[0]
        assert row["agent"] == "composite"
        assert row["mode"] == "sequential"
        assert row["T_or_c"] == "0.2"          # from the pipeline config
        assert float(row["mean_stop_time"]) <= 8.0  # run's t_cap, not the global 50

    def test_eval_baseline_agent_against_same_env(self, workspace, capsys):
        root, _ = workspace
        rc = main(["eval", "--run", str(root / "tiny"), "--agent", "chernoff",
                   "--episodes", "150", "--seed", "3", "--out", str(root / "evals2")])
        assert rc == 0
        assert _rows(capsys.readouterr().out)[0]["agent"] == "chernoff"


class TestDataCommands:
    def test_gen_train_chain(self, workspace, tmp_path, capsys):
        _, cfg = workspace
        out = str(tmp_path)
        rc = main(["gen-dataset", "--config", "two_sensor", "--agent", "chernoff",
                   "--label", "gamma", "--n", "150", "--horizon-min", "1",
                   "--horizon-max", "6", "--seed", "5", "--run-id", "ds",
                   "--out", out])
        assert rc == 0
        ds_path = tmp_path / "ds" / "dataset.jsonl"
        ds = load_dataset(ds_path, n_actions=2, n_observations=2)
        assert len(ds.items) == 150
        assert ds.label_kind == "scalar"
        assert {len(i.actions) for i in ds.items} <= set(range(1, 7))

        rc = main(["train-monitor", "--data", str(ds_path), "--config", str(cfg),
                   "--run-id", "mon", "--out", out])
        assert rc == 0
        assert (tmp_path / "mon" / "monitor.ckpt").exists()
        report = (tmp_path / "mon" / "report.csv").read_text()
        assert "monitor,test_mae," in report

        rc = main(["gen-dataset", "--config", "two_sensor", "--agent", "random",
                   "--label", "hypothesis", "--n", "120", "--horizon-min", "4",
                   "--horizon-max", "4", "--seed", "6", "--run-id", "dsc",
                   "--out", out])
        assert rc == 0
        rc = main(["train-inference", "--data", str(tmp_path / "dsc/dataset.jsonl"),
                   "--config", str(cfg), "--run-id", "inf", "--out", out])
        assert rc == 0
        assert (tmp_path / "inf" / "inference.ckpt").exists()
        capsys.readouterr()

    def test_policy_agent_requires_checkpoint(self, tmp_path, capsys):
        rc = main(["gen-dataset", "--config", "two_sensor", "--agent", "policy",
                   "--n", "10", "--out", str(tmp_path)])
        assert rc == 1
        assert "--policy" in capsys.readouterr().err

    def test_dataset_manifest_digests(self, tmp_path, capsys):
        rc = main(["gen-dataset", "--config", "two_sensor", "--n", "30",
                   "--horizon-max", "4", "--seed", "1", "--run-id", "d",
                   "--out", str(tmp_path)])
        assert rc == 0
        capsys.readouterr()
        manifest = load_manifest(tmp_path / "d" / "manifest.json")
        assert manifest.artifacts["dataset.jsonl"] == \
            file_sha256(tmp_path / "d" / "dataset.jsonl")
        assert manifest.config["kept"] == 30


class TestSweep:
    def test_sweep_csv(self, workspace, capsys):
        root, _ = workspace
        rc = main(["sweep", "--run", str(root / "tiny"), "--sizes", "40,80",
                   "--T", "4", "--episodes", "200", "--seed", "2",
                   "--out", str(root / "sweeps")])
        assert rc == 0
        out = capsys.readouterr().out
        lines = out.splitlines()
        assert lines[0] == "size,error,error_ci95"
        assert len(lines) == 3
        saved = (root / "sweeps" / "sweep-tiny-T4-s2" / "sweep.csv").read_text()
        assert saved == out


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "asht", "env-validate", "--config", "two_sensor"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "hypotheses=4" in proc.stdout
