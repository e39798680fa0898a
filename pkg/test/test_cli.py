# test/test_cli.py

import json
import math

import pandas as pd
import pytest

from gmpo_lab import main as cli
from gmpo_lab.core.constants import ExitCode

SMALL_CONFIG = {
    "schema_version": 1,
    "group_size": 4,
    "prompts_per_round": 4,
    "inner_updates": 2,
    "step_size": 2.0,
    "total_rounds": 2,
    "seed": 5,
    "task": {"name": "parity", "min_target_len": 1, "max_target_len": 2, "max_len": 3},
    "policy": {"num_buckets": 128, "context_order": 2},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG), encoding="utf-8")
    return path


def run_cli(*argv):
    return cli.main(["--no-log-file", "--log-level", "ERROR", *map(str, argv)])


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def tree_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestTrain:
    def test_writes_all_outputs_with_gmpo_defaults(self, tmp_path, config_file):
        out = tmp_path / "run"
        assert run_cli("train", "--config", config_file, "--out", out) == ExitCode.SUCCESS
        for name in ("telemetry.csv", "policy_checkpoint.txt", "summary.json", "resolved_config.json"):
            assert (out / name).is_file()
        resolved = read_json(out / "resolved_config.json")
        assert resolved["clip"] == {"lower_log": -0.4, "upper_log": 0.4, "mode": "token"}
        assert len(pd.read_csv(out / "telemetry.csv")) == 4

    def test_grpo_defaults_are_linear(self, tmp_path, config_file):
        out = tmp_path / "run"
        assert run_cli("train", "--config", config_file, "--objective", "GRPO", "--out", out) == 0
        clip = read_json(out / "resolved_config.json")["clip"]
        assert math.exp(clip["lower_log"]) == pytest.approx(0.8)
        assert math.exp(clip["upper_log"]) == pytest.approx(1.2)

    def test_flags_override_config(self, tmp_path, config_file):
        out = tmp_path / "run"
        code = run_cli("train", "--config", config_file, "--seed", 9, "--rounds", 1,
                       "--clip-upper-linear", 1.28, "--objective", "GRPO", "--out", out)
        assert code == 0
        resolved = read_json(out / "resolved_config.json")
        assert resolved["seed"] == 9
        assert resolved["total_rounds"] == 1
        assert math.exp(resolved["clip"]["upper_log"]) == pytest.approx(1.28)
        assert math.exp(resolved["clip"]["lower_log"]) == pytest.approx(0.8)

    def test_same_seed_gives_identical_trees(self, tmp_path, config_file):
        assert run_cli("train", "--config", config_file, "--out", tmp_path / "a") == 0
        assert run_cli("train", "--config", config_file, "--out", tmp_path / "b") == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_resolved_config_reruns_identically(self, tmp_path, config_file):
        assert run_cli("train", "--config", config_file, "--out", tmp_path / "a") == 0
        assert run_cli("train", "--config", tmp_path / "a" / "resolved_config.json", "--out", tmp_path / "b") == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_bad_config_is_usage_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"group_size": 1,}', encoding="utf-8")
        assert run_cli("train", "--config", bad, "--out", tmp_path / "run") == ExitCode.USAGE

    def test_conflicting_clip_flags(self, tmp_path):
        code = run_cli("train", "--clip-lower", -0.2, "--clip-lower-linear", 0.8, "--out", tmp_path / "run")
        assert code == ExitCode.USAGE

    def test_unknown_flag(self, tmp_path):
        assert run_cli("train", "--frobnicate") == ExitCode.USAGE

    def test_invalid_clip_value(self, tmp_path, config_file):
        code = run_cli("train", "--config", config_file, "--clip-upper", -0.1, "--out", tmp_path / "run")
        assert code == ExitCode.USAGE

    def test_output_root_from_environment(self, tmp_path, config_file, monkeypatch):
        monkeypatch.setenv("GMPO_LAB_OUTPUT_ROOT", str(tmp_path / "root"))
        assert run_cli("train", "--config", config_file, "--rounds", 0) == 0
        assert (tmp_path / "root" / "train" / "summary.json").is_file()


class TestChecks:
    def test_amgm_check(self, tmp_path):
        out = tmp_path / "amgm"
        assert run_cli("amgm-check", "--instances", 500, "--seed", 3, "--out", out) == ExitCode.SUCCESS
        report = read_json(out / "check_report.json")
        assert report["passed"] and report["violations"] == 0
        assert read_json(out / "resolved_config.json")["instances"] == 500

    def test_grad_check(self, tmp_path):
        out = tmp_path / "grad"
        assert run_cli("grad-check", "--instances", 10, "--out", out) == ExitCode.SUCCESS
        assert read_json(out / "check_report.json")["max_rel_error"] < 1e-6

    @pytest.mark.parametrize("command", ["grad-check", "amgm-check"])
    def test_zero_instances_is_usage_error(self, tmp_path, command):
        assert run_cli(command, "--instances", 0, "--out", tmp_path / "x") == ExitCode.USAGE


class TestReport:
    def test_report_on_training_runs(self, tmp_path, config_file):
        assert run_cli("train", "--config", config_file, "--out", tmp_path / "a") == 0
        assert run_cli("train", "--config", config_file, "--seed", 6, "--out", tmp_path / "b") == 0
        out = tmp_path / "plots"
        code = run_cli("report", "--in", tmp_path / "a", tmp_path / "b", "--metric", "mean_entropy", "--out", out)
        assert code == 0
        assert (out / "run0_a__mean_entropy.csv").is_file()
        assert (out / "run1_b__mean_entropy.csv").is_file()
        assert read_json(out / "resolved_config.json")["metric"] == "mean_entropy"

    def test_missing_metric(self, tmp_path, config_file):
        assert run_cli("train", "--config", config_file, "--out", tmp_path / "a") == 0
        code = run_cli("report", "--in", tmp_path / "a", "--metric", "nope", "--out", tmp_path / "plots")
        assert code == ExitCode.USAGE


class TestAblate:
    def test_default_cells(self, tmp_path, config_file):
        out = tmp_path / "ablation"
        assert run_cli("ablate", "--config", config_file, "--rounds", 1, "--out", out) == 0
        cells = sorted(p.name for p in out.iterdir() if p.is_dir())
        assert cells == sorted([
            "GRPO", "GMPO_NOCLIP", "GMPO_SEQCLIP", "GMPO_NONORM", "GMPO",
            "GMPO_eps0.2", "GMPO_eps0.4", "GMPO_eps0.8", "GMPO_epsinf",
        ])
        unclipped = pd.read_csv(out / "GMPO_epsinf" / "seed_5" / "telemetry.csv")
        assert (unclipped["clip_fraction"] == 0.0).all()
        assert tree_bytes(out / "GMPO" / "seed_5") == tree_bytes(out / "GMPO_eps0.4" / "seed_5")

        comparison = pd.read_csv(out / "comparison.csv")
        assert len(comparison) == 9
        summary = read_json(out / "comparison_summary.json")
        assert summary["seeds"] == [5]
        assert {w["loser"] for w in summary["wins"]} == {"GRPO", "GMPO_SEQCLIP"}

    def test_cells_share_collection_seed(self, tmp_path, config_file):
        out = tmp_path / "ablation"
        assert run_cli("ablate", "--config", config_file, "--rounds", 1, "--no-thresholds", "--out", out) == 0
        first_rows = {
            cell: pd.read_csv(out / cell / "seed_5" / "telemetry.csv").iloc[0]["mean_reward"]
            for cell in ("GRPO", "GMPO", "GMPO_NONORM")
        }
        assert len(set(first_rows.values())) == 1

    def test_multi_seed_with_clip_higher(self, tmp_path, config_file):
        out = tmp_path / "ablation"
        code = run_cli("ablate", "--config", config_file, "--rounds", 1, "--seeds", 2,
                       "--with-clip-higher", "--no-thresholds", "--out", out)
        assert code == 0
        comparison = pd.read_csv(out / "comparison.csv")
        assert len(comparison) == 6 * 2
        assert sorted(comparison["seed"].unique().tolist()) == [5, 6]
        assert (out / "GRPO_CLIP_HIGHER" / "seed_6" / "summary.json").is_file()

    @pytest.mark.slow
    def test_parallel_jobs_match_sequential(self, tmp_path, config_file):
        assert run_cli("ablate", "--config", config_file, "--rounds", 1, "--out", tmp_path / "seq") == 0
        assert run_cli("ablate", "--config", config_file, "--rounds", 1, "--jobs", 2, "--out", tmp_path / "par") == 0
        assert tree_bytes(tmp_path / "seq") == tree_bytes(tmp_path / "par")


def test_run_exits_with_command_code(monkeypatch):
    monkeypatch.setattr("sys.argv", ["gmpo-lab", "--no-log-file", "amgm-check", "--instances", "0"])
    with pytest.raises(SystemExit) as excinfo:
        cli.run()
    assert excinfo.value.code == ExitCode.USAGE
