import json

import pytest
from click.testing import CliRunner

from wardfair.cli import main
from wardfair.synth import FixturePlan, write_fixture


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    plan = FixturePlan(wards=14, seed=31, group_noise={"race_b": 2.0})
    paths, schema_path = write_fixture(plan, root / "fixture")
    return root, paths, schema_path


def data_args(paths, schema_path):
    args = []
    for p in paths:
        args += ["-d", p]
    return args + ["-s", schema_path]


class TestCli:
    def test_synth(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, ["synth", "--wards", "6", "--seed", "2",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "identity.csv").exists()
        assert (tmp_path / "schema.json").exists()

    def test_ingest(self, workspace, tmp_path):
        root, paths, schema_path = workspace
        runner = CliRunner()
        result = runner.invoke(main, ["ingest", *data_args(paths, schema_path),
                                      "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "encoded.csv").exists()
        assert (tmp_path / "joined.csv").exists()

    def test_train_reports_metrics(self, workspace):
        root, paths, schema_path = workspace
        runner = CliRunner()
        result = runner.invoke(main, ["train", *data_args(paths, schema_path),
                                      "--model", "decision_tree", "--split", "random"])
        assert result.exit_code == 0, result.output
        assert "MAE=" in result.output and "R2=" in result.output

    def test_train_save_and_reload(self, workspace, tmp_path):
        root, paths, schema_path = workspace
        save_path = tmp_path / "model.json"
        runner = CliRunner()
        result = runner.invoke(main, ["train", *data_args(paths, schema_path),
                                      "--model", "linear", "--save", str(save_path)])
        assert result.exit_code == 0, result.output
        assert save_path.exists()
        from wardfair.regressors import load_model

        assert load_model(save_path).spec.kind == "linear"

    def test_audit(self, workspace, tmp_path):
        root, paths, schema_path = workspace
        runner = CliRunner()
        result = runner.invoke(main, ["audit", *data_args(paths, schema_path),
                                      "--model", "linear", "--split", "random",
                                      "--features", "race_b,rel_a",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "audit.csv").read_text().splitlines()
        assert len(lines) == 3

    def test_audit_with_ablation(self, workspace, tmp_path):
        root, paths, schema_path = workspace
        runner = CliRunner()
        result = runner.invoke(main, ["audit", *data_args(paths, schema_path),
                                      "--model", "linear", "--split", "random",
                                      "--ablate", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "ablation.csv").exists()

    def test_mitigate(self, workspace, tmp_path):
        root, paths, schema_path = workspace
        runner = CliRunner()
        result = runner.invoke(main, ["mitigate", *data_args(paths, schema_path),
                                      "--method", "oversample", "--feature", "race_b",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "mitigated_oversample_race_b.csv").exists()

    def test_intersect(self, workspace, tmp_path):
        root, paths, schema_path = workspace
        runner = CliRunner()
        result = runner.invoke(main, ["intersect", *data_args(paths, schema_path),
                                      "--model", "linear", "--split", "random",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "intersection.csv").exists()

    def test_drift(self, workspace, tmp_path):
        root, paths, schema_path = workspace
        runner = CliRunner()
        result = runner.invoke(main, ["drift", *data_args(paths, schema_path),
                                      "--cohort-a", "2016", "--cohort-b", "2022",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "drift.json").exists()
        assert "mmd=" in result.output

    def test_run_success_exit_zero(self, workspace, tmp_path):
        root, paths, schema_path = workspace
        config = {
            "data": paths,
            "schema": schema_path,
            "models": [{"kind": "linear"}],
            "splits": [{"mode": "random", "test_fraction": 0.25, "seed": 2}],
            "sensitive_features": ["race_b"],
            "runs": 1,
            "master_seed": 3,
            "output_dir": str(tmp_path / "out"),
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        runner = CliRunner()
        result = runner.invoke(main, ["run", "--config", str(config_path)])
        assert result.exit_code == 0, result.output
        assert "1/1 cells completed" in result.output.replace("cells", "cells")

    def test_run_partial_failure_exit_one(self, workspace, tmp_path):
        root, paths, schema_path = workspace
        config = {
            "data": paths,
            "schema": schema_path,
            "models": [{"kind": "linear"}],
            "splits": [{"mode": "random", "test_fraction": 0.25, "seed": 2}],
            "sensitive_features": ["race_b", "ghost_feature"],
            "runs": 1,
            "output_dir": str(tmp_path / "out"),
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        runner = CliRunner()
        result = runner.invoke(main, ["run", "--config", str(config_path)])
        assert result.exit_code == 1

    def test_run_invalid_config_exit_two(self, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"data": []}))
        runner = CliRunner()
        result = runner.invoke(main, ["run", "--config", str(config_path)])
        assert result.exit_code == 2
