import filecmp
import json
import re
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from wardfair.errors import DegenerateRange, EmptyCell, InvalidConfig, MissingColumn
from wardfair.fairness import DisparityRecord
from wardfair.harness import (
    ExperimentConfig,
    RunResult,
    effectiveness_mark,
    run_experiment,
    scatter_regression_plot,
    summarize,
    trend_plot,
)
from wardfair.svgplot import HEIGHT, MARGIN, WIDTH
from wardfair.synth import FixturePlan, write_fixture


def stub_result(delta, run=0):
    return RunResult(
        model="m", split="s", feature="f", mitigation="none", run=run,
        mae=delta, r2=0.9,
        disparity=DisparityRecord("f", 0.0, delta, delta, 5, 5),
    )


class TestSummarize:
    def test_mean_and_population_stddev(self):
        summary = summarize([stub_result(2.0, 0), stub_result(4.0, 1)])
        assert summary.delta_mae_mean == 3.0
        assert summary.delta_mae_std == 1.0  # population convention

    def test_single_run(self):
        summary = summarize([stub_result(5.0)])
        assert summary.delta_mae_std == 0.0

    def test_constant_runs(self):
        summary = summarize([stub_result(2.5, i) for i in range(4)])
        assert summary.delta_mae_std == 0.0

    def test_empty_cell(self):
        with pytest.raises(EmptyCell):
            summarize([])


class TestEffectivenessMark:
    def test_reference_values(self):
        assert effectiveness_mark(14.48, 9.77) is True
        assert effectiveness_mark(13.23, 24.39) is False

    def test_exactly_25_percent_is_not_enough(self):
        assert effectiveness_mark(10.0, 7.5) is False

    def test_zero_baseline_not_effective(self):
        assert effectiveness_mark(0.0, 0.0) is False


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture")
    plan = FixturePlan(wards=16, seed=21, group_noise={"race_b": 2.0})
    paths, schema_path = write_fixture(plan, out)
    return paths, schema_path


def make_config(fixture_dir, out_dir, **overrides):
    paths, schema_path = fixture_dir
    raw = {
        "data": paths,
        "schema": schema_path,
        "models": [{"kind": "decision_tree"}],
        "splits": [{"mode": "random", "test_fraction": 0.25, "seed": 5}],
        "sensitive_features": ["race_b"],
        "mitigations": [],
        "runs": 1,
        "master_seed": 7,
        "output_dir": str(out_dir),
    }
    raw.update(overrides)
    return ExperimentConfig.from_dict(raw)


class TestRunExperiment:
    def test_minimal_config_one_result_per_feature(self, fixture_dir, tmp_path):
        config = make_config(fixture_dir, tmp_path / "out",
                             sensitive_features=["race_a", "race_b", "rel_a"])
        outcome = run_experiment(config)
        assert len(outcome.results) == 3
        assert not outcome.any_failed
        features = {r.feature for r in outcome.results}
        assert features == {"race_a", "race_b", "rel_a"}

    def test_manifest_complete_and_baseline_included(self, fixture_dir, tmp_path):
        config = make_config(
            fixture_dir, tmp_path / "out",
            mitigations=[{"method": "reweight"}], runs=2,
        )
        outcome = run_experiment(config)
        # 1 model x 1 split x 1 feature x (baseline + reweight) x 2 runs
        assert len(outcome.manifest) == 4
        assert all(e["status"] == "completed" for e in outcome.manifest)
        mitigations = {s.mitigation for s in outcome.summaries}
        assert mitigations == {"none", "reweight"}
        marked = [s for s in outcome.summaries if s.mitigation == "reweight"]
        assert marked[0].effective in (True, False)

    def test_byte_identical_reruns(self, fixture_dir, tmp_path):
        config_a = make_config(fixture_dir, tmp_path / "a", runs=2,
                               mitigations=[{"method": "oversample"}])
        config_b = make_config(fixture_dir, tmp_path / "b", runs=2,
                               mitigations=[{"method": "oversample"}])
        run_experiment(config_a)
        run_experiment(config_b)
        for name in ["runs.csv", "summary.csv", "manifest.json",
                     "model_metrics.md", "mitigation_grid.md"]:
            assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)

    def test_parallel_schedule_identical(self, fixture_dir, tmp_path):
        config_a = make_config(fixture_dir, tmp_path / "seq", runs=2,
                               mitigations=[{"method": "reweight"}, {"method": "mixup"}])
        config_b = make_config(fixture_dir, tmp_path / "par", runs=2,
                               mitigations=[{"method": "reweight"}, {"method": "mixup"}])
        run_experiment(config_a, jobs=1)
        run_experiment(config_b, jobs=4)
        assert filecmp.cmp(tmp_path / "seq" / "runs.csv", tmp_path / "par" / "runs.csv",
                           shallow=False)

    def test_unknown_feature_reported_not_fatal(self, fixture_dir, tmp_path):
        config = make_config(fixture_dir, tmp_path / "out",
                             sensitive_features=["race_b", "not_a_column"])
        outcome = run_experiment(config)
        failed = [e for e in outcome.manifest if e["status"] != "completed"]
        assert len(failed) == 1
        assert failed[0]["feature"] == "not_a_column"
        assert outcome.any_failed
        completed = [e for e in outcome.manifest if e["status"] == "completed"]
        assert completed  # siblings still ran

    def test_artifacts_written(self, fixture_dir, tmp_path):
        out = tmp_path / "out"
        config = make_config(fixture_dir, out)
        run_experiment(config)
        for name in ["runs.csv", "summary.csv", "manifest.json", "model_metrics.md",
                     "mitigation_grid.md", "drift.json", "projection.csv"]:
            assert (out / name).exists()
        assert (out / "plots" / "trend_crime_rate.svg").exists()
        assert (out / "plots" / "scatter_race_b.svg").exists()

    def test_manifest_json_matches_outcome(self, fixture_dir, tmp_path):
        out = tmp_path / "out"
        outcome = run_experiment(make_config(fixture_dir, out))
        on_disk = json.loads((out / "manifest.json").read_text())
        assert len(on_disk) == len(outcome.manifest)


class TestConfigValidation:
    def test_runs_must_be_positive(self, fixture_dir, tmp_path):
        with pytest.raises(InvalidConfig):
            make_config(fixture_dir, tmp_path, runs=0)

    def test_needs_models(self, fixture_dir, tmp_path):
        with pytest.raises(InvalidConfig):
            make_config(fixture_dir, tmp_path, models=[])

    def test_bad_structure(self):
        with pytest.raises(InvalidConfig):
            ExperimentConfig.from_dict({"data": []})

    def test_from_json_resolves_relative_paths(self, fixture_dir, tmp_path):
        paths, schema_path = fixture_dir
        raw = {
            "data": [Path(p).name for p in paths],
            "schema": Path(schema_path).name,
            "models": [{"kind": "linear"}],
            "splits": [{"mode": "random", "test_fraction": 0.2, "seed": 1}],
            "runs": 1,
        }
        config_path = Path(paths[0]).parent / "config.json"
        config_path.write_text(json.dumps(raw))
        config = ExperimentConfig.from_json(config_path)
        assert all(Path(p).exists() for p in config.data_paths)


def polyline_points(svg):
    out = []
    for match in re.finditer(r'<polyline points="([^"]+)"', svg):
        pts = [tuple(map(float, pair.split(","))) for pair in match.group(1).split()]
        out.append(pts)
    return out


class TestTrendPlot:
    def rows(self, values_by_ward):
        records = []
        for ward, values in values_by_ward.items():
            for year, v in zip(range(2016, 2016 + len(values)), values):
                records.append({"ward": ward, "year": year, "v": float(v)})
        return pd.DataFrame(records)

    def test_constant_column_flat_lines(self):
        svg = trend_plot(self.rows({"A": [5, 5, 5], "B": [5, 5, 5]}), "v")
        for pts in polyline_points(svg):
            ys = {y for _, y in pts}
            assert len(ys) == 1

    def test_vertices_match_direct_coordinates(self):
        values = {"A": [1.0, 3.0], "B": [2.0, 4.0]}
        svg = trend_plot(self.rows(values), "v")
        left, right = MARGIN["left"], WIDTH - MARGIN["right"]
        bottom, top = HEIGHT - MARGIN["bottom"], MARGIN["top"]

        def px(year):
            return left + (year - 2016) / 1 * (right - left)

        def py(v):
            return bottom + (v - 1.0) / 3.0 * (top - bottom)

        lines = polyline_points(svg)
        expected_a = [(round(px(2016), 2), round(py(1.0), 2)), (round(px(2017), 2), round(py(3.0), 2))]
        got_a = [(round(x, 2), round(y, 2)) for x, y in lines[0]]
        assert got_a == expected_a

    def test_mean_line_present_on_second_axis(self):
        svg = trend_plot(self.rows({"A": [0.0, 10.0], "B": [10.0, 20.0]}), "v")
        lines = polyline_points(svg)
        assert len(lines) == 3  # two wards + the mean line

    def test_missing_column(self):
        with pytest.raises(MissingColumn):
            trend_plot(self.rows({"A": [1, 2]}), "nope")


class TestScatterRegressionPlot:
    def test_perfect_line(self):
        x = np.linspace(0, 1, 30)
        result = scatter_regression_plot(x, 2.0 * x + 1.0)
        assert result.slope == pytest.approx(2.0, abs=1e-12)
        assert result.p_value < 1e-20

    def test_slope_and_p_match_closed_form(self):
        rng = np.random.default_rng(14)
        x = rng.uniform(size=100)
        y = 3.0 * x + rng.normal(0, 0.1, 100)
        result = scatter_regression_plot(x, y)
        # closed-form least squares and slope t-test
        sxx = np.sum((x - x.mean()) ** 2)
        slope = np.sum((x - x.mean()) * (y - y.mean())) / sxx
        resid = y - (y.mean() + slope * (x - x.mean()))
        se = np.sqrt(np.sum(resid**2) / (len(x) - 2) / sxx)
        t = slope / se
        p = 2 * stats.t.sf(abs(t), len(x) - 2)
        assert result.slope == pytest.approx(slope, abs=1e-10)
        assert result.p_value == pytest.approx(p, rel=1e-9)
        assert 2.8 <= result.slope <= 3.2

    def test_independent_data_rarely_significant(self):
        rng = np.random.default_rng(15)
        x = rng.uniform(size=200)
        y = rng.normal(size=200)
        hits = 0
        for _ in range(100):
            y_perm = rng.permutation(y)
            hits += scatter_regression_plot(x, y_perm).p_value < 0.05
        assert hits <= 10

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateRange):
            scatter_regression_plot([1.0, 2.0], [1.0, 2.0])
        with pytest.raises(DegenerateRange):
            scatter_regression_plot([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_annotation_present(self):
        x = np.linspace(0, 1, 20)
        result = scatter_regression_plot(x, x * 0.5 + 0.1)
        assert "slope=" in result.svg and "p=" in result.svg
