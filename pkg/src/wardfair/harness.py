"""Experiment orchestration: run the full audit grid from a config file.

A run executes every (model, split, feature, mitigation-or-baseline) cell
``runs`` times with seeds derived from the master seed, then writes CSV
and Markdown tables, SVG plots, a drift report, and a manifest that lists
every requested cell as completed or failed.  Given the same config and
master seed the outputs are byte-identical, regardless of the parallelism
level.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from . import fairness
from .dataset import (
    EncodedDataset,
    SplitSpec,
    WARD_COL,
    YEAR_COL,
    encode,
    join_and_clean,
    load_tables,
    min_max_scale,
    split_indices,
)
from .drift import drift_report, project_2d, projection_to_csv
from .errors import (
    DegenerateFeature,
    DegenerateRange,
    EmptyCell,
    InvalidConfig,
    MissingColumn,
    WardfairError,
)
from .mitigation import MitigationSpec, apply as apply_mitigation
from .regressors import ModelSpec, mae, r2, train
from .schema import FeatureSchema
from .svgplot import BLUE, GREY, RED, Canvas, Scale, draw_frame, plot_area
from .util import derive_seed, population_std

BASELINE = "none"
EFFECTIVE_IMPROVEMENT = 0.25


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    data_paths: tuple[str, ...]
    schema_path: str
    models: tuple[ModelSpec, ...]
    splits: tuple[SplitSpec, ...]
    sensitive_features: tuple[str, ...] | None = None  # None: every schema sensitive column
    mitigations: tuple[MitigationSpec, ...] = ()
    runs: int = 10
    master_seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.runs < 1:
            raise InvalidConfig("runs must be at least 1")
        if not self.models or not self.splits:
            raise InvalidConfig("config needs at least one model and one split")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        base = Path(base_dir)

        def resolve(p: str) -> str:
            path = Path(p)
            return str(path if path.is_absolute() else base / path)

        try:
            models = tuple(
                ModelSpec(
                    kind=m["kind"],
                    hyperparams=m.get("hyperparams", {}),
                    seed=m.get("seed", 0),
                )
                for m in raw["models"]
            )
            splits = []
            for s in raw["splits"]:
                if s["mode"] == "temporal":
                    splits.append(SplitSpec.temporal(s["train_years"], s["test_years"]))
                else:
                    splits.append(SplitSpec.random(s["test_fraction"], s.get("seed", 0)))
            mitigations = tuple(
                MitigationSpec(
                    method=m["method"],
                    feature=m.get("feature", "*"),
                    seed=m.get("seed", 0),
                    alpha=m.get("alpha", 0.2),
                    sigma=m.get("sigma", 0.01),
                )
                for m in raw.get("mitigations", [])
            )
            features = raw.get("sensitive_features")
            if isinstance(features, dict):
                features = [f for group in features.values() for f in group]
            return cls(
                data_paths=tuple(resolve(p) for p in raw["data"]),
                schema_path=resolve(raw["schema"]),
                models=models,
                splits=tuple(splits),
                sensitive_features=tuple(features) if features else None,
                mitigations=mitigations,
                runs=int(raw.get("runs", 10)),
                master_seed=int(raw.get("master_seed", 0)),
                output_dir=resolve(raw.get("output_dir", "out")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad experiment config: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls.from_dict(raw, base_dir=Path(path).parent)


# ---------------------------------------------------------------------------
# run results and summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    model: str
    split: str
    feature: str
    mitigation: str
    run: int
    mae: float
    r2: float
    disparity: fairness.DisparityRecord


@dataclass(frozen=True)
class CellSummary:
    model: str
    split: str
    feature: str
    mitigation: str
    runs: int
    delta_mae_mean: float
    delta_mae_std: float
    mae_mean: float
    mae_std: float
    r2_mean: float
    r2_std: float
    effective: bool | None = None        # None for baseline cells
    zero_baseline: bool = False


def summarize(results: list[RunResult]) -> CellSummary:
    """Arithmetic mean and population stddev of each metric over the runs."""
    if not results:
        raise EmptyCell("cannot summarize an empty cell")
    first = results[0]
    deltas = [r.disparity.delta_mae for r in results]
    maes = [r.mae for r in results]
    r2s = [r.r2 for r in results]
    return CellSummary(
        model=first.model,
        split=first.split,
        feature=first.feature,
        mitigation=first.mitigation,
        runs=len(results),
        delta_mae_mean=float(np.mean(deltas)),
        delta_mae_std=population_std(deltas),
        mae_mean=float(np.mean(maes)),
        mae_std=population_std(maes),
        r2_mean=float(np.mean(r2s)),
        r2_std=population_std(r2s),
    )


def effectiveness_mark(baseline_mean: float, mitigated_mean: float) -> bool:
    """True iff the mitigated mean improves the baseline by strictly more
    than 25%.  A zero baseline is never marked effective (callers flag it)."""
    if baseline_mean == 0:
        return False
    return (baseline_mean - mitigated_mean) / baseline_mean > EFFECTIVE_IMPROVEMENT


# ---------------------------------------------------------------------------
# experiment execution
# ---------------------------------------------------------------------------

@dataclass
class ExperimentOutcome:
    summaries: list[CellSummary]
    results: list[RunResult]
    manifest: list[dict]
    output_dir: str

    @property
    def any_failed(self) -> bool:
        return any(entry["status"] != "completed" for entry in self.manifest)


def _prepare_split(joined: pd.DataFrame, schema: FeatureSchema, spec: SplitSpec,
                   seed: int) -> tuple[EncodedDataset, EncodedDataset]:
    run_spec = spec.reseeded(seed)
    train_idx, test_idx = split_indices(joined[YEAR_COL].to_numpy(), run_spec)
    encoded = encode(joined, schema, fit_on=train_idx)
    return encoded.take(train_idx), encoded.take(test_idx)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentOutcome:
    """Execute the full grid and write all artifacts under the output dir."""
    schema = FeatureSchema.from_json(config.schema_path)
    tables = load_tables(config.data_paths, schema)
    joined = join_and_clean(tables, schema)

    features = list(config.sensitive_features or schema.sensitive_names())
    thresholds: dict[str, float] = {}
    degenerate: list[str] = []
    for f in features:
        try:
            thresholds[f] = fairness.threshold(joined[f].to_numpy(dtype=float))
        except (KeyError, DegenerateFeature):
            degenerate.append(f)

    # data preparation is shared by every cell of a (split, run) pair; doing
    # it up front keeps the worker jobs pure
    prepared: dict[tuple[str, int], tuple[EncodedDataset, EncodedDataset]] = {}
    for spec in config.splits:
        for run in range(config.runs):
            seed = derive_seed(config.master_seed, "split", spec.key, run)
            prepared[(spec.key, run)] = _prepare_split(joined, schema, spec, seed)

    mitigation_keys = [BASELINE] + [m.key for m in config.mitigations]
    cells = [
        {
            "model": model,
            "split": spec,
            "feature": feature,
            "mitigation": mit_key,
            "run": run,
        }
        for model in config.models
        for spec in config.splits
        for feature in thresholds
        for mit_key in mitigation_keys
        for run in range(config.runs)
    ]

    # baseline models are mitigation- and feature-independent: share them
    # across features of the same (model, split, run) so the run's headline
    # metrics are unambiguous
    baseline_cache: dict[tuple[str, str, int], object] = {}

    def baseline_model(model: ModelSpec, spec: SplitSpec, run: int):
        key = (model.key, spec.key, run)
        if key not in baseline_cache:
            train_set, _ = prepared[(spec.key, run)]
            seed = derive_seed(config.master_seed, "model", model.key, spec.key, BASELINE, run)
            baseline_cache[key] = train(
                ModelSpec(model.kind, model.hyperparams, seed=seed), train_set
            )
        return baseline_cache[key]

    # warm the cache sequentially so parallel workers only read it
    for model in config.models:
        for spec in config.splits:
            for run in range(config.runs):
                if thresholds:
                    baseline_model(model, spec, run)

    mitigation_by_key = {m.key: m for m in config.mitigations}

    def execute(cell: dict) -> tuple[dict, RunResult | None, str | None]:
        model: ModelSpec = cell["model"]
        spec: SplitSpec = cell["split"]
        feature: str = cell["feature"]
        mit_key: str = cell["mitigation"]
        run_idx: int = cell["run"]
        try:
            train_set, test_set = prepared[(spec.key, run_idx)]
            if mit_key == BASELINE:
                fitted = baseline_model(model, spec, run_idx)
            else:
                proto = mitigation_by_key[mit_key]
                mit = MitigationSpec(
                    method=proto.method,
                    feature=feature,
                    seed=derive_seed(config.master_seed, "mitigation", mit_key, spec.key,
                                     feature, run_idx),
                    alpha=proto.alpha,
                    sigma=proto.sigma,
                )
                augmented = apply_mitigation(mit, train_set, thresholds[feature])
                seed = derive_seed(config.master_seed, "model", model.key, spec.key,
                                   feature, mit_key, run_idx)
                fitted = train(
                    ModelSpec(model.kind, model.hyperparams, seed=seed),
                    augmented.data,
                    augmented.weights,
                )
            preds = fitted.predict_dataset(test_set)
            groups = fairness.assign_groups(test_set, feature, thresholds[feature])
            disparity = fairness.delta_mae(fitted, test_set, groups)
            result = RunResult(
                model=model.key,
                split=spec.key,
                feature=feature,
                mitigation=mit_key,
                run=run_idx,
                mae=mae(test_set.y, preds),
                r2=r2(test_set.y, preds),
                disparity=disparity,
            )
            return cell, result, None
        except WardfairError as exc:
            return cell, None, f"{type(exc).__name__}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(execute, cells))
    else:
        outcomes = [execute(c) for c in cells]

    results: list[RunResult] = []
    manifest: list[dict] = []
    for cell, result, error in outcomes:
        entry = {
            "model": cell["model"].key,
            "split": cell["split"].key,
            "feature": cell["feature"],
            "mitigation": cell["mitigation"],
            "run": cell["run"],
            "status": "completed" if error is None else f"failed({error})",
        }
        manifest.append(entry)
        if result is not None:
            results.append(result)
    for f in degenerate:
        manifest.append(
            {"feature": f, "status": "failed(DegenerateFeature: no threshold)"}
        )

    summaries = _summarize_grid(results)
    out_dir = Path(config.output_dir)
    _write_outputs(config, schema, joined, thresholds, results, summaries, manifest, out_dir)
    return ExperimentOutcome(
        summaries=summaries, results=results, manifest=manifest, output_dir=str(out_dir)
    )


def _summarize_grid(results: list[RunResult]) -> list[CellSummary]:
    grouped: dict[tuple, list[RunResult]] = {}
    for r in results:
        grouped.setdefault((r.model, r.split, r.feature, r.mitigation), []).append(r)
    summaries: dict[tuple, CellSummary] = {
        key: summarize(sorted(rs, key=lambda r: r.run)) for key, rs in grouped.items()
    }
    out: list[CellSummary] = []
    for key in sorted(summaries):
        summary = summaries[key]
        model, split_key, feature, mitigation = key
        if mitigation != BASELINE:
            base = summaries.get((model, split_key, feature, BASELINE))
            if base is not None:
                effective = effectiveness_mark(base.delta_mae_mean, summary.delta_mae_mean)
                summary = CellSummary(
                    **{
                        **summary.__dict__,
                        "effective": effective,
                        "zero_baseline": base.delta_mae_mean == 0,
                    }
                )
        out.append(summary)
    return out


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def _write_outputs(config, schema, joined, thresholds, results, summaries, manifest, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    plots = out_dir / "plots"
    plots.mkdir(exist_ok=True)

    with open(out_dir / "runs.csv", "w", encoding="utf-8") as fh:
        fh.write("model,split,feature,mitigation,run,mae,r2,"
                 "mae_low,mae_high,delta_mae,n_low,n_high\n")
        for r in sorted(results, key=lambda r: (r.model, r.split, r.feature, r.mitigation, r.run)):
            d = r.disparity
            fh.write(
                f"{r.model},{r.split},{r.feature},{r.mitigation},{r.run},"
                f"{r.mae!r},{r.r2!r},{d.mae_low!r},{d.mae_high!r},{d.delta_mae!r},"
                f"{d.n_low},{d.n_high}\n"
            )

    with open(out_dir / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write("model,split,feature,mitigation,runs,delta_mae_mean,delta_mae_std,"
                 "mae_mean,mae_std,r2_mean,r2_std,effective,zero_baseline\n")
        for s in summaries:
            eff = "" if s.effective is None else str(s.effective).lower()
            fh.write(
                f"{s.model},{s.split},{s.feature},{s.mitigation},{s.runs},"
                f"{s.delta_mae_mean!r},{s.delta_mae_std!r},{s.mae_mean!r},{s.mae_std!r},"
                f"{s.r2_mean!r},{s.r2_std!r},{eff},{str(s.zero_baseline).lower()}\n"
            )

    (out_dir / "model_metrics.md").write_text(_model_metrics_markdown(summaries), encoding="utf-8")
    (out_dir / "mitigation_grid.md").write_text(_mitigation_markdown(summaries), encoding="utf-8")

    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    try:
        svg = trend_plot(joined, schema.target)
        (plots / f"trend_{schema.target}.svg").write_text(svg, encoding="utf-8")
    except (MissingColumn, DegenerateRange):
        pass
    for feature in sorted(thresholds):
        try:
            scaled = min_max_scale(joined[feature].to_numpy(dtype=float))
            result = scatter_regression_plot(scaled, joined[schema.target].to_numpy(dtype=float),
                                             x_label=f"{feature} (min-max scaled)",
                                             y_label=schema.target)
            (plots / f"scatter_{feature}.svg").write_text(result.svg, encoding="utf-8")
        except (DegenerateRange, WardfairError):
            pass

    years = sorted(set(joined[YEAR_COL]))
    if len(years) >= 2:
        encoded_all = encode(joined, schema)
        try:
            report = drift_report(encoded_all, [years[0]], [years[-1]])
            report.to_json(out_dir / "drift.json")
            projection_to_csv(encoded_all, project_2d(encoded_all.X), out_dir / "projection.csv")
        except WardfairError:
            pass


def _format_pm(mean: float, std: float) -> str:
    return f"{mean:.2f}±{std:.2f}"


def _model_metrics_markdown(summaries: list[CellSummary]) -> str:
    """Full-test MAE and R^2 per (model, split), from the baseline cells."""
    baselines = [s for s in summaries if s.mitigation == BASELINE]
    splits = sorted({s.split for s in baselines})
    models = sorted({s.model for s in baselines})
    lines = ["| model | " + " | ".join(f"{sp} MAE | {sp} R2" for sp in splits) + " |"]
    lines.append("| --- |" + " --- |" * (2 * len(splits)))
    for model in models:
        row = [model]
        for sp in splits:
            cells = [s for s in baselines if s.model == model and s.split == sp]
            if cells:
                # baseline metrics repeat across features by construction
                s = cells[0]
                row += [_format_pm(s.mae_mean, s.mae_std), _format_pm(s.r2_mean, s.r2_std)]
            else:
                row += ["-", "-"]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _mitigation_markdown(summaries: list[CellSummary]) -> str:
    """Disparity grid: rows feature x model, one column per mitigation;
    effective cells (improvement over 25%) are bold; the baseline column
    always comes from the same batch."""
    splits = sorted({s.split for s in summaries})
    mitigations = [BASELINE] + sorted({s.mitigation for s in summaries} - {BASELINE})
    blocks = []
    index = {(s.model, s.split, s.feature, s.mitigation): s for s in summaries}
    for sp in splits:
        lines = [f"### split: {sp}", ""]
        lines.append("| feature | model | " + " | ".join(mitigations) + " |")
        lines.append("| --- | --- |" + " --- |" * len(mitigations))
        pairs = sorted({(s.feature, s.model) for s in summaries if s.split == sp})
        for feature, model in pairs:
            row = [feature, model]
            for mit in mitigations:
                s = index.get((model, sp, feature, mit))
                if s is None:
                    row.append("-")
                    continue
                cell = _format_pm(s.delta_mae_mean, s.delta_mae_std)
                if s.effective:
                    cell = f"**{cell}**"
                if s.zero_baseline:
                    cell += " (zero baseline)"
                row.append(cell)
            lines.append("| " + " | ".join(row) + " |")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def trend_plot(rows: pd.DataFrame, column: str) -> str:
    """Per-ward polylines of one column over years (left axis, grey) plus
    the cross-ward yearly mean (right axis, blue)."""
    if column not in rows.columns:
        raise MissingColumn(f"no column named {column!r}")
    years = sorted(set(int(y) for y in rows[YEAR_COL]))
    if len(years) < 2:
        raise DegenerateRange("trend plot needs at least two years")
    values = rows[column].to_numpy(dtype=float)
    means = [float(rows.loc[rows[YEAR_COL] == y, column].mean()) for y in years]

    left, right, bottom, top = plot_area()
    x_scale = Scale(min(years), max(years), left, right)
    y_scale = Scale(float(values.min()), float(values.max()), bottom, top)
    y2_scale = Scale(min(means), max(means), bottom, top)

    canvas = Canvas()
    draw_frame(canvas, x_scale, y_scale, f"{column} by ward and year",
               "year", column, y2_scale, "yearly mean")
    for ward in sorted(set(rows[WARD_COL])):
        ward_rows = rows[rows[WARD_COL] == ward].sort_values(YEAR_COL)
        points = [
            (x_scale(int(y)), y_scale(float(v)))
            for y, v in zip(ward_rows[YEAR_COL], ward_rows[column])
        ]
        if len(points) >= 2:
            canvas.polyline(points, stroke=GREY, width=1.0, opacity=0.6)
    mean_points = [(x_scale(y), y2_scale(m)) for y, m in zip(years, means)]
    canvas.polyline(mean_points, stroke=BLUE, width=2.0)
    return canvas.render()


@dataclass(frozen=True)
class ScatterRegression:
    svg: str
    slope: float
    intercept: float
    p_value: float


def scatter_regression_plot(x, y, x_label: str = "x", y_label: str = "y") -> ScatterRegression:
    """Scatter with an OLS line, 95% confidence band, and the slope and
    two-sided slope p-value rendered in the figure."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise DegenerateRange("regression plot needs at least three points")
    if float(x.min()) == float(x.max()):
        raise DegenerateRange("x values are constant")
    fit = stats.linregress(x, y)
    n = len(x)
    sxx = float(np.sum((x - x.mean()) ** 2))
    resid = y - (fit.intercept + fit.slope * x)
    sigma2 = float(np.sum(resid**2)) / (n - 2) if n > 2 else 0.0
    t_crit = float(stats.t.ppf(0.975, n - 2)) if n > 2 else 0.0

    left, right, bottom, top = plot_area()
    grid = np.linspace(float(x.min()), float(x.max()), 50)
    line = fit.intercept + fit.slope * grid
    half = t_crit * np.sqrt(sigma2 * (1.0 / n + (grid - x.mean()) ** 2 / sxx))
    y_lo = min(float(y.min()), float((line - half).min()))
    y_hi = max(float(y.max()), float((line + half).max()))
    x_scale = Scale(float(x.min()), float(x.max()), left, right)
    y_scale = Scale(y_lo, y_hi, bottom, top)

    canvas = Canvas()
    draw_frame(canvas, x_scale, y_scale, f"{y_label} vs {x_label}", x_label, y_label)
    band = [(x_scale(g), y_scale(v)) for g, v in zip(grid, line + half)]
    band += [(x_scale(g), y_scale(v)) for g, v in zip(grid[::-1], (line - half)[::-1])]
    canvas.polygon(band)
    for xi, yi in zip(x, y):
        canvas.circle(x_scale(xi), y_scale(yi))
    canvas.polyline([(x_scale(g), y_scale(v)) for g, v in zip(grid, line)], stroke=RED, width=2.0)
    canvas.text(left + 8, top + 14, f"slope={fit.slope:.4f}, p={fit.pvalue:.3g}", size=12)
    return ScatterRegression(
        svg=canvas.render(),
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        p_value=float(fit.pvalue),
    )


# re-export: the fixture generator is part of the harness surface
from .synth import FixturePlan, generate_fixture, write_fixture  # noqa: E402,F401
