"""Command-line interface.

Every subcommand builds its pipeline from raw CSVs plus a schema manifest,
so invocations are self-contained and reproducible from the seeds alone.
Exit codes: 0 success, 1 partial per-cell failure in `run`, 2 invalid
configuration or arguments.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from . import fairness, intersectional
from .dataset import SplitSpec, encode, join_and_clean, load_tables, split_indices
from .drift import drift_report, project_2d, projection_to_csv
from .errors import InvalidConfig, WardfairError
from .harness import ExperimentConfig, run_experiment
from .mitigation import MitigationSpec, apply as apply_mitigation
from .regressors import MODEL_KINDS, ModelSpec, mae, r2, save_model, train
from .schema import FeatureSchema
from .synth import FixturePlan, write_fixture

OUTPUT_ENV = "WARDFAIR_OUT"


def _out_dir(value: str | None) -> Path:
    path = Path(value or os.environ.get(OUTPUT_ENV, "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(data, schema_path):
    schema = FeatureSchema.from_json(schema_path)
    tables = load_tables(list(data), schema)
    return schema, join_and_clean(tables, schema)


def _parse_years(text: str) -> list[int]:
    years: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            years.extend(range(int(lo), int(hi) + 1))
        elif part:
            years.append(int(part))
    return years


def _split_spec(joined, mode, train_years, test_years, test_fraction, seed) -> SplitSpec:
    if mode == "temporal":
        years = sorted(set(int(y) for y in joined["year"]))
        train_set = _parse_years(train_years) if train_years else years[:-1]
        test_set = _parse_years(test_years) if test_years else years[-1:]
        return SplitSpec.temporal(train_set, test_set)
    return SplitSpec.random(test_fraction, seed)


def _prepare(joined, schema, spec):
    train_idx, test_idx = split_indices(joined["year"].to_numpy(), spec)
    encoded = encode(joined, schema, fit_on=train_idx)
    return encoded, encoded.take(train_idx), encoded.take(test_idx)


data_opts = [
    click.option("--data", "-d", multiple=True, required=True,
                 type=click.Path(exists=True), help="Raw CSV file (repeatable)."),
    click.option("--schema", "-s", "schema_path", required=True,
                 type=click.Path(exists=True), help="JSON schema manifest."),
]

split_opts = [
    click.option("--split", "split_mode", type=click.Choice(["temporal", "random"]),
                 default="temporal", show_default=True),
    click.option("--train-years", default=None, help="e.g. 2016-2021 (temporal mode)."),
    click.option("--test-years", default=None, help="e.g. 2022 (temporal mode)."),
    click.option("--test-fraction", default=0.2, show_default=True, type=float),
    click.option("--seed", default=0, show_default=True, type=int),
]


def add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@click.group()
def main():
    """Fairness audit and bias mitigation for ward-level regression."""


@main.command()
@add_options(data_opts)
@click.option("--out", default=None, help="Output directory (default: $WARDFAIR_OUT or cwd).")
def ingest(data, schema_path, out):
    """Join, clean, and encode the raw tables; write the encoded CSV."""
    out_dir = _out_dir(out)
    schema, joined = _load(data, schema_path)
    encoded = encode(joined, schema)
    joined.to_csv(out_dir / "joined.csv", index=False)
    encoded.to_csv(out_dir / "encoded.csv")
    click.echo(f"{len(encoded)} rows, {encoded.n_features} encoded columns -> {out_dir}")


@main.command(name="train")
@add_options(data_opts)
@add_options(split_opts)
@click.option("--model", "model_kind", type=click.Choice(MODEL_KINDS), default="random_forest",
              show_default=True)
@click.option("--save", "save_path", default=None, help="Write the fitted model as JSON.")
def train_cmd(data, schema_path, split_mode, train_years, test_years, test_fraction,
              seed, model_kind, save_path):
    """Train one model and report its test MAE and R^2."""
    schema, joined = _load(data, schema_path)
    spec = _split_spec(joined, split_mode, train_years, test_years, test_fraction, seed)
    _, train_set, test_set = _prepare(joined, schema, spec)
    model = train(ModelSpec(model_kind, seed=seed), train_set)
    preds = model.predict_dataset(test_set)
    click.echo(f"model={model_kind} split={spec.key} "
               f"MAE={mae(test_set.y, preds):.4f} R2={r2(test_set.y, preds):.4f}")
    if save_path:
        save_model(model, save_path)
        click.echo(f"saved -> {save_path}")


@main.command()
@add_options(data_opts)
@add_options(split_opts)
@click.option("--model", "model_kind", type=click.Choice(MODEL_KINDS), default="random_forest",
              show_default=True)
@click.option("--features", default=None, help="Comma-separated sensitive features "
              "(default: all declared in the schema).")
@click.option("--ablate", is_flag=True, help="Also retrain without the sensitive inputs "
              "and report the disparity difference.")
@click.option("--out", default=None)
def audit(data, schema_path, split_mode, train_years, test_years, test_fraction, seed,
          model_kind, features, ablate, out):
    """Audit per-feature group disparities of a freshly trained model."""
    out_dir = _out_dir(out)
    schema, joined = _load(data, schema_path)
    spec = _split_spec(joined, split_mode, train_years, test_years, test_fraction, seed)
    _, train_set, test_set = _prepare(joined, schema, spec)
    names = [f.strip() for f in features.split(",")] if features else schema.sensitive_names()
    thresholds = {f: fairness.threshold(joined[f].to_numpy(dtype=float)) for f in names}
    model_spec = ModelSpec(model_kind, seed=seed)
    model = train(model_spec, train_set)
    result = fairness.single_feature_audit(model, test_set, names, thresholds)
    fairness.audit_to_csv(result, out_dir / "audit.csv")
    click.echo(fairness.audit_to_markdown(result))
    if ablate:
        records = fairness.ablation_audit(model_spec, train_set, test_set, names, thresholds)
        with open(out_dir / "ablation.csv", "w", encoding="utf-8") as fh:
            fh.write("feature,delta_with,delta_without,abs_diff\n")
            for r in records:
                fh.write(f"{r.feature},{r.delta_with!r},{r.delta_without!r},{r.abs_diff!r}\n")
        click.echo(f"ablation -> {out_dir / 'ablation.csv'}")


@main.command()
@add_options(data_opts)
@click.option("--method", type=click.Choice(["oversample", "mixup", "perturb", "reweight"]),
              required=True)
@click.option("--feature", required=True)
@click.option("--alpha", default=0.2, show_default=True, type=float)
@click.option("--sigma", default=0.01, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=None)
def mitigate(data, schema_path, method, feature, alpha, sigma, seed, out):
    """Apply one mitigation to the full dataset and write the result."""
    out_dir = _out_dir(out)
    schema, joined = _load(data, schema_path)
    encoded = encode(joined, schema)
    spec = MitigationSpec(method=method, feature=feature, seed=seed, alpha=alpha, sigma=sigma)
    augmented = apply_mitigation(spec, encoded)
    path = out_dir / f"mitigated_{method}_{feature}.csv"
    augmented.to_csv(path)
    click.echo(f"{len(augmented.data)} rows ({len(encoded)} originals) -> {path}")


@main.command()
@add_options(data_opts)
@add_options(split_opts)
@click.option("--model", "model_kind", type=click.Choice(MODEL_KINDS), default="random_forest",
              show_default=True)
@click.option("--race", default=None, help="Comma-separated primary features "
              "(default: schema race columns).")
@click.option("--religion", default=None, help="Comma-separated secondary features "
              "(default: schema religion columns).")
@click.option("--weighting", type=click.Choice(["uniform", "count"]), default="uniform",
              show_default=True)
@click.option("--out", default=None)
def intersect(data, schema_path, split_mode, train_years, test_years, test_fraction, seed,
              model_kind, race, religion, weighting, out):
    """Two-feature intersectional audit; writes the grid CSV."""
    out_dir = _out_dir(out)
    schema, joined = _load(data, schema_path)
    spec = _split_spec(joined, split_mode, train_years, test_years, test_fraction, seed)
    _, train_set, test_set = _prepare(joined, schema, spec)
    races = [f.strip() for f in race.split(",")] if race else schema.sensitive_names("race")
    religions = (
        [f.strip() for f in religion.split(",")] if religion else schema.sensitive_names("religion")
    )
    thresholds = {
        f: fairness.threshold(joined[f].to_numpy(dtype=float)) for f in (*races, *religions)
    }
    model = train(ModelSpec(model_kind, seed=seed), train_set)
    report = intersectional.intersect_audit(
        model, test_set, races, religions, thresholds, weighting=weighting
    )
    intersectional.report_to_csv(report, out_dir / "intersection.csv")
    for a1 in races:
        gap = report.delta_avg.get(a1)
        click.echo(f"{a1}: |delta avg| = {'skipped' if gap is None else f'{gap:.4f}'}")
    click.echo(f"grid -> {out_dir / 'intersection.csv'}")


@main.command(name="drift")
@add_options(data_opts)
@click.option("--cohort-a", required=True, help="Years, e.g. 2016 or 2016-2017.")
@click.option("--cohort-b", required=True, help="Years, e.g. 2022.")
@click.option("--out", default=None)
def drift_cmd(data, schema_path, cohort_a, cohort_b, out):
    """Quantify distribution shift between two year cohorts."""
    out_dir = _out_dir(out)
    schema, joined = _load(data, schema_path)
    encoded = encode(joined, schema)
    report = drift_report(encoded, _parse_years(cohort_a), _parse_years(cohort_b))
    report.to_json(out_dir / "drift.json")
    projection_to_csv(encoded, project_2d(encoded.X), out_dir / "projection.csv")
    click.echo(f"mmd={report.mmd:.4f} "
               f"significant={report.fraction_significant:.2%} of numeric columns")
    click.echo(f"report -> {out_dir / 'drift.json'}")


@main.command(name="run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, help="Override the config output directory.")
@click.option("--jobs", default=1, show_default=True, type=int)
def run_cmd(config_path, out, jobs):
    """Run the full experiment grid from a JSON config."""
    try:
        config = ExperimentConfig.from_json(config_path)
        if out:
            config = ExperimentConfig(**{**config.__dict__, "output_dir": str(_out_dir(out))})
        outcome = run_experiment(config, jobs=jobs)
    except InvalidConfig as exc:
        click.echo(f"invalid config: {exc}", err=True)
        sys.exit(2)
    completed = sum(1 for e in outcome.manifest if e["status"] == "completed")
    click.echo(f"{completed}/{len(outcome.manifest)} cells completed -> {outcome.output_dir}")
    if outcome.any_failed:
        sys.exit(1)


@main.command()
@click.option("--wards", default=20, show_default=True, type=int)
@click.option("--years", default="2016-2022", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=None)
def synth(wards, years, seed, out):
    """Write a synthetic ward-year fixture (CSVs plus schema manifest)."""
    out_dir = _out_dir(out)
    plan = FixturePlan(
        wards=wards,
        years=tuple(_parse_years(years)),
        seed=seed,
        group_noise={"race_b": 1.0},
        cohort_shift=None,
    )
    paths, schema_path = write_fixture(plan, out_dir)
    click.echo("\n".join([*paths, schema_path]))


def cli_entry():
    try:
        main(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except WardfairError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    cli_entry()
