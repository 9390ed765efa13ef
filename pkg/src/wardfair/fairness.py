"""Group fairness audit for continuous sensitive features.

A continuous sensitive feature (a ward-level proportion) is discretized at
the midpoint of its observed range: samples strictly below the threshold
form the Low group, everything else the High group.  The audit metric is
the absolute gap between the two groups' mean absolute errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import EncodedDataset
from .errors import DegenerateFeature, EmptyGroup, InvalidRequest, MissingColumn
from .regressors import ModelSpec, TrainedModel, WeightVector, mae, train


@dataclass(frozen=True)
class GroupAssignment:
    """Low/High membership of every sample for one sensitive feature."""

    feature: str
    threshold: float
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        self.low.setflags(write=False)
        self.high.setflags(write=False)

    @property
    def n_low(self) -> int:
        return len(self.low)

    @property
    def n_high(self) -> int:
        return len(self.high)


@dataclass(frozen=True)
class DisparityRecord:
    feature: str
    mae_low: float
    mae_high: float
    delta_mae: float
    n_low: int
    n_high: int

    def __post_init__(self):
        if self.delta_mae != abs(self.mae_low - self.mae_high):
            raise InvalidRequest("delta_mae inconsistent with group errors")


@dataclass(frozen=True)
class AuditResult:
    """Records for auditable features plus (feature, reason) skip entries."""

    records: tuple[DisparityRecord, ...]
    skipped: tuple[tuple[str, str], ...]
    provenance: str

    def record(self, feature: str) -> DisparityRecord:
        for rec in self.records:
            if rec.feature == feature:
                return rec
        raise InvalidRequest(f"no audit record for {feature!r}")


@dataclass(frozen=True)
class AblationRecord:
    feature: str
    delta_with: float
    delta_without: float
    abs_diff: float

    def __post_init__(self):
        if abs(self.abs_diff - abs(self.delta_with - self.delta_without)) > 1e-12:
            raise InvalidRequest("abs_diff inconsistent with its operands")


def threshold(values) -> float:
    """Midpoint of the observed range: (max + min) / 2.

    Thresholds are population facts: compute them over the full dataset
    (train and test together) before any splitting.
    """
    arr = np.asarray(values, dtype=float)
    if len(arr) < 2 or np.min(arr) == np.max(arr):
        raise DegenerateFeature("feature has no spread; no midpoint threshold")
    return float((np.max(arr) + np.min(arr)) / 2.0)


def assign_groups(data: EncodedDataset, feature: str, t: float) -> GroupAssignment:
    """Split samples at t: strictly below goes Low, everything else High."""
    values = data.sensitive(feature)
    low = np.flatnonzero(values < t)
    high = np.flatnonzero(values >= t)
    if len(low) == 0 or len(high) == 0:
        raise EmptyGroup(f"{feature!r} at threshold {t} leaves one group empty")
    return GroupAssignment(feature=feature, threshold=float(t), low=low, high=high)


def delta_mae(model: TrainedModel, test: EncodedDataset, groups: GroupAssignment) -> DisparityRecord:
    """Disparity of one feature: |MAE(Low) - MAE(High)| on raw target units."""
    if groups.n_low == 0 or groups.n_high == 0:
        raise EmptyGroup(f"{groups.feature!r}: cannot audit an empty group")
    preds = model.predict_dataset(test)
    mae_low = mae(test.y[groups.low], preds[groups.low])
    mae_high = mae(test.y[groups.high], preds[groups.high])
    return DisparityRecord(
        feature=groups.feature,
        mae_low=mae_low,
        mae_high=mae_high,
        delta_mae=abs(mae_low - mae_high),
        n_low=groups.n_low,
        n_high=groups.n_high,
    )


def single_feature_audit(
    model: TrainedModel,
    test: EncodedDataset,
    features,
    thresholds: dict[str, float] | None = None,
) -> AuditResult:
    """Audit each sensitive feature independently.

    ``thresholds`` should carry midpoints computed on the full dataset;
    when omitted they are computed from the test rows as a fallback.
    Features whose groups degenerate on the test set are reported as
    skipped, never silently dropped.
    """
    records: list[DisparityRecord] = []
    skipped: list[tuple[str, str]] = []
    for feature in features:
        try:
            t = thresholds[feature] if thresholds else threshold(test.sensitive(feature))
            groups = assign_groups(test, feature, t)
            records.append(delta_mae(model, test, groups))
        except DegenerateFeature:
            skipped.append((feature, "degenerate_feature"))
        except EmptyGroup:
            skipped.append((feature, "empty_group"))
        except MissingColumn:
            skipped.append((feature, "missing_feature"))
    return AuditResult(
        records=tuple(records),
        skipped=tuple(skipped),
        provenance=model.fingerprint(test) if len(test) else "",
    )


def ablation_audit(
    spec: ModelSpec,
    train_set: EncodedDataset,
    test: EncodedDataset,
    sensitive,
    thresholds: dict[str, float] | None = None,
    weights: WeightVector | None = None,
) -> list[AblationRecord]:
    """Retrain without the sensitive input columns and compare disparities.

    Groups are always formed from the raw sensitive values, which stay
    available as metadata even after the columns are dropped from the
    inputs, so both models are audited against the same partition.
    """
    sensitive = list(sensitive)
    if not sensitive:
        raise InvalidRequest("ablation needs at least one sensitive feature")

    model_with = train(spec, train_set, weights)
    ablated_train = train_set.drop_features(sensitive)
    ablated_test = test.drop_features(sensitive)
    model_without = train(spec, ablated_train, weights)

    records: list[AblationRecord] = []
    for feature in sensitive:
        t = thresholds[feature] if thresholds else threshold(test.sensitive(feature))
        groups = assign_groups(test, feature, t)
        with_rec = delta_mae(model_with, test, groups)
        without_rec = delta_mae(model_without, ablated_test, groups)
        records.append(
            AblationRecord(
                feature=feature,
                delta_with=with_rec.delta_mae,
                delta_without=without_rec.delta_mae,
                abs_diff=abs(with_rec.delta_mae - without_rec.delta_mae),
            )
        )
    return records


def audit_to_csv(result: AuditResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("feature,n_low,n_high,mae_low,mae_high,delta_mae\n")
        for r in result.records:
            fh.write(
                f"{r.feature},{r.n_low},{r.n_high},{r.mae_low!r},{r.mae_high!r},{r.delta_mae!r}\n"
            )
        for feature, reason in result.skipped:
            fh.write(f"{feature},,,,,skipped:{reason}\n")


def audit_to_markdown(result: AuditResult) -> str:
    lines = [
        "| feature | n_low | n_high | MAE low | MAE high | delta MAE |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for r in result.records:
        lines.append(
            f"| {r.feature} | {r.n_low} | {r.n_high} "
            f"| {r.mae_low:.2f} | {r.mae_high:.2f} | {r.delta_mae:.2f} |"
        )
    for feature, reason in result.skipped:
        lines.append(f"| {feature} | - | - | - | - | skipped ({reason}) |")
    return "\n".join(lines) + "\n"
