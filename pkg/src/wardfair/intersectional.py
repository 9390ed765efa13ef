"""Two-feature intersectional disparity analysis.

For a fixed primary feature A1 at each level (Low/High), measure the error
gap that a secondary feature A2 induces inside that level:

    delta(level, A2) = |MAE(level & High[A2]) - MAE(level & Low[A2])|

Per-(A1, level) averages over all A2 aggregate the grid, and the gap
between the two level averages summarizes A1.  The screen at the bottom
flags features that look fair in a single-feature audit but carry a large
intersectional gap — the blind spots of one-dimensional auditing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import EncodedDataset
from .errors import DegenerateFeature, InvalidRequest, MismatchedProvenance
from .fairness import AuditResult, DisparityRecord, threshold
from .regressors import TrainedModel

LOW, HIGH = "low", "high"
MIN_SUBGROUP = 3  # single-digit subgroups produce noise, not disparities


@dataclass(frozen=True)
class IntersectionCell:
    a1: str
    a1_level: str
    a2: str
    mae_a2_low: float | None
    mae_a2_high: float | None
    delta: float | None
    n_subgroups: dict[str, int]
    skipped: bool = False
    skip_reason: str | None = None

    def __post_init__(self):
        if not self.skipped and self.delta != abs(self.mae_a2_high - self.mae_a2_low):
            raise InvalidRequest("cell delta inconsistent with its operands")


@dataclass(frozen=True)
class IntersectionReport:
    cells: tuple[IntersectionCell, ...]
    averages: dict[tuple[str, str], float | None]   # (a1, level) -> weighted avg
    delta_avg: dict[str, float | None]              # a1 -> |avg_high - avg_low|
    weighting: str
    provenance: str

    def cells_for(self, a1: str, level: str | None = None) -> list[IntersectionCell]:
        return [
            c for c in self.cells if c.a1 == a1 and (level is None or c.a1_level == level)
        ]


def _level_masks(values: np.ndarray, t: float) -> dict[str, np.ndarray]:
    return {LOW: values < t, HIGH: values >= t}


def intersect_audit(
    model: TrainedModel,
    test: EncodedDataset,
    race_features,
    religion_features,
    thresholds: dict[str, float] | None = None,
    min_subgroup: int = MIN_SUBGROUP,
    weighting: str = "uniform",
) -> IntersectionReport:
    """Audit every (race A1, religion A2) pair on the test set.

    A pair is skipped (at both A1 levels, symmetrically) whenever any of
    its four subgroups has fewer than ``min_subgroup`` samples; skipped
    cells carry a reason, never a fabricated zero.  ``weighting`` selects
    how per-level averages pool the A2 deltas: "uniform" (plain mean) or
    "count" (weighted by the cell's combined subgroup size).
    """
    if weighting not in ("uniform", "count"):
        raise InvalidRequest(f"unknown weighting {weighting!r}")
    preds = model.predict_dataset(test)
    abs_err = np.abs(test.y - preds)

    def resolve(feature: str) -> float:
        if thresholds and feature in thresholds:
            return thresholds[feature]
        return threshold(test.sensitive(feature))

    cells: list[IntersectionCell] = []
    for a1 in race_features:
        try:
            masks1 = _level_masks(test.sensitive(a1), resolve(a1))
        except DegenerateFeature:
            for level in (HIGH, LOW):
                for a2 in religion_features:
                    cells.append(
                        IntersectionCell(a1, level, a2, None, None, None, {},
                                         skipped=True, skip_reason="degenerate_a1")
                    )
            continue
        for a2 in religion_features:
            try:
                masks2 = _level_masks(test.sensitive(a2), resolve(a2))
            except DegenerateFeature:
                for level in (HIGH, LOW):
                    cells.append(
                        IntersectionCell(a1, level, a2, None, None, None, {},
                                         skipped=True, skip_reason="degenerate_a2")
                    )
                continue
            counts = {
                f"{l1}/{l2}": int(np.sum(masks1[l1] & masks2[l2]))
                for l1 in (HIGH, LOW)
                for l2 in (HIGH, LOW)
            }
            too_small = any(c < min_subgroup for c in counts.values())
            for level in (HIGH, LOW):
                if too_small:
                    cells.append(
                        IntersectionCell(a1, level, a2, None, None, None, counts,
                                         skipped=True, skip_reason="small_subgroup")
                    )
                    continue
                err_low = float(np.mean(abs_err[masks1[level] & masks2[LOW]]))
                err_high = float(np.mean(abs_err[masks1[level] & masks2[HIGH]]))
                cells.append(
                    IntersectionCell(
                        a1, level, a2,
                        mae_a2_low=err_low,
                        mae_a2_high=err_high,
                        delta=abs(err_high - err_low),
                        n_subgroups=counts,
                    )
                )

    averages: dict[tuple[str, str], float | None] = {}
    delta_avg: dict[str, float | None] = {}
    for a1 in race_features:
        for level in (HIGH, LOW):
            valid = [c for c in cells if c.a1 == a1 and c.a1_level == level and not c.skipped]
            if not valid:
                averages[(a1, level)] = None
                continue
            if weighting == "uniform":
                averages[(a1, level)] = float(np.mean([c.delta for c in valid]))
            else:
                w = np.array(
                    [c.n_subgroups[f"{level}/{LOW}"] + c.n_subgroups[f"{level}/{HIGH}"]
                     for c in valid],
                    dtype=float,
                )
                averages[(a1, level)] = float(
                    np.sum(w * np.array([c.delta for c in valid])) / np.sum(w)
                )
        hi, lo = averages[(a1, HIGH)], averages[(a1, LOW)]
        delta_avg[a1] = None if hi is None or lo is None else abs(hi - lo)

    return IntersectionReport(
        cells=tuple(cells),
        averages=averages,
        delta_avg=delta_avg,
        weighting=weighting,
        provenance=model.fingerprint(test) if len(test) else "",
    )


def blind_spot_screen(
    single: AuditResult | list[DisparityRecord],
    inter: IntersectionReport,
    fair_threshold: float | None = None,
    factor: float = 2.0,
) -> list[str]:
    """Flag features fair in isolation but unfair at an intersection.

    A feature is flagged when its single-feature disparity falls strictly
    below ``fair_threshold`` (default: the median single-feature
    disparity) while its intersectional level-gap, or any of its cell
    deltas, strictly exceeds ``factor`` times that threshold.
    """
    if isinstance(single, AuditResult):
        if single.provenance and inter.provenance and single.provenance != inter.provenance:
            raise MismatchedProvenance("single and intersectional reports disagree on model/test")
        records = list(single.records)
    else:
        records = list(single)
    if not records:
        return []
    singles = {r.feature: r.delta_mae for r in records}
    cut = fair_threshold if fair_threshold is not None else float(np.median(list(singles.values())))

    flagged: list[str] = []
    for a1, gap in inter.delta_avg.items():
        if a1 not in singles or singles[a1] >= cut:
            continue
        cell_deltas = [c.delta for c in inter.cells_for(a1) if not c.skipped]
        worst_cell = max(cell_deltas) if cell_deltas else 0.0
        if (gap is not None and gap > factor * cut) or worst_cell > factor * cut:
            flagged.append(a1)
    return flagged


def report_to_csv(report: IntersectionReport, path) -> None:
    """Grid layout: one row per A2 feature plus the average and gap rows;
    one (High, Low) column pair per A1 feature."""
    a1s = sorted({c.a1 for c in report.cells})
    a2s = sorted({c.a2 for c in report.cells})
    lookup = {(c.a1, c.a1_level, c.a2): c for c in report.cells}

    def fmt(value) -> str:
        return "" if value is None else repr(value)

    with open(path, "w", encoding="utf-8") as fh:
        header = ["a2"]
        for a1 in a1s:
            header += [f"{a1}:high", f"{a1}:low"]
        fh.write(",".join(header) + "\n")
        for a2 in a2s:
            row = [a2]
            for a1 in a1s:
                for level in (HIGH, LOW):
                    cell = lookup.get((a1, level, a2))
                    row.append("skipped" if cell is None or cell.skipped else fmt(cell.delta))
            fh.write(",".join(row) + "\n")
        avg_row = ["avg"]
        gap_row = ["abs_delta_avg"]
        for a1 in a1s:
            avg_row += [fmt(report.averages.get((a1, HIGH))), fmt(report.averages.get((a1, LOW)))]
            gap = fmt(report.delta_avg.get(a1))
            gap_row += [gap, gap]
        fh.write(",".join(avg_row) + "\n")
        fh.write(",".join(gap_row) + "\n")
