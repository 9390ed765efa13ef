"""Synthetic ward-year fixture generator.

Produces raw tables (plus a matching schema) with controllable planted
structure so every pipeline stage can be exercised without real data:

* group-dependent noise — samples in the High group of a chosen feature
  get extra residual noise, planting a known disparity direction;
* a group offset — a step added to the target for the High group, the kind
  of disparity that rebalancing can actually mitigate;
* a year-cohort mean shift on a subset of covariate columns, planting a
  positive cohort discrepancy and per-column shift flags;
* an interaction noise pattern that stays invisible to single-feature
  audits but produces a large intersectional gap (a planted blind spot).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dataset import RawTable, WARD_COL, YEAR_COL
from .errors import InvalidRequest
from .schema import ColumnSpec, FeatureSchema

RACE_FEATURES = ("race_a", "race_b", "race_c")
RELIGION_FEATURES = ("rel_a", "rel_b", "rel_c")
TARGET = "crime_rate"
BASE_LEVEL = 60.0


@dataclass(frozen=True)
class BlindSpotPlan:
    """Interaction-noise plan: inside High[a1], residual noise is sigma_high
    where a2 is High and sigma_low where a2 is Low.  When sigma_low is None
    it is solved so the pooled High[a1] noise level matches the Low[a1]
    rows, which keeps the single-feature disparity of a1 near zero while
    the intersectional contrast stays large."""

    a1: str = "race_a"
    a2: str = "rel_a"
    sigma_high: float = 1.8
    sigma_low: float | None = None


@dataclass(frozen=True)
class CohortShiftPlan:
    from_year: int = 2020
    delta: float = 3.0
    n_features: int = 2  # how many covariate columns shift


@dataclass(frozen=True)
class FixturePlan:
    wards: int = 20
    years: tuple[int, ...] = (2016, 2017, 2018, 2019, 2020, 2021, 2022)
    seed: int = 0
    n_covariates: int = 3
    base_noise: float = 1.0
    proportion_jitter: float = 0.02       # year-to-year wobble of the ward proportions
    sensitive_slope: float = 0.0          # linear pull of sensitive props on target
    skew: dict[str, float] = field(default_factory=dict)  # exponent > 1 shrinks the High group
    group_noise: dict[str, float] = field(default_factory=dict)
    group_offset: dict[str, float] = field(default_factory=dict)
    blind_spot: BlindSpotPlan | None = None
    cohort_shift: CohortShiftPlan | None = None

    def __post_init__(self):
        if self.wards < 2 or len(self.years) < 2:
            raise InvalidRequest("fixture needs at least 2 wards and 2 years")
        known = set(RACE_FEATURES) | set(RELIGION_FEATURES)
        for name in (*self.group_noise, *self.group_offset, *self.skew):
            if name not in known:
                raise InvalidRequest(f"unknown sensitive feature {name!r}")


def fixture_schema(plan: FixturePlan) -> FeatureSchema:
    cols = [
        ColumnSpec(name, "numeric", "race") for name in RACE_FEATURES
    ] + [
        ColumnSpec(name, "numeric", "religion") for name in RELIGION_FEATURES
    ] + [
        ColumnSpec(f"cov_{j}", "numeric") for j in range(plan.n_covariates)
    ] + [ColumnSpec(TARGET, "target")]
    return FeatureSchema(
        columns=tuple(cols), year_range=(min(plan.years), max(plan.years))
    )


def generate_fixture(plan: FixturePlan) -> tuple[list[RawTable], FeatureSchema]:
    """Generate the raw tables for one synthetic city.

    Returns (tables, schema): an identity table with the sensitive
    proportions and an indicators table with the covariates and target,
    both keyed by (ward, year) so the join path gets exercised.
    """
    rng = np.random.default_rng(plan.seed)
    wards = [f"W{i:03d}" for i in range(plan.wards)]
    years = sorted(plan.years)
    n = len(wards) * len(years)

    ward_col = np.repeat(wards, len(years))
    year_col = np.tile(years, len(wards))

    sensitive = {}
    for name in (*RACE_FEATURES, *RELIGION_FEATURES):
        base = rng.uniform(0.05, 0.95, size=plan.wards)
        if name in plan.skew:
            base = base ** plan.skew[name]
        jitter = rng.normal(0.0, plan.proportion_jitter, size=(plan.wards, len(years)))
        sensitive[name] = np.clip(base[:, None] + jitter, 0.0, 1.0).ravel()

    covariates = {}
    for j in range(plan.n_covariates):
        base = rng.uniform(-2.0, 2.0, size=plan.wards)
        covariates[f"cov_{j}"] = (
            base[:, None] + rng.normal(0.0, 0.5, size=(plan.wards, len(years)))
        ).ravel()

    if plan.cohort_shift is not None:
        shifted = [f"cov_{j}" for j in range(min(plan.cohort_shift.n_features, plan.n_covariates))]
        mask = year_col >= plan.cohort_shift.from_year
        for name in shifted:
            covariates[name] = covariates[name] + plan.cohort_shift.delta * mask

    def midpoint(values: np.ndarray) -> float:
        return float((values.max() + values.min()) / 2.0)

    signal = BASE_LEVEL + sum(2.0 * covariates[f"cov_{j}"] for j in range(plan.n_covariates))
    if plan.sensitive_slope:
        signal = signal + plan.sensitive_slope * sum(sensitive[f] for f in RACE_FEATURES)
    for name, offset in plan.group_offset.items():
        signal = signal + offset * (sensitive[name] >= midpoint(sensitive[name]))

    sigma = np.full(n, plan.base_noise)
    for name, extra in plan.group_noise.items():
        sigma = sigma + extra * (sensitive[name] >= midpoint(sensitive[name]))
    if plan.blind_spot is not None:
        bs = plan.blind_spot
        in_a1 = sensitive[bs.a1] >= midpoint(sensitive[bs.a1])
        in_a2 = sensitive[bs.a2] >= midpoint(sensitive[bs.a2])
        if bs.sigma_low is None:
            outside = float(sigma[~in_a1].mean()) if (~in_a1).any() else plan.base_noise
            n_hh = int((in_a1 & in_a2).sum())
            n_hl = int((in_a1 & ~in_a2).sum())
            sigma_low = (outside * int(in_a1.sum()) - bs.sigma_high * n_hh) / max(n_hl, 1)
            sigma_low = max(sigma_low, 0.02)
        else:
            sigma_low = bs.sigma_low
        sigma = np.where(in_a1 & in_a2, bs.sigma_high, sigma)
        sigma = np.where(in_a1 & ~in_a2, sigma_low, sigma)

    target = signal + rng.normal(0.0, 1.0, size=n) * sigma
    target = np.maximum(target, 0.0)

    identity = pd.DataFrame({WARD_COL: ward_col, YEAR_COL: year_col, **sensitive})
    indicators = pd.DataFrame(
        {WARD_COL: ward_col, YEAR_COL: year_col, **covariates, TARGET: target}
    )
    tables = [
        RawTable(name="identity", rows=identity),
        RawTable(name="indicators", rows=indicators),
    ]
    return tables, fixture_schema(plan)


def write_fixture(plan: FixturePlan, out_dir) -> tuple[list[str], str]:
    """Write the fixture CSVs plus schema manifest; returns their paths."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables, schema = generate_fixture(plan)
    paths = []
    for table in tables:
        path = out / f"{table.name}.csv"
        table.rows.to_csv(path, index=False)
        paths.append(str(path))
    schema_path = out / "schema.json"
    schema.to_json(schema_path)
    return paths, str(schema_path)
