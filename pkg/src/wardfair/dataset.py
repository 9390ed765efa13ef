"""Ingest ward-year CSV tables, join, clean, encode, scale, and split.

The pipeline is: ``load_tables`` -> ``join_and_clean`` -> ``encode`` ->
``split``.  Encoding fits its scaler and one-hot parameters on a caller
supplied row subset (normally the training rows) and applies them to every
row, so test rows never leak into the fitted statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import (
    DegenerateRange,
    DuplicateKey,
    EmptyJoin,
    EmptySide,
    InvalidRequest,
    MissingColumn,
)
from .schema import FeatureSchema
from .util import array_fingerprint

WARD_COL = "ward"
YEAR_COL = "year"
MISSING_LEVEL = "__missing__"


# ---------------------------------------------------------------------------
# raw tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RawTable:
    """One source table keyed by (ward, year)."""

    name: str
    rows: pd.DataFrame  # columns: ward, year, <features...>

    def __post_init__(self):
        dupes = self.rows.duplicated(subset=[WARD_COL, YEAR_COL])
        if dupes.any():
            key = self.rows.loc[dupes.idxmax(), [WARD_COL, YEAR_COL]]
            raise DuplicateKey(
                f"table {self.name!r}: repeated key ({key[WARD_COL]}, {key[YEAR_COL]})"
            )

    @property
    def feature_columns(self) -> list[str]:
        return [c for c in self.rows.columns if c not in (WARD_COL, YEAR_COL)]

    def __len__(self) -> int:
        return len(self.rows)


def _find_key_column(columns, wanted: str) -> str:
    for c in columns:
        if c.strip().lower() == wanted:
            return c
    raise MissingColumn(f"no {wanted!r} column in header {list(columns)}")


def load_tables(paths, schema: FeatureSchema) -> list[RawTable]:
    """Load one RawTable per CSV file.

    Rows outside the schema's year range or with an empty ward are dropped
    (the files are extracts; out-of-range years are simply not part of the
    study window).  Unparseable numeric cells become missing values, never
    zeros.  Raises MissingColumn if a schema column appears in no file, and
    DuplicateKey if a (ward, year) key repeats within one file.
    """
    tables: list[RawTable] = []
    seen_columns: set[str] = set()
    lo, hi = schema.year_range
    numeric = set(schema.numeric_names) | {schema.target}
    for path in paths:
        df = pd.read_csv(path, dtype=str, skipinitialspace=True)
        ward_col = _find_key_column(df.columns, WARD_COL)
        year_col = _find_key_column(df.columns, YEAR_COL)
        df = df.rename(columns={ward_col: WARD_COL, year_col: YEAR_COL})
        df[WARD_COL] = df[WARD_COL].fillna("").str.strip()
        df[YEAR_COL] = pd.to_numeric(df[YEAR_COL], errors="coerce")
        df = df[(df[WARD_COL] != "") & df[YEAR_COL].notna()]
        df[YEAR_COL] = df[YEAR_COL].astype(int)
        df = df[(df[YEAR_COL] >= lo) & (df[YEAR_COL] <= hi)].reset_index(drop=True)
        for col in df.columns:
            if col in numeric:
                df[col] = pd.to_numeric(df[col], errors="coerce")
        name = str(path).rsplit("/", 1)[-1].removesuffix(".csv")
        tables.append(RawTable(name=name, rows=df))
        seen_columns.update(df.columns)
    for col in (*schema.feature_names, schema.target):
        if col not in seen_columns:
            raise MissingColumn(f"schema column {col!r} absent from all files")
    return tables


def join_and_clean(
    tables: list[RawTable],
    schema: FeatureSchema,
    max_missing_fraction: float = 0.2,
) -> pd.DataFrame:
    """Inner-join all tables on (ward, year), then clean.

    Rows missing the target, or missing more than ``max_missing_fraction``
    of the feature columns, are dropped.  Remaining missing numeric cells
    are imputed with the column median of the surviving rows; missing
    categorical cells become the distinct level ``__missing__``.  Rows come
    back sorted by (year, ward).
    """
    if not tables:
        raise EmptyJoin("no tables to join")
    joined = tables[0].rows
    for table in tables[1:]:
        overlap = [
            c for c in table.feature_columns if c in joined.columns
        ]
        joined = joined.merge(
            table.rows.drop(columns=overlap), on=[WARD_COL, YEAR_COL], how="inner"
        )
    features = [c for c in schema.feature_names if c in joined.columns]
    if schema.target not in joined.columns:
        raise MissingColumn(f"target {schema.target!r} missing after join")
    joined = joined[[WARD_COL, YEAR_COL, *features, schema.target]]

    joined = joined[joined[schema.target].notna()]
    if features:
        missing_frac = joined[features].isna().mean(axis=1)
        joined = joined[missing_frac <= max_missing_fraction]
    if joined.empty:
        raise EmptyJoin("no rows survive the join and cleaning thresholds")

    joined = joined.sort_values([YEAR_COL, WARD_COL]).reset_index(drop=True)
    for col in features:
        if col in schema.numeric_names:
            joined[col] = joined[col].fillna(joined[col].median())
        else:
            joined[col] = joined[col].fillna(MISSING_LEVEL).astype(str)
    return joined


# ---------------------------------------------------------------------------
# encoded dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncodedDataset:
    """The joined, cleaned, encoded ward-year table.

    ``X`` holds z-scored numerics followed by one-hot blocks in schema
    order; ``y`` stays in raw target units.  ``sensitive_values`` keeps the
    raw (unscaled) proportions of every sensitive column so that group
    thresholds remain meaningful even when the column is dropped from X.
    """

    wards: tuple[str, ...]
    years: np.ndarray
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    scaler_params: dict[str, tuple[float, float]]
    encoder_map: dict[str, dict[str, int]]
    sensitive_values: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.years, self.X, self.y, *self.sensitive_values.values()):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def column_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise MissingColumn(f"no encoded column named {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.column_index(name)]

    def sensitive(self, name: str) -> np.ndarray:
        try:
            return self.sensitive_values[name]
        except KeyError:
            raise MissingColumn(f"no stored sensitive values for {name!r}") from None

    def take(self, indices) -> "EncodedDataset":
        idx = np.asarray(indices, dtype=int)
        return replace(
            self,
            wards=tuple(self.wards[i] for i in idx),
            years=self.years[idx].copy(),
            X=self.X[idx].copy(),
            y=self.y[idx].copy(),
            sensitive_values={k: v[idx].copy() for k, v in self.sensitive_values.items()},
        )

    def drop_features(self, names) -> "EncodedDataset":
        """Remove encoded columns (e.g. the sensitive inputs for an ablation).

        Raw sensitive values stay available as metadata; one-hot index maps
        are rebased onto the surviving column positions.
        """
        names = set(names)
        missing = names - set(self.feature_names)
        if missing:
            raise MissingColumn(f"cannot drop unknown columns {sorted(missing)}")
        keep = [i for i, n in enumerate(self.feature_names) if n not in names]
        new_index = {old: new for new, old in enumerate(keep)}
        return replace(
            self,
            X=self.X[:, keep].copy(),
            feature_names=tuple(self.feature_names[i] for i in keep),
            scaler_params={k: v for k, v in self.scaler_params.items() if k not in names},
            encoder_map={
                col: {level: new_index[idx] for level, idx in mapping.items()}
                for col, mapping in self.encoder_map.items()
                if all(idx in new_index for idx in mapping.values())
            },
        )

    def fingerprint(self) -> str:
        return array_fingerprint(self.X, self.y, self.years)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.feature_names))
        df["__ward"] = list(self.wards)
        df["__year"] = self.years
        df["__target"] = self.y
        return df

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def encode(rows: pd.DataFrame, schema: FeatureSchema, fit_on=None) -> EncodedDataset:
    """Encode joined rows into a numeric design matrix.

    Numeric columns are z-scored (population stddev) with parameters fitted
    on the ``fit_on`` row positions only (all rows when None); a column
    constant on the fitting rows keeps stddev 1 so its z-score degrades to
    a plain mean shift.  Categorical columns expand to one-hot blocks using
    the levels seen in the fitting rows; unseen levels encode as an
    all-zeros block.  The target is never scaled.
    """
    n = len(rows)
    if n == 0:
        raise EmptyJoin("cannot encode zero rows")
    fit_idx = np.arange(n) if fit_on is None else np.asarray(fit_on, dtype=int)
    if fit_idx.size == 0:
        raise InvalidRequest("fit_on must select at least one row")

    target = rows[schema.target].to_numpy(dtype=float)
    if not np.isfinite(target).all():
        raise InvalidRequest("target contains non-finite values after cleaning")
    if (target < 0).any():
        raise InvalidRequest("target must be non-negative")

    columns: list[np.ndarray] = []
    names: list[str] = []
    scaler_params: dict[str, tuple[float, float]] = {}
    encoder_map: dict[str, dict[str, int]] = {}

    for col in schema.feature_names:
        if col not in rows.columns:
            continue
        if col in schema.numeric_names:
            values = rows[col].to_numpy(dtype=float)
            mean = float(np.mean(values[fit_idx]))
            std = float(np.std(values[fit_idx]))
            if std == 0.0:
                std = 1.0
            scaler_params[col] = (mean, std)
            columns.append((values - mean) / std)
            names.append(col)
        else:
            values = rows[col].astype(str).to_numpy()
            levels = sorted(set(values[fit_idx]))
            mapping: dict[str, int] = {}
            for level in levels:
                mapping[level] = len(names)
                columns.append((values == level).astype(float))
                names.append(f"{col}={level}")
            encoder_map[col] = mapping

    X = np.column_stack(columns) if columns else np.empty((n, 0))
    sensitive = {
        name: rows[name].to_numpy(dtype=float)
        for name in schema.sensitive_names()
        if name in rows.columns
    }
    return EncodedDataset(
        wards=tuple(rows[WARD_COL].astype(str)),
        years=rows[YEAR_COL].to_numpy(dtype=int),
        X=X,
        y=target,
        feature_names=tuple(names),
        scaler_params=scaler_params,
        encoder_map=encoder_map,
        sensitive_values=sensitive,
    )


def decode_onehot(data: EncodedDataset, column: str) -> list[str]:
    """Recover the categorical level of each sample from its one-hot block."""
    mapping = data.encoder_map.get(column)
    if mapping is None:
        raise MissingColumn(f"{column!r} is not an encoded categorical column")
    levels: list[str] = []
    for i in range(len(data)):
        hits = [lvl for lvl, j in mapping.items() if data.X[i, j] == 1.0]
        levels.append(hits[0] if hits else MISSING_LEVEL)
    return levels


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Temporal (year partition) or random (seeded shuffle) split."""

    mode: str
    train_years: frozenset[int] | None = None
    test_years: frozenset[int] | None = None
    test_fraction: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.mode == "temporal":
            if not self.train_years or not self.test_years:
                raise InvalidRequest("temporal split needs non-empty year sets")
            if self.train_years & self.test_years:
                raise InvalidRequest("temporal train/test years must be disjoint")
        elif self.mode == "random":
            if self.test_fraction is None or not (0.0 < self.test_fraction < 1.0):
                raise InvalidRequest("random split needs test_fraction in (0, 1)")
            if self.seed is None:
                raise InvalidRequest("random split needs a seed")
        else:
            raise InvalidRequest(f"unknown split mode {self.mode!r}")

    @classmethod
    def temporal(cls, train_years, test_years) -> "SplitSpec":
        return cls(
            mode="temporal",
            train_years=frozenset(int(y) for y in train_years),
            test_years=frozenset(int(y) for y in test_years),
        )

    @classmethod
    def random(cls, test_fraction: float, seed: int) -> "SplitSpec":
        return cls(mode="random", test_fraction=float(test_fraction), seed=int(seed))

    @property
    def key(self) -> str:
        if self.mode == "temporal":
            tr = ",".join(map(str, sorted(self.train_years)))
            te = ",".join(map(str, sorted(self.test_years)))
            return f"temporal[{tr}|{te}]"
        return f"random[{self.test_fraction}]"

    def reseeded(self, seed: int) -> "SplitSpec":
        if self.mode == "temporal":
            return self
        return replace(self, seed=int(seed))


def split_indices(years: np.ndarray, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Row positions of the train and test sides (each sorted ascending).

    Random mode shuffles 0..n-1 with a generator seeded by spec.seed and
    takes the last ceil(test_fraction * n) positions as the test side, so
    the same seed always yields the same partition.
    """
    n = len(years)
    if spec.mode == "temporal":
        train = np.flatnonzero(np.isin(years, sorted(spec.train_years)))
        test = np.flatnonzero(np.isin(years, sorted(spec.test_years)))
    else:
        rng = np.random.default_rng(spec.seed)
        perm = rng.permutation(n)
        n_test = math.ceil(spec.test_fraction * n)
        test = np.sort(perm[n - n_test:])
        train = np.sort(perm[: n - n_test])
    if len(train) == 0 or len(test) == 0:
        raise EmptySide(f"split {spec.key} produced an empty side")
    return train, test


def split(data: EncodedDataset, spec: SplitSpec) -> tuple[EncodedDataset, EncodedDataset]:
    """Partition an encoded dataset into (train, test)."""
    train_idx, test_idx = split_indices(data.years, spec)
    return data.take(train_idx), data.take(test_idx)


# ---------------------------------------------------------------------------
# scaling helper for the data-level plots
# ---------------------------------------------------------------------------

def min_max_scale(values) -> np.ndarray:
    """Scale a vector into [0, 1]; the minimum maps to 0 and the maximum to 1."""
    arr = np.asarray(values, dtype=float)
    lo, hi = float(np.min(arr)), float(np.max(arr))
    if hi == lo:
        raise DegenerateRange("all values equal; min-max scaling undefined")
    return (arr - lo) / (hi - lo)
