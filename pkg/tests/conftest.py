"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from wardfair.dataset import EncodedDataset, encode, join_and_clean
from wardfair.regressors import ModelSpec, TrainedModel
from wardfair.schema import ColumnSpec, FeatureSchema
from wardfair.synth import FixturePlan, generate_fixture


def make_encoded(
    X,
    y,
    feature_names=None,
    sensitive=None,
    years=None,
    wards=None,
    scaler_params=None,
) -> EncodedDataset:
    """Build an EncodedDataset directly from arrays (skips the CSV path)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    names = tuple(feature_names or [f"f{i}" for i in range(X.shape[1])])
    return EncodedDataset(
        wards=tuple(wards or [f"W{i % 7}" for i in range(n)]),
        years=np.asarray(years if years is not None else [2016 + i % 7 for i in range(n)], dtype=int),
        X=X,
        y=y,
        feature_names=names,
        scaler_params=scaler_params or {name: (0.0, 1.0) for name in names},
        encoder_map={},
        sensitive_values={k: np.asarray(v, dtype=float) for k, v in (sensitive or {}).items()},
    )


class _FixedPredictor:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def predict(self, X):
        return self.values[: len(X)].copy()


def fixed_model(data: EncodedDataset, predictions) -> TrainedModel:
    """A model whose predictions on `data` are exactly `predictions`."""
    return TrainedModel(
        spec=ModelSpec("linear"),
        feature_names=tuple(data.feature_names),
        _impl=_FixedPredictor(predictions),
    )


def simple_schema(n_numeric=2, categorical=False, sensitive=("s1",)) -> FeatureSchema:
    cols = [ColumnSpec(name, "numeric", "race") for name in sensitive]
    cols += [ColumnSpec(f"x{i}", "numeric") for i in range(n_numeric)]
    if categorical:
        cols.append(ColumnSpec("band", "categorical"))
    cols.append(ColumnSpec("rate", "target"))
    return FeatureSchema(columns=tuple(cols), year_range=(2016, 2022))


@pytest.fixture
def small_fixture():
    """A joined + encoded synthetic city with a planted noisy group."""
    plan = FixturePlan(wards=20, seed=11, group_noise={"race_b": 2.0})
    tables, schema = generate_fixture(plan)
    joined = join_and_clean(tables, schema)
    encoded = encode(joined, schema)
    return schema, joined, encoded
