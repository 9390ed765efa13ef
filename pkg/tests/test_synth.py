import numpy as np
import pytest

from wardfair.dataset import SplitSpec, encode, join_and_clean, split_indices
from wardfair.drift import per_feature_shift
from wardfair.errors import InvalidRequest
from wardfair.fairness import assign_groups, delta_mae, threshold
from wardfair.regressors import ModelSpec, train
from wardfair.synth import (
    BlindSpotPlan,
    CohortShiftPlan,
    FixturePlan,
    generate_fixture,
    write_fixture,
)


def pipeline(plan, split_seed=0):
    tables, schema = generate_fixture(plan)
    joined = join_and_clean(tables, schema)
    thresholds = {
        f: threshold(joined[f].to_numpy(float)) for f in schema.sensitive_names()
    }
    train_idx, test_idx = split_indices(
        joined["year"].to_numpy(), SplitSpec.random(0.2, split_seed)
    )
    encoded = encode(joined, schema, fit_on=train_idx)
    return schema, joined, thresholds, encoded.take(train_idx), encoded.take(test_idx)


class TestShape:
    def test_row_counts_and_schema(self):
        plan = FixturePlan(wards=12, years=(2016, 2017, 2018), seed=0)
        tables, schema = generate_fixture(plan)
        assert [t.name for t in tables] == ["identity", "indicators"]
        assert all(len(t) == 36 for t in tables)
        assert schema.target == "crime_rate"
        assert len(schema.sensitive_names("race")) == 3
        assert len(schema.sensitive_names("religion")) == 3

    def test_deterministic(self):
        a, _ = generate_fixture(FixturePlan(wards=8, seed=5))
        b, _ = generate_fixture(FixturePlan(wards=8, seed=5))
        for ta, tb in zip(a, b):
            assert ta.rows.equals(tb.rows)

    def test_validation(self):
        with pytest.raises(InvalidRequest):
            FixturePlan(wards=1)
        with pytest.raises(InvalidRequest):
            FixturePlan(group_noise={"not_a_feature": 1.0})

    def test_write_fixture(self, tmp_path):
        paths, schema_path = write_fixture(FixturePlan(wards=5, seed=1), tmp_path)
        assert len(paths) == 2
        assert schema_path.endswith("schema.json")

    def test_targets_non_negative(self):
        plan = FixturePlan(wards=30, seed=2, base_noise=3.0)
        tables, _ = generate_fixture(plan)
        assert (tables[1].rows["crime_rate"] >= 0).all()


class TestNullPlanting:
    def test_no_planted_noise_gives_small_disparities(self):
        # Monte Carlo bound: disparity of pure noise groups at this sample size
        rng = np.random.default_rng(77)
        null_draws = []
        for _ in range(400):
            resid = np.abs(rng.normal(0, 1.0, 56))
            mask = rng.uniform(size=56) < 0.5
            if mask.all() or not mask.any():
                continue
            null_draws.append(abs(resid[mask].mean() - resid[~mask].mean()))
        bound = 2 * float(np.quantile(null_draws, 0.99))

        plan = FixturePlan(wards=40, seed=3)
        schema, joined, thresholds, train_set, test_set = pipeline(plan)
        model = train(ModelSpec("linear", seed=3), train_set)
        deltas = []
        for feature in schema.sensitive_names():
            groups = assign_groups(test_set, feature, thresholds[feature])
            deltas.append(delta_mae(model, test_set, groups).delta_mae)
        assert np.mean(deltas) < bound


class TestPlantedDirection:
    def test_high_group_noise_detected(self):
        hits = 0
        for seed in range(10):
            plan = FixturePlan(wards=40, seed=seed, group_noise={"race_b": 3.0})
            _, _, thresholds, train_set, test_set = pipeline(plan, split_seed=100 + seed)
            model = train(ModelSpec("linear", seed=seed), train_set)
            groups = assign_groups(test_set, "race_b", thresholds["race_b"])
            rec = delta_mae(model, test_set, groups)
            hits += rec.mae_high > rec.mae_low
        assert hits >= 9


class TestPlantedCohortShift:
    def test_shifted_feature_fraction(self):
        plan = FixturePlan(
            wards=40, seed=4,
            cohort_shift=CohortShiftPlan(from_year=2020, delta=4.0, n_features=2),
        )
        tables, schema = generate_fixture(plan)
        joined = join_and_clean(tables, schema)
        encoded = encode(joined, schema)
        before = encoded.years < 2020
        numeric = [n for n in encoded.feature_names if n in encoded.scaler_params]
        cols = [encoded.column_index(n) for n in numeric]
        shifts = per_feature_shift(
            encoded.X[before][:, cols], encoded.X[~before][:, cols], numeric
        )
        flagged = {s.name for s in shifts if s.significant}
        planted = {"cov_0", "cov_1"}
        assert planted <= flagged
        assert abs(len(flagged) - len(planted)) <= 1


class TestBlindSpotPlan:
    def test_quadrant_noise_balances_the_marginal(self):
        plan = FixturePlan(
            wards=150, seed=6, base_noise=1.0, n_covariates=0, proportion_jitter=0.35,
            group_noise={"race_b": 5.0, "race_c": 5.0},
            blind_spot=BlindSpotPlan(a1="race_a", a2="rel_a", sigma_high=11.9),
        )
        tables, schema = generate_fixture(plan)
        joined = join_and_clean(tables, schema)
        encoded = encode(joined, schema)
        model = train(ModelSpec("gradient_boosting", {"n_estimators": 0}, seed=6), encoded)
        t = threshold(joined["race_a"].to_numpy(float))
        rec = delta_mae(model, encoded, assign_groups(encoded, "race_a", t))
        noisy = delta_mae(
            model, encoded,
            assign_groups(encoded, "race_b", threshold(joined["race_b"].to_numpy(float))),
        )
        assert rec.delta_mae < noisy.delta_mae
