"""Pre-processing bias mitigation keyed to one sensitive feature.

Three strategies rebalance the training set until the Low and High groups
have equal size (plain duplication, convex interpolation, duplication plus
Gaussian noise); the fourth attaches per-sample weights instead of
changing the data.  Resampling is stratified by target quartile so the
minority group's target distribution is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import EncodedDataset
from .errors import EmptyGroup, InvalidRequest, SingletonGroup
from .fairness import GroupAssignment, assign_groups, threshold
from .regressors import WeightVector
from .util import derive_seed

METHODS = ("oversample", "mixup", "perturb", "reweight")

ORIGINAL = "original"
DUPLICATED = "duplicated"
SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class MitigationSpec:
    method: str
    feature: str
    seed: int = 0
    alpha: float = 0.2   # mixup interpolation concentration
    sigma: float = 0.01  # perturbation noise stddev (in scaled feature space)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidRequest(f"unknown mitigation method {self.method!r}")
        if self.alpha <= 0:
            raise InvalidRequest("alpha must be positive")
        if self.sigma < 0:
            raise InvalidRequest("sigma must be non-negative")

    @property
    def key(self) -> str:
        extra = ""
        if self.method == "mixup":
            extra = f"(alpha={self.alpha})"
        elif self.method == "perturb":
            extra = f"(sigma={self.sigma})"
        return f"{self.method}{extra}"


@dataclass(frozen=True)
class AugmentedTrainSet:
    """A (possibly enlarged) training set with per-sample provenance tags."""

    data: EncodedDataset
    provenance: tuple[str, ...]
    weights: WeightVector | None = None

    def __post_init__(self):
        if len(self.provenance) != len(self.data):
            raise InvalidRequest("provenance tags not aligned with the data")

    def to_frame(self):
        df = self.data.to_frame()
        df["__provenance"] = list(self.provenance)
        if self.weights is not None:
            df["__weight"] = self.weights.values
        return df

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def _quartile_strata(y_train: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Stratum label (0..3) per sample, at the training target quartiles."""
    breaks = np.quantile(y_train, [0.25, 0.5, 0.75])
    return np.searchsorted(breaks, y, side="right")


def _check_groups(groups: GroupAssignment) -> None:
    if groups.n_low == 0 or groups.n_high == 0:
        raise EmptyGroup(f"{groups.feature!r}: one group is empty")


def _minority_majority(groups: GroupAssignment) -> tuple[np.ndarray, np.ndarray]:
    if groups.n_low <= groups.n_high:
        return groups.low, groups.high
    return groups.high, groups.low


def _apportion(quotas: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation of ``total`` across strata, largest remainder."""
    floors = np.floor(quotas).astype(int)
    remainder = total - floors.sum()
    order = np.argsort(-(quotas - floors), kind="stable")
    out = floors.copy()
    out[order[:remainder]] += 1
    return out


def _stratified_additions(
    minority: np.ndarray, deficit: int, strata: np.ndarray
) -> list[tuple[int, np.ndarray]]:
    """Per-stratum (count, member indices) for ``deficit`` new samples."""
    labels = sorted(set(strata[minority].tolist()))
    members = [minority[strata[minority] == s] for s in labels]
    sizes = np.array([len(m) for m in members], dtype=float)
    quotas = deficit * sizes / sizes.sum()
    counts = _apportion(quotas, deficit)
    return [(int(c), m) for c, m in zip(counts, members)]


def _append_rows(
    train: EncodedDataset,
    X_new: np.ndarray,
    y_new: np.ndarray,
    wards_new,
    years_new,
    sensitive_new: dict[str, np.ndarray],
    tags: list[str],
) -> AugmentedTrainSet:
    data = replace(
        train,
        wards=train.wards + tuple(wards_new),
        years=np.concatenate([train.years, np.asarray(years_new, dtype=int)]),
        X=np.vstack([train.X, X_new]),
        y=np.concatenate([train.y, y_new]),
        sensitive_values={
            k: np.concatenate([v, sensitive_new[k]]) for k, v in train.sensitive_values.items()
        },
    )
    provenance = (ORIGINAL,) * len(train) + tuple(tags)
    return AugmentedTrainSet(data=data, provenance=provenance)


def oversample(train: EncodedDataset, groups: GroupAssignment, seed: int) -> AugmentedTrainSet:
    """Duplicate minority-group samples until the group counts are equal.

    Duplication runs independently within each target quartile so the
    minority's target histogram is preserved (within one count per
    stratum).
    """
    _check_groups(groups)
    minority, majority = _minority_majority(groups)
    deficit = len(majority) - len(minority)
    if deficit == 0:
        return AugmentedTrainSet(data=train, provenance=(ORIGINAL,) * len(train))

    strata = _quartile_strata(train.y, train.y)
    rng = np.random.default_rng(derive_seed(seed, "oversample"))
    picks: list[np.ndarray] = []
    for count, members in _stratified_additions(minority, deficit, strata):
        if count:
            picks.append(rng.choice(members, size=count, replace=True))
    dup = np.concatenate(picks) if picks else np.empty(0, dtype=int)
    return _append_rows(
        train,
        train.X[dup],
        train.y[dup],
        [train.wards[i] for i in dup],
        train.years[dup],
        {k: v[dup] for k, v in train.sensitive_values.items()},
        [DUPLICATED] * len(dup),
    )


def mixup_blend(x1, y1, x2, y2, lam: float):
    """Convex combination of two parent samples."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return lam * x1 + (1.0 - lam) * x2, lam * y1 + (1.0 - lam) * y2


def mixup(
    train: EncodedDataset, groups: GroupAssignment, alpha: float, seed: int
) -> AugmentedTrainSet:
    """Generate synthetic minority samples by convex interpolation.

    Both parents come from the minority group (within the same target
    quartile), with the mixing coefficient drawn per sample from
    Beta(alpha, alpha); generation continues until the groups balance.
    """
    _check_groups(groups)
    minority, majority = _minority_majority(groups)
    if len(minority) < 2:
        raise SingletonGroup("mixup needs at least two minority samples")
    deficit = len(majority) - len(minority)
    if deficit == 0:
        return AugmentedTrainSet(data=train, provenance=(ORIGINAL,) * len(train))

    strata = _quartile_strata(train.y, train.y)
    rng = np.random.default_rng(derive_seed(seed, "mixup"))
    X_new = np.empty((deficit, train.n_features))
    y_new = np.empty(deficit)
    wards_new: list[str] = []
    years_new: list[int] = []
    sens_new: dict[str, list[float]] = {k: [] for k in train.sensitive_values}
    row = 0
    for count, members in _stratified_additions(minority, deficit, strata):
        for _ in range(count):
            i1, i2 = rng.choice(members, size=2, replace=True)
            lam = float(rng.beta(alpha, alpha))
            X_new[row], y_new[row] = mixup_blend(train.X[i1], train.y[i1], train.X[i2], train.y[i2], lam)
            wards_new.append(train.wards[i1])
            years_new.append(int(train.years[i1]))
            for k, v in train.sensitive_values.items():
                sens_new[k].append(lam * v[i1] + (1.0 - lam) * v[i2])
            row += 1
    return _append_rows(
        train,
        X_new,
        y_new,
        wards_new,
        years_new,
        {k: np.asarray(v) for k, v in sens_new.items()},
        [SYNTHETIC] * deficit,
    )


def perturb(
    train: EncodedDataset, groups: GroupAssignment, sigma: float, seed: int
) -> AugmentedTrainSet:
    """Oversample, then add Gaussian noise to the duplicated rows.

    Noise with stddev ``sigma`` lands on the numeric (scaled) feature
    columns of duplicated rows only; one-hot columns, targets, and the
    original rows are untouched.  With sigma 0 the output is identical to
    plain oversampling under the same seed.
    """
    aug = oversample(train, groups, seed)
    n_orig = len(train)
    n_dup = len(aug.data) - n_orig
    if n_dup == 0:
        return aug
    numeric_cols = [aug.data.column_index(name) for name in aug.data.scaler_params]
    noise_rng = np.random.default_rng(derive_seed(seed, "perturb"))
    X = aug.data.X.copy()
    noise = noise_rng.normal(0.0, sigma, size=(n_dup, len(numeric_cols)))
    X[np.ix_(range(n_orig, n_orig + n_dup), numeric_cols)] += noise
    return AugmentedTrainSet(
        data=replace(aug.data, X=X),
        provenance=aug.provenance,
    )


def reweight(train: EncodedDataset, groups: GroupAssignment) -> WeightVector:
    """Weights inversely proportional to group size.

    The raw group weight is n / (2 * n_g), then everything is divided by
    the maximum so the minority group carries weight exactly 1.
    """
    _check_groups(groups)
    n = len(train)
    w_low = n / (2.0 * groups.n_low)
    w_high = n / (2.0 * groups.n_high)
    w_max = max(w_low, w_high)
    values = np.empty(n)
    values[groups.low] = w_low / w_max
    values[groups.high] = w_high / w_max
    return WeightVector(values)


def apply(
    spec: MitigationSpec, train: EncodedDataset, threshold_value: float | None = None
) -> AugmentedTrainSet:
    """Dispatch one mitigation; the output feeds straight into training.

    The group assignment uses ``threshold_value`` when supplied (normally
    the midpoint computed on the full dataset) and otherwise falls back to
    the training rows.  The RNG stream derives from (seed, feature), so
    cells scheduled in parallel cannot perturb each other.
    """
    t = threshold_value if threshold_value is not None else threshold(train.sensitive(spec.feature))
    groups = assign_groups(train, spec.feature, t)
    seed = derive_seed(spec.seed, spec.feature)
    if spec.method == "oversample":
        return oversample(train, groups, seed)
    if spec.method == "mixup":
        return mixup(train, groups, spec.alpha, seed)
    if spec.method == "perturb":
        return perturb(train, groups, spec.sigma, seed)
    weights = reweight(train, groups)
    return AugmentedTrainSet(data=train, provenance=(ORIGINAL,) * len(train), weights=weights)
