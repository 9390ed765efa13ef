"""Train and evaluate the five regression model families.

All families share one interface: ``train(spec, data, weights)`` returns a
TrainedModel whose predictions are fully determined by (spec, data,
weights, seed).  Tree-family models are backed by scikit-learn; linear
regression and the MLP are implemented here directly — the linear solver
so that a singular normal-equation system still yields finite numbers,
and the MLP so that per-sample weights enter the loss (and so that two
trainings are bit-identical).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.ensemble import RandomForestRegressor
from sklearn.tree import DecisionTreeRegressor

from .dataset import EncodedDataset
from .errors import (
    ConstantTarget,
    DimensionMismatch,
    EmptyInput,
    InvalidRequest,
    LengthMismatch,
    NonFiniteFeature,
    TooFewSamples,
)
from .util import array_fingerprint, derive_seed

MODEL_KINDS = ("linear", "decision_tree", "random_forest", "gradient_boosting", "mlp")

DEFAULT_HYPERPARAMS: dict[str, dict] = {
    "linear": {},
    "decision_tree": {"max_depth": 10},
    "random_forest": {"n_estimators": 100, "max_depth": None},
    "gradient_boosting": {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 3},
    "mlp": {
        "hidden_layers": 2,
        "hidden_units": 64,
        "learning_rate": 0.01,
        "max_epochs": 2000,
        "patience": 20,
        "validation_fraction": 0.1,
    },
}

MIN_TRAIN_SAMPLES = 10
SAVE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InvalidRequest(f"unknown model kind {self.kind!r}")
        unknown = set(self.hyperparams) - set(DEFAULT_HYPERPARAMS[self.kind])
        if unknown:
            raise InvalidRequest(f"unknown hyperparams for {self.kind}: {sorted(unknown)}")

    def resolved(self) -> dict:
        return {**DEFAULT_HYPERPARAMS[self.kind], **self.hyperparams}

    @property
    def key(self) -> str:
        hp = ",".join(f"{k}={v}" for k, v in sorted(self.resolved().items()))
        return f"{self.kind}({hp})#seed={self.seed}"


@dataclass(frozen=True)
class WeightVector:
    """Per-sample training weights, normalized so the maximum is 1."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1 or len(arr) == 0:
            raise InvalidRequest("weights must be a non-empty 1-D vector")
        if not np.isfinite(arr).all():
            raise InvalidRequest("weights must be finite")
        if (arr <= 0).any() or (arr > 1 + 1e-12).any():
            raise InvalidRequest("weights must lie in (0, 1]")
        if abs(arr.max() - 1.0) > 1e-12:
            raise InvalidRequest("at least one weight must equal 1")
        object.__setattr__(self, "values", arr)
        arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    feature_names: tuple[str, ...]
    _impl: object

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DimensionMismatch("prediction input must be a 2-D matrix")
        if X.shape[1] != len(self.feature_names):
            raise DimensionMismatch(
                f"expected {len(self.feature_names)} columns, got {X.shape[1]}"
            )
        if X.shape[0] == 0:
            return np.empty(0)
        return np.asarray(self._impl.predict(X), dtype=float)

    def predict_dataset(self, data: EncodedDataset) -> np.ndarray:
        if tuple(data.feature_names) != self.feature_names:
            raise DimensionMismatch("dataset columns do not match the fitted model")
        return self.predict(data.X)

    def fingerprint(self, data: EncodedDataset) -> str:
        """Stable id of (model, test set): digest of predictions and targets."""
        return array_fingerprint(self.predict_dataset(data), data.y)


# ---------------------------------------------------------------------------
# family implementations
# ---------------------------------------------------------------------------

class _LinearModel:
    """Weighted least squares via the normal equations.

    A singular Gram matrix gets a ridge jitter of 1e-10 so the fit always
    returns finite coefficients.
    """

    def __init__(self, intercept: float, coef: np.ndarray):
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)

    @classmethod
    def fit(cls, X, y, w) -> "_LinearModel":
        A = np.column_stack([np.ones(len(y)), X])
        G = A.T @ (A * w[:, None])
        b = A.T @ (w * y)
        try:
            beta = np.linalg.solve(G, b)
            if not np.isfinite(beta).all():
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            beta = np.linalg.solve(G + 1e-10 * np.eye(len(G)), b)
        return cls(beta[0], beta[1:])

    def predict(self, X):
        return self.intercept + X @ self.coef

    def to_state(self) -> dict:
        return {"intercept": self.intercept, "coef": self.coef.tolist()}

    @classmethod
    def from_state(cls, state) -> "_LinearModel":
        return cls(state["intercept"], np.asarray(state["coef"]))


def _sk_seed(seed: int) -> int:
    # scikit-learn accepts only 32-bit random states
    return int(seed) % (2**32)


def _tree_state(tree: DecisionTreeRegressor) -> dict:
    t = tree.tree_
    return {
        "children_left": t.children_left.tolist(),
        "children_right": t.children_right.tolist(),
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "value": t.value[:, 0, 0].tolist(),
    }


class _ArrayTree:
    """Prediction-only regression tree reconstructed from stored arrays."""

    def __init__(self, state: dict):
        self.children_left = np.asarray(state["children_left"], dtype=int)
        self.children_right = np.asarray(state["children_right"], dtype=int)
        self.feature = np.asarray(state["feature"], dtype=int)
        self.threshold = np.asarray(state["threshold"], dtype=float)
        self.value = np.asarray(state["value"], dtype=float)

    def predict(self, X):
        out = np.empty(len(X))
        for i, row in enumerate(X):
            node = 0
            while self.children_left[node] != -1:
                if row[self.feature[node]] <= self.threshold[node]:
                    node = self.children_left[node]
                else:
                    node = self.children_right[node]
            out[i] = self.value[node]
        return out


class _TreeModel:
    def __init__(self, tree):
        self.tree = tree

    @classmethod
    def fit(cls, X, y, w, hp, seed) -> "_TreeModel":
        tree = DecisionTreeRegressor(max_depth=hp["max_depth"], random_state=_sk_seed(seed))
        tree.fit(X, y, sample_weight=w)
        return cls(tree)

    def predict(self, X):
        return self.tree.predict(X)

    def to_state(self) -> dict:
        return {"tree": _tree_state(self.tree)}

    @classmethod
    def from_state(cls, state) -> "_TreeModel":
        return cls(_ArrayTree(state["tree"]))


class _ForestModel:
    """Bootstrap forest: prediction is the plain mean over member trees."""

    def __init__(self, trees: list):
        self.trees = trees

    @classmethod
    def fit(cls, X, y, w, hp, seed) -> "_ForestModel":
        forest = RandomForestRegressor(
            n_estimators=hp["n_estimators"],
            max_depth=hp["max_depth"],
            max_features=1.0,
            bootstrap=True,
            random_state=_sk_seed(seed),
        )
        forest.fit(X, y, sample_weight=w)
        return cls(list(forest.estimators_))

    def tree_predictions(self, X) -> np.ndarray:
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X):
        return self.tree_predictions(X).mean(axis=0)

    def to_state(self) -> dict:
        return {"trees": [_tree_state(t) for t in self.trees]}

    @classmethod
    def from_state(cls, state) -> "_ForestModel":
        return cls([_ArrayTree(s) for s in state["trees"]])


class _BoostModel:
    """Stagewise least-squares boosting: each stage fits the residuals.

    With zero completed stages the model is the constant (weighted) mean of
    the training target.
    """

    def __init__(self, base: float, learning_rate: float, trees: list):
        self.base = float(base)
        self.learning_rate = float(learning_rate)
        self.trees = trees

    @classmethod
    def fit(cls, X, y, w, hp, seed) -> "_BoostModel":
        base = float(np.average(y, weights=w))
        lr = hp["learning_rate"]
        trees: list = []
        residual = y - base
        for _ in range(hp["n_estimators"]):
            tree = DecisionTreeRegressor(max_depth=hp["max_depth"], random_state=_sk_seed(seed))
            tree.fit(X, residual, sample_weight=w)
            residual = residual - lr * tree.predict(X)
            trees.append(tree)
        return cls(base, lr, trees)

    def predict(self, X):
        pred = np.full(len(X), self.base)
        for tree in self.trees:
            pred = pred + self.learning_rate * tree.predict(X)
        return pred

    def to_state(self) -> dict:
        return {
            "base": self.base,
            "learning_rate": self.learning_rate,
            "trees": [_tree_state(t) for t in self.trees],
        }

    @classmethod
    def from_state(cls, state) -> "_BoostModel":
        return cls(state["base"], state["learning_rate"], [_ArrayTree(s) for s in state["trees"]])


def _relu(z):
    return np.maximum(z, 0.0)


class _MLPModel:
    """Fully-connected net with ReLU hidden layers, trained full-batch
    with Adam on a weighted squared-error loss.

    The target is standardized internally (stored mean/std restore raw
    units at prediction time); early stopping watches a 10% validation
    carve-out and keeps the best parameters seen.
    """

    def __init__(self, layers: list[tuple[np.ndarray, np.ndarray]], y_mean: float, y_std: float):
        self.layers = layers
        self.y_mean = float(y_mean)
        self.y_std = float(y_std)

    @classmethod
    def fit(cls, X, y, w, hp, seed) -> "_MLPModel":
        rng = np.random.default_rng(derive_seed(seed, "mlp-init"))
        n, d = X.shape
        y_mean = float(np.average(y, weights=w))
        y_std = float(np.sqrt(np.average((y - y_mean) ** 2, weights=w)))
        if y_std == 0.0:
            y_std = 1.0
        ys = (y - y_mean) / y_std

        units = int(hp["hidden_units"])
        sizes = [d] + [units] * int(hp["hidden_layers"]) + [1]
        params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            params.append([W, np.zeros(fan_out)])

        perm = rng.permutation(n)
        n_val = max(1, int(round(hp["validation_fraction"] * n)))
        val_idx, tr_idx = perm[:n_val], perm[n_val:]
        if len(tr_idx) == 0:
            tr_idx, val_idx = perm, perm
        Xt, yt, wt = X[tr_idx], ys[tr_idx], w[tr_idx]
        Xv, yv, wv = X[val_idx], ys[val_idx], w[val_idx]

        lr = float(hp["learning_rate"])
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        m_state = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]
        v_state = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]

        def forward(params_, Xin):
            acts = [Xin]
            h = Xin
            for k, (W, b) in enumerate(params_):
                z = h @ W + b
                h = z if k == len(params_) - 1 else _relu(z)
                acts.append(h)
            return acts

        def val_loss(params_):
            pred = forward(params_, Xv)[-1][:, 0]
            return float(np.average((pred - yv) ** 2, weights=wv))

        best = [[W.copy(), b.copy()] for W, b in params]
        best_loss = val_loss(params)
        stale = 0
        wsum = wt.sum()
        step = 0
        for _ in range(int(hp["max_epochs"])):
            acts = forward(params, Xt)
            pred = acts[-1][:, 0]
            grad_out = (2.0 * wt * (pred - yt) / wsum)[:, None]
            delta = grad_out
            grads = [None] * len(params)
            for k in range(len(params) - 1, -1, -1):
                W, _ = params[k]
                grads[k] = [acts[k].T @ delta, delta.sum(axis=0)]
                if k > 0:
                    delta = (delta @ W.T) * (acts[k] > 0)
            step += 1
            for k, (W, b) in enumerate(params):
                for j, (p, g) in enumerate(zip((W, b), grads[k])):
                    m_state[k][j] = beta1 * m_state[k][j] + (1 - beta1) * g
                    v_state[k][j] = beta2 * v_state[k][j] + (1 - beta2) * g * g
                    m_hat = m_state[k][j] / (1 - beta1**step)
                    v_hat = v_state[k][j] / (1 - beta2**step)
                    p -= lr * m_hat / (np.sqrt(v_hat) + eps)
            loss = val_loss(params)
            if loss < best_loss - 1e-12:
                best_loss = loss
                best = [[W.copy(), b.copy()] for W, b in params]
                stale = 0
            else:
                stale += 1
                if stale >= int(hp["patience"]):
                    break
        return cls([(W, b) for W, b in best], y_mean, y_std)

    def predict(self, X):
        h = X
        for k, (W, b) in enumerate(self.layers):
            z = h @ W + b
            h = z if k == len(self.layers) - 1 else _relu(z)
        return h[:, 0] * self.y_std + self.y_mean

    def to_state(self) -> dict:
        return {
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.layers],
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_state(cls, state) -> "_MLPModel":
        layers = [
            (np.asarray(l["W"], dtype=float), np.asarray(l["b"], dtype=float))
            for l in state["layers"]
        ]
        return cls(layers, state["y_mean"], state["y_std"])


_FAMILIES = {
    "linear": _LinearModel,
    "decision_tree": _TreeModel,
    "random_forest": _ForestModel,
    "gradient_boosting": _BoostModel,
    "mlp": _MLPModel,
}


# ---------------------------------------------------------------------------
# public interface
# ---------------------------------------------------------------------------

def train(
    spec: ModelSpec,
    data: EncodedDataset,
    weights: WeightVector | None = None,
) -> TrainedModel:
    """Fit one model on an encoded training set.

    Weights, when given, must align with the training rows; every family
    incorporates them (weighted impurity and leaf means for the tree
    family, weighted least squares for linear, weighted loss for the MLP).
    An all-ones weight vector is equivalent to passing none.
    """
    if len(data) < MIN_TRAIN_SAMPLES:
        raise TooFewSamples(f"need at least {MIN_TRAIN_SAMPLES} samples, got {len(data)}")
    if not np.isfinite(data.X).all() or not np.isfinite(data.y).all():
        raise NonFiniteFeature("training data contains NaN or infinity")
    if weights is not None and len(weights) != len(data):
        raise LengthMismatch("weights are not aligned with the training set")
    w = np.ones(len(data)) if weights is None else weights.values.astype(float)

    hp = spec.resolved()
    family = _FAMILIES[spec.kind]
    if spec.kind == "linear":
        impl = family.fit(data.X, data.y, w)
    else:
        impl = family.fit(data.X, data.y, w, hp, spec.seed)
    return TrainedModel(spec=spec, feature_names=tuple(data.feature_names), _impl=impl)


def predict(model: TrainedModel, X) -> np.ndarray:
    """Predict one value per row of X (column order must match the fit)."""
    return model.predict(X)


def mae(y, yhat) -> float:
    """Mean absolute error."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if len(y) != len(yhat):
        raise LengthMismatch(f"lengths differ: {len(y)} vs {len(yhat)}")
    if len(y) == 0:
        raise EmptyInput("MAE of zero samples is undefined")
    return float(np.mean(np.abs(y - yhat)))


def r2(y, yhat) -> float:
    """Coefficient of determination: 1 - SS_res / SS_tot."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if len(y) != len(yhat):
        raise LengthMismatch(f"lengths differ: {len(y)} vs {len(yhat)}")
    if len(y) < 2:
        raise EmptyInput("R^2 needs at least two samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantTarget("R^2 is undefined for a constant target")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot


# ---------------------------------------------------------------------------
# save / load
# ---------------------------------------------------------------------------

def save_model(model: TrainedModel, path: str | Path) -> None:
    """Write a versioned JSON document with the spec and fitted parameters."""
    impl = model._impl
    document = {
        "format_version": SAVE_FORMAT_VERSION,
        "spec": {
            "kind": model.spec.kind,
            "hyperparams": model.spec.hyperparams,
            "seed": model.spec.seed,
        },
        "feature_names": list(model.feature_names),
        "state": impl.to_state(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh)


def load_model(path: str | Path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        document = json.load(fh)
    if document.get("format_version") != SAVE_FORMAT_VERSION:
        raise InvalidRequest(f"unsupported model format {document.get('format_version')!r}")
    spec = ModelSpec(
        kind=document["spec"]["kind"],
        hyperparams=document["spec"]["hyperparams"],
        seed=document["spec"]["seed"],
    )
    impl = _FAMILIES[spec.kind].from_state(document["state"])
    return TrainedModel(spec=spec, feature_names=tuple(document["feature_names"]), _impl=impl)
