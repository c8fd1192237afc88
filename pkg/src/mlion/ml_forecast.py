"""Statistical forecasting track: features, ridge/tree regressors, CV.

Ridge is solved in closed form on centered data (intercept unpenalized);
the tree is a deterministic CART variance-reduction learner. Cross
validation uses contiguous expanding time blocks, never shuffling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyDataset,
    LengthMismatch,
    SingularSystem,
    TooFewSamples,
    UnfittedModel,
)
from .market_data import Candle

MODEL_SCHEMA_VERSION = 1

FEATURE_NAMES = ("o", "h", "l", "c", "v", "range", "move")


def engineer_features(candle: Candle) -> np.ndarray:
    """[o, h, l, c, v, h-l, c-o] feature vector for one candle."""
    return np.array(
        [candle.o, candle.h, candle.l, candle.c, candle.v,
         candle.h - candle.l, candle.c - candle.o],
        dtype=float,
    )


@dataclass
class RidgeConfig:
    alpha: float = 1.0
    standardize: bool = False

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass
class TreeConfig:
    max_depth: int = 4
    min_leaf: int = 2


@dataclass
class PolynomialConfig:
    degree: int = 2
    alpha: float = 1.0


@dataclass
class _TreeNode:
    value: float
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["_TreeNode"] = None
    right: Optional["_TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


class RegressionModel:
    """A fitted single-output regressor (ridge, tree, or polynomial ridge)."""

    def __init__(self, config):
        self.config = config
        self.fitted = False
        self.weights: Optional[np.ndarray] = None
        self.intercept: float = 0.0
        self._mu: Optional[np.ndarray] = None
        self._sigma: Optional[np.ndarray] = None
        self._root: Optional[_TreeNode] = None

    # -- fitting -----------------------------------------------------------

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RegressionModel":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.size == 0 or len(X) == 0:
            raise EmptyDataset("no training rows")
        if isinstance(self.config, TreeConfig):
            self._root = _grow_tree(X, y, self.config, depth=0)
        elif isinstance(self.config, PolynomialConfig):
            Xp = _poly_expand(X, self.config.degree)
            self._fit_ridge(Xp, y, self.config.alpha, standardize=False)
        else:
            Xs = X
            if self.config.standardize:
                self._mu = X.mean(axis=0)
                self._sigma = X.std(axis=0)
                self._sigma[self._sigma == 0] = 1.0
                Xs = (X - self._mu) / self._sigma
            self._fit_ridge(Xs, y, self.config.alpha, standardize=False)
        self.fitted = True
        return self

    def _fit_ridge(self, X: np.ndarray, y: np.ndarray, alpha: float, standardize: bool):
        # centered normal equations; intercept recovered afterwards
        x_mean = X.mean(axis=0)
        y_mean = y.mean()
        Xc = X - x_mean
        yc = y - y_mean
        A = Xc.T @ Xc + alpha * np.eye(X.shape[1])
        b = Xc.T @ yc
        if alpha == 0.0:
            # rank check: solve() can silently return garbage on singular A
            if np.linalg.matrix_rank(A) < A.shape[0]:
                raise SingularSystem("X^T X singular at alpha=0")
        try:
            w = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as e:
            raise SingularSystem(str(e)) from e
        self.weights = w
        self.intercept = float(y_mean - x_mean @ w)

    # -- prediction --------------------------------------------------------

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise UnfittedModel("call fit() first")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if isinstance(self.config, TreeConfig):
            return np.array([_tree_predict(self._root, row) for row in X])
        if isinstance(self.config, PolynomialConfig):
            X = _poly_expand(X, self.config.degree)
        elif self._mu is not None:
            X = (X - self._mu) / self._sigma
        return X @ self.weights + self.intercept

    def predict_one(self, features: np.ndarray) -> float:
        return float(self.predict(features)[0])

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        if not self.fitted:
            raise UnfittedModel("cannot serialize an unfitted model")
        doc = {"schema_version": MODEL_SCHEMA_VERSION}
        if isinstance(self.config, TreeConfig):
            doc["kind"] = "tree"
            doc["hyperparameters"] = {"max_depth": self.config.max_depth,
                                      "min_leaf": self.config.min_leaf}
            doc["tree"] = _tree_to_dict(self._root)
        else:
            if isinstance(self.config, PolynomialConfig):
                doc["kind"] = "polynomial"
                doc["hyperparameters"] = {"degree": self.config.degree,
                                          "alpha": self.config.alpha}
            else:
                doc["kind"] = "ridge"
                doc["hyperparameters"] = {"alpha": self.config.alpha,
                                          "standardize": self.config.standardize}
                if self._mu is not None:
                    doc["mu"] = list(self._mu)
                    doc["sigma"] = list(self._sigma)
            doc["weights"] = list(self.weights)
            doc["intercept"] = self.intercept
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RegressionModel":
        doc = json.loads(text)
        kind = doc["kind"]
        hp = doc["hyperparameters"]
        if kind == "tree":
            model = cls(TreeConfig(**hp))
            model._root = _tree_from_dict(doc["tree"])
        elif kind == "polynomial":
            model = cls(PolynomialConfig(**hp))
            model.weights = np.asarray(doc["weights"])
            model.intercept = doc["intercept"]
        else:
            model = cls(RidgeConfig(**hp))
            model.weights = np.asarray(doc["weights"])
            model.intercept = doc["intercept"]
            if "mu" in doc:
                model._mu = np.asarray(doc["mu"])
                model._sigma = np.asarray(doc["sigma"])
        model.fitted = True
        return model


def _poly_expand(X: np.ndarray, degree: int) -> np.ndarray:
    cols = [X]
    for d in range(2, degree + 1):
        cols.append(X ** d)
    return np.hstack(cols)


def _grow_tree(X: np.ndarray, y: np.ndarray, cfg: TreeConfig, depth: int) -> _TreeNode:
    node = _TreeNode(value=float(np.mean(y)))
    if depth >= cfg.max_depth or len(y) < 2 * cfg.min_leaf or np.all(y == y[0]):
        return node
    best = None  # (sse, feature, threshold)
    n_features = X.shape[1]
    for j in range(n_features):
        values = np.unique(X[:, j])
        if len(values) < 2:
            continue
        thresholds = (values[:-1] + values[1:]) / 2.0
        for thr in thresholds:
            mask = X[:, j] <= thr
            n_l, n_r = int(mask.sum()), int((~mask).sum())
            if n_l < cfg.min_leaf or n_r < cfg.min_leaf:
                continue
            yl, yr = y[mask], y[~mask]
            sse = float(((yl - yl.mean()) ** 2).sum() + ((yr - yr.mean()) ** 2).sum())
            # deterministic tie-break: lowest sse, then feature index, then threshold
            key = (sse, j, float(thr))
            if best is None or key < best:
                best = key
    if best is None:
        return node
    _, j, thr = best
    parent_sse = float(((y - y.mean()) ** 2).sum())
    if best[0] >= parent_sse:
        return node
    mask = X[:, j] <= thr
    node.feature = j
    node.threshold = thr
    node.left = _grow_tree(X[mask], y[mask], cfg, depth + 1)
    node.right = _grow_tree(X[~mask], y[~mask], cfg, depth + 1)
    return node


def _tree_predict(node: _TreeNode, row: np.ndarray) -> float:
    while not node.is_leaf:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.value


def _tree_to_dict(node: _TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    return {
        "value": node.value,
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _tree_to_dict(node.left),
        "right": _tree_to_dict(node.right),
    }


def _tree_from_dict(d: dict) -> _TreeNode:
    node = _TreeNode(value=d["value"])
    if "feature" in d:
        node.feature = d["feature"]
        node.threshold = d["threshold"]
        node.left = _tree_from_dict(d["left"])
        node.right = _tree_from_dict(d["right"])
    return node


def fit(dataset: Sequence[tuple[np.ndarray, float]], config) -> RegressionModel:
    """Fit a regressor on (feature vector, one-step-ahead target) pairs."""
    if not dataset:
        raise EmptyDataset("empty dataset")
    X = np.vstack([np.asarray(f, dtype=float) for f, _ in dataset])
    y = np.array([t for _, t in dataset], dtype=float)
    return RegressionModel(config).fit(X, y)


def mse(predictions: Sequence[float], actuals: Sequence[float]) -> float:
    """Mean squared error between two equal-length value lists."""
    if len(predictions) != len(actuals) or len(predictions) == 0:
        raise LengthMismatch(
            f"lengths {len(predictions)} vs {len(actuals)} (non-empty required)"
        )
    p = np.asarray(predictions, dtype=float)
    a = np.asarray(actuals, dtype=float)
    return float(np.mean((p - a) ** 2))


@dataclass
class CVReport:
    folds: int
    cv_score: float  # negated mean fold MSE
    test_mse: float
    fold_mses: list[float] = field(default_factory=list)


def time_blocked_folds(n: int, k: int) -> list[tuple[range, range]]:
    """Expanding-window (train, validation) index blocks over n rows.

    Rows split into k+1 contiguous blocks; fold i trains on blocks 0..i and
    validates on block i+1, so training indices never postdate validation.
    """
    if k < 2 or n < k + 1:
        raise TooFewSamples(f"need at least {k + 1} rows for {k} folds, got {n}")
    bounds = np.linspace(0, n, k + 2, dtype=int)
    folds = []
    for i in range(k):
        train = range(0, bounds[i + 1])
        val = range(bounds[i + 1], bounds[i + 2])
        if len(train) == 0 or len(val) == 0:
            raise TooFewSamples(f"{n} rows too few for {k} folds")
        folds.append((train, val))
    return folds


def cross_validate(
    dataset: Sequence[tuple[np.ndarray, float]],
    folds: int,
    config,
    test_fraction: float = 0.2,
) -> CVReport:
    """Time-blocked CV plus a held-out terminal test block.

    cv_score is the negated mean fold MSE; test_mse is the MSE of a model
    fitted on all pre-test rows, scored on the terminal block.
    """
    n = len(dataset)
    n_test = max(1, int(round(n * test_fraction)))
    n_train = n - n_test
    if folds < 2 or n_train < folds + 1:
        raise TooFewSamples(f"{n} rows too few for {folds} folds + test block")
    X = np.vstack([np.asarray(f, dtype=float) for f, _ in dataset])
    y = np.array([t for _, t in dataset], dtype=float)

    fold_mses = []
    for train_idx, val_idx in time_blocked_folds(n_train, folds):
        model = RegressionModel(config).fit(X[list(train_idx)], y[list(train_idx)])
        preds = model.predict(X[list(val_idx)])
        fold_mses.append(mse(list(preds), list(y[list(val_idx)])))

    final = RegressionModel(config).fit(X[:n_train], y[:n_train])
    test_preds = final.predict(X[n_train:])
    test = mse(list(test_preds), list(y[n_train:]))
    return CVReport(
        folds=folds,
        cv_score=-float(np.mean(fold_mses)),
        test_mse=test,
        fold_mses=fold_mses,
    )


def clamp_ohlcv(o: float, h: float, l: float, c: float, v: float) -> tuple[float, float, float, float, float]:
    """Force predicted OHLCV onto a valid candle shape."""
    h = max(h, o, c)
    l = min(l, o, c)
    v = max(v, 0.0)
    return o, h, l, c, v
