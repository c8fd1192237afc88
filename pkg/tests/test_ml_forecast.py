import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlion import ml_forecast as ml
from mlion.errors import (
    EmptyDataset,
    LengthMismatch,
    SingularSystem,
    TooFewSamples,
    UnfittedModel,
)
from mlion.market_data import Candle


class TestFeatures:
    def test_direct_substitution(self):
        c = Candle(t=1, o=2, h=5, l=1, c=4, v=100)
        assert list(ml.engineer_features(c)) == [2, 5, 1, 4, 100, 4, 2]

    def test_doji(self):
        c = Candle(t=1, o=3, h=3, l=3, c=3, v=10)
        f = ml.engineer_features(c)
        assert f[5] == 0 and f[6] == 0

    def test_derived_identities(self):
        c = Candle(t=1, o=41000.5, h=41210.25, l=40900.0, c=41100.75, v=123.4)
        f = ml.engineer_features(c)
        assert f[5] == pytest.approx(c.h - c.l)
        assert f[6] == pytest.approx(c.c - c.o)


def make_linear_dataset(n=50, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(0, 1, (n, 7))
    w = np.array([0.5, -1.0, 2.0, 3.0, 0.1, -0.7, 1.3])
    y = X @ w + 1.0 + noise * rng.normal(0, 1, n)
    return [(X[i], y[i]) for i in range(n)], X, y


class TestRidge:
    def test_exact_linear_interpolation_alpha0(self):
        # y = 3*c + 1 where c is feature index 3
        rng = np.random.default_rng(1)
        X = rng.normal(0, 1, (30, 7))
        y = 3 * X[:, 3] + 1.0
        model = ml.RegressionModel(ml.RidgeConfig(alpha=0.0)).fit(X, y)
        w = model.weights
        assert w[3] == pytest.approx(3.0, abs=1e-9)
        for j in (0, 1, 2, 4, 5, 6):
            assert w[j] == pytest.approx(0.0, abs=1e-9)
        assert model.intercept == pytest.approx(1.0, abs=1e-9)

    def test_huge_alpha_predicts_mean(self):
        ds, X, y = make_linear_dataset(40, noise=0.1)
        model = ml.fit(ds, ml.RidgeConfig(alpha=1e12))
        assert np.linalg.norm(model.weights) < 1e-6
        pred = model.predict(X)
        assert pred == pytest.approx(np.full_like(y, y.mean()), abs=1e-4)

    def test_matches_sklearn_oracle(self):
        sklearn = pytest.importorskip("sklearn.linear_model")
        ds, X, y = make_linear_dataset(60, noise=0.3, seed=3)
        model = ml.fit(ds, ml.RidgeConfig(alpha=1.0))
        ref = sklearn.Ridge(alpha=1.0, fit_intercept=True, solver="cholesky")
        ref.fit(X, y)
        assert model.weights == pytest.approx(ref.coef_, abs=1e-8)
        assert model.intercept == pytest.approx(ref.intercept_, abs=1e-8)

    def test_normal_equations_residual(self):
        ds, X, y = make_linear_dataset(80, noise=0.5, seed=4)
        for alpha in (0.01, 0.1, 1.0, 10.0):
            model = ml.fit(ds, ml.RidgeConfig(alpha=alpha))
            Xc = X - X.mean(axis=0)
            yc = y - y.mean()
            resid = (Xc.T @ Xc + alpha * np.eye(7)) @ model.weights - Xc.T @ yc
            assert np.max(np.abs(resid)) < 1e-8

    def test_monotone_shrinkage(self):
        ds, _, _ = make_linear_dataset(60, noise=0.5, seed=5)
        norms = []
        for alpha in (0.0, 0.01, 0.1, 1.0, 10.0, 100.0):
            model = ml.fit(ds, ml.RidgeConfig(alpha=alpha))
            norms.append(float(np.linalg.norm(model.weights)))
        for a, b in zip(norms, norms[1:]):
            assert b <= a + 1e-10

    def test_singular_at_alpha_zero(self):
        X = np.ones((10, 7))  # rank-deficient after centering
        y = np.arange(10.0)
        with pytest.raises(SingularSystem):
            ml.RegressionModel(ml.RidgeConfig(alpha=0.0)).fit(X, y)

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            ml.fit([], ml.RidgeConfig())

    def test_unfitted_prediction(self):
        with pytest.raises(UnfittedModel):
            ml.RegressionModel(ml.RidgeConfig()).predict(np.zeros(7))

    def test_serialization_round_trip(self):
        ds, X, _ = make_linear_dataset(40, noise=0.2, seed=6)
        model = ml.fit(ds, ml.RidgeConfig(alpha=0.5))
        clone = ml.RegressionModel.from_json(model.to_json())
        assert clone.predict(X) == pytest.approx(model.predict(X), abs=1e-12)


class TestTree:
    def test_identity_training(self):
        # target equals the close feature exactly; deep tree memorizes bins
        rng = np.random.default_rng(2)
        X = rng.normal(0, 1, (64, 7))
        y = X[:, 3].copy()
        model = ml.RegressionModel(ml.TreeConfig(max_depth=10, min_leaf=1)).fit(X, y)
        pred = model.predict(X)
        assert pred == pytest.approx(y, abs=1e-9)

    def test_depth1_two_cluster_means(self):
        # feature 0 separates two clusters; hand-enumerated split candidates
        X = np.zeros((6, 7))
        X[:3, 0] = [0.0, 0.1, 0.2]
        X[3:, 0] = [10.0, 10.1, 10.2]
        y = np.array([1.0, 1.2, 1.1, 5.0, 5.2, 5.1])
        model = ml.RegressionModel(ml.TreeConfig(max_depth=1, min_leaf=1)).fit(X, y)
        left = model.predict(np.array([[0.15] + [0] * 6]))[0]
        right = model.predict(np.array([[10.0] + [0] * 6]))[0]
        assert left == pytest.approx(np.mean(y[:3]))
        assert right == pytest.approx(np.mean(y[3:]))

    def test_deterministic(self):
        ds, X, _ = make_linear_dataset(50, noise=0.5, seed=8)
        m1 = ml.fit(ds, ml.TreeConfig(max_depth=4, min_leaf=2))
        m2 = ml.fit(ds, ml.TreeConfig(max_depth=4, min_leaf=2))
        assert m1.to_json() == m2.to_json()

    def test_serialization_round_trip(self):
        ds, X, _ = make_linear_dataset(50, noise=0.5, seed=9)
        model = ml.fit(ds, ml.TreeConfig())
        clone = ml.RegressionModel.from_json(model.to_json())
        assert list(clone.predict(X)) == list(model.predict(X))


class TestMSE:
    def test_identical_is_zero(self):
        assert ml.mse([1, 2, 3], [1, 2, 3]) == 0.0

    def test_arithmetic(self):
        assert ml.mse([1, 2], [2, 4]) == pytest.approx(2.5)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(10)
        p = list(rng.normal(0, 1, 100))
        a = list(rng.normal(0, 1, 100))
        naive = sum((x - y) ** 2 for x, y in zip(p, a)) / 100
        assert ml.mse(p, a) == pytest.approx(naive, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            ml.mse([1], [1, 2])
        with pytest.raises(LengthMismatch):
            ml.mse([], [])

    @given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)),
                    min_size=1, max_size=50),
           st.randoms())
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariance(self, pairs, rnd):
        p = [x for x, _ in pairs]
        a = [y for _, y in pairs]
        idx = list(range(len(pairs)))
        rnd.shuffle(idx)
        assert ml.mse(p, a) == pytest.approx(
            ml.mse([p[i] for i in idx], [a[i] for i in idx]), abs=1e-9)


class TestCrossValidation:
    def test_perfect_fit_zero_scores(self):
        rng = np.random.default_rng(11)
        X = rng.normal(0, 1, (60, 7))
        w = np.arange(1.0, 8.0)
        y = X @ w + 2.0
        ds = [(X[i], y[i]) for i in range(60)]
        report = ml.cross_validate(ds, 5, ml.RidgeConfig(alpha=0.0))
        assert report.cv_score == pytest.approx(0.0, abs=1e-12)
        assert report.test_mse == pytest.approx(0.0, abs=1e-12)

    def test_constant_target_variance_oracle(self):
        # huge alpha forces the mean predictor; fold MSE equals the
        # variance of the validation block around the training mean
        rng = np.random.default_rng(12)
        X = rng.normal(0, 1, (40, 7))
        y = rng.normal(5, 1, 40)
        ds = [(X[i], y[i]) for i in range(40)]
        report = ml.cross_validate(ds, 4, ml.RidgeConfig(alpha=1e12),
                                   test_fraction=0.2)
        n_train = 32
        folds = ml.time_blocked_folds(n_train, 4)
        expected = []
        for tr, va in folds:
            mu = y[list(tr)].mean()
            expected.append(float(np.mean((y[list(va)] - mu) ** 2)))
        assert -report.cv_score == pytest.approx(np.mean(expected), rel=1e-6)

    def test_time_blocked_no_leakage(self):
        for k in range(2, 11):
            for tr, va in ml.time_blocked_folds(100, k):
                assert max(tr) < min(va)

    def test_too_few_samples(self):
        ds, _, _ = make_linear_dataset(5)
        with pytest.raises(TooFewSamples):
            ml.cross_validate(ds, 10, ml.RidgeConfig())

    def test_low_volatility_tiny_error_regime(self):
        # low-noise synthetic series: alpha=0.01 lands in the small-MSE band
        rng = np.random.default_rng(13)
        n = 300
        t = np.arange(n)
        close = 0.1 + 0.0001 * np.sin(t / 20) + rng.normal(0, 1e-4, n)
        X = np.column_stack([close, close, close, close,
                             np.full(n, 1000.0), np.zeros(n), np.zeros(n)])
        y = np.roll(close, -1)
        ds = [(X[i], y[i]) for i in range(n - 1)]
        report = ml.cross_validate(ds, 5, ml.RidgeConfig(alpha=0.01,
                                                         standardize=True))
        assert abs(report.cv_score) < 1e-4
        assert report.test_mse < 1e-4


class TestClamp:
    def test_ohlc_consistency(self):
        o, h, l, c, v = ml.clamp_ohlcv(10, 9, 11, 12, -5)
        assert h >= max(o, c) and l <= min(o, c) and v == 0.0
