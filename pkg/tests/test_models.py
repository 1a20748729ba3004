import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import norm

from blamebench.core import Dataset, ValidationError
from blamebench.models import (FunctionModel, GaussianNBModel, LinearModel, LogisticModel,
                               MlpModel, SingularSystemError, accuracy, fit_gaussian_nb,
                               fit_linear, fit_logistic, fit_mlp, gaussian_logpdf, load_model,
                               predict_batch, save_model)


def central_diff(f, x, h=1e-5):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def random_models(rng, m=4):
    mlp = MlpModel(tuple((rng.normal(size=(a, b)), rng.normal(size=b) * 0.1)
                         for a, b in [(m, 6), (6, 3), (3, 1)]))
    gnb = GaussianNBModel([0.4, 0.6], rng.normal(size=(2, m)), rng.uniform(0.5, 2, (2, m)))
    return [LogisticModel(rng.normal(size=m), 0.3), LinearModel(rng.normal(size=m), -0.2), gnb,
            mlp]


class TestGradientContract:
    @pytest.mark.parametrize("which", range(4))
    @pytest.mark.parametrize("output", ["proba", "margin"])
    def test_matches_central_differences(self, which, output):
        rng = np.random.default_rng(which)
        model = random_models(rng)[which]
        f = (lambda z: model.predict_proba(z)) if output == "proba" else \
            (lambda z: model.predict_margin(z))
        for x in rng.normal(size=(100, 4)):
            g = model.gradient(x, output)
            fd = central_diff(f, x)
            err = np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-8)
            assert err <= 1e-4


class TestLogisticIdentity:
    def test_sigmoid_of_margin_is_proba(self, rng):
        for model in random_models(rng):
            X = rng.normal(size=(50, 4))
            np.testing.assert_allclose(expit(model.predict_margin(X)), model.predict_proba(X),
                                       atol=1e-12)

    def test_log_odds_is_affine(self):
        m = LogisticModel([2.0, -1.0], 0.5)
        assert m.log_odds([1.0, 1.0]) == 1.5


class TestFitLogistic:
    def test_linear_law(self, linear_ds, linear_logistic):
        w = linear_logistic.weights
        assert w[0] > 0 > w[1]
        acc = accuracy(linear_logistic, linear_ds.features, linear_ds.labels)
        # Bayes accuracy of sign(2x0 - x1 + 0.3 eps) predicted by sign(2x0 - x1)
        rng = np.random.default_rng(0)
        X = rng.normal(size=(200_000, 2))
        s = 2 * X[:, 0] - X[:, 1]
        bayes = np.mean((s > 0) == (s + 0.3 * rng.normal(size=s.size) > 0))
        assert bayes > 0.95 and acc >= 0.85
        assert acc <= bayes + 0.03

    def test_loss_non_increasing(self, linear_logistic):
        losses = np.array(linear_logistic.meta["losses"])
        assert np.all(np.diff(losses) <= 1e-15)

    def test_separable_with_l2(self):
        X = np.array([[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]])
        ds = Dataset(X, [0, 0, 0, 1, 1, 1])
        m = fit_logistic(ds, lr=0.5, epochs=3000, l2=0.01)
        assert np.all(np.isfinite(m.weights))
        assert accuracy(m, X, ds.labels) == 1.0

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            fit_logistic(Dataset(np.ones((3, 1)), [1, 1, 1]))


class TestFitLinear:
    def test_exact_interpolation(self):
        X = np.linspace(-1, 1, 9)[:, None]
        m = fit_linear(Dataset(X, np.zeros(9, int)), 0.0, y=3.0 * X[:, 0])
        assert m.weights[0] == pytest.approx(3.0, abs=1e-9)
        assert m.bias == pytest.approx(0.0, abs=1e-9)

    def test_constant_target(self, rng):
        X = rng.normal(size=(20, 3))
        m = fit_linear(Dataset(X, np.zeros(20, int)), 1e-3, y=np.full(20, 4.5))
        np.testing.assert_allclose(m.weights, 0, atol=1e-12)
        assert m.bias == pytest.approx(4.5)

    def test_singular(self):
        with pytest.raises(SingularSystemError):
            fit_linear(Dataset(np.ones((1, 1)), [1]), 0.0)

    def test_ridge_gradient_vanishes(self, rng):
        X = rng.normal(size=(40, 3))
        y = X @ [1.0, -2.0, 0.5] + rng.normal(size=40)
        l2 = 0.7
        m = fit_linear(Dataset(X, np.zeros(40, int)), l2, y=y)
        r = X @ m.weights + m.bias - y
        grad_w = X.T @ r + l2 * m.weights
        assert np.max(np.abs(grad_w)) <= 1e-8 and abs(r.sum()) <= 1e-8


class TestFitGaussianNB:
    def test_means_within_three_se(self):
        rng = np.random.default_rng(3)
        n = 2000
        X = np.concatenate([rng.normal(-2, 1, n), rng.normal(3, 1, n)])[:, None]
        m = fit_gaussian_nb(Dataset(X, np.repeat([0, 1], n)))
        se = 1 / np.sqrt(n)
        assert abs(m.means[0, 0] + 2) <= 3 * se
        assert abs(m.means[1, 0] - 3) <= 3 * se

    def test_identical_classes_give_prior_ratio(self, rng):
        X = rng.normal(size=(10, 2))
        ds = Dataset(np.concatenate([X, X, X]), np.repeat([0, 1, 1], 10))
        m = fit_gaussian_nb(ds)
        np.testing.assert_allclose(m.predict_margin(rng.normal(size=(5, 2))), np.log(2.0),
                                   atol=1e-10)

    def test_variance_floor(self):
        X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 5.0]])
        m = fit_gaussian_nb(Dataset(X, [0, 0, 1, 1]), var_floor=1e-6)
        assert np.all(m.variances[:, 0] == 1e-6)
        assert np.isfinite(m.predict_proba([1.5, 1.0]))

    def test_log_odds_decomposes_per_feature(self, rng):
        m = random_models(rng)[2]
        for x in rng.normal(size=(20, 4)):
            direct = np.log(0.6) - np.log(0.4) + sum(
                norm.logpdf(x[j], m.means[1, j], np.sqrt(m.variances[1, j]))
                - norm.logpdf(x[j], m.means[0, j], np.sqrt(m.variances[0, j])) for j in range(4))
            assert m.predict_margin(x) == pytest.approx(direct, abs=1e-10)
            np.testing.assert_allclose(gaussian_logpdf(x, m.means[0], m.variances[0]),
                                       norm.logpdf(x, m.means[0], np.sqrt(m.variances[0])))

    def test_single_class(self):
        with pytest.raises(ValidationError):
            fit_gaussian_nb(Dataset(np.ones((3, 1)), [0, 0, 0]))


def xor_dataset(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    return Dataset(X, (X[:, 0] * X[:, 1] > 0).astype(int))


class TestFitMlp:
    def test_learns_xor(self):
        passes = 0
        for seed in range(3):
            ds = xor_dataset(seed=seed)
            m = fit_mlp(ds, [8], lr=1.0, epochs=3000, seed=seed)
            passes += accuracy(m, ds.features, ds.labels) >= 0.9
            assert m.meta["losses"][-1] < m.meta["losses"][0]
        assert passes >= 2

    def test_no_hidden_layer_equals_logistic(self, linear_ds):
        mlp = fit_mlp(linear_ds, [], lr=0.5, epochs=200, seed=4)
        lr = fit_logistic(linear_ds, lr=0.5, epochs=200, seed=4)
        np.testing.assert_allclose(mlp.predict_proba(linear_ds.features),
                                   lr.predict_proba(linear_ds.features), atol=1e-6)

    def test_layer_shape_mismatch(self):
        with pytest.raises(ValidationError):
            MlpModel(((np.ones((2, 3)), np.zeros(3)), (np.ones((4, 1)), np.zeros(1))))


class TestPredictBatch:
    def test_rows_match_scalar_calls(self, rng):
        for model in random_models(rng):
            X = rng.normal(size=(50, 4))
            batch = predict_batch(model, X)
            scalar = np.array([model.predict_proba(x) for x in X])
            assert np.max(np.abs(batch - scalar)) <= 1e-12

    def test_empty_batch(self):
        assert predict_batch(LogisticModel([1.0, 2.0]), np.zeros((0, 2))).shape == (0,)

    def test_width_mismatch(self):
        with pytest.raises(ValidationError):
            predict_batch(LogisticModel([1.0, 2.0]), np.zeros((3, 5)))


class TestPersistence:
    @pytest.mark.parametrize("which", range(4))
    def test_json_round_trip(self, tmp_path, which):
        rng = np.random.default_rng(which)
        model = random_models(rng)[which]
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        X = rng.normal(size=(10, 4))
        np.testing.assert_array_equal(back.predict_proba(X), model.predict_proba(X))

    def test_parameter_blocks_are_copies(self):
        m = LogisticModel([1.0, 2.0], 0.5)
        blocks = m.parameter_blocks()
        blocks[0]["weights"][:] = 0
        np.testing.assert_array_equal(m.weights, [1.0, 2.0])


def test_function_model_has_no_gradient():
    f = FunctionModel(lambda X: X.sum(axis=1), 2)
    assert f.predict([1.0, 2.0]) == 3.0
    with pytest.raises(ValidationError):
        f.gradient(np.zeros(2))
