import numpy as np
import pytest
from scipy import special

import fragscope as fs
from fragscope.attribution import _coalitions
from fragscope.models import decision_function


def linear_model(coef, intercept=0.0, kind="linear_ols", means=None):
    p = len(coef)
    return fs.ModelParams(
        kind,
        np.append(coef, intercept),
        ((p, 1),),
        tuple(f"x{j}" for j in range(p)),
        feature_means=means,
    )


@pytest.fixture
def small_mlp(rng):
    def make(p, hidden=(5,), seed=0):
        X = rng.standard_normal((200, p))
        y = (np.sin(X[:, 0]) + X[:, -1] * X[:, 0] > 0).astype(int)
        cfg = fs.TrainConfig(epochs=3, seed=seed, learning_rate=0.5)
        return fs.fit_mlp(X, y, cfg, hidden=hidden), X

    return make


def test_linear_shap_hand_case():
    S = fs.linear_shap(linear_model([1.0, 2.0]), [[3.0, 4.0]], baseline=[1.0, 1.0])

    assert np.allclose(S.values, [[2.0, 6.0]])
    assert S.method == "linear_exact"
    assert S.shape == (1, 2)


def test_linear_shap_at_baseline_is_zero():
    m = linear_model([1.0, -3.0, 0.5], means=[0.2, 0.4, -1.0])
    S = fs.linear_shap(m, [[0.2, 0.4, -1.0]])
    assert np.all(S.values == 0)


def test_linear_shap_efficiency(rng):
    m = linear_model(rng.standard_normal(4), intercept=0.7, means=rng.standard_normal(4))
    X = rng.standard_normal((10, 4))

    S = fs.linear_shap(m, X)

    expected = decision_function(m, X) - decision_function(m, m.feature_means)
    assert np.allclose(S.values.sum(axis=1), expected, atol=1e-12)
    assert S.base_value == pytest.approx(decision_function(m, m.feature_means)[0])


def test_linear_shap_matches_brute_force(rng):
    m = linear_model(rng.standard_normal(4), intercept=-0.3)
    x, mu = rng.standard_normal((2, 4))

    S = fs.linear_shap(m, x[None, :], mu)

    assert np.allclose(S.values[0], fs.brute_force_shapley(m, x, mu), atol=1e-12)


def test_linear_shap_logistic_uses_logit():
    m = linear_model([2.0, -1.0], kind="logistic")
    S = fs.linear_shap(m, [[1.0, 1.0]], baseline=[0.0, 0.0])
    assert np.allclose(S.values, [[2.0, -1.0]])


def test_linear_shap_baseline_length():
    with pytest.raises(fs.InputError, match="Baseline has length 3"):
        fs.linear_shap(linear_model([1.0, 2.0]), [[1.0, 1.0]], baseline=[0.0, 0.0, 0.0])


def test_linear_shap_rejects_mlp(small_mlp):
    m, X = small_mlp(3)
    with pytest.raises(fs.InputError, match="needs a model of kind"):
        fs.linear_shap(m, X[:2])


def test_taylor_logistic_probability_scale(rng):
    m = linear_model([1.5, -0.5, 0.25], kind="logistic")
    X = rng.standard_normal((5, 3))

    S = fs.taylor_attribution(m, X, baseline=np.zeros(3), scale="probability")

    s = special.expit(X @ m.coef)
    assert np.allclose(S.values, (s * (1 - s))[:, None] * m.coef * X)


def test_taylor_logistic_logit_equals_linear(rng):
    m = linear_model([1.5, -0.5, 0.25], kind="logistic", means=rng.standard_normal(3))
    X = rng.standard_normal((5, 3))
    assert np.allclose(
        fs.taylor_attribution(m, X).values, fs.linear_shap(m, X).values, atol=1e-12
    )


def test_taylor_at_baseline_is_zero(small_mlp):
    m, _ = small_mlp(3)
    S = fs.taylor_attribution(m, m.feature_means[None, :])
    assert np.allclose(S.values, 0)


def test_taylor_gradient_factor(small_mlp):
    m, X = small_mlp(3)
    x, h = X[0], 1e-6

    S = fs.taylor_attribution(m, x[None, :], baseline=x - 1.0)

    grad = [
        (decision_function(m, x + h * e)[0] - decision_function(m, x - h * e)[0]) / (2 * h)
        for e in np.eye(3)
    ]
    assert np.allclose(S.values[0], grad, atol=1e-6)


def test_taylor_unknown_scale(small_mlp):
    m, X = small_mlp(2)
    with pytest.raises(fs.InputError, match="scale"):
        fs.taylor_attribution(m, X[:1], scale="odds")


def test_brute_force_additive():
    S = fs.brute_force_shapley(lambda Z: Z[:, 0] + 2 * Z[:, 1], [1.0, 1.0], [0.0, 0.0])
    assert np.allclose(S, [1.0, 2.0])


def test_brute_force_product():
    S = fs.brute_force_shapley(lambda Z: Z[:, 0] * Z[:, 1], [1.0, 1.0], [0.0, 0.0])
    assert np.allclose(S, [0.5, 0.5])


def test_brute_force_single_feature():
    S = fs.brute_force_shapley(lambda Z: 3 * Z[:, 0] ** 2, [2.0], [1.0])
    assert np.allclose(S, [9.0])


def test_brute_force_symmetry_and_efficiency(rng):
    def f(Z):
        return np.tanh(Z[:, 0] + Z[:, 1]) * Z[:, 2] + Z[:, 3] ** 2

    x, mu = rng.standard_normal((2, 4))
    x[1] = x[0]
    mu[1] = mu[0]

    S = fs.brute_force_shapley(f, x, mu)

    assert S[0] == pytest.approx(S[1], abs=1e-12)
    assert S.sum() == pytest.approx(f(x[None, :])[0] - f(mu[None, :])[0], abs=1e-12)


def test_brute_force_limit():
    with pytest.raises(fs.InputError, match="p <= 12"):
        fs.brute_force_shapley(lambda Z: Z.sum(axis=1), np.zeros(13), np.zeros(13))


@pytest.mark.parametrize("p", [3, 4, 5, 6, 7, 8])
def test_kernel_linear_exact(rng, p):
    m = linear_model(rng.standard_normal(p), intercept=0.3)
    X = rng.standard_normal((4, p))
    mu = rng.standard_normal(p)

    S = fs.kernel_shap(m, X, mu[None, :])

    assert np.allclose(S.values, fs.linear_shap(m, X, mu).values, atol=1e-8)


@pytest.mark.parametrize("p", [3, 4, 5, 6, 7, 8])
def test_kernel_matches_brute_force(small_mlp, p):
    m, X = small_mlp(p)
    mu = X.mean(axis=0)

    S = fs.kernel_shap(m, X[:2], mu[None, :], fs.KernelConfig(num_coalitions=2**p))

    for row, x in zip(S.values, X[:2]):
        assert np.allclose(row, fs.brute_force_shapley(m, x, mu), atol=1e-6)


def test_kernel_efficiency_with_background(small_mlp):
    m, X = small_mlp(5)
    background = X[50:80]

    S = fs.kernel_shap(m, X[:3], background, fs.KernelConfig(num_coalitions=20))

    f = decision_function(m, X[:3])
    base = decision_function(m, background).mean()
    assert np.allclose(S.values.sum(axis=1), f - base, atol=1e-10)
    assert S.base_value == pytest.approx(base)


def test_kernel_dummy_feature(rng):
    def f(Z):
        return np.tanh(Z[:, 0] * Z[:, 1]) + Z[:, 3]

    X = rng.standard_normal((3, 4))
    S = fs.kernel_shap(f, X, np.zeros((1, 4)), fs.KernelConfig(num_coalitions=14))
    assert np.allclose(S.values[:, 2], 0, atol=1e-10)


def test_kernel_deterministic(small_mlp):
    m, X = small_mlp(6)
    cfg = fs.KernelConfig(num_coalitions=20, seed=5)

    a = fs.kernel_shap(m, X[:3], X[100:110], cfg)
    b = fs.kernel_shap(m, X[:3], X[100:110], cfg)

    assert np.array_equal(a.values, b.values)


def test_kernel_parallel_matches_serial(small_mlp):
    m, X = small_mlp(5)
    cfg = fs.KernelConfig(num_coalitions=16, seed=2)

    serial = fs.kernel_shap(m, X[:4], X[100:105], cfg)
    parallel = fs.kernel_shap(m, X[:4], X[100:105], cfg, n_jobs=2)

    assert np.array_equal(serial.values, parallel.values)


def test_kernel_error_shrinks_with_budget(small_mlp):
    m, X = small_mlp(6, hidden=(8,))
    mu = X.mean(axis=0)
    exact = np.array([fs.brute_force_shapley(m, x, mu) for x in X[:20]])

    def error(budget, seed):
        cfg = fs.KernelConfig(num_coalitions=budget, seed=seed)
        S = fs.kernel_shap(m, X[:20], mu[None, :], cfg)
        return np.abs(S.values - exact).mean()

    budgets = (12, 24, 48, 62)
    errors = np.array([[error(b, seed) for b in budgets] for seed in range(5)])
    mean = errors.mean(axis=0)

    assert np.all(errors[:, -1] < 1e-8)
    # non-increasing within sampling noise
    assert np.all(mean[1:] <= 1.25 * mean[:-1])
    assert mean[-1] < mean[0]


@pytest.mark.parametrize("p", [3, 4, 5, 6, 7, 8])
def test_kernel_minimum_budget(small_mlp, p):
    m, X = small_mlp(p, hidden=(6,))
    mu = X.mean(axis=0)

    S = fs.kernel_shap(m, X[:50], mu[None, :], fs.KernelConfig(num_coalitions=p + 2))

    f = decision_function(m, X[:50]) - decision_function(m, mu)[0]
    assert np.allclose(S.values.sum(axis=1), f, atol=1e-10)


def test_sampled_coalitions_are_distinct():
    masks, _ = _coalitions(6, 8, np.random.default_rng(1))
    keys = {m.tobytes() for m in masks}

    assert len(masks) == 8
    assert len(keys) == 8


def test_kernel_coalition_budget(small_mlp):
    m, X = small_mlp(6)
    with pytest.raises(fs.InputError, match="at least p \\+ 2"):
        fs.kernel_shap(m, X[:1], X[:5], fs.KernelConfig(num_coalitions=7))


def test_kernel_config_seed():
    with pytest.raises(fs.InputError, match="64-bit"):
        fs.KernelConfig(seed=-3)


def test_kernel_background_subsample(small_mlp):
    m, X = small_mlp(3)
    S = fs.kernel_shap(m, X[:2], X, fs.KernelConfig(background_size=10))
    assert S.values.shape == (2, 3)
    assert not np.allclose(S.baseline, X.mean(axis=0))


def test_coalitions_enumerate_small_sizes_first():
    masks, weights = _coalitions(6, 16, np.random.default_rng(0))
    sizes = masks.sum(axis=1)

    assert set(sizes[:12]) == {1, 5}
    assert len(masks) <= 16
    assert np.all(weights > 0)


def test_explain_dispatch(rng):
    m = linear_model([1.0, 2.0], kind="logistic", means=[0.5, 0.5])
    X = rng.standard_normal((3, 2))

    linear = fs.explain(m, X, "linear")
    kernel = fs.explain(m, X, "kernel")

    assert np.allclose(linear.values, kernel.values, atol=1e-8)
    assert fs.explain(m, X, "taylor").method == "taylor"
    with pytest.raises(fs.InputError, match="Unknown attribution method"):
        fs.explain(m, X, "lime")


def test_attribution_matrix_validation():
    with pytest.raises(fs.NumericalError):
        fs.AttributionMatrix([[np.nan]], [0.0], "taylor", "m")
    with pytest.raises(fs.InputError, match="Baseline length"):
        fs.AttributionMatrix([[1.0, 2.0]], [0.0], "taylor", "m")
