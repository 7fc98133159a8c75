import numpy as np
import pytest

import fragscope as fs
from fragscope.models import decision_function


def test_generate_independent():
    X, y = fs.generate_synthetic(fs.SyntheticSpec(n=10000, p=2, seed=1))

    assert X.values.shape == (10000, 2)
    assert abs(np.corrcoef(X.values.T)[0, 1]) <= 0.03
    assert y.shape == (10000,)


def test_generate_correlated():
    X, _ = fs.generate_synthetic(fs.SyntheticSpec(correlation_targets=((0, 1, 0.99),)))
    assert 0.985 <= np.corrcoef(X.values.T)[0, 1] <= 0.995


def test_generate_noise_free():
    X, y = fs.generate_synthetic(fs.SyntheticSpec(n=100, noise_sigma=0.0, beta_true=(1.0, 0.0)))
    assert np.array_equal(y, X.values[:, 0])


def test_generate_deterministic():
    spec = fs.SyntheticSpec(n=50, p=3, seed=4)
    (a, ya), (b, yb) = fs.generate_synthetic(spec), fs.generate_synthetic(spec)
    assert np.array_equal(a.values, b.values) and np.array_equal(ya, yb)


def test_generate_singular_target():
    X, _ = fs.generate_synthetic(fs.SyntheticSpec(n=100, correlation_targets=((0, 1, 1.0),)))
    assert np.allclose(X.values[:, 0], X.values[:, 1])


@pytest.mark.parametrize(
    "kwargs,match",
    [
        ({"p": 3, "correlation_targets": ((0, 1, 0.9), (0, 2, 0.9), (1, 2, -0.9))}, "positive semi-definite"),
        ({"correlation_targets": ((0, 1, 1.5),)}, "outside"),
        ({"correlation_targets": ((0, 0, 0.5),)}, "Invalid correlation target"),
        ({"correlation_targets": np.ones((3, 3))}, "symmetric p x p"),
    ],
)
def test_invalid_targets(kwargs, match):
    with pytest.raises(fs.InputError, match=match):
        fs.generate_synthetic(fs.SyntheticSpec(n=10, **kwargs))


@pytest.mark.parametrize(
    "kwargs", [{"n": 1}, {"noise_sigma": -1.0}, {"p": 2, "beta_true": (1.0,)}]
)
def test_invalid_spec(kwargs):
    with pytest.raises(fs.InputError):
        fs.SyntheticSpec(**kwargs)


def test_gram_vif_matches_regression_vif(rng):
    for _ in range(10):
        p = int(rng.integers(2, 11))
        A = rng.standard_normal((p, p))
        X = fs.standardize(rng.standard_normal((2000, p)) @ A)

        assert np.allclose(fs.gram_vif(X), fs.vif(X).vif, rtol=1e-6)


def test_gram_vif_orthonormal():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((200, 3)))
    Q = Q - Q.mean(axis=0)
    assert np.allclose(fs.gram_vif(Q), fs.vif(Q).vif, rtol=1e-6)


def test_identity_check_passes():
    result = fs.ols_variance_identity_check(
        fs.SyntheticSpec(n=5000, p=3, correlation_targets=((0, 1, 0.9),), noise_sigma=2.0)
    )

    assert result["passed"]
    assert result["max_rel_error"] <= 1e-6
    assert np.allclose(result["gram_inverse"], result["vif_identity"], rtol=1e-6)


def test_identity_check_independent_design(rng):
    X = fs.standardize(rng.standard_normal((1000, 2)))
    result = fs.ols_variance_identity_check(X, sigma=1.0)
    assert result["passed"]


def test_identity_check_singular():
    with pytest.raises(fs.NumericalError, match="singular"):
        fs.ols_variance_identity_check(
            fs.SyntheticSpec(n=100, correlation_targets=((0, 1, 1.0),))
        )


def test_non_identifiability():
    result = fs.non_identifiability_check(t_values=(-1.0, 0.0, 1.0, 10.0))
    rows = {row["t"]: row for row in result["rows"]}

    assert result["null_norm"] == 0.0
    assert result["passed"]
    assert rows[0.0]["attribution_delta"] == 0.0
    assert rows[1.0]["prediction_delta"] <= 1e-10
    assert rows[1.0]["attribution_delta"] >= 0.1
    assert rows[10.0]["attribution_error"] <= 1e-8


def test_null_space_prediction_invariance(rng):
    a, b = rng.integers(-5, 6, size=(2, 100)).astype(float)
    X = np.column_stack([a, b, a + b])
    gamma = np.array([-1.0, -1.0, 1.0])
    beta = rng.standard_normal(3)

    reference = fs.ModelParams("linear_ols", np.append(beta, 0.0), ((3, 1),), ("a", "b", "c"))
    for t in (-1.0, 1.0, 10.0):
        shifted = reference.with_weights(np.append(beta + t * gamma, 0.0))
        assert np.allclose(decision_function(shifted, X), decision_function(reference, X), atol=1e-10)


def test_non_identifiability_beta_length():
    with pytest.raises(fs.InputError, match="beta has length"):
        fs.non_identifiability_check(beta=(1.0, 2.0))


def test_variance_bound_small():
    report = fs.variance_bound_experiment(
        grid=(0.0, 0.9, 0.99),
        template=fs.SyntheticSpec(n=2000),
        plan=fs.BootstrapPlan(50, 2000),
    )

    assert report.c_hat > 0
    assert report.monotone
    assert len(report.records) == 6
    frame = report.to_frame()
    assert {"rho", "feature", "vif", "var_phi", "fragility", "predicted"} <= set(frame.columns)
    assert report.to_dict()["settings"]["resamples"] == 50


@pytest.mark.parametrize(
    "kwargs,match",
    [
        ({"grid": (0.0, 1.0)}, "grid correlation"),
        ({"grid": ()}, "grid correlation"),
        ({"template": fs.SyntheticSpec(p=1)}, "two features"),
        ({"offset": 0.1}, "at least 0.5"),
    ],
)
def test_variance_bound_rejects(kwargs, match):
    with pytest.raises(fs.InputError, match=match):
        fs.variance_bound_experiment(**kwargs)


@pytest.mark.slow
def test_variance_bound_default_grid():
    report = fs.variance_bound_experiment()

    vifs = {r["rho"]: r["vif"] for r in report.records if r["feature"] == "x0"}
    for rho, expected in zip((0.0, 0.9, 0.99, 0.999), (1.0, 5.263, 50.25, 500.25)):
        assert vifs[rho] == pytest.approx(expected, rel=0.05)

    assert report.passed
    assert report.spearman_vif_var >= 0.9
    assert report.spearman_vif_fragility >= 0.9
    assert 1 / 3 <= report.min_ratio_to_predicted
    assert report.max_ratio_to_predicted <= 3
