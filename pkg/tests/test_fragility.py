from itertools import permutations

import numpy as np
import pytest
from scipy import stats

import fragscope as fs


def samples_from(values):
    values = np.asarray(values, dtype=float)
    return [
        fs.AttributionMatrix(v, np.zeros(v.shape[1]), "linear_exact", "m") for v in values
    ]


def oracle_tau(a, b):
    position = {item: i for i, item in enumerate(b)}
    concordant = discordant = 0
    n = len(a)
    for i in range(n):
        for j in range(i + 1, n):
            if position[a[i]] < position[a[j]]:
                concordant += 1
            else:
                discordant += 1
    return (concordant - discordant) / (n * (n - 1) // 2)


def test_fragility_hand_case():
    report = fs.fragility_scores(samples_from([[[1.0]], [[-1.0]]]))

    assert report.var_phi[0] == pytest.approx(2.0)
    assert report.mean_abs_phi[0] == pytest.approx(1.0)
    assert report.fragility[0] == pytest.approx(2.0 / (1 + 1e-8), abs=1e-9)


def test_identical_samples_are_not_fragile(rng):
    values = rng.standard_normal((4, 6))
    report = fs.fragility_scores(samples_from([values] * 5))
    assert np.all(report.fragility == 0)


def test_zero_attributions():
    report = fs.fragility_scores(samples_from(np.zeros((3, 2, 4))))
    assert np.all(report.fragility == 0)


def test_identical_samples_have_exactly_zero_variance():
    # three copies of 0.1 do not average back to 0.1 in floating point
    values = np.full((2, 3), 0.1)
    report = fs.fragility_scores(samples_from([values] * 3))

    assert np.all(report.var_phi == 0)
    assert np.all(report.fragility == 0)


def test_fragility_needs_two_samples(rng):
    with pytest.raises(fs.InputError, match="at least 2"):
        fs.fragility_scores(samples_from(rng.standard_normal((1, 3, 2))))


def test_fragility_shape_mismatch(rng):
    samples = samples_from(rng.standard_normal((2, 3, 2))) + samples_from(
        rng.standard_normal((1, 4, 2))
    )
    with pytest.raises(fs.InputError, match="mismatched shapes"):
        fs.fragility_scores(samples)


def test_fragility_invariances(rng):
    for _ in range(100):
        R, n, p = rng.integers(2, 6), rng.integers(1, 5), rng.integers(1, 5)
        values = rng.standard_normal((R, n, p))
        base = fs.fragility_scores(samples_from(values), epsilon=0.0).fragility

        shuffled = fs.fragility_scores(samples_from(values[rng.permutation(R)]), epsilon=0.0)
        scale = rng.uniform(0.1, 10)
        scaled = fs.fragility_scores(samples_from(scale * values), epsilon=0.0)

        assert np.allclose(shuffled.fragility, base)
        assert np.allclose(scaled.fragility, scale * base)


def test_top_fragile(rng):
    values = rng.standard_normal((5, 10, 4)) * np.array([1.0, 5.0, 0.1, 2.0])
    report = fs.fragility_scores(samples_from(values), top_k=2)

    assert [name for name, _ in report.top_k] == ["x1", "x3"]
    assert fs.top_fragile(report, 1) == report.top_k[:1]
    assert report.to_dict()["top_fragile"][0]["name"] == "x1"


@pytest.mark.parametrize(
    "a,b,expected",
    [
        ("abcd", "abcd", 1.0),
        ("abcd", "dcba", -1.0),
        ("abcd", "acbd", 2 / 3),
    ],
)
def test_kendall_hand_cases(a, b, expected):
    assert fs.kendall_tau(a, b) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("n", range(2, 7))
def test_kendall_matches_oracle_on_all_permutations(n):
    reference = list(range(n))
    for perm in permutations(reference):
        assert fs.kendall_tau(reference, perm) == oracle_tau(reference, perm)


def test_kendall_random_permutations(rng):
    for _ in range(1000):
        a, b = rng.permutation(50), rng.permutation(50)
        tau = fs.kendall_tau(a, b)
        assert tau == oracle_tau(list(a), list(b))

        position = {item: i for i, item in enumerate(b)}
        expected = stats.kendalltau(np.arange(50), [position[i] for i in a])[0]
        assert tau == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize(
    "a,b,match",
    [
        ("a", "a", "at least 2"),
        ("ab", "ac", "same set"),
        ("aab", "aba", "same set"),
    ],
)
def test_kendall_rejects(a, b, match):
    with pytest.raises(fs.InputError, match=match):
        fs.kendall_tau(a, b)


def test_stability_identical_rankings(rng):
    values = rng.standard_normal((3, 5))
    report = fs.stability_report(samples_from([values] * 4), k_values=(3,))
    assert report.tau_by_k[3] == 1.0


def test_stability_null(rng):
    report = fs.stability_report(samples_from(rng.standard_normal((10, 4, 30))), (20,))
    assert abs(report.tau_top20) <= 0.3


def test_stability_clamps_k(rng):
    with pytest.warns(UserWarning, match="clamped"):
        report = fs.stability_report(samples_from(rng.standard_normal((3, 2, 5))), (20, 50))
    assert report.clamped == (20, 50)
    assert report.tau_top50 is not None


def test_pairwise_taus_symmetric(rng):
    report = fs.stability_report(samples_from(rng.standard_normal((5, 3, 8))), (4,))
    matrix = report.pairwise_taus[4]

    assert np.array_equal(matrix, matrix.T)
    assert np.all(np.diag(matrix) == 1)
    assert report.tau_by_k[4] == pytest.approx(matrix[np.triu_indices(5, k=1)].mean())


def test_fragile_rank_stability(rng):
    values = rng.standard_normal((4, 6, 5)) * np.arange(1, 6)
    report = fs.fragility_scores(samples_from(values))

    stable = fs.fragile_rank_stability([report, report], (5,))

    assert stable.tau_by_k[5] == 1.0
    assert stable.ranking_basis == "fragility_score"
    repeated = fs.stability_report(samples_from(values), (5,), repetitions=[report] * 3)
    assert repeated.tau_fragile_top20 == 1.0


def linear_task(rng, n=1000, rho=0.0):
    a = rng.standard_normal(n)
    b = rho * a + np.sqrt(1 - rho**2) * rng.standard_normal(n)
    X = np.column_stack([a, b, rng.standard_normal(n)])
    y = X.sum(axis=1) + rng.standard_normal(n)
    return fs.FeatureMatrix.from_array(X), y


def test_bootstrap_identical_data_gives_identical_fits(rng):
    X = rng.standard_normal((5, 2))
    repeated = fs.FeatureMatrix.from_array(np.repeat(X[:1], 20, axis=0))
    y = np.full(20, 2.0)

    samples = fs.bootstrap_attributions(
        (repeated, y), X, fs.ModelSpec("linear_ols", intercept=True), fs.BootstrapPlan(4, 20)
    )

    assert all(np.array_equal(s.values, samples[0].values) for s in samples)


def test_bootstrap_orthogonal_features_similar_variance(rng):
    X, y = linear_task(rng, n=3000)
    samples = fs.bootstrap_attributions(
        (X, y), X.take(np.arange(100)), fs.ModelSpec("linear_ols"), fs.BootstrapPlan(40, 3000)
    )
    var = fs.fragility_scores(samples).var_phi
    assert var.max() / var.min() < 3


def test_bootstrap_collinear_pair_is_fragile(rng):
    X, y = linear_task(rng, n=2000, rho=0.999)
    plan = fs.BootstrapPlan(10, 2000, seed=1)

    samples = fs.bootstrap_attributions(
        (X, y), X.take(np.arange(100)), fs.ModelSpec("linear_ols"), plan
    )
    report = fs.fragility_scores(samples, plan=plan)

    assert min(report.var_phi[:2]) >= 10 * report.var_phi[2]
    assert report.num_resamples == 10 and report.seed == 1


def test_bootstrap_deterministic(rng):
    X, y = linear_task(rng, n=300)
    y = (y > 0).astype(int)
    spec = fs.ModelSpec("logistic", config=fs.TrainConfig(epochs=2))
    plan = fs.BootstrapPlan(3, 300, seed=9)

    a = fs.bootstrap_attributions((X, y), X.take(range(5)), spec, plan)
    b = fs.bootstrap_attributions((X, y), X.take(range(5)), spec, plan, n_jobs=2)

    assert all(np.array_equal(s.values, t.values) for s, t in zip(a, b))


def test_bootstrap_failure_names_resample(rng):
    X = rng.standard_normal((50, 2))
    y = np.zeros(50, dtype=int)
    y[0] = 1

    with pytest.raises(fs.InputError, match=r"resample \d+: Training needs both classes"):
        fs.bootstrap_attributions(
            (X, y), X[:3], fs.ModelSpec("logistic"), fs.BootstrapPlan(10, 5)
        )


@pytest.mark.slow
def test_pruning_stabilises_rankings():
    wins = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n, p = 2000, 12
        base = rng.standard_normal((n, p))
        base[:, 1] = 0.999 * base[:, 0] + np.sqrt(1 - 0.999**2) * base[:, 1]
        base[:, 3] = 0.999 * base[:, 2] + np.sqrt(1 - 0.999**2) * base[:, 3]
        y = base @ np.linspace(1.0, 0.5, p) + rng.standard_normal(n)
        X = fs.FeatureMatrix.from_array(base)
        pruned = fs.prune_by_audit(X, fs.audit(X))
        plan = fs.BootstrapPlan(10, n, seed=seed)

        taus = []
        for data in (X, pruned):
            samples = fs.bootstrap_attributions(
                (data, y), data.take(range(100)), fs.ModelSpec("linear_ols"), plan
            )
            taus.append(fs.stability_report(samples, (20,)).tau_top20)
        wins += taus[1] > taus[0]

    assert wins >= 9
