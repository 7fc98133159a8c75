"""Synthetic-data checks of the link between collinearity and attribution
variance for ordinary least squares.

* ``generate_synthetic``: Gaussian features with a target correlation matrix
  and a homoscedastic linear response.
* ``ols_variance_identity_check``: ``(X'X)^-1_ii`` against ``VIF_i / (n Var x_i)``.
* ``variance_bound_experiment``: bootstrap ``Var(phi_i)`` along a correlation
  grid, fitted against ``c (VIF_i - 1)``.
* ``non_identifiability_check``: an exact null-space direction leaves
  predictions unchanged while moving attributions.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import linalg, stats

from . import utils
from .attribution import linear_shap
from .audit import vif
from .data import BootstrapPlan, FeatureMatrix, as_matrix, check_seed
from .fragility import bootstrap_attributions, fragility_scores
from .fragscope import InputError, NumericalError
from .models import ModelParams, ModelSpec, decision_function

RHO_GRID = (0.0, 0.9, 0.99, 0.999)

# allowance below the fitted bound before a point counts as a violation
BOUND_SLACK = 0.2


@dataclass(frozen=True)
class SyntheticSpec:
    """``correlation_targets`` is either a sequence of ``(i, j, rho)`` or a
    full p x p target correlation matrix.
    """

    n: int = 10000
    p: int = 2
    correlation_targets: object = ()
    noise_sigma: float = 1.0
    beta_true: tuple = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise InputError("A synthetic design needs n >= 2 and p >= 1.")
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be nonnegative.")
        check_seed(self.seed)
        beta = np.ones(self.p) if self.beta_true is None else np.asarray(self.beta_true, float)
        if beta.shape != (self.p,):
            raise InputError(f"beta_true has length {beta.size}, expected {self.p}.")
        object.__setattr__(self, "beta_true", tuple(beta.tolist()))

    def target_matrix(self):
        targets = self.correlation_targets
        if isinstance(targets, np.ndarray) and targets.ndim == 2:
            C = np.array(targets, dtype=np.float64)
            if C.shape != (self.p, self.p) or not np.allclose(C, C.T):
                raise InputError("Target correlation matrix must be symmetric p x p.")
        else:
            C = np.eye(self.p)
            for i, j, rho in targets:
                if not (0 <= i < self.p and 0 <= j < self.p) or i == j:
                    raise InputError(f"Invalid correlation target ({i}, {j}).")
                if abs(rho) > 1:
                    raise InputError(f"Correlation {rho} is outside [-1, 1].")
                C[i, j] = C[j, i] = rho

        if linalg.eigvalsh(C).min() < -1e-10:
            raise InputError("Target correlation matrix is not positive semi-definite.")
        return C


def generate_synthetic(spec):
    """(FeatureMatrix, y) with ``y = X beta + N(0, sigma^2)``. The eigen
    factorisation also handles singular (PSD) targets.
    """

    C = spec.target_matrix()
    w, V = linalg.eigh(C)
    factor = V * np.sqrt(np.clip(w, 0.0, None))

    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.p)) @ factor.T
    noise = rng.standard_normal(spec.n)
    y = X @ np.asarray(spec.beta_true) + spec.noise_sigma * noise
    return FeatureMatrix.from_array(X), y


def _gram(X):
    centered = X.values - X.values.mean(axis=0)
    G = centered.T @ centered
    w = linalg.eigvalsh(G)
    if w.min() <= w.max() * 1e-12:
        raise NumericalError("Design is singular; the Gram matrix is not invertible.")
    return G


def _gram_inverse_diagonal(G):
    factor = linalg.cho_factor(G)
    return np.diag(linalg.cho_solve(factor, np.eye(len(G))))


def gram_vif(X):
    """VIF from the inverse Gram matrix of the centered design,
    ``VIF_i = (X'X)^-1_ii * (X'X)_ii``.
    """

    G = _gram(as_matrix(X))
    return _gram_inverse_diagonal(G) * np.diag(G)


def ols_variance_identity_check(spec_or_X, sigma=None):
    """Compare ``sigma^2 (X'X)^-1_ii`` with ``sigma^2 VIF_i / (n Var x_i)``,
    the VIF coming from the auxiliary regressions of the audit.
    """

    if isinstance(spec_or_X, SyntheticSpec):
        X, _ = generate_synthetic(spec_or_X)
        sigma = spec_or_X.noise_sigma if sigma is None else sigma
    else:
        X = as_matrix(spec_or_X)
    sigma = 1.0 if sigma is None else float(sigma)

    lhs = sigma**2 * _gram_inverse_diagonal(_gram(X))
    n_var = X.n_rows * X.values.var(axis=0)
    rhs = sigma**2 * vif(X).vif / n_var
    error = float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))
    return {
        "gram_inverse": lhs,
        "vif_identity": rhs,
        "max_rel_error": error,
        "passed": error <= 1e-6,
    }


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class TheoremCheckReport:
    records: list
    grid: tuple
    c_hat: float
    spearman_vif_var: float
    spearman_vif_fragility: float
    bound_violations: int
    monotone: bool
    max_ratio_to_predicted: float
    min_ratio_to_predicted: float
    block: tuple = (0, 1)
    settings: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.c_hat > 0 and self.spearman_vif_var >= 0.9 and self.monotone

    def to_frame(self):
        """Plot-ready (vif, var_phi, predicted) series."""

        return pd.DataFrame(self.records)

    def to_dict(self):
        return {
            "records": self.records,
            "grid": list(self.grid),
            "c_hat": self.c_hat,
            "spearman_vif_var": self.spearman_vif_var,
            "spearman_vif_fragility": self.spearman_vif_fragility,
            "bound_violations": self.bound_violations,
            "monotone": self.monotone,
            "ratio_to_predicted": {
                "min": self.min_ratio_to_predicted,
                "max": self.max_ratio_to_predicted,
            },
            "settings": self.settings,
            "passed": self.passed,
        }


def _grid_point(rho, template, plan, offset):
    spec = replace(template, correlation_targets=((0, 1, rho),))
    X, y = generate_synthetic(spec)
    mu = X.values.mean(axis=0)
    x_star = FeatureMatrix.from_array((mu + offset)[None, :], X.column_names)

    samples = bootstrap_attributions(
        (X, y), x_star, ModelSpec("linear_ols", intercept=True), plan, baseline=mu
    )
    fragility = fragility_scores(samples)
    vifs = vif(X).vif
    n_var = X.n_rows * X.values.var(axis=0)
    predicted = spec.noise_sigma**2 * vifs * offset**2 / n_var

    return [
        {
            "rho": float(rho),
            "feature": X.column_names[j],
            "vif": float(vifs[j]),
            "var_phi": float(fragility.var_phi[j]),
            "fragility": float(fragility.fragility[j]),
            "predicted": float(predicted[j]),
        }
        for j in range(X.n_features)
    ]


def variance_bound_experiment(grid=RHO_GRID, template=None, plan=None, offset=1.0, n_jobs=1):
    """Bootstrap attribution variance at a fixed point ``x* = mu + offset``
    for every correlation of the (0, 1) feature block in ``grid``.

    ``c_hat`` is the least-squares slope through the origin of ``Var(phi)``
    on ``VIF - 1`` over the block; the check passes when ``c_hat > 0``, the
    Spearman correlation of VIF and variance is at least 0.9 and the variance
    of each block feature strictly increases along the grid.
    """

    grid = tuple(float(r) for r in grid)
    if not grid or any(not -1 < r < 1 for r in grid):
        raise InputError(f"Every grid correlation must lie in (-1, 1), got {grid}.")
    template = template or SyntheticSpec()
    if template.p < 2:
        raise InputError("The experiment needs at least two features.")
    plan = plan or BootstrapPlan(num_resamples=200, sample_size=template.n, seed=template.seed)
    offset = np.broadcast_to(np.asarray(offset, dtype=float), (template.p,))
    if np.any(np.abs(offset) < 0.5):
        raise InputError("|x* - mu| must be at least 0.5 on every feature.")

    points = utils.parallel_map(
        lambda rho: _grid_point(rho, template, plan, offset), grid, n_jobs=n_jobs
    )
    records = [record for point in points for record in point]
    block = [r for r in records if r["feature"] in ("x0", "x1")]

    excess = np.array([r["vif"] - 1.0 for r in block])
    var_phi = np.array([r["var_phi"] for r in block])
    c_hat = float(excess @ var_phi / (excess @ excess)) if excess @ excess > 0 else 0.0
    violations = int(np.sum(var_phi < (1 - BOUND_SLACK) * c_hat * excess))

    vifs = [r["vif"] for r in block]
    spearman_var = float(stats.spearmanr(vifs, var_phi)[0])
    spearman_frag = float(stats.spearmanr(vifs, [r["fragility"] for r in block])[0])

    monotone = all(
        np.all(np.diff([point[j]["var_phi"] for point in points]) > 0) for j in (0, 1)
    )
    ratios = np.array([r["var_phi"] / r["predicted"] for r in records])

    return TheoremCheckReport(
        records=records,
        grid=grid,
        c_hat=c_hat,
        spearman_vif_var=spearman_var,
        spearman_vif_fragility=spearman_frag,
        bound_violations=violations,
        monotone=bool(monotone),
        max_ratio_to_predicted=float(ratios.max()),
        min_ratio_to_predicted=float(ratios.min()),
        settings={
            "n": template.n,
            "p": template.p,
            "noise_sigma": template.noise_sigma,
            "resamples": plan.num_resamples,
            "sample_size": plan.sample_size,
            "seed": plan.seed,
        },
    )


def non_identifiability_check(
    n=200, alpha=(1.0, 1.0), beta=None, t_values=(-1.0, 1.0, 10.0), seed=0
):
    """Exhibit distinct coefficient vectors with identical predictions.

    The last feature is built as ``X_rest @ alpha`` from integer-valued
    columns, so ``gamma = (-alpha, 1)`` spans the null space of the design.
    Predictions under ``beta`` and ``beta + t gamma`` agree while the linear
    attributions at ``x*`` shift by ``t gamma_i (x*_i - mu_i)``.
    """

    alpha = np.asarray(alpha, dtype=np.float64)
    p = alpha.size + 1
    rng = np.random.default_rng(check_seed(seed))
    rest = rng.integers(-5, 6, size=(n, p - 1)).astype(np.float64)
    X = FeatureMatrix.from_array(np.column_stack([rest, rest @ alpha]))
    gamma = np.append(-alpha, 1.0)

    null_norm = float(np.linalg.norm(X.values @ gamma))
    if null_norm > 1e-8 * np.linalg.norm(X.values):
        raise NumericalError(f"Dependence construction failed: |X gamma| = {null_norm}.")

    beta = rng.standard_normal(p) if beta is None else np.asarray(beta, dtype=np.float64)
    if beta.shape != (p,):
        raise InputError(f"beta has length {beta.size}, expected {p}.")
    mu = X.values.mean(axis=0)
    head = mu[:-1] + 1.0
    x_star = np.append(head, head @ alpha)[None, :]

    def model(coef):
        return ModelParams(
            kind="linear_ols",
            weights=np.append(coef, 0.0),
            layer_shapes=((p, 1),),
            feature_names=X.column_names,
            feature_means=mu,
        )

    reference = model(beta)
    points = np.vstack([X.values, x_star])
    base_pred = decision_function(reference, points)
    base_phi = linear_shap(reference, x_star, mu).values[0]

    rows = []
    for t in t_values:
        shifted = model(beta + t * gamma)
        pred_delta = float(np.max(np.abs(decision_function(shifted, points) - base_pred)))
        phi_delta = linear_shap(shifted, x_star, mu).values[0] - base_phi
        expected = t * gamma * (x_star[0] - mu)
        rows.append(
            {
                "t": float(t),
                "prediction_delta": pred_delta,
                "attribution_delta": float(np.max(np.abs(phi_delta))),
                "attribution_error": float(np.max(np.abs(phi_delta - expected))),
            }
        )

    passed = all(
        r["prediction_delta"] <= 1e-10
        and r["attribution_error"] <= 1e-8
        and (r["t"] == 0 or r["attribution_delta"] > 0)
        for r in rows
    )
    return {
        "alpha": alpha,
        "gamma": gamma,
        "null_norm": null_norm,
        "x_star": x_star[0],
        "baseline": mu,
        "rows": rows,
        "passed": passed,
    }
