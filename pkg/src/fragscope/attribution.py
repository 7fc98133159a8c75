"""Feature attributions relative to a baseline.

Four methods share the :class:`AttributionMatrix` output:

* ``linear_shap``: exact ``beta_i (x_i - mu_i)`` for linear and logistic models
  (logistic models on the logit scale).
* ``taylor_attribution``: first-order gradient times input offset.
* ``kernel_shap``: Shapley-kernel weighted local linear surrogate over sampled
  or enumerated coalitions, masked features taken from a background set.
* ``brute_force_shapley``: exact enumeration of all coalitions, for small p.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import pandas as pd
from scipy import linalg, special

from . import utils
from .data import as_matrix, check_seed
from .fragscope import InputError, NumericalError
from .models import ModelParams, decision_function

METHODS = ("linear_exact", "taylor", "kernel_shap", "brute_force")

# largest p accepted by the exhaustive oracle
MAX_BRUTE_FORCE_FEATURES = 12

# fresh coalition draws per row before a design counts as singular
MAX_REDRAWS = 20


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class AttributionMatrix:
    values: np.ndarray
    baseline: np.ndarray
    method: str
    model_ref: str
    feature_names: tuple = None
    base_value: float = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InputError(f"Attributions must be 2-d, got shape {values.shape}.")
        if not np.all(np.isfinite(values)):
            raise NumericalError(f"Non-finite {self.method} attributions.")
        if len(self.baseline) != values.shape[1]:
            raise InputError("Baseline length does not match the attribution columns.")
        if self.method not in METHODS:
            raise InputError(f"Unknown attribution method '{self.method}'.")
        names = self.feature_names or [f"x{j}" for j in range(values.shape[1])]
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "baseline", np.asarray(self.baseline, dtype=np.float64))
        object.__setattr__(self, "feature_names", tuple(names))

    @property
    def shape(self):
        return self.values.shape

    def mean_abs(self):
        return np.abs(self.values).mean(axis=0)

    def to_frame(self):
        return pd.DataFrame(self.values, columns=list(self.feature_names))

    def to_dict(self):
        return {
            "method": self.method,
            "model_ref": self.model_ref,
            "feature_names": list(self.feature_names),
            "baseline": self.baseline,
            "base_value": self.base_value,
            "values": self.values,
        }


@dataclass(frozen=True)
class KernelConfig:
    num_coalitions: int = 512
    background_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.num_coalitions < 1 or self.background_size < 1:
            raise InputError("num_coalitions and background_size must be positive.")
        check_seed(self.seed)


def _rows(X):
    return as_matrix(X).values


def _baseline(m, baseline, p):
    baseline = m.feature_means if baseline is None else np.asarray(baseline, dtype=float)
    if baseline.shape != (p,):
        raise InputError(f"Baseline has length {baseline.size}, expected {p}.")
    return baseline


def _names(m, X):
    if hasattr(X, "column_names"):
        return X.column_names
    return m.feature_names


@utils.requires_kind("linear_ols", "logistic")
def linear_shap(m, X_eval, baseline=None):
    """Exact attributions ``coef * (x - baseline)`` on the model's linear
    output. ``baseline`` defaults to the training column means.
    """

    X = _rows(X_eval)
    if X.shape[1] != m.n_features:
        raise InputError(f"Model expects {m.n_features} features, got {X.shape[1]}.")
    mu = _baseline(m, baseline, m.n_features)
    values = m.coef * (X - mu)
    return AttributionMatrix(
        values,
        mu,
        "linear_exact",
        m.fingerprint(),
        _names(m, X_eval),
        base_value=float(m.coef @ mu + m.intercept),
    )


@utils.requires_kind("logistic", "mlp")
def taylor_attribution(m, X_eval, baseline=None, scale="logit"):
    """Gradient of the output at x times ``x - baseline``.

    ``scale="logit"`` differentiates the logit; ``scale="probability"``
    differentiates the sigmoid output instead.
    """

    if scale not in ("logit", "probability"):
        raise InputError(f"Unknown attribution scale '{scale}'.")
    X = _rows(X_eval)
    if X.shape[1] != m.n_features:
        raise InputError(f"Model expects {m.n_features} features, got {X.shape[1]}.")
    mu = _baseline(m, baseline, m.n_features)

    net = m.network
    grad = net.input_gradient(m.weights, X)
    if scale == "probability":
        s = special.expit(net.logit(m.weights, X))
        grad = grad * (s * (1 - s))[:, None]

    return AttributionMatrix(grad * (X - mu), mu, "taylor", m.fingerprint(), _names(m, X_eval))


def _as_function(model):
    if isinstance(model, ModelParams):
        return (lambda Z: decision_function(model, Z)), model.fingerprint()
    if callable(model):
        return model, getattr(model, "__name__", "callable")
    raise InputError(f"Cannot explain object of type {type(model).__name__}.")


def _all_masks(p):
    return ((np.arange(2**p)[:, None] >> np.arange(p)) & 1).astype(bool)


def brute_force_shapley(model, x, baseline):
    """Exact Shapley values with absent features set to ``baseline``."""

    f, _ = _as_function(model)
    x = np.asarray(x, dtype=np.float64).ravel()
    baseline = np.asarray(baseline, dtype=np.float64).ravel()
    p = x.size
    if baseline.size != p:
        raise InputError(f"Baseline has length {baseline.size}, expected {p}.")
    if p > MAX_BRUTE_FORCE_FEATURES:
        raise InputError(
            f"Exhaustive Shapley values need p <= {MAX_BRUTE_FORCE_FEATURES}, got {p}."
        )

    masks = _all_masks(p)
    values = np.asarray(f(np.where(masks, x, baseline)), dtype=np.float64)
    sizes = masks.sum(axis=1)
    weights = np.array(
        [math.factorial(s) * math.factorial(p - s - 1) / math.factorial(p) for s in range(p)]
    )

    phi = np.empty(p)
    codes = np.arange(2**p)
    for i in range(p):
        without = codes[~masks[:, i]]
        phi[i] = np.sum(weights[sizes[without]] * (values[without | (1 << i)] - values[without]))
    return phi


def _kernel_weight(p, s):
    return (p - 1) / (math.comb(p, s) * s * (p - s))


def _coalitions(p, budget, rng):
    """Coalition masks and weights. Sizes are enumerated completely, smallest
    and largest first, while they fit the budget; the rest of the budget is
    filled with distinct masks drawn with size probability proportional to the
    kernel mass.
    """

    if budget >= 2**p - 2:
        masks = _all_masks(p)[1:-1]
        sizes = masks.sum(axis=1)
        return masks, np.array([_kernel_weight(p, s) for s in sizes])

    masks, weights = [], []
    remaining = list(range(1, p // 2 + 1))
    left = budget
    while remaining:
        s = remaining[0]
        members = [s] if s == p - s else [s, p - s]
        count = sum(math.comb(p, k) for k in members)
        if count > left:
            break
        for k in members:
            for subset in _subsets(p, k):
                masks.append(subset)
                weights.append(_kernel_weight(p, k))
        left -= count
        remaining.pop(0)

    if remaining and left:
        sizes = [k for s in remaining for k in ([s] if s == p - s else [s, p - s])]
        mass = np.array([(p - 1) / (k * (p - k)) for k in sizes])
        # distinct masks only: a complement adds no rank once sum(phi) is fixed
        drawn = {}
        for _ in range(50 * left):
            if len(drawn) == left:
                break
            k = sizes[rng.choice(len(sizes), p=mass / mass.sum())]
            mask = np.zeros(p, dtype=bool)
            mask[rng.choice(p, size=k, replace=False)] = True
            drawn.setdefault(mask.tobytes(), mask)
        for mask in drawn.values():
            masks.append(mask)
            weights.append(mass.sum() / len(drawn))

    if not masks:
        return np.zeros((0, p), dtype=bool), np.zeros(0)
    return np.array(masks), np.array(weights)


def _subsets(p, k):
    for combo in combinations(range(p), k):
        mask = np.zeros(p, dtype=bool)
        mask[list(combo)] = True
        yield mask


def _coalition_values(f, x, background, masks):
    """Mean model output over background rows with the coalition taken from x."""

    chunk = max(1, 2**20 // (len(background) * len(x)))
    values = []
    for start in range(0, len(masks), chunk):
        block = masks[start : start + chunk]
        Z = np.where(block[:, None, :], x, background[None, :, :])
        out = np.asarray(f(Z.reshape(-1, len(x))), dtype=np.float64)
        values.append(out.reshape(len(block), len(background)).mean(axis=1))
    return np.concatenate(values) if values else np.zeros(0)


def _reduced_design(masks):
    Z = masks.astype(np.float64)
    return Z[:, :-1] - Z[:, -1:]


def _solve_kernel(masks, weights, values, total):
    """Weighted least squares with sum(phi) == total imposed exactly by
    eliminating the last feature.
    """

    p = masks.shape[1]
    A = _reduced_design(masks)
    b = values - masks[:, -1] * total
    root = np.sqrt(weights)[:, None]
    coef, _, rank, _ = linalg.lstsq(root * A, root[:, 0] * b, lapack_driver="gelsd")
    if rank < p - 1:
        return None
    return np.append(coef, total - coef.sum())


def _explain_instance(f, x, background, base, num_coalitions, seed):
    p = len(x)
    full = float(_coalition_values(f, x, background, np.ones((1, p), dtype=bool))[0])
    total = full - base
    if p == 1:
        return np.array([total])

    rng = np.random.default_rng(seed)
    for _ in range(MAX_REDRAWS):
        masks, weights = _coalitions(p, num_coalitions, rng)
        # redraw rank-deficient designs before spending model calls on them
        if len(masks) and np.linalg.matrix_rank(_reduced_design(masks)) == p - 1:
            values = _coalition_values(f, x, background, masks) - base
            phi = _solve_kernel(masks, weights, values, total)
            if phi is not None:
                return phi
    raise NumericalError(
        f"Kernel SHAP design is singular with {num_coalitions} coalitions for p={p}."
    )


def kernel_shap(m, X_eval, background, cfg=None, n_jobs=1):
    """Kernel SHAP estimates for every row of ``X_eval``.

    Masked features are filled from each background row and the outputs
    averaged, so attributions sum to ``f(x) - mean f(background)``. With
    ``num_coalitions >= 2**p - 2`` every coalition is enumerated and the
    result is exact. ``m`` may be a ModelParams or a vectorised callable.
    """

    cfg = cfg or KernelConfig()
    f, ref = _as_function(m)
    X = _rows(X_eval)
    background = _rows(background)
    p = X.shape[1]
    if background.shape[0] == 0:
        raise InputError("Kernel SHAP needs a nonempty background set.")
    if background.shape[1] != p:
        raise InputError("Background and evaluation columns differ.")
    if cfg.num_coalitions < min(p + 2, 2**p - 2):
        raise InputError(f"num_coalitions must be at least p + 2 = {p + 2}.")

    if background.shape[0] > cfg.background_size:
        rows = utils.rng_for(cfg.seed, "background").choice(
            background.shape[0], cfg.background_size, replace=False
        )
        background = background[np.sort(rows)]

    base = float(np.mean(f(background)))
    seeds = utils.derive_seeds(cfg.seed, X.shape[0], "coalitions")
    values = utils.parallel_map(
        lambda args: _explain_instance(f, args[0], background, base, cfg.num_coalitions, args[1]),
        zip(X, seeds),
        n_jobs=n_jobs,
    )

    names = _names(m, X_eval) if isinstance(m, ModelParams) else getattr(X_eval, "column_names", None)
    return AttributionMatrix(
        np.array(values).reshape(X.shape[0], p),
        background.mean(axis=0),
        "kernel_shap",
        ref,
        names,
        base_value=base,
    )


def explain(m, X_eval, method="linear", baseline=None, kernel_config=None, scale="logit"):
    """Dispatch on the method names used by the command line."""

    if method == "linear":
        return linear_shap(m, X_eval, baseline)
    if method == "taylor":
        return taylor_attribution(m, X_eval, baseline, scale=scale)
    if method == "kernel":
        # background defaults to the baseline point, i.e. interventional on mu
        mu = _baseline(m, baseline, m.n_features)
        return kernel_shap(m, X_eval, mu[None, :], kernel_config)
    raise InputError(f"Unknown attribution method '{method}'.")
