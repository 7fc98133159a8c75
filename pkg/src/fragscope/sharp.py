"""Fragility-regularised training and the lambda ablation.

The training objective is ``L_base + lam * F_B`` where ``F_B`` is the mean
Fragility Score of first-order Taylor attributions on the batch, comparing
the current parameters with temporary parameters refitted on a bootstrap
resample of the batch. Gradients flow through the current-parameter branch
only.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from . import utils
from .data import BootstrapPlan, as_labels, as_matrix, train_test_split
from .fragility import EPSILON, bootstrap_attributions, fragility_scores, stability_report
from .fragscope import FragscopeError, InputError, NumericalError
from .models import (
    ModelParams,
    Network,
    TrainConfig,
    _binary_targets,
    _fit_network,
    evaluate,
    training_streams,
)

LAMBDA_GRID = (0.0, 0.01, 0.1, 1.0, 10.0)


@dataclass(frozen=True)
class SharpConfig:
    lam: float = 0.5
    fragility_interval: int = 1
    penalty_resamples: int = 2
    inner_steps: int = 1
    base: TrainConfig = TrainConfig()
    epsilon: float = EPSILON
    penalty_schedule: str = "batch"

    def __post_init__(self):
        if self.lam < 0:
            raise InputError(f"lambda must be nonnegative, got {self.lam}.")
        if self.fragility_interval < 1:
            raise InputError("fragility_interval must be at least 1.")
        if self.penalty_resamples < 2:
            raise InputError("penalty_resamples must be at least 2.")
        if self.inner_steps < 1:
            raise InputError("inner_steps must be at least 1.")
        if self.penalty_schedule not in ("batch", "epoch"):
            raise InputError(f"Unknown penalty schedule '{self.penalty_schedule}'.")


class BatchFragility:
    """Callable penalty for the training loop.

    Returns ``(F_B, lam * dF_B/dtheta)`` on gated epochs and ``None``
    otherwise. The penalty is evaluated on gated epochs even for ``lam == 0``
    so that the sampling stream advances identically for every lambda.
    """

    def __init__(self, net, X, y, mu, cfg):
        self.net, self.X, self.y, self.mu, self.cfg = net, X, y, mu, cfg
        self.rng = training_streams(cfg.base.seed)[2]

    def gated(self, epoch, batch):
        if epoch % self.cfg.fragility_interval:
            return False
        return self.cfg.penalty_schedule == "batch" or batch == 0

    def __call__(self, epoch, batch, theta, rows):
        if not self.gated(epoch, batch):
            return None
        try:
            value, grad = self.value_and_grad(theta, rows)
        except (FragscopeError, FloatingPointError) as err:
            raise NumericalError(f"epoch {epoch}, batch {batch}: {err}") from err
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"epoch {epoch}, batch {batch}: penalty gradient is not finite.")
        return value, (self.cfg.lam * grad if self.cfg.lam else 0.0)

    def temporary(self, theta, XB, yB):
        rows = self.rng.integers(0, len(yB), size=len(yB))
        base = self.cfg.base
        for _ in range(self.cfg.inner_steps):
            _, g = self.net.loss_and_grad(theta, XB[rows], yB[rows], base.l2)
            theta = theta - base.learning_rate * g
        return theta

    def value_and_grad(self, theta, rows):
        net, cfg = self.net, self.cfg
        XB, yB = self.X[rows], self.y[rows]
        offset = XB - self.mu

        phis = [net.input_gradient(theta, XB) * offset]
        for _ in range(cfg.penalty_resamples - 1):
            phis.append(net.input_gradient(self.temporary(theta, XB, yB), XB) * offset)
        P = np.stack(phis)

        R = len(P)
        # shifted by the first sample so identical samples give exactly 0
        D = P - P[:1]
        mean = D.mean(axis=0)
        var = ((D - mean) ** 2).sum(axis=0) / (R - 1)
        mabs = np.abs(P).mean(axis=0)
        denom = mabs + cfg.epsilon
        value = float(np.mean(var / denom))

        dvar = 2.0 * (D[0] - mean) / (R - 1)
        dmabs = np.sign(P[0]) / R
        dF = (dvar * denom - var * dmabs) / denom**2
        G = dF / P[0].size
        return value, net.tangent_grad(theta, XB, G * offset)


def train_sharp(X, y, model_spec, cfg=None, attribution_method="taylor"):
    """Mini-batch training with the batch fragility penalty added on every
    ``cfg.fragility_interval``-th epoch.
    """

    cfg = cfg or SharpConfig()
    if attribution_method != "taylor":
        raise InputError(
            f"Only 'taylor' attributions are differentiable in training, got '{attribution_method}'."
        )
    if model_spec.kind not in ("logistic", "mlp"):
        raise InputError(f"Fragility-regularised training needs logistic or mlp, got '{model_spec.kind}'.")

    X, y = _binary_targets(X, y)
    hidden = model_spec.hidden if model_spec.kind == "mlp" else ()
    net = Network.build(X.n_features, hidden)
    mu = X.values.mean(axis=0)

    penalty = BatchFragility(net, X.values, y, mu, cfg)
    theta, losses, penalties = _fit_network(net, X.values, y, cfg.base, penalty=penalty)

    return ModelParams(
        kind=model_spec.kind,
        weights=theta,
        layer_shapes=net.layer_shapes,
        feature_names=X.column_names,
        training_config=cfg.base,
        feature_means=mu,
        loss_history=losses,
        penalty_history=penalties,
    )


@dataclass(frozen=True)
class AblationRow:
    lam: float
    metrics: object
    fragility: float
    tau_top50: float
    seconds: float = field(default=0.0, compare=False)


@utils.pretty_repr
@dataclass(frozen=True)
class AblationResult:
    rows: tuple
    seed: int = 0

    @property
    def grid(self):
        return [row.lam for row in self.rows]

    def to_frame(self):
        """Plot-ready series, one row per lambda."""

        return pd.DataFrame(
            [
                {
                    "lambda": row.lam,
                    "accuracy": row.metrics.accuracy,
                    "precision": row.metrics.precision,
                    "recall": row.metrics.recall,
                    "f1": row.metrics.f1,
                    "roc_auc": row.metrics.roc_auc,
                    "fragility": row.fragility,
                    "tau_top50": row.tau_top50,
                }
                for row in self.rows
            ]
        )

    def to_dict(self):
        # wall times stay out so that reports compare byte for byte
        return {"rows": self.to_frame().to_dict(orient="records"), "seed": self.seed}

    def timings(self):
        return {str(row.lam): row.seconds for row in self.rows}


def _check_grid(grid):
    grid = [float(g) for g in grid]
    if not grid:
        raise InputError("The lambda grid is empty.")
    if 0.0 not in grid:
        raise InputError("The lambda grid must contain 0.")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError(f"The lambda grid must be strictly increasing, got {grid}.")
    return grid


def lambda_ablation(
    X,
    y,
    model_spec,
    grid=LAMBDA_GRID,
    cfg=None,
    plan=None,
    X_test=None,
    y_test=None,
    test_fraction=0.2,
    eval_rows=200,
    n_jobs=1,
):
    """Train once per lambda with shared seeds and measure held-out metrics,
    mean bootstrap fragility and top-50 tau on a fixed evaluation slice.
    """

    grid = _check_grid(grid)
    cfg = cfg or SharpConfig()
    plan = plan or BootstrapPlan()
    X = as_matrix(X)

    if X_test is None:
        (X, y), (X_test, y_test) = train_test_split(X, y, test_fraction, seed=plan.seed)
    X_test = as_matrix(X_test)
    eval_set = X_test.take(np.arange(min(eval_rows, X_test.n_rows)))
    k = min(50, X.n_features)

    def one(lam):
        spec = replace(model_spec, sharp=replace(cfg, lam=lam))
        try:
            started = time.perf_counter()
            m = spec.fit(X, y)
            seconds = time.perf_counter() - started
            samples = bootstrap_attributions((X, y), eval_set, spec, plan, method="taylor")
        except FragscopeError as err:
            raise type(err)(f"lambda={lam}: {err}") from err
        return AblationRow(
            lam=lam,
            metrics=evaluate(m, X_test, as_labels(y_test)),
            fragility=float(np.mean(fragility_scores(samples, cfg.epsilon).fragility)),
            tau_top50=stability_report(samples, (k,)).tau_by_k[k],
            seconds=seconds,
        )

    rows = utils.parallel_map(one, grid, n_jobs=n_jobs)
    return AblationResult(tuple(rows), seed=plan.seed)
