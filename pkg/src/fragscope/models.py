"""Trainable predictors: closed-form OLS, logistic regression and a tanh MLP.

All three are stored as a stack of dense layers in one flat parameter vector
so that training, prediction and attribution share the same code.
"""

import json
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import linalg, special, stats

from . import utils
from .data import as_labels, as_matrix, check_seed
from .fragscope import InputError, NumericalError

KINDS = ("linear_ols", "logistic", "mlp")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    l2: float = 0.0
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be positive.")
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch_size must be positive.")
        if self.l2 < 0:
            raise InputError("l2 must be nonnegative.")
        if self.optimizer not in ("sgd", "adam"):
            raise InputError(f"Unknown optimizer '{self.optimizer}'.")
        check_seed(self.seed)


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class ModelParams:
    """Trained parameters. ``weights`` concatenates ``W.ravel(), b`` per layer;
    for the linear kinds the first p entries are the coefficients and the last
    one the intercept.
    """

    kind: str
    weights: np.ndarray
    layer_shapes: tuple
    feature_names: tuple
    training_config: TrainConfig = None
    feature_means: np.ndarray = None
    loss_history: tuple = ()
    penalty_history: tuple = ()
    rank_deficient: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"Unknown model kind '{self.kind}'.")
        shapes = tuple(tuple(int(d) for d in shape) for shape in self.layer_shapes)
        weights = np.array(self.weights, dtype=np.float64)
        if weights.size != Network(shapes).size:
            raise InputError(
                f"{weights.size} weights do not fit layer shapes {shapes}."
            )
        if not np.all(np.isfinite(weights)):
            raise NumericalError("Model weights are not finite.")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "layer_shapes", shapes)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        means = self.feature_means
        means = np.zeros(self.n_features) if means is None else np.array(means, float)
        means.flags.writeable = False
        object.__setattr__(self, "feature_means", means)

    @property
    def n_features(self):
        return self.layer_shapes[0][0]

    @property
    def network(self):
        return Network(self.layer_shapes)

    @property
    def coef(self):
        if len(self.layer_shapes) != 1:
            raise InputError("Only single-layer models have coefficients.")
        return self.weights[: self.n_features]

    @property
    def intercept(self):
        return float(self.weights[-1]) if len(self.layer_shapes) == 1 else None

    def with_weights(self, weights):
        return replace(self, weights=weights)

    def fingerprint(self):
        return f"{self.kind}-{utils.checksum(self.weights)}"

    def to_dict(self):
        return {
            "kind": self.kind,
            "layer_shapes": [list(s) for s in self.layer_shapes],
            "weights": self.weights.tolist(),
            "feature_names": list(self.feature_names),
            "feature_means": self.feature_means.tolist(),
            "training_config": asdict(self.training_config)
            if self.training_config
            else None,
            "rank_deficient": self.rank_deficient,
        }

    @classmethod
    def from_dict(cls, odict):
        cfg = odict.get("training_config")
        return cls(
            kind=odict["kind"],
            weights=odict["weights"],
            layer_shapes=odict["layer_shapes"],
            feature_names=odict["feature_names"],
            training_config=TrainConfig(**cfg) if cfg else None,
            feature_means=odict.get("feature_means"),
            rank_deficient=odict.get("rank_deficient", False),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=2)
        return path

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


class Network:
    """Dense tanh layers ending in a single logit.

    ``layer_shapes`` lists ``(fan_in, fan_out)`` per layer; the last layer has
    ``fan_out == 1``. A single layer is a linear (or logistic) model.
    """

    def __init__(self, layer_shapes):
        self.layer_shapes = tuple(tuple(s) for s in layer_shapes)
        if self.layer_shapes[-1][1] != 1:
            raise InputError("The output layer must have a single unit.")

    @classmethod
    def build(cls, n_features, hidden=()):
        widths = [n_features, *hidden, 1]
        return cls(list(zip(widths[:-1], widths[1:])))

    @property
    def size(self):
        return sum(i * o + o for i, o in self.layer_shapes)

    def unpack(self, theta):
        layers, start = [], 0
        for i, o in self.layer_shapes:
            W = theta[start : start + i * o].reshape(i, o)
            start += i * o
            b = theta[start : start + o]
            start += o
            layers.append((W, b))
        return layers

    def init(self, rng):
        """Uniform weights scaled by fan-in, zero biases."""

        parts = []
        for i, o in self.layer_shapes:
            bound = 1.0 / np.sqrt(i)
            parts.append(rng.uniform(-bound, bound, size=i * o))
            parts.append(np.zeros(o))
        return np.concatenate(parts)

    def forward(self, theta, X):
        layers = self.unpack(theta)
        hs = [X]
        for W, b in layers[:-1]:
            hs.append(np.tanh(hs[-1] @ W + b))
        W, b = layers[-1]
        return (hs[-1] @ W + b)[:, 0], hs

    def logit(self, theta, X):
        return self.forward(theta, X)[0]

    def loss(self, theta, X, y, l2=0.0):
        z = self.logit(theta, X)
        loss = np.mean(np.logaddexp(0.0, z) - y * z)
        if l2:
            loss += 0.5 * l2 * sum(np.sum(W * W) for W, _ in self.unpack(theta))
        return float(loss)

    def loss_and_grad(self, theta, X, y, l2=0.0):
        """Mean binary cross-entropy on logits and its gradient."""

        layers = self.unpack(theta)
        z, hs = self.forward(theta, X)
        loss = np.mean(np.logaddexp(0.0, z) - y * z)

        grads = []
        delta = ((special.expit(z) - y) / len(y))[:, None]
        for depth in range(len(layers) - 1, -1, -1):
            W, _ = layers[depth]
            gW = hs[depth].T @ delta
            if l2:
                gW = gW + l2 * W
            grads.append((gW, delta.sum(axis=0)))
            if depth:
                delta = (delta @ W.T) * (1.0 - hs[depth] ** 2)

        if l2:
            loss += 0.5 * l2 * sum(np.sum(W * W) for W, _ in layers)
        return float(loss), self._flatten(grads[::-1])

    def input_gradient(self, theta, X):
        """d logit / dx for every row of X."""

        layers = self.unpack(theta)
        _, hs = self.forward(theta, X)
        grad = np.ones((X.shape[0], 1))
        for depth in range(len(layers) - 1, -1, -1):
            W, _ = layers[depth]
            grad = grad @ W.T
            if depth:
                grad = grad * (1.0 - hs[depth] ** 2)
        return grad

    def tangent_grad(self, theta, X, V):
        """Gradient w.r.t. theta of sum_i V_i . d logit/dx (x_i).

        Forward-mode tangents along V are pushed through the network and the
        result is differentiated in reverse, through both the primal and the
        tangent paths.
        """

        layers = self.unpack(theta)
        hs, ds, tangents, dots = [X], [], [V], []
        for W, b in layers[:-1]:
            adot = tangents[-1] @ W
            h = np.tanh(hs[-1] @ W + b)
            d = 1.0 - h * h
            hs.append(h)
            ds.append(d)
            dots.append(adot)
            tangents.append(d * adot)

        grads = []
        W, _ = layers[-1]
        adot_bar = np.ones((X.shape[0], 1))
        grads.append((tangents[-1].T @ adot_bar, np.zeros(1)))
        tangent_bar = adot_bar @ W.T
        h_bar = np.zeros_like(hs[-1])

        for depth in range(len(layers) - 2, -1, -1):
            W, _ = layers[depth]
            h, d, adot = hs[depth + 1], ds[depth], dots[depth]
            adot_bar = tangent_bar * d
            h_bar = h_bar + (tangent_bar * adot) * (-2.0 * h)
            a_bar = h_bar * d
            gW = tangents[depth].T @ adot_bar + hs[depth].T @ a_bar
            grads.append((gW, a_bar.sum(axis=0)))
            tangent_bar = adot_bar @ W.T
            h_bar = a_bar @ W.T

        return self._flatten(grads[::-1])

    @staticmethod
    def _flatten(grads):
        return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])


class _Sgd:
    def __init__(self, cfg):
        self.lr = cfg.learning_rate

    def step(self, theta, grad):
        return theta - self.lr * grad


class _Adam:
    def __init__(self, cfg, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = cfg.learning_rate, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m, self.v = np.zeros_like(theta), np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def training_streams(seed):
    """Independent generators for (initialisation, batch order, extras)."""

    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def _fit_network(net, X, y, cfg, penalty=None):
    """Seeded mini-batch loop. ``penalty(epoch, batch, theta, rows)`` may return
    ``(value, grad)`` to be added to the base gradient, or ``None``.
    """

    init_rng, order_rng, _ = training_streams(cfg.seed)
    theta = net.init(init_rng)
    optimizer = _Adam(cfg) if cfg.optimizer == "adam" else _Sgd(cfg)
    n = len(y)

    losses, penalties = [], []
    for epoch in range(1, cfg.epochs + 1):
        order = order_rng.permutation(n)
        epoch_penalty = []
        for batch, start in enumerate(range(0, n, cfg.batch_size)):
            rows = order[start : start + cfg.batch_size]
            _, grad = net.loss_and_grad(theta, X[rows], y[rows], cfg.l2)
            if penalty is not None:
                extra = penalty(epoch, batch, theta, rows)
                if extra is not None:
                    value, pgrad = extra
                    if not np.isfinite(value):
                        raise NumericalError(
                            f"Penalty is not finite at epoch {epoch}, batch {batch}."
                        )
                    epoch_penalty.append(value)
                    grad = grad + pgrad
            theta = optimizer.step(theta, grad)

        loss = net.loss(theta, X, y, cfg.l2)
        if not np.isfinite(loss):
            raise NumericalError(f"Training loss diverged at epoch {epoch}.")
        losses.append(loss)
        penalties.append(float(np.mean(epoch_penalty)) if epoch_penalty else 0.0)

    return theta, tuple(losses), tuple(penalties)


def _binary_targets(X, y):
    X = as_matrix(X)
    y = np.asarray(as_labels(y), dtype=np.float64)
    if len(y) != X.n_rows:
        raise InputError(f"{X.n_rows} rows but {len(y)} labels.")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise InputError("Labels must be binary {0, 1}.")
    if y.min() == y.max():
        raise InputError("Training needs both classes; all labels are identical.")
    return X, y


def fit_ols(X, y, intercept=False):
    """Minimum-norm least squares. Rank deficiency is flagged, not an error."""

    X = as_matrix(X)
    y = np.asarray(as_labels(y), dtype=np.float64)
    if X.n_rows < 1 or len(y) != X.n_rows:
        raise InputError(f"{X.n_rows} rows but {len(y)} targets.")

    design = X.values
    if intercept:
        design = np.column_stack([design, np.ones(X.n_rows)])
    coef, _, rank, _ = linalg.lstsq(design, y, lapack_driver="gelsd")
    rank_deficient = rank < design.shape[1]
    if rank_deficient:
        warnings.warn(
            f"OLS design has rank {rank} < {design.shape[1]}; using the minimum-norm solution."
        )

    weights = coef if intercept else np.append(coef, 0.0)
    return ModelParams(
        kind="linear_ols",
        weights=weights,
        layer_shapes=((X.n_features, 1),),
        feature_names=X.column_names,
        feature_means=X.values.mean(axis=0),
        rank_deficient=bool(rank_deficient),
    )


def fit_logistic(X, y, cfg=None):
    """Logistic regression by seeded mini-batch gradient descent."""

    cfg = cfg or TrainConfig()
    X, y = _binary_targets(X, y)
    net = Network.build(X.n_features)
    theta, losses, _ = _fit_network(net, X.values, y, cfg)
    return ModelParams(
        kind="logistic",
        weights=theta,
        layer_shapes=net.layer_shapes,
        feature_names=X.column_names,
        training_config=cfg,
        feature_means=X.values.mean(axis=0),
        loss_history=losses,
    )


def fit_mlp(X, y, cfg=None, hidden=(16,)):
    """Fully connected tanh network with a sigmoid output."""

    cfg = cfg or TrainConfig()
    X, y = _binary_targets(X, y)
    net = Network.build(X.n_features, tuple(hidden))
    theta, losses, _ = _fit_network(net, X.values, y, cfg)
    return ModelParams(
        kind="mlp",
        weights=theta,
        layer_shapes=net.layer_shapes,
        feature_names=X.column_names,
        training_config=cfg,
        feature_means=X.values.mean(axis=0),
        loss_history=losses,
    )


@dataclass(frozen=True)
class ModelSpec:
    """What to train: kind, architecture and configuration. ``sharp`` switches
    training to the fragility-regularised objective.
    """

    kind: str = "logistic"
    hidden: tuple = ()
    config: TrainConfig = TrainConfig()
    intercept: bool = False
    sharp: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"Unknown model kind '{self.kind}'.")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    def fit(self, X, y, seed=None):
        if self.sharp is not None:
            from .sharp import train_sharp

            sharp = self.sharp
            if seed is not None:
                sharp = replace(sharp, base=replace(sharp.base, seed=seed))
            return train_sharp(X, y, self, sharp)

        cfg = self.config if seed is None else replace(self.config, seed=seed)
        if self.kind == "linear_ols":
            return fit_ols(X, y, intercept=self.intercept)
        if self.kind == "logistic":
            return fit_logistic(X, y, cfg)
        return fit_mlp(X, y, cfg, self.hidden)


def _check_features(m, X):
    X = np.asarray(X.values if hasattr(X, "values") else X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != m.n_features:
        raise InputError(f"Model expects {m.n_features} features, got {X.shape[1]}.")
    return X


def decision_function(m, X):
    """Raw output: the logit for logistic/mlp, the fitted value for OLS."""

    return m.network.logit(m.weights, _check_features(m, X))


def predict_proba(m, X):
    """Class-1 probabilities. ``linear_ols`` models return raw scores."""

    scores = decision_function(m, X)
    if m.kind == "linear_ols":
        return scores
    return special.expit(scores)


@utils.pretty_repr
@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float = None

    def to_dict(self):
        return asdict(self)


def roc_auc(scores, y):
    """Rank-statistic AUC with midranks for ties; None for a single class."""

    y = np.asarray(y)
    positives = int(y.sum())
    negatives = len(y) - positives
    if positives == 0 or negatives == 0:
        return None
    ranks = stats.rankdata(scores)
    return float((ranks[y == 1].sum() - positives * (positives + 1) / 2) / (positives * negatives))


def metrics_from_scores(scores, y, threshold=0.5):
    y = np.asarray(as_labels(y)).astype(int)
    if not np.all(np.isin(y, (0, 1))):
        raise InputError("Labels must be binary {0, 1}.")
    predicted = (np.asarray(scores) >= threshold).astype(int)

    tp = int(np.sum((predicted == 1) & (y == 1)))
    fp = int(np.sum((predicted == 1) & (y == 0)))
    fn = int(np.sum((predicted == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    return MetricSet(
        accuracy=float(np.mean(predicted == y)),
        precision=precision,
        recall=recall,
        f1=f1,
        roc_auc=roc_auc(scores, y),
    )


def evaluate(m, X, y):
    """Accuracy, precision, recall, F1 at threshold 0.5 and ROC AUC."""

    return metrics_from_scores(predict_proba(m, X), y)
