"""Attribution instability across bootstrap retrainings.

The Fragility Score of feature i is ``Var(phi_i) / (E|phi_i| + epsilon)``,
with the variance taken across resamples (n-1 convention) for each explained
instance and then averaged over instances.
"""

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import pandas as pd

from . import utils
from .attribution import explain
from .data import as_labels, as_matrix, bootstrap_indices
from .fragscope import FragscopeError, InputError

EPSILON = 1e-8


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class FragilityReport:
    feature_names: tuple
    var_phi: np.ndarray
    mean_abs_phi: np.ndarray
    fragility: np.ndarray
    epsilon: float = EPSILON
    num_resamples: int = None
    sample_size: int = None
    seed: int = None
    top_k: tuple = ()

    def to_frame(self):
        return pd.DataFrame(
            {
                "feature": list(self.feature_names),
                "var_phi": self.var_phi,
                "mean_abs_phi": self.mean_abs_phi,
                "fragility": self.fragility,
            }
        )

    def to_dict(self):
        return {
            "features": self.to_frame().to_dict(orient="records"),
            "epsilon": self.epsilon,
            "resamples": {
                "count": self.num_resamples,
                "sample_size": self.sample_size,
                "seed": self.seed,
            },
            "top_fragile": [{"name": n, "fragility": f} for n, f in self.top_k],
            "mean_fragility": float(np.mean(self.fragility)),
        }


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class StabilityReport:
    """Mean pairwise Kendall's tau of top-K rankings, keyed by requested K."""

    tau_by_k: dict
    pairwise_taus: dict
    ranking_basis: str = "mean_abs_shap_importance"
    clamped: tuple = ()
    tau_fragile_top20: float = None
    rankings: list = field(default_factory=list)

    @property
    def tau_top20(self):
        return self.tau_by_k.get(20)

    @property
    def tau_top50(self):
        return self.tau_by_k.get(50)

    def to_dict(self):
        return {
            "ranking_basis": self.ranking_basis,
            "tau": {f"top{k}": v for k, v in self.tau_by_k.items()},
            "pairwise_taus": {f"top{k}": v for k, v in self.pairwise_taus.items()},
            "clamped": list(self.clamped),
            "tau_fragile_top20": self.tau_fragile_top20,
        }


def _annotated(prefix, err):
    return type(err)(f"{prefix}: {err}")


def bootstrap_attributions(
    train,
    eval_set,
    model_spec,
    plan,
    method="linear",
    kernel_config=None,
    baseline=None,
    n_jobs=1,
):
    """Retrain ``model_spec`` on every resample of ``train`` and attribute the
    same ``eval_set`` each time.

    The baseline is fixed to the full training-set column means unless given,
    so the only source of variation is the refitted model.
    """

    X, y = train
    X = as_matrix(X)
    y = np.asarray(as_labels(y))
    if len(y) != X.n_rows:
        raise InputError(f"{X.n_rows} training rows but {len(y)} targets.")
    if plan.num_resamples < 2:
        raise InputError("Bootstrap attributions need at least 2 resamples.")

    mu = X.values.mean(axis=0) if baseline is None else np.asarray(baseline, dtype=float)
    indices = bootstrap_indices(X.n_rows, plan)
    seeds = utils.derive_seeds(plan.seed, plan.num_resamples, "train")

    def one(r):
        rows = indices[r]
        try:
            m = model_spec.fit(X.take(rows), y[rows], seed=seeds[r])
            return explain(m, eval_set, method, baseline=mu, kernel_config=kernel_config)
        except FragscopeError as err:
            raise _annotated(f"resample {r}", err) from err

    return utils.parallel_map(one, range(plan.num_resamples), n_jobs=n_jobs)


def _stack(samples):
    if len(samples) < 2:
        raise InputError("Need at least 2 attribution samples.")
    shapes = {s.shape for s in samples}
    if len(shapes) != 1:
        raise InputError(f"Attribution samples have mismatched shapes {sorted(shapes)}.")
    return np.stack([s.values for s in samples])


def _ranking(scores):
    """Feature indices by decreasing score, ties by lower index."""

    return np.argsort(-np.asarray(scores), kind="stable")


def top_fragile(report, k=20):
    """(name, fragility) for the ``k`` most fragile features."""

    order = _ranking(report.fragility)[:k]
    return tuple((report.feature_names[j], float(report.fragility[j])) for j in order)


def fragility_scores(samples, epsilon=EPSILON, plan=None, top_k=20):
    """Per-feature Fragility Scores from congruent attribution samples."""

    stacked = _stack(samples)
    # shifted by the first sample so identical samples give exactly 0
    var_phi = (stacked - stacked[:1]).var(axis=0, ddof=1).mean(axis=0)
    mean_abs = np.abs(stacked).mean(axis=(0, 1))
    fragility = var_phi / (mean_abs + epsilon)

    names = samples[0].feature_names
    return FragilityReport(
        feature_names=names,
        var_phi=var_phi,
        mean_abs_phi=mean_abs,
        fragility=fragility,
        epsilon=epsilon,
        num_resamples=len(samples),
        sample_size=plan.sample_size if plan else None,
        seed=plan.seed if plan else None,
        top_k=tuple(
            (names[j], float(fragility[j])) for j in _ranking(fragility)[:top_k]
        ),
    )


def kendall_tau(rank_a, rank_b):
    """Kendall's tau-a between two orderings of the same elements."""

    rank_a, rank_b = list(rank_a), list(rank_b)
    n = len(rank_a)
    if n < 2:
        raise InputError("Kendall's tau needs at least 2 elements.")
    if len(set(rank_a)) != n or len(rank_b) != n or set(rank_a) != set(rank_b):
        raise InputError("Rankings must order the same set of distinct elements.")

    position = {item: i for i, item in enumerate(rank_b)}
    seq = np.array([position[item] for item in rank_a])
    upper = np.triu(np.sign(seq[None, :] - seq[:, None]), k=1)
    return float(upper.sum()) / (n * (n - 1) // 2)


def _aligned_tau(order_a, order_b, k):
    """Tau over the union of both top-k sets, each list ordered by its own
    full ranking.
    """

    union = set(order_a[:k].tolist()) | set(order_b[:k].tolist())
    if len(union) < 2:
        return 1.0
    pos_a = np.empty(len(order_a), dtype=int)
    pos_a[order_a] = np.arange(len(order_a))
    pos_b = np.empty(len(order_b), dtype=int)
    pos_b[order_b] = np.arange(len(order_b))
    return kendall_tau(
        sorted(union, key=lambda j: pos_a[j]), sorted(union, key=lambda j: pos_b[j])
    )


def _pairwise(orders, k_values, p):
    tau_by_k, pairwise, clamped = {}, {}, []
    for k in k_values:
        effective = min(k, p)
        if effective < k:
            clamped.append(k)
            warnings.warn(f"top-{k} clamped to the {p} available features.")
        matrix = np.eye(len(orders))
        for a, b in combinations(range(len(orders)), 2):
            matrix[a, b] = matrix[b, a] = _aligned_tau(orders[a], orders[b], effective)
        tau_by_k[k] = float(matrix[np.triu_indices(len(orders), k=1)].mean())
        pairwise[k] = matrix
    return tau_by_k, pairwise, tuple(clamped)


def fragile_rank_stability(reports, k_values=(20,)):
    """Stability of the fragility ranking itself across repeated studies."""

    if len(reports) < 2:
        raise InputError("Need at least 2 fragility reports.")
    orders = [_ranking(r.fragility) for r in reports]
    tau_by_k, pairwise, clamped = _pairwise(orders, k_values, len(orders[0]))
    return StabilityReport(
        tau_by_k, pairwise, "fragility_score", clamped, rankings=orders
    )


def stability_report(samples, k_values=(20, 50), repetitions=None):
    """Mean pairwise tau of importance rankings (mean |phi| per resample).

    ``repetitions`` are FragilityReports from repeated studies; when given,
    the top-20 fragility-ranking tau is reported as well.
    """

    stacked = _stack(samples)
    orders = [_ranking(np.abs(s).mean(axis=0)) for s in stacked]
    tau_by_k, pairwise, clamped = _pairwise(orders, k_values, stacked.shape[2])

    fragile_tau = None
    if repetitions:
        fragile_tau = fragile_rank_stability(repetitions, (20,)).tau_top20

    return StabilityReport(
        tau_by_k,
        pairwise,
        "mean_abs_shap_importance",
        clamped,
        tau_fragile_top20=fragile_tau,
        rankings=orders,
    )
