"""Control versus hypothesis comparison.

The control scenario trains and explains on the full feature set, the
hypothesis scenario on the set left after VIF and correlation pruning. Both
share the split, the bootstrap plan and the evaluation rows.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import utils
from .audit import SEVERE_VIF, audit, prune_by_audit
from .data import BootstrapPlan, as_matrix, standardize, train_test_split
from .fragility import EPSILON, bootstrap_attributions, fragility_scores, stability_report
from .fragscope import FragscopeError
from .models import MetricSet, ModelSpec, evaluate


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    name: str
    feature_names: tuple
    metrics: MetricSet
    fragility: object
    stability: object

    def to_dict(self):
        return {
            "features": list(self.feature_names),
            "metrics": self.metrics.to_dict(),
            "fragility": self.fragility.to_dict(),
            "stability": self.stability.to_dict(),
        }


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class PipelineReport:
    audit: object
    control: ScenarioResult
    hypothesis: ScenarioResult
    drop_table: list
    removed: tuple

    def to_dict(self):
        return {
            "audit": self.audit.to_dict(),
            "removed": list(self.removed),
            "control": self.control.to_dict(),
            "hypothesis": self.hypothesis.to_dict(),
            "percentage_drop": self.drop_table,
        }


def percentage_drop_table(control, hypothesis):
    """Relative change of every metric from control to hypothesis, in percent
    of the control value (positive means the hypothesis scored lower).
    """

    rows = []
    for f in fields(MetricSet):
        c, h = getattr(control, f.name), getattr(hypothesis, f.name)
        drop = None
        if c is not None and h is not None and c != 0:
            drop = 100.0 * (c - h) / c
        rows.append({"metric": f.name, "control": c, "hypothesis": h, "drop_pct": drop})
    return rows


def _scenario(name, train, test, model_spec, plan, method, kernel_config, epsilon, k_values, eval_rows, n_jobs):
    (X_train, y_train), (X_test, y_test) = train, test
    try:
        m = model_spec.fit(X_train, y_train)
        metrics = evaluate(m, X_test, y_test)
        eval_set = X_test.take(np.arange(min(eval_rows, X_test.n_rows)))
        samples = bootstrap_attributions(
            (X_train, y_train),
            eval_set,
            model_spec,
            plan,
            method=method,
            kernel_config=kernel_config,
            n_jobs=n_jobs,
        )
    except FragscopeError as err:
        raise type(err)(f"{name}: {err}") from err

    return ScenarioResult(
        name=name,
        feature_names=X_train.column_names,
        metrics=metrics,
        fragility=fragility_scores(samples, epsilon, plan),
        stability=stability_report(samples, k_values),
    ), samples


def run_pipeline(
    X,
    y,
    model_spec=None,
    plan=None,
    vif_thresh=SEVERE_VIF,
    rho_thresh=0.85,
    method="linear",
    kernel_config=None,
    test_fraction=0.2,
    eval_rows=200,
    sample_rows=5000,
    epsilon=EPSILON,
    k_values=(20, 50),
    seed=0,
    n_jobs=1,
    keep=None,
):
    """Standardise, split, audit and prune the training set, then fit,
    evaluate and bootstrap-explain both feature sets.

    ``keep`` may be a dict; bootstrap attribution tensors are stored in it
    under ``"control"`` and ``"hypothesis"``.
    """

    model_spec = model_spec or ModelSpec("logistic")
    plan = plan or BootstrapPlan(seed=seed)
    X = as_matrix(X)
    if not X.standardized:
        X = standardize(X)

    (X_train, y_train), (X_test, y_test) = train_test_split(X, y, test_fraction, seed)
    plan = plan.capped(X_train.n_rows)
    report = audit(X_train, vif_thresh, rho_thresh, sample_rows, seed, n_jobs)
    pruned = prune_by_audit(X_train, report, vif_thresh, rho_thresh)
    removed = tuple(c for c in X_train.column_names if c not in pruned.column_names)

    results = {}
    for name, train, test in (
        ("control", (X_train, y_train), (X_test, y_test)),
        ("hypothesis", (pruned, y_train), (X_test.select(pruned.column_names), y_test)),
    ):
        results[name], samples = _scenario(
            name, train, test, model_spec, plan, method, kernel_config, epsilon, k_values, eval_rows, n_jobs
        )
        if keep is not None:
            keep[name] = np.stack([s.values for s in samples])

    return PipelineReport(
        audit=report,
        control=results["control"],
        hypothesis=results["hypothesis"],
        drop_table=percentage_drop_table(results["control"].metrics, results["hypothesis"].metrics),
        removed=removed,
    )
