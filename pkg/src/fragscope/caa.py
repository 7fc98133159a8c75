"""Collinearity-aware attribution filter.

Correlated features are grouped greedily (see ``audit.correlation_clusters``)
and their attributions aggregated into one column per group.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import utils
from .audit import correlation_clusters, correlation_matrix, vif
from .data import as_matrix
from .fragility import stability_report
from .fragscope import InputError

AGGREGATIONS = ("mean", "max", "sum")


@dataclass(frozen=True)
class ClusterMapping:
    clusters: tuple
    column_names: tuple
    rho_thresh: float = 0.85
    aggregation: str = "mean"
    vif_thresh: float = None

    @property
    def cluster_names(self):
        return tuple("+".join(self.column_names[j] for j in c) for c in self.clusters)

    def to_dict(self):
        return {
            "clusters": [[self.column_names[j] for j in c] for c in self.clusters],
            "threshold": self.rho_thresh,
            "aggregation": self.aggregation,
            "vif_thresh": self.vif_thresh,
        }


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class FilteredAttributionMatrix:
    values: np.ndarray
    cluster_names: tuple
    method: str
    model_ref: str = None

    @property
    def shape(self):
        return self.values.shape

    def to_frame(self):
        return pd.DataFrame(self.values, columns=list(self.cluster_names))


def _merge_inflated(clusters, X, vif_thresh):
    """Fold every cluster holding a feature with VIF above ``vif_thresh``
    into the first such cluster.
    """

    inflated = set(vif(X).severe(vif_thresh))
    merged, target = [], None
    for cluster in clusters:
        if inflated.intersection(cluster):
            if target is None:
                target = len(merged)
                merged.append(list(cluster))
            else:
                merged[target].extend(cluster)
        else:
            merged.append(list(cluster))
    return tuple(tuple(sorted(c)) for c in merged)


def _aggregate(block, aggregation):
    if aggregation == "mean":
        return block.mean(axis=1)
    if aggregation == "sum":
        return block.sum(axis=1)
    # signed value of the largest magnitude; argmax keeps the lowest index on ties
    pick = np.argmax(np.abs(block), axis=1)
    return block[np.arange(block.shape[0]), pick]


def caa_filter(S, X, rho_thresh=0.85, aggregation="mean", vif_thresh=None):
    """Aggregate the attributions ``S`` over correlation clusters of ``X``.

    ``vif_thresh`` additionally merges all clusters containing a feature with
    VIF above it. Returns ``(FilteredAttributionMatrix, ClusterMapping)``.
    """

    if aggregation not in AGGREGATIONS:
        raise InputError(f"Unknown aggregation '{aggregation}'.")
    X = as_matrix(X)
    values = np.asarray(S.values if hasattr(S, "values") else S, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != X.n_features:
        raise InputError(
            f"Attributions have {values.shape[-1]} columns, matrix has {X.n_features}."
        )

    clusters = correlation_clusters(correlation_matrix(X), rho_thresh)
    if vif_thresh is not None:
        clusters = _merge_inflated(clusters, X, vif_thresh)

    mapping = ClusterMapping(clusters, X.column_names, rho_thresh, aggregation, vif_thresh)
    return apply_mapping(S, mapping), mapping


def apply_mapping(S, mapping):
    """Filter another attribution sample with an existing mapping."""

    values = np.asarray(S.values if hasattr(S, "values") else S, dtype=np.float64)
    filtered = np.column_stack(
        [_aggregate(values[:, list(c)], mapping.aggregation) for c in mapping.clusters]
    )
    return FilteredAttributionMatrix(
        filtered,
        mapping.cluster_names,
        getattr(S, "method", "unknown"),
        getattr(S, "model_ref", None),
    )


def cluster_importance_ranking(F):
    """Cluster names by decreasing mean |value|, ties by cluster index."""

    if F.values.size == 0:
        raise InputError("Cannot rank an empty filtered matrix.")
    scores = np.abs(F.values).mean(axis=0)
    order = np.argsort(-scores, kind="stable")
    return [F.cluster_names[j] for j in order]


def filtered_stability(samples, X, rho_thresh=0.85, aggregation="mean", k=50):
    """Mean pairwise top-k tau at feature level and at cluster level.

    One mapping, built from ``X``, is applied to every sample so the cluster
    columns line up across resamples.
    """

    F, mapping = caa_filter(samples[0], X, rho_thresh, aggregation)
    filtered = [F] + [apply_mapping(s, mapping) for s in samples[1:]]
    p = samples[0].shape[1]
    feature = stability_report(samples, (min(k, p),))
    cluster = stability_report(filtered, (min(k, len(mapping.clusters)),))
    return {
        "feature_tau": next(iter(feature.tau_by_k.values())),
        "cluster_tau": next(iter(cluster.tau_by_k.values())),
        "mapping": mapping,
    }
