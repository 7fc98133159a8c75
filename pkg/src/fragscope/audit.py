"""Pairwise correlations, correlation clusters and variance inflation factors."""

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import linalg

from . import utils
from .data import as_matrix, check_seed
from .fragscope import InputError

# R^2 at or above 1 - DELTA is reported as an infinite VIF
DELTA = 1e-10

MODERATE_VIF = 5.0
SEVERE_VIF = 10.0


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    values: np.ndarray
    column_names: tuple
    constant: np.ndarray

    def pairs_above(self, rho_thresh):
        """(i, j, rho) for i < j with |rho| above the threshold."""

        i, j = np.triu_indices(len(self.column_names), k=1)
        keep = np.abs(self.values[i, j]) > rho_thresh
        return [(int(a), int(b), float(self.values[a, b])) for a, b in zip(i[keep], j[keep])]

    def to_frame(self):
        names = list(self.column_names)
        return pd.DataFrame(self.values, index=names, columns=names)


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class VifTable:
    """Per-feature VIF. Infinite VIFs are ``np.inf``; constant columns are
    excluded from the regressions and carry status ``"constant"``.
    """

    column_names: tuple
    vif: np.ndarray
    r_squared: np.ndarray
    status: tuple
    underdetermined: bool = False
    sample_rows: int = None

    def severe(self, vif_thresh=SEVERE_VIF):
        """Indices with VIF above ``vif_thresh`` (infinite included)."""

        with np.errstate(invalid="ignore"):
            return tuple(int(j) for j in np.flatnonzero(np.nan_to_num(self.vif) > vif_thresh))

    def to_records(self):
        return [
            {
                "name": name,
                "vif": "inf" if np.isinf(v) else (None if np.isnan(v) else float(v)),
                "r2": None if np.isnan(r2) else float(r2),
                "status": status,
            }
            for name, v, r2, status in zip(
                self.column_names, self.vif, self.r_squared, self.status
            )
        ]

    def to_frame(self):
        return pd.DataFrame(self.to_records())

    def top(self, k=10):
        """Records ordered by decreasing VIF, infinite first."""

        order = sorted(
            range(len(self.column_names)),
            key=lambda j: (-np.nan_to_num(self.vif[j], nan=-1.0, posinf=np.inf), j),
        )
        records = self.to_records()
        return [records[j] for j in order[:k]]


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class AuditReport:
    correlation: CorrelationMatrix
    clusters: tuple
    vif: VifTable
    flagged: dict
    vif_thresh: float = SEVERE_VIF
    rho_thresh: float = 0.85
    seed: int = 0

    @property
    def column_names(self):
        return self.correlation.column_names

    @property
    def severe(self):
        return any(status in ("severe", "infinite") for status in self.vif.status)

    def flagged_names(self):
        names = self.column_names
        return {key: [names[j] for j in value] for key, value in self.flagged.items()}

    def to_dict(self):
        names = self.column_names
        return {
            "vif": self.vif.to_records(),
            "clusters": [[names[j] for j in cluster] for cluster in self.clusters],
            "flagged": self.flagged_names(),
            "thresholds": {"vif": self.vif_thresh, "rho": self.rho_thresh},
            "underdetermined": self.vif.underdetermined,
            "sample_rows": self.vif.sample_rows,
            "constant": [names[j] for j in np.flatnonzero(self.correlation.constant)],
        }


def correlation_matrix(X):
    """Pearson correlations; constant columns get 0 off the diagonal."""

    X = as_matrix(X)
    if X.n_rows < 2:
        raise InputError("Correlations need at least 2 rows.")

    constant = X.constant
    centered = X.values - X.values.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", centered, centered))
    norms[constant] = 1.0
    scaled = centered / norms
    scaled[:, constant] = 0.0

    R = scaled.T @ scaled
    R = np.clip((R + R.T) / 2, -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    R.flags.writeable = False
    return CorrelationMatrix(R, X.column_names, constant)


def correlation_clusters(R, rho_thresh=0.85):
    """Greedy single-pass grouping: seed with the lowest unassigned index and
    absorb every later unassigned feature with |rho| above the threshold.
    """

    if not 0 < rho_thresh <= 1:
        raise InputError(f"rho_thresh must be in (0, 1], got {rho_thresh}.")
    values = R.values if isinstance(R, CorrelationMatrix) else np.asarray(R)
    absolute = np.abs(values)

    unassigned = list(range(values.shape[0]))
    clusters = []
    while unassigned:
        i = unassigned[0]
        cluster = [i] + [j for j in unassigned[1:] if absolute[i, j] > rho_thresh]
        clusters.append(tuple(cluster))
        unassigned = [j for j in unassigned if j not in cluster]

    return tuple(clusters)


def _vif_status(r2, vif):
    if r2 >= 1 - DELTA:
        return "infinite"
    if vif > SEVERE_VIF:
        return "severe"
    if vif > MODERATE_VIF:
        return "moderate"
    return "ok"


def _r_squared(centered, j):
    target = centered[:, j]
    others = np.delete(centered, j, axis=1)
    tss = target @ target
    if others.shape[1] == 0:
        return 0.0
    # gelsd gives the minimum-norm solution for rank-deficient designs
    coef, *_ = linalg.lstsq(others, target, lapack_driver="gelsd")
    resid = target - others @ coef
    return float(1.0 - (resid @ resid) / tss)


def _sample_rows(X, sample_rows, seed):
    if sample_rows is None or X.n_rows <= sample_rows:
        return X
    rows = utils.rng_for(check_seed(seed), "rows").choice(X.n_rows, sample_rows, replace=False)
    return X.take(np.sort(rows))


def vif(X, sample_rows=None, seed=0, n_jobs=1):
    """Variance inflation factor of every column against all the others.

    Each column is regressed (with intercept) on the remaining non-constant
    columns. ``sample_rows`` limits the regression to a seeded row subsample.
    """

    X = as_matrix(X)
    if X.n_features < 2:
        raise InputError("VIF is undefined for a single feature.")
    X = _sample_rows(X, sample_rows, seed)

    active = np.flatnonzero(~X.constant)
    centered = X.values[:, active] - X.values[:, active].mean(axis=0)
    underdetermined = X.n_rows < len(active) + 1
    if underdetermined:
        warnings.warn(
            f"VIF on {X.n_rows} rows for {len(active)} features is under-determined."
        )

    r2_active = utils.parallel_map(
        lambda j: _r_squared(centered, j), range(len(active)), n_jobs=n_jobs
    )

    p = X.n_features
    r_squared = np.full(p, np.nan)
    vifs = np.full(p, np.nan)
    status = ["constant"] * p
    for j, r2 in zip(active, r2_active):
        r2 = max(r2, 0.0)
        r_squared[j] = min(r2, 1.0)
        vifs[j] = np.inf if r2 >= 1 - DELTA else 1.0 / (1.0 - r2)
        status[j] = _vif_status(r2, vifs[j])

    return VifTable(
        X.column_names,
        vifs,
        r_squared,
        tuple(status),
        underdetermined=underdetermined,
        sample_rows=X.n_rows,
    )


def audit(X, vif_thresh=SEVERE_VIF, rho_thresh=0.85, sample_rows=None, seed=0, n_jobs=1):
    """Correlations, clusters, VIF table and flagged feature sets."""

    X = as_matrix(X)
    R = correlation_matrix(X)
    table = vif(X, sample_rows=sample_rows, seed=seed, n_jobs=n_jobs)

    high_corr = sorted({j for a, b, _ in R.pairs_above(rho_thresh) for j in (a, b)})
    flagged = {"high_corr": tuple(high_corr), "high_vif": table.severe(vif_thresh)}

    return AuditReport(
        correlation=R,
        clusters=correlation_clusters(R, rho_thresh),
        vif=table,
        flagged=flagged,
        vif_thresh=vif_thresh,
        rho_thresh=rho_thresh,
        seed=seed,
    )


def prune_by_audit(X, report, vif_thresh=SEVERE_VIF, rho_thresh=0.85):
    """Drop the highest-VIF column until every VIF is at most ``vif_thresh``,
    then drop the later member of every pair with |rho| above ``rho_thresh``.
    VIFs are recomputed after every removal; infinite VIFs tie-break on the
    highest index.
    """

    X = as_matrix(X)
    if tuple(report.column_names) != X.column_names:
        raise InputError("Audit report was not computed from this matrix.")

    rows = _sample_rows(X, report.vif.sample_rows, report.seed)
    kept = list(range(X.n_features))

    while len(kept) > 1:
        table = vif(rows.select(kept))
        values = np.nan_to_num(table.vif, nan=-np.inf, posinf=np.inf)
        worst = max(range(len(kept)), key=lambda j: (values[j], j))
        if values[worst] <= vif_thresh:
            break
        del kept[worst]

    while len(kept) > 1:
        pairs = correlation_matrix(X.select(kept)).pairs_above(rho_thresh)
        if not pairs:
            break
        del kept[pairs[0][1]]

    if not kept:
        raise InputError("Pruning would remove all features.")
    return X.select(kept)
