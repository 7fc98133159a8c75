"""Tabular data: feature matrices, labels, CSV ingestion and resampling."""

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from . import utils
from .fragscope import InputError


def check_seed(seed):
    """``seed`` as an int, or InputError if it is not a 64-bit unsigned integer."""

    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) < 2**64:
        raise InputError(f"Seeds are 64-bit unsigned integers, got {seed}.")
    return int(seed)


def _readonly(values, dtype=np.float64):
    values = np.array(values, dtype=dtype, copy=True)
    values.flags.writeable = False
    return values


@utils.pretty_repr
@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """n x p design matrix with column metadata.

    ``column_kinds`` holds ``"numeric"`` or ``"one_hot:<column>"`` per column.
    ``column_means`` and ``column_stds`` are in original units; for a matrix
    returned by ``standardize`` they are the statistics it was scaled with.
    Row subsets of a standardized matrix keep the flag (same units).
    """

    values: np.ndarray
    column_names: tuple
    column_kinds: tuple = None
    standardized: bool = False
    column_means: np.ndarray = None
    column_stds: np.ndarray = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InputError(f"Feature values must be 2-d, got shape {values.shape}.")
        n, p = values.shape
        if not np.all(np.isfinite(values)):
            bad = [
                self.column_names[j]
                for j in np.flatnonzero(~np.all(np.isfinite(values), axis=0))
            ]
            raise InputError(f"Non-finite values in columns {bad}.")

        names = tuple(str(name) for name in self.column_names)
        if len(names) != p:
            raise InputError(f"Got {len(names)} column names for {p} columns.")
        if len(set(names)) != p:
            raise InputError("Column names must be unique.")

        kinds = tuple(self.column_kinds) if self.column_kinds else ("numeric",) * p
        if len(kinds) != p:
            raise InputError(f"Got {len(kinds)} column kinds for {p} columns.")

        means = self.column_means
        stds = self.column_stds
        if means is None:
            means = values.mean(axis=0) if n else np.zeros(p)
        if stds is None:
            stds = values.std(axis=0, ddof=1) if n > 1 else np.zeros(p)
        if len(means) != p or len(stds) != p:
            raise InputError("column_means/column_stds must have one entry per column.")

        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "column_kinds", kinds)
        object.__setattr__(self, "column_means", _readonly(means))
        object.__setattr__(self, "column_stds", _readonly(stds))

    @classmethod
    def from_array(cls, values, column_names=None, **kwargs):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if column_names is None:
            column_names = [f"x{j}" for j in range(values.shape[1])]
        return cls(values, tuple(column_names), **kwargs)

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_features(self):
        return self.values.shape[1]

    @property
    def constant(self):
        """Mask of columns holding a single value."""

        if self.n_rows == 0:
            return np.zeros(self.n_features, dtype=bool)
        return np.ptp(self.values, axis=0) == 0

    def select(self, columns):
        """Column subset, by index or name, in the given order."""

        index = [
            self.column_names.index(c) if isinstance(c, str) else int(c)
            for c in columns
        ]
        return replace(
            self,
            values=self.values[:, index],
            column_names=tuple(self.column_names[j] for j in index),
            column_kinds=tuple(self.column_kinds[j] for j in index),
            column_means=self.column_means[index],
            column_stds=self.column_stds[index],
        )

    def take(self, rows):
        return replace(self, values=self.values[np.asarray(rows, dtype=int)])

    def to_frame(self):
        return pd.DataFrame(self.values, columns=list(self.column_names))


@dataclass(frozen=True, eq=False)
class LabelVector:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1:
            raise InputError("Labels must be a 1-d vector.")
        if values.size and not np.all(np.isin(values, (0, 1))):
            raise InputError("Labels must be binary {0, 1}.")
        object.__setattr__(self, "values", _readonly(values, dtype=np.int8))

    def __len__(self):
        return len(self.values)

    def take(self, rows):
        return LabelVector(self.values[np.asarray(rows, dtype=int)])

    def check_both_classes(self):
        counts = np.bincount(self.values, minlength=2)
        if counts.min() == 0:
            raise InputError(
                f"Training needs both classes; got counts {counts.tolist()}."
            )
        return counts


@dataclass(frozen=True)
class BootstrapPlan:
    num_resamples: int = 10
    sample_size: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.num_resamples < 2:
            raise InputError("A bootstrap plan needs at least 2 resamples.")
        if self.sample_size < 1:
            raise InputError("Bootstrap sample_size must be positive.")
        check_seed(self.seed)

    def capped(self, n):
        """The same plan with sample_size limited to ``n`` rows."""

        return replace(self, sample_size=min(self.sample_size, n))


@dataclass(frozen=True)
class DatasetSchema:
    label: str = "label"
    categorical: tuple = ()
    drop: tuple = ()

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as f:
            spec = json.load(f)
        if "label" not in spec:
            raise InputError(f"Schema {path} does not name a label column.")
        return cls(
            label=spec["label"],
            categorical=tuple(spec.get("categorical", ())),
            drop=tuple(spec.get("drop", ())),
        )


def as_matrix(X):
    if isinstance(X, FeatureMatrix):
        return X
    return FeatureMatrix.from_array(X)


def as_labels(y):
    if isinstance(y, LabelVector):
        return y.values
    return np.asarray(y)


def load_csv(path, schema=None):
    """Read a CSV into a (FeatureMatrix, LabelVector) pair.

    Categorical columns are one-hot encoded as ``<col>_<value>`` in place of
    the original column; identifier columns listed under ``drop`` are removed.

    Example:

    >>> X, y = load_csv("UNSW_NB15_training-set.csv",
    ...                 DatasetSchema("label", ("proto", "service", "state"),
    ...                               ("id", "attack_cat")))
    """

    schema = schema or DatasetSchema()
    try:
        df = pd.read_csv(path, encoding="utf-8", low_memory=False)
    except pd.errors.EmptyDataError:
        raise InputError(f"{path} is empty.") from None
    except FileNotFoundError:
        raise InputError(f"Could not find {path}.") from None
    except UnicodeDecodeError as err:
        raise InputError(f"{path} is not valid UTF-8 ({err.reason}).") from None
    except pd.errors.ParserError as err:
        raise InputError(f"Could not parse {path}: {err}") from None
    except OSError as err:
        raise InputError(f"Could not read {path}: {err.strerror or err}.") from None

    df.columns = df.columns.str.strip()
    if df.empty:
        raise InputError(f"{path} has a header but no rows.")
    if schema.label not in df.columns:
        raise InputError(f"Label column '{schema.label}' missing from {path}.")

    labels = pd.to_numeric(df[schema.label], errors="coerce")
    if labels.isna().any():
        raise InputError(f"Label column '{schema.label}' has missing or non-numeric values.")
    y = LabelVector(labels.to_numpy())

    df = df.drop(columns=[schema.label] + [c for c in schema.drop if c in df.columns])
    missing = [c for c in schema.categorical if c not in df.columns]
    if missing:
        raise InputError(f"Categorical columns {missing} missing from {path}.")

    blocks, kinds = [], []
    for column in df.columns:
        series = df[column]
        if series.isna().any():
            raise InputError(f"Column '{column}' has missing values.")
        if column in schema.categorical:
            dummies = pd.get_dummies(series.astype(str), prefix=column, prefix_sep="_")
            blocks.append(dummies.astype(np.float64))
            kinds.extend([f"one_hot:{column}"] * dummies.shape[1])
        else:
            try:
                numeric = pd.to_numeric(series, errors="raise")
            except (ValueError, TypeError):
                raise InputError(
                    f"Non-numeric value in declared-numeric column '{column}'."
                ) from None
            blocks.append(numeric.astype(np.float64).to_frame(column))
            kinds.append("numeric")

    if not blocks:
        raise InputError(f"{path} has no feature columns.")
    features = pd.concat(blocks, axis=1)
    X = FeatureMatrix(features.to_numpy(), tuple(features.columns), tuple(kinds))
    return X, y


def write_csv(X, path, y=None, label="label"):
    """Write features (and labels) so that ``load_csv`` reads them back."""

    frame = as_matrix(X).to_frame()
    if y is not None:
        frame[label] = as_labels(y)
    frame.to_csv(path, index=False)
    return path


def standardize(X):
    """Z-score every column with the sample (n-1) standard deviation.
    Constant columns are set to 0 and flagged with a warning.
    """

    X = as_matrix(X)
    if X.standardized:
        raise InputError("FeatureMatrix is already standardized.")

    means = X.values.mean(axis=0)
    stds = X.values.std(axis=0, ddof=1) if X.n_rows > 1 else np.zeros(X.n_features)
    constant = X.constant
    scale = np.where(constant, 1.0, stds)
    values = (X.values - means) / scale
    values[:, constant] = 0.0

    if constant.any():
        names = [X.column_names[j] for j in np.flatnonzero(constant)]
        warnings.warn(f"Constant columns left at 0: {names}")

    return replace(
        X,
        values=values,
        standardized=True,
        column_means=means,
        column_stds=np.where(constant, 0.0, stds),
    )


def bootstrap_indices(n, plan):
    """``plan.num_resamples`` index vectors drawn uniformly with replacement."""

    if n < 1:
        raise InputError("Cannot resample from an empty dataset.")
    seeds = utils.derive_seeds(plan.seed, plan.num_resamples, "resample")
    return [
        np.random.default_rng(seed).integers(0, n, size=plan.sample_size)
        for seed in seeds
    ]


def train_test_split(X, y, test_fraction=0.2, seed=0):
    """Stratified, seeded split into ((X_train, y_train), (X_test, y_test))."""

    if not 0 < test_fraction < 1:
        raise InputError(f"test_fraction must be in (0, 1), got {test_fraction}.")
    X = as_matrix(X)
    labels = LabelVector(as_labels(y))
    if len(labels) != X.n_rows:
        raise InputError("Feature and label row counts differ.")

    rng = utils.rng_for(check_seed(seed), "split")
    test = []
    for cls in (0, 1):
        members = np.flatnonzero(labels.values == cls)
        if len(members) < 2:
            raise InputError(
                f"Class {cls} has {len(members)} instances; need at least 2 to split."
            )
        count = int(np.clip(round(test_fraction * len(members)), 1, len(members) - 1))
        test.append(rng.permutation(members)[:count])

    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(X.n_rows), test)
    return (X.take(train), labels.take(train)), (X.take(test), labels.take(test))


def subsample(X, y, size, seed=0):
    """Uniform row subsample without replacement, for desk-scale runs."""

    X = as_matrix(X)
    if size >= X.n_rows:
        return X, LabelVector(as_labels(y))
    rows = np.sort(utils.rng_for(check_seed(seed), "rows").choice(X.n_rows, size, replace=False))
    return X.take(rows), LabelVector(as_labels(y)[rows])
