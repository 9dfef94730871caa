"""Datasets: CSV ingestion, the synthetic 2D Gaussian generator, splits and scaling."""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_feature_matrix

__all__ = [
    "Dataset",
    "GaussianSpec",
    "ScalingParams",
    "DataError",
    "load_csv",
    "save_csv",
    "split_consecutive",
    "generate_gaussian_2d",
    "fit_scaling",
    "apply_scaling",
    "MinMaxScaling",
    "german_credit_path",
    "load_german_credit",
    "tutorial_spec",
]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with labels in {+1, -1} and per-row identifiers."""

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DataError(f"features must be an n x d matrix with d >= 1, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("feature values must be finite")
        y = np.asarray(self.labels)
        if y.shape != (X.shape[0],):
            raise DataError("labels must have one entry per feature row")
        if y.size and not np.all((y == 1) | (y == -1)):
            raise DataError("labels must be +1 or -1")
        ids = np.arange(X.shape[0]) if self.ids is None else np.asarray(self.ids)
        if ids.shape != (X.shape[0],):
            raise DataError("ids must have one entry per feature row")
        object.__setattr__(self, "features", _frozen(X, float))
        object.__setattr__(self, "labels", _frozen(y, np.int64))
        object.__setattr__(self, "ids", _frozen(ids, ids.dtype))

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_plus(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n_minus(self) -> int:
        return int(np.sum(self.labels == -1))

    def subset(self, rows) -> "Dataset":
        return Dataset(self.features[rows], self.labels[rows], self.ids[rows])

    def with_features(self, features) -> "Dataset":
        return Dataset(features, self.labels, self.ids)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
        )

    __hash__ = None


_SEP = re.compile(r"\s*,\s*|\s+")


def _tokens(line):
    return [t for t in _SEP.split(line.strip()) if t != ""]


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_csv(path, label_column=-1, positive_label="1") -> Dataset:
    """Read a delimited numeric file into a :class:`Dataset`.

    Cells may be separated by commas or runs of whitespace. A first row
    containing a non-numeric cell is treated as a header. The label column
    must hold exactly two distinct tokens; ``positive_label`` maps to +1
    and the other token to -1. Ids are the 0-based data-row order.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    rows = [_tokens(line) for line in path.read_text().splitlines()]
    rows = [r for r in rows if r]
    if rows and not all(_is_number(t) for t in rows[0]):
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise DataError(f"{path}: need a label column and at least one feature")
    for k, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: row {k} has {len(r)} cells, expected {width}")
    col = label_column % width
    raw_labels = [r[col] for r in rows]
    tokens = sorted(set(raw_labels))
    if len(tokens) != 2:
        raise DataError(f"{path}: label column must hold exactly two tokens, found {tokens}")
    positive_label = str(positive_label)
    if positive_label not in tokens:
        # tolerate "1" vs "1.0" style spellings of the same value
        matches = [t for t in tokens if _is_number(t) and _is_number(positive_label)
                   and float(t) == float(positive_label)]
        if len(matches) != 1:
            raise DataError(f"{path}: positive label {positive_label!r} not among {tokens}")
        positive_label = matches[0]
    X = np.empty((len(rows), width - 1))
    for k, r in enumerate(rows):
        cells = r[:col] + r[col + 1:]
        try:
            X[k] = [float(t) for t in cells]
        except ValueError:
            raise DataError(f"{path}: non-numeric feature cell in row {k}") from None
    y = np.where(np.array(raw_labels) == positive_label, 1, -1)
    return Dataset(X, y)


def save_csv(ds: Dataset, path) -> None:
    """Write ``label,f0,...,f{d-1}`` with labels as 1/-1, round-trip exact."""
    header = ",".join(["label"] + [f"f{j}" for j in range(ds.n_features)])
    lines = [header]
    for label, row in zip(ds.labels, ds.features):
        lines.append(",".join([str(int(label))] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def split_consecutive(ds: Dataset, n_train: int) -> tuple[Dataset, Dataset]:
    """First ``n_train`` rows for training, the rest for testing; no shuffling."""
    if not 0 < n_train < len(ds):
        raise DataError(f"n_train must satisfy 0 < n_train < {len(ds)}, got {n_train}")
    return ds.subset(slice(0, n_train)), ds.subset(slice(n_train, None))


@dataclass(frozen=True)
class GaussianSpec:
    mean_plus: tuple
    cov_plus: tuple
    mean_minus: tuple
    cov_minus: tuple
    n_plus: int
    n_minus: int
    seed: int = 0


def _cholesky(name, cov, d):
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (d, d):
        raise DataError(f"{name} must be {d}x{d}")
    if not np.allclose(cov, cov.T):
        raise DataError(f"{name} must be symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DataError(f"{name} must be positive definite") from None


def generate_gaussian_2d(spec: GaussianSpec) -> Dataset:
    """Draw ``n_plus`` positive then ``n_minus`` negative points.

    Bit-reproducible for a fixed seed (PCG64 stream).
    """
    if spec.n_plus < 0 or spec.n_minus < 0:
        raise DataError("class sizes must be non-negative")
    mp = np.asarray(spec.mean_plus, dtype=float)
    mm = np.asarray(spec.mean_minus, dtype=float)
    if mp.shape != (2,) or mm.shape != (2,):
        raise DataError("means must be 2-vectors")
    Lp = _cholesky("cov_plus", spec.cov_plus, 2)
    Lm = _cholesky("cov_minus", spec.cov_minus, 2)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    pos = mp + rng.standard_normal((spec.n_plus, 2)) @ Lp.T
    neg = mm + rng.standard_normal((spec.n_minus, 2)) @ Lm.T
    X = np.vstack([pos, neg])
    y = np.r_[np.ones(spec.n_plus, dtype=int), -np.ones(spec.n_minus, dtype=int)]
    return Dataset(X, y)


def tutorial_spec(seed: int = 7) -> GaussianSpec:
    """Ten points per class; differently shaped covariances tilt reweighted separators."""
    return GaussianSpec(
        mean_plus=(1.0, 1.0),
        cov_plus=((1.0, 0.6), (0.6, 1.0)),
        mean_minus=(-1.0, -0.5),
        cov_minus=((1.5, -0.4), (-0.4, 0.5)),
        n_plus=10,
        n_minus=10,
        seed=seed,
    )


@dataclass(frozen=True, eq=False)
class ScalingParams:
    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        shift = _frozen(self.shift, float)
        scale = _frozen(self.scale, float)
        if shift.shape != scale.shape or shift.ndim != 1:
            raise DataError("shift and scale must be vectors of equal length")
        if not np.all(scale > 0):
            raise DataError("scale entries must be positive")
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", scale)

    def dumps(self) -> str:
        return (
            "shift=" + ",".join(repr(float(v)) for v in self.shift) + "\n"
            "scale=" + ",".join(repr(float(v)) for v in self.scale) + "\n"
        )

    @classmethod
    def loads(cls, text: str) -> "ScalingParams":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        try:
            return cls([float(v) for v in kv["shift"].split(",")],
                       [float(v) for v in kv["scale"].split(",")])
        except KeyError as e:
            raise DataError(f"scaling document lacks {e}") from None


def fit_scaling(ds: Dataset) -> ScalingParams:
    """Per-feature min and range; constant features get scale 1."""
    if len(ds) < 1:
        raise DataError("cannot fit scaling on an empty dataset")
    lo = ds.features.min(axis=0)
    rng = ds.features.max(axis=0) - lo
    rng[rng == 0] = 1.0
    return ScalingParams(lo, rng)


def apply_scaling(ds: Dataset, params: ScalingParams) -> Dataset:
    if ds.n_features != params.shift.size:
        raise DataError("dimension mismatch between dataset and scaling params")
    return ds.with_features((ds.features - params.shift) / params.scale)


class MinMaxScaling(TransformerMixin, BaseEstimator):
    """Estimator form of :func:`fit_scaling` / :func:`apply_scaling`."""

    def fit(self, X, y=None):
        X = as_feature_matrix(X)
        lo = X.min(axis=0)
        rng = X.max(axis=0) - lo
        rng[rng == 0] = 1.0
        self.params_ = ScalingParams(lo, rng)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = as_feature_matrix(X, n_features=self.n_features_in_)
        return (X - self.params_.shift) / self.params_.scale


def german_credit_path() -> Path:
    """Bundled copy of the UCI Statlog german credit numeric file (1000 x 24 + label)."""
    return Path(str(resources.files(__package__) / "datasets" / "german.data-numeric"))


def load_german_credit(positive_label="1") -> Dataset:
    """Label token 1 (good credit) maps to +1 by default."""
    return load_csv(german_credit_path(), label_column=-1, positive_label=positive_label)
