"""Input validation shared by the estimators and the functional API."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, column_or_1d


def as_feature_matrix(X, n_features=None):
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    return X


def as_point(x, n_features):
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (n_features,):
        raise ValueError(f"point has dimension {x.size}, expected {n_features}")
    return x


def as_scores(scores, name="scores"):
    s = column_or_1d(np.asarray(scores, dtype=float), warn=True)
    if not np.all(np.isfinite(s)):
        raise ValueError(f"{name} must be finite")
    return s


def as_pm_labels(labels):
    """Labels in {+1, -1} as an int array."""
    y = column_or_1d(np.asarray(labels))
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be +1 or -1")
    return y.astype(np.int64)


def as_01_labels(labels):
    """Accept {0, 1} or {-1, +1} labels; return floats in {0, 1}."""
    y = column_or_1d(np.asarray(labels, dtype=float))
    if np.all((y == 0) | (y == 1)):
        return y
    if np.all((y == -1) | (y == 1)):
        return (y > 0).astype(float)
    raise ValueError("labels must be in {0, 1} or {-1, +1}")


def check_same_length(*arrays):
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"inputs have inconsistent lengths {sorted(lengths)}")


def binary_targets(y):
    """Map arbitrary two-valued targets to +1/-1 with ``classes_[1]`` positive."""
    y = column_or_1d(np.asarray(y))
    classes = np.unique(y)
    if classes.size != 2:
        raise ValueError(f"need exactly two classes, got {classes.size}")
    return classes, np.where(y == classes[1], 1, -1)
