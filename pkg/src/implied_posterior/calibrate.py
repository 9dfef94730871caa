"""Calibration harness: Platt scaling, isotonic regression, reliability bins, ROC."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_01_labels, as_scores, check_same_length

__all__ = [
    "PlattParams",
    "StepFunction",
    "RocCurve",
    "BinPoint",
    "CalibrationReport",
    "fit_platt",
    "apply_platt",
    "platt_nll",
    "fit_isotonic",
    "calibration_score",
    "bin_reliability",
    "roc_and_auc",
    "normalize_scores",
    "calibration_report",
    "PlattCalibrator",
    "IsotonicCalibrator",
]


@dataclass(frozen=True)
class PlattParams:
    A: float
    B: float
    iterations: int = 0
    converged: bool = True


def _platt_targets(y01):
    n_pos = float(np.sum(y01))
    n_neg = float(y01.size - n_pos)
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    return np.where(y01 > 0, hi, lo), n_pos, n_neg


def _nll(A, B, f, t):
    z = A * f + B
    # log(1 + exp(-|z|)) keeps both branches finite
    return float(np.sum(np.where(z >= 0, t * z, (t - 1.0) * z) + np.log1p(np.exp(-np.abs(z)))))


def platt_nll(params, scores, labels) -> float:
    """Negative log-likelihood of ``sigmoid(-(A f + B))`` against smoothed targets."""
    f = as_scores(scores)
    t, _, _ = _platt_targets(as_01_labels(labels))
    A, B = (params.A, params.B) if isinstance(params, PlattParams) else params
    return _nll(A, B, f, t)


def fit_platt(scores, labels, max_iter=100, grad_tol=1e-10) -> PlattParams:
    """Newton iterations with backtracking on Platt's smoothed-target likelihood."""
    f = as_scores(scores)
    y01 = as_01_labels(labels)
    check_same_length(f, y01)
    t, n_pos, n_neg = _platt_targets(y01)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("Platt fitting needs both classes")
    A, B = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = _nll(A, B, f, t)
    it, converged = 0, False
    while it < max_iter:
        z = A * f + B
        e = np.exp(-np.abs(z))
        p = np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
        q = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        d2 = p * q
        h11 = float(f * f @ d2) + 1e-12
        h22 = float(np.sum(d2)) + 1e-12
        h21 = float(f @ d2)
        d1 = t - p
        g1 = float(f @ d1)
        g2 = float(np.sum(d1))
        if abs(g1) < grad_tol and abs(g2) < grad_tol:
            converged = True
            break
        it += 1
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = _nll(nA, nB, f, t)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        else:
            # no decrease is representable; the iterate is as good as it gets
            converged = abs(g1) < 1e-6 * max(1.0, f.size) and abs(g2) < 1e-6 * max(1.0, f.size)
            break
    return PlattParams(A, B, it, converged)


def apply_platt(params: PlattParams, scores):
    z = params.A * np.asarray(scores, dtype=float) + params.B
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + np.exp(z))
    return float(p) if np.ndim(p) == 0 else p


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function: ``values[k]`` on ``[breakpoints[k], breakpoints[k+1])``.

    Extended with ``values[0]`` to the left of the first breakpoint.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or b.shape != v.shape or b.size == 0:
            raise ValueError("breakpoints and values must be equal-length non-empty vectors")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly ascending")
        if np.any(np.diff(v) < 0):
            raise ValueError("values must be non-decreasing")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, np.asarray(x, dtype=float), side="right") - 1
        out = self.values[np.clip(idx, 0, None)]
        return float(out) if np.ndim(out) == 0 else out


def _pava(sums, weights):
    """Pool adjacent violators over groups given by label sums and weights.

    Returns per-block ``(sum, weight, n_groups)`` lists.
    """
    out_s, out_w, out_n = [], [], []
    for sm, wt in zip(sums, weights):
        out_s.append(float(sm))
        out_w.append(float(wt))
        out_n.append(1)
        while len(out_s) > 1 and out_s[-2] * out_w[-1] > out_s[-1] * out_w[-2]:
            sm, wt, n = out_s.pop(), out_w.pop(), out_n.pop()
            out_s[-1] += sm
            out_w[-1] += wt
            out_n[-1] += n
    return out_s, out_w, out_n


def fit_isotonic(scores, labels01) -> StepFunction:
    """Least-squares non-decreasing fit of labels against scores.

    Observations sharing a score are pooled first, so the fit is a function
    of the score.
    """
    s = as_scores(scores)
    y = np.asarray(labels01, dtype=float).ravel()
    check_same_length(s, y)
    if s.size == 0:
        raise ValueError("isotonic fit needs at least one point")
    xs, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    label_sums = np.bincount(inverse, weights=y, minlength=xs.size)
    # pooled sums stay exact for 0/1 labels, so block values are correctly rounded means
    sums, weights, lengths = _pava(label_sums, counts)
    values = np.repeat([sm / wt for sm, wt in zip(sums, weights)], lengths)
    return StepFunction(xs, values)


def calibration_score(estimates, iso: StepFunction) -> float:
    """Mean absolute gap between estimates and their isotonic fit."""
    e = as_scores(estimates, "estimates")
    if e.size == 0:
        raise ValueError("calibration score needs at least one estimate")
    return float(np.mean(np.abs(e - iso(e))))


@dataclass(frozen=True)
class BinPoint:
    center: float
    mean_score: float
    positive_rate: float
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0


def bin_reliability(estimates, labels01, n_bins=10) -> list[BinPoint]:
    """Equal-width bins on [0, 1]; the top bin is closed on the right.

    Empty bins have ``count == 0`` and NaN mean and rate.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    e = as_scores(estimates, "estimates")
    y = np.asarray(labels01, dtype=float).ravel()
    check_same_length(e, y)
    idx = np.clip(np.floor(e * n_bins).astype(int), 0, n_bins - 1)
    out = []
    for k in range(n_bins):
        mask = idx == k
        c = int(mask.sum())
        center = (k + 0.5) / n_bins
        if c:
            out.append(BinPoint(center, float(e[mask].mean()), float(y[mask].mean()), c))
        else:
            out.append(BinPoint(center, math.nan, math.nan, 0))
    return out


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_and_auc(scores, labels01) -> RocCurve:
    """Threshold sweep over distinct scores; tied scores move as one step."""
    s = as_scores(scores)
    y = as_01_labels(labels01)
    check_same_length(s, y)
    n_pos = float(y.sum())
    n_neg = float(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes")
    thresholds, inverse = np.unique(-s, return_inverse=True)
    tp = np.bincount(inverse, weights=y, minlength=thresholds.size)
    fp = np.bincount(inverse, weights=1.0 - y, minlength=thresholds.size)
    tpr = np.r_[0.0, np.cumsum(tp)] / n_pos
    fpr = np.r_[0.0, np.cumsum(fp)] / n_neg
    tpr[-1] = fpr[-1] = 1.0
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocCurve(fpr, tpr, np.r_[np.inf, -thresholds], auc)


def normalize_scores(scores):
    """Affine map onto [0, 1]; a constant input maps to 0.5 everywhere."""
    s = as_scores(scores)
    if s.size == 0:
        raise ValueError("need at least one score")
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.full_like(s, 0.5)
    return (s - lo) / (hi - lo)


@dataclass(frozen=True, eq=False)
class CalibrationReport:
    method: str
    calibration_score: float
    bins: list
    isotonic: StepFunction
    roc: RocCurve | None

    @property
    def auc(self) -> float:
        return self.roc.auc if self.roc is not None else math.nan


def calibration_report(method, estimates, labels, n_bins=10) -> CalibrationReport:
    """Isotonic fit, calibration score, reliability bins and ROC for one method."""
    e = as_scores(estimates, "estimates")
    y = as_01_labels(labels)
    check_same_length(e, y)
    iso = fit_isotonic(e, y)
    roc = roc_and_auc(e, y) if 0 < y.sum() < y.size else None
    return CalibrationReport(method, calibration_score(e, iso), bin_reliability(e, y, n_bins), iso, roc)


class PlattCalibrator(TransformerMixin, BaseEstimator):
    """Map raw decision values to probabilities with a fitted sigmoid."""

    def __init__(self, max_iter=100, grad_tol=1e-10):
        self.max_iter = max_iter
        self.grad_tol = grad_tol

    def fit(self, scores, y):
        self.params_ = fit_platt(scores, y, self.max_iter, self.grad_tol)
        return self

    def transform(self, scores):
        check_is_fitted(self, "params_")
        return apply_platt(self.params_, as_scores(scores))


class IsotonicCalibrator(TransformerMixin, BaseEstimator):
    def fit(self, scores, y):
        self.step_ = fit_isotonic(scores, as_01_labels(y))
        return self

    def transform(self, scores):
        check_is_fitted(self, "step_")
        return self.step_(as_scores(scores))
