"""Class-weighted soft-margin SVM trained by SMO.

The dual solved here is::

    min_a  0.5 a' Q a - sum(a)
    s.t.   sum(a_i y_i) = 0,   0 <= a_i <= C_i

with ``Q_ij = y_i y_j K(x_i, x_j)`` and ``C_i`` equal to ``c_plus`` or
``c_minus`` by class.  Working pairs are chosen as the maximal violating
pair; the decision function is ``f(x) = sum a_i y_i K(x_i, x) + b``.
"""
from __future__ import annotations

import enum
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_feature_matrix, as_point, binary_targets
from .data import Dataset

__all__ = [
    "KernelSpec",
    "PenaltyConfig",
    "SvmModel",
    "SolverDiagnostics",
    "ConvergenceError",
    "Side",
    "kernel_eval",
    "kernel_matrix",
    "train_weighted_svm",
    "decision_value",
    "decision_values",
    "classify",
    "check_kkt",
    "save_model",
    "load_model",
    "WeightedSVC",
]

DENSE_GRAM_LIMIT = 4000


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf kernel needs gamma > 0")

    def __str__(self):
        return "linear" if self.kind == "linear" else f"rbf(gamma={self.gamma!r})"


@dataclass(frozen=True)
class PenaltyConfig:
    """Per-instance penalties actually applied to each class."""

    c_plus: float
    c_minus: float

    def __post_init__(self):
        object.__setattr__(self, "c_plus", float(self.c_plus))
        object.__setattr__(self, "c_minus", float(self.c_minus))
        if not (self.c_plus > 0 and self.c_minus > 0):
            raise ValueError(f"penalties must be positive, got ({self.c_plus}, {self.c_minus})")
        if not (math.isfinite(self.c_plus) and math.isfinite(self.c_minus)):
            raise ValueError("penalties must be finite")

    def bounds(self, labels):
        return np.where(np.asarray(labels) > 0, self.c_plus, self.c_minus)


@dataclass
class SolverDiagnostics:
    iterations: int
    max_kkt_violation: float
    dual_objective: float
    primal_objective: float
    duality_gap: float
    slacks: np.ndarray = field(repr=False)


class ConvergenceError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class Side(enum.Enum):
    POSITIVE = 1
    NEGATIVE = -1
    ON_PLANE = 0


def kernel_matrix(kernel: KernelSpec, A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    dot = A @ B.T
    if kernel.kind == "linear":
        return dot
    sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * dot
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-kernel.gamma * sq)


def kernel_eval(kernel: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.size} vs {y.size}")
    if kernel.kind == "linear":
        return float(x @ y)
    d = x - y
    return float(math.exp(-kernel.gamma * float(d @ d)))


class _QMatrix:
    """Rows of ``Q = (y y') * K``; dense up to DENSE_GRAM_LIMIT rows, else LRU-cached."""

    def __init__(self, kernel, X, y, cache_rows=1024):
        self.kernel, self.X, self.y = kernel, X, y.astype(float)
        n = X.shape[0]
        self.dense = n <= DENSE_GRAM_LIMIT
        if self.dense:
            self.Q = kernel_matrix(kernel, X, X) * np.outer(self.y, self.y)
            self.diag = self.Q.diagonal().copy()
        else:
            self._rows = OrderedDict()
            self._cap = cache_rows
            if kernel.kind == "linear":
                self.diag = np.einsum("ij,ij->i", X, X)
            else:
                self.diag = np.ones(n)

    def row(self, i):
        if self.dense:
            return self.Q[i]
        r = self._rows.get(i)
        if r is None:
            r = kernel_matrix(self.kernel, self.X[i:i + 1], self.X)[0] * (self.y[i] * self.y)
            self._rows[i] = r
            if len(self._rows) > self._cap:
                self._rows.popitem(last=False)
        else:
            self._rows.move_to_end(i)
        return r

    def matvec(self, v):
        if self.dense:
            return self.Q @ v
        out = np.zeros_like(v)
        for i in np.flatnonzero(v):
            out += v[i] * self.row(i)
        return out


@dataclass(frozen=True, eq=False)
class SvmModel:
    alpha: np.ndarray
    bias: float
    kernel: KernelSpec
    penalties: PenaltyConfig
    train: Dataset

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > 0)

    @property
    def support_vectors(self) -> np.ndarray:
        return self.train.features[self.support_indices]

    @property
    def dual_coef(self) -> np.ndarray:
        """``alpha_i * y_i`` over the support vectors."""
        idx = self.support_indices
        return self.alpha[idx] * self.train.labels[idx]

    @property
    def n_features(self) -> int:
        return self.train.n_features

    @property
    def coef(self) -> np.ndarray:
        """Primal weight vector; only meaningful for the linear kernel."""
        if self.kernel.kind != "linear":
            raise AttributeError("coef is only available for the linear kernel")
        return self.dual_coef @ self.support_vectors


def decision_values(m: SvmModel, X) -> np.ndarray:
    X = as_feature_matrix(X, n_features=m.n_features)
    idx = m.support_indices
    if idx.size == 0:
        return np.full(X.shape[0], m.bias)
    K = kernel_matrix(m.kernel, X, m.train.features[idx])
    return K @ m.dual_coef + m.bias


def decision_value(m: SvmModel, x) -> float:
    x = as_point(x, m.n_features)
    return float(decision_values(m, x[None, :])[0])


def default_eps_on_plane(m: SvmModel) -> float:
    # scale of |f|: kernel values are bounded for rbf, so sum(alpha) + |b| bounds f there
    return 1e-9 * (1.0 + abs(m.bias) + float(np.sum(m.alpha)))


def classify(m: SvmModel, x, eps_on_plane=None) -> Side:
    if eps_on_plane is None:
        eps_on_plane = default_eps_on_plane(m)
    if eps_on_plane < 0:
        raise ValueError("eps_on_plane must be non-negative")
    return side_of(decision_value(m, x), eps_on_plane)


def side_of(f: float, eps: float) -> Side:
    if f > eps:
        return Side.POSITIVE
    if f < -eps:
        return Side.NEGATIVE
    return Side.ON_PLANE


def _violation_sets(alpha, y, C, grad):
    """Maximal violating pair quantities ``m(a)`` and ``M(a)`` over ``-y grad``."""
    minus_yg = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    return minus_yg, up, low


def _bias(alpha, y, C, grad):
    yg = y * grad
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if np.any(free):
        return -float(np.mean(yg[free]))
    # the feasible interval for -b is [lb, ub]
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = float(np.min(yg[ub_mask])) if np.any(ub_mask) else np.inf
    lb = float(np.max(yg[lb_mask])) if np.any(lb_mask) else -np.inf
    if not np.isfinite(ub):
        ub = lb
    if not np.isfinite(lb):
        lb = ub
    return -0.5 * (ub + lb)


def _objectives(alpha, y, C, Qalpha, bias, margins):
    """Dual and primal values; ``margins`` are ``y_i f(x_i)`` with the given bias."""
    quad = float(alpha @ Qalpha)
    dual = float(np.sum(alpha)) - 0.5 * quad
    slacks = np.maximum(0.0, 1.0 - margins)
    primal = 0.5 * quad + float(C @ slacks)
    return dual, primal, slacks


def _smo(Q, y, C, tol, max_iter, alpha=None):
    n = y.size
    alpha = np.zeros(n) if alpha is None else alpha.copy()
    grad = (Q.matvec(alpha) if np.any(alpha) else np.zeros(n)) - 1.0
    diag = Q.diag
    it = 0
    while True:
        minus_yg, up, low = _violation_sets(alpha, y, C, grad)
        if not (np.any(up) and np.any(low)):
            gap = 0.0
            break
        cand_up = np.where(up, minus_yg, -np.inf)
        cand_low = np.where(low, minus_yg, np.inf)
        i = int(np.argmax(cand_up))
        j = int(np.argmin(cand_low))
        gap = cand_up[i] - cand_low[j]
        if gap <= tol:
            break
        if it >= max_iter:
            break
        it += 1
        Qi, Qj = Q.row(i), Q.row(j)
        Ci, Cj = C[i], C[j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] + 2.0 * Qi[j]
            if quad <= 0:
                quad = 1e-12
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * Qi[j]
            if quad <= 0:
                quad = 1e-12
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > Ci:
                if ai > Ci:
                    ai, aj = Ci, total - Ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > Cj:
                if aj > Cj:
                    aj, ai = Cj, total - Cj
            elif ai < 0:
                ai, aj = 0.0, total
        dai, daj = ai - alpha[i], aj - alpha[j]
        alpha[i], alpha[j] = ai, aj
        grad += dai * Qi + daj * Qj
    return alpha, grad, it, float(gap)


def train_weighted_svm(
    ds: Dataset,
    kernel: KernelSpec,
    penalties: PenaltyConfig,
    tol: float = 1e-3,
    max_iter: int = 10_000_000,
) -> tuple[SvmModel, SolverDiagnostics]:
    """Solve the class-weighted dual to within ``tol`` on the KKT pair gap.

    Iteration continues past the KKT criterion, with a tightened internal
    tolerance, until the duality gap is at most ``tol * (1 + |dual|)``.
    Raises :class:`ConvergenceError` when ``max_iter`` pair updates do not
    suffice.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if ds.n_plus == 0 or ds.n_minus == 0:
        raise ValueError("training needs at least one point of each class")
    y = ds.labels.astype(float)
    C = penalties.bounds(ds.labels).astype(float)
    Q = _QMatrix(kernel, ds.features, ds.labels)

    alpha, inner_tol, total_it = None, tol, 0
    while True:
        alpha, grad, it, gap = _smo(Q, y, C, inner_tol, max_iter - total_it, alpha)
        total_it += it
        bias = _bias(alpha, y, C, grad)
        Qalpha = grad + 1.0
        margins = Qalpha + y * bias
        dual, primal, slacks = _objectives(alpha, y, C, Qalpha, bias, margins)
        diag = SolverDiagnostics(
            iterations=total_it,
            max_kkt_violation=max(gap, 0.0),
            dual_objective=dual,
            primal_objective=primal,
            duality_gap=primal - dual,
            slacks=slacks,
        )
        if gap > inner_tol:
            raise ConvergenceError(
                f"SMO stopped after {total_it} pair updates with KKT violation {gap:.3g} > {inner_tol:.3g}",
                diag,
            )
        if diag.duality_gap <= tol * (1.0 + abs(dual)) or inner_tol < 1e-12:
            break
        inner_tol /= 10.0

    model = SvmModel(alpha=_frozen(alpha), bias=float(bias), kernel=kernel,
                     penalties=penalties, train=ds)
    return model, diag


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def check_kkt(m: SvmModel, tol: float = 1e-3) -> SolverDiagnostics:
    """Recompute optimality diagnostics for ``m`` on its training data.

    ``max_kkt_violation`` covers the pair gap, the equality constraint and
    the box constraints.
    """
    ds = m.train
    y = ds.labels.astype(float)
    C = m.penalties.bounds(ds.labels).astype(float)
    alpha = np.asarray(m.alpha, dtype=float)
    Qalpha = (kernel_matrix(m.kernel, ds.features, ds.features) * np.outer(y, y)) @ alpha
    grad = Qalpha - 1.0
    minus_yg, up, low = _violation_sets(np.clip(alpha, 0, C), y, C, grad)
    pair_gap = 0.0
    if np.any(up) and np.any(low):
        pair_gap = float(np.max(minus_yg[up]) - np.min(minus_yg[low]))
    equality = abs(float(alpha @ y))
    box = float(max(np.max(-alpha, initial=0.0), np.max(alpha - C, initial=0.0)))
    margins = Qalpha + y * m.bias
    dual, primal, slacks = _objectives(alpha, y, C, Qalpha, m.bias, margins)
    return SolverDiagnostics(
        iterations=0,
        max_kkt_violation=max(pair_gap, equality, box, 0.0),
        dual_objective=dual,
        primal_objective=primal,
        duality_gap=primal - dual,
        slacks=slacks,
    )


def dumps_model(m: SvmModel) -> str:
    """Text form: ``key=value`` header then one ``sv=`` row per support vector."""
    lines = [
        "format=weighted-svm/1",
        f"kernel={m.kernel.kind}",
        f"gamma={m.kernel.gamma!r}",
        f"c_plus={m.penalties.c_plus!r}",
        f"c_minus={m.penalties.c_minus!r}",
        f"bias={m.bias!r}",
        f"n_train={len(m.train)}",
        f"n_features={m.n_features}",
        "# sv=index,label,alpha,x0,...",
    ]
    for i in m.support_indices:
        row = [str(int(i)), str(int(m.train.labels[i])), repr(float(m.alpha[i]))]
        row += [repr(float(v)) for v in m.train.features[i]]
        lines.append("sv=" + ",".join(row))
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> SvmModel:
    """Inverse of :func:`dumps_model`; ``train`` holds only the support vectors."""
    header, rows = {}, []
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        if key == "sv":
            rows.append([float(v) for v in value.split(",")])
        else:
            header[key] = value
    try:
        kernel = KernelSpec(header["kernel"], float(header["gamma"]))
        penalties = PenaltyConfig(float(header["c_plus"]), float(header["c_minus"]))
        bias = float(header["bias"])
        d = int(header["n_features"])
    except KeyError as e:
        raise ValueError(f"model document lacks {e}") from None
    R = np.array(rows, dtype=float).reshape(-1, 3 + d)
    ds = Dataset(R[:, 3:].reshape(-1, d), R[:, 1].astype(int), R[:, 0].astype(int))
    return SvmModel(alpha=_frozen(R[:, 2]), bias=bias, kernel=kernel, penalties=penalties, train=ds)


def save_model(m: SvmModel, path) -> None:
    Path(path).write_text(dumps_model(m))


def load_model(path) -> SvmModel:
    return loads_model(Path(path).read_text())


class WeightedSVC(ClassifierMixin, BaseEstimator):
    """Soft-margin SVM with separate per-instance penalties for each class.

    ``classes_[1]`` is the positive class.
    """

    def __init__(self, kernel="rbf", gamma=1.0, c_plus=1.0, c_minus=1.0,
                 tol=1e-3, max_iter=10_000_000):
        self.kernel = kernel
        self.gamma = gamma
        self.c_plus = c_plus
        self.c_minus = c_minus
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X = as_feature_matrix(X)
        self.classes_, y_pm = binary_targets(y)
        ds = Dataset(X, y_pm)
        self.model_, self.diagnostics_ = train_weighted_svm(
            ds, KernelSpec(self.kernel, self.gamma),
            PenaltyConfig(self.c_plus, self.c_minus), self.tol, self.max_iter,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return decision_values(self.model_, X)

    def predict(self, X):
        return np.where(self.decision_function(X) > 0, self.classes_[1], self.classes_[0])
