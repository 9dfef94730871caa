"""Hyperplane grids over implied posterior levels and the majority-vote estimate.

A grid holds ``K`` reweighted SVMs at levels ``j / (K + 1)``, ``j = 1..K``,
plus two fictitious voters at levels 0 (always negative) and 1 (always
positive).  A point's estimate is the share of positive votes across all
``K + 2`` entries, with on-plane classifications counting one half.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_feature_matrix, as_point, binary_targets
from .data import Dataset
from .kernel_svm import (
    ConvergenceError,
    KernelSpec,
    PenaltyConfig,
    Side,
    SvmModel,
    decision_values,
    default_eps_on_plane,
    load_model,
    save_model,
    train_weighted_svm,
)
from .weighting import EffectiveCounts, WeightPair, z_plus_for_target_probability

__all__ = [
    "Mode",
    "GridEntry",
    "HyperplaneGrid",
    "ImpliedEstimate",
    "DegeneracyReport",
    "GridTrainingError",
    "grid_levels",
    "weights_for_level",
    "build_hyperplane_grid",
    "classification_matrix",
    "vote_estimate",
    "estimate_batch",
    "estimate_from_sides",
    "degeneracy_report",
    "save_grid",
    "load_grid",
    "ImpliedPosteriorSVC",
]

log = logging.getLogger(__name__)

EXACT = "exact"
BALANCED = "balancedAssumption"


class Mode:
    EXACT = EXACT
    BALANCED_ASSUMPTION = BALANCED

    @staticmethod
    def resolve(mode, base: PenaltyConfig) -> str:
        """``auto`` picks the balanced scheme for equal base penalties."""
        if mode == "auto":
            return BALANCED if base.c_plus == base.c_minus else EXACT
        if mode not in (EXACT, BALANCED):
            raise ValueError(f"unknown mode {mode!r}")
        return mode


class GridTrainingError(ConvergenceError):
    def __init__(self, level, cause):
        super().__init__(f"grid model at level {level!r} failed to converge: {cause}",
                         getattr(cause, "diagnostics", None))
        self.level = level


@dataclass(frozen=True)
class GridEntry:
    level: float
    weights: WeightPair | None = None
    model: SvmModel | None = None
    fictitious: bool = False

    def __post_init__(self):
        if self.fictitious:
            if self.level not in (0.0, 1.0) or self.model is not None:
                raise ValueError("fictitious entries sit at level 0 or 1 and carry no model")
        elif not 0.0 < self.level < 1.0 or self.model is None:
            raise ValueError("trained entries need a model and a level inside (0, 1)")


@dataclass(frozen=True)
class HyperplaneGrid:
    entries: tuple
    base_counts: EffectiveCounts
    base: PenaltyConfig
    kernel: KernelSpec
    mode: str

    def __post_init__(self):
        levels = [e.level for e in self.entries]
        if len(levels) < 3 or levels[0] != 0.0 or levels[-1] != 1.0:
            raise ValueError("grid needs fictitious endpoints at 0 and 1 and at least one model")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("grid levels must be strictly increasing")

    @property
    def trained(self) -> tuple:
        return self.entries[1:-1]

    @property
    def n_models(self) -> int:
        return len(self.entries) - 2

    @property
    def levels(self) -> np.ndarray:
        return np.array([e.level for e in self.trained])

    @property
    def n_features(self) -> int:
        return self.trained[0].model.n_features


@dataclass(frozen=True)
class ImpliedEstimate:
    value: float
    positive_votes: int
    on_plane_count: int
    sides: tuple = field(repr=False)
    degenerate: bool = False

    @property
    def fraction(self) -> Fraction:
        """The estimate as an exact rational, ``(votes + 1 + on_plane / 2) / (K + 2)``."""
        k = len(self.sides)
        return (Fraction(self.positive_votes + 1) + Fraction(self.on_plane_count, 2)) / (k + 2)


def grid_levels(n_models: int) -> np.ndarray:
    if n_models < 1:
        raise ValueError("a grid needs at least one model")
    return np.arange(1, n_models + 1) / (n_models + 1)


def weights_for_level(level: float, counts: EffectiveCounts, mode: str) -> WeightPair:
    if mode == BALANCED:
        return WeightPair(level, 1.0 - level)
    return WeightPair.for_counts(z_plus_for_target_probability(level, counts), counts)


def _train_level(train, kernel, base, level, weights, tol, max_iter):
    pen = PenaltyConfig(weights.z_plus * base.c_plus, weights.z_minus * base.c_minus)
    try:
        model, _ = train_weighted_svm(train, kernel, pen, tol, max_iter)
    except ConvergenceError as e:
        raise GridTrainingError(level, e) from e
    return GridEntry(level=float(level), weights=weights, model=model)


def build_hyperplane_grid(
    train: Dataset,
    kernel: KernelSpec,
    base: PenaltyConfig,
    n_models: int = 99,
    mode: str = "auto",
    tol: float = 1e-3,
    max_iter: int = 10_000_000,
    n_jobs: int | None = None,
) -> HyperplaneGrid:
    """Train one reweighted model per level and add the two fictitious voters.

    Each level's penalties are ``(z+ * c_plus, z- * c_minus)``.  In ``exact``
    mode the weights invert the general level formula for the training
    set's effective counts; in ``balancedAssumption`` mode ``z+`` is the
    level itself and ``z- = 1 - z+``.
    """
    if train.n_plus == 0 or train.n_minus == 0:
        raise ValueError("training data needs both classes")
    levels = grid_levels(n_models)
    mode = Mode.resolve(mode, base)
    counts = EffectiveCounts.from_penalties(base.c_plus, train.n_plus, base.c_minus, train.n_minus)
    weights = [weights_for_level(p, counts, mode) for p in levels]
    log.info("training %d grid models (%s, %s)", n_models, mode, kernel)
    trained = Parallel(n_jobs=n_jobs)(
        delayed(_train_level)(train, kernel, base, p, w, tol, max_iter)
        for p, w in zip(levels, weights)
    )
    entries = (GridEntry(0.0, fictitious=True), *trained, GridEntry(1.0, fictitious=True))
    return HyperplaneGrid(entries, counts, base, kernel, mode)


def classification_matrix(grid: HyperplaneGrid, X, eps_on_plane=None):
    """Decision values and sides, shape ``(n_points, K)``; sides as +1 / -1 / 0."""
    X = as_feature_matrix(X, n_features=grid.n_features)
    F = np.column_stack([decision_values(e.model, X) for e in grid.trained])
    if eps_on_plane is None:
        eps = np.array([default_eps_on_plane(e.model) for e in grid.trained])
    else:
        if eps_on_plane < 0:
            raise ValueError("eps_on_plane must be non-negative")
        eps = np.full(grid.n_models, float(eps_on_plane))
    S = np.where(F > eps, 1, np.where(F < -eps, -1, 0))
    return F, S


def _is_degenerate(sides) -> bool:
    s = [v for v in sides if v != 0]
    # monotone iff no positive vote is followed by a negative one
    seen_pos = False
    for v in s:
        if v > 0:
            seen_pos = True
        elif seen_pos:
            return True
    return False


def estimate_from_sides(sides) -> ImpliedEstimate:
    """Vote over per-level sides ordered by ascending level (fictitious voters implied)."""
    sides = tuple(_as_side_int(v) for v in sides)
    k = len(sides)
    if k < 1:
        raise ValueError("need at least one classification")
    pos = sum(1 for v in sides if v > 0)
    on = sum(1 for v in sides if v == 0)
    value = (pos + 1 + 0.5 * on) / (k + 2)
    return ImpliedEstimate(value, pos, on, sides, _is_degenerate(sides))


def _as_side_int(v) -> int:
    if isinstance(v, Side):
        return v.value
    v = int(v)
    if v not in (-1, 0, 1):
        raise ValueError(f"side must be -1, 0 or +1, got {v}")
    return v


def vote_estimate(grid: HyperplaneGrid, x, eps_on_plane=None) -> ImpliedEstimate:
    x = as_point(x, grid.n_features)
    _, S = classification_matrix(grid, x[None, :], eps_on_plane)
    return estimate_from_sides(S[0])


def estimate_batch(grid: HyperplaneGrid, test, eps_on_plane=None) -> list[ImpliedEstimate]:
    X = test.features if isinstance(test, Dataset) else test
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return []
    _, S = classification_matrix(grid, X, eps_on_plane)
    return [estimate_from_sides(row) for row in S]


def sign_change_brackets(sides, levels) -> list[tuple[float, float]]:
    """Adjacent level pairs where the vote flips, endpoints 0 and 1 included.

    On-plane entries are skipped, so a bracket may span them.
    """
    seq = [(0.0, -1)] + [(float(p), s) for p, s in zip(levels, sides) if s != 0] + [(1.0, 1)]
    return [(a[0], b[0]) for a, b in zip(seq, seq[1:]) if a[1] != b[1]]


@dataclass(frozen=True)
class DegeneracyReport:
    n_points: int
    degenerate_indices: tuple
    brackets: tuple

    @property
    def n_degenerate(self) -> int:
        return len(self.degenerate_indices)

    def first_last(self, i) -> tuple[float, float]:
        """Lower level of the first flip and upper level of the last flip for point ``i``."""
        b = self.brackets[i]
        return b[0][0], b[-1][1]


def degeneracy_report(grid: HyperplaneGrid, test, eps_on_plane=None) -> DegeneracyReport:
    X = test.features if isinstance(test, Dataset) else np.asarray(test, dtype=float)
    if X.size == 0:
        return DegeneracyReport(0, (), ())
    _, S = classification_matrix(grid, X, eps_on_plane)
    return report_from_sides(S, grid.levels)


def report_from_sides(S, levels) -> DegeneracyReport:
    brackets = tuple(tuple(sign_change_brackets(row, levels)) for row in S)
    degenerate = tuple(i for i, row in enumerate(S) if _is_degenerate(row))
    return DegeneracyReport(len(S), degenerate, brackets)


def save_grid(grid: HyperplaneGrid, directory) -> Path:
    """Write ``manifest.txt`` plus one model file per trained level."""
    directory = Path(directory)
    (directory / "models").mkdir(parents=True, exist_ok=True)
    lines = [
        "format=hyperplane-grid/1",
        f"mode={grid.mode}",
        f"kernel={grid.kernel.kind}",
        f"gamma={grid.kernel.gamma!r}",
        f"c_plus={grid.base.c_plus!r}",
        f"c_minus={grid.base.c_minus!r}",
        f"e_plus={grid.base_counts.e_plus!r}",
        f"e_minus={grid.base_counts.e_minus!r}",
        f"K={grid.n_models}",
        "# entry=level,z_plus,z_minus,model_file",
    ]
    width = len(str(grid.n_models))
    for j, e in enumerate(grid.trained, start=1):
        name = f"models/level_{j:0{width}d}.model"
        save_model(e.model, directory / name)
        lines.append(f"entry={e.level!r},{e.weights.z_plus!r},{e.weights.z_minus!r},{name}")
    path = directory / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def load_grid(path) -> HyperplaneGrid:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.txt"
    header, entries = {}, []
    for line in path.read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        if key == "entry":
            level, zp, zm, name = value.split(",")
            model = load_model(path.parent / name)
            entries.append(GridEntry(float(level), WeightPair(float(zp), float(zm)), model))
        else:
            header[key] = value
    if int(header["K"]) != len(entries):
        raise ValueError("manifest entry count does not match K")
    return HyperplaneGrid(
        (GridEntry(0.0, fictitious=True), *entries, GridEntry(1.0, fictitious=True)),
        EffectiveCounts(float(header["e_plus"]), float(header["e_minus"])),
        PenaltyConfig(float(header["c_plus"]), float(header["c_minus"])),
        KernelSpec(header["kernel"], float(header["gamma"])),
        header["mode"],
    )


class ImpliedPosteriorSVC(ClassifierMixin, BaseEstimator):
    """Posterior estimates from a vote over reweighted SVMs.

    ``predict_proba`` returns the vote share for ``classes_[1]`` in the
    second column.  ``c_plus`` and ``c_minus`` are the base penalties; the
    reference model corresponds to weights ``(0.5, 0.5)``.
    """

    def __init__(self, kernel="rbf", gamma=1.0, c_plus=1.0, c_minus=1.0, n_levels=99,
                 mode="auto", tol=1e-3, max_iter=10_000_000, eps_on_plane=None, n_jobs=None):
        self.kernel = kernel
        self.gamma = gamma
        self.c_plus = c_plus
        self.c_minus = c_minus
        self.n_levels = n_levels
        self.mode = mode
        self.tol = tol
        self.max_iter = max_iter
        self.eps_on_plane = eps_on_plane
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X = as_feature_matrix(X)
        self.classes_, y_pm = binary_targets(y)
        self.grid_ = build_hyperplane_grid(
            Dataset(X, y_pm), KernelSpec(self.kernel, self.gamma),
            PenaltyConfig(self.c_plus, self.c_minus), self.n_levels, self.mode,
            self.tol, self.max_iter, self.n_jobs,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def _votes(self, X):
        check_is_fitted(self, "grid_")
        _, S = classification_matrix(self.grid_, X, self.eps_on_plane)
        return S

    def predict_proba(self, X):
        S = self._votes(X)
        k = S.shape[1]
        p = (np.sum(S > 0, axis=1) + 1 + 0.5 * np.sum(S == 0, axis=1)) / (k + 2)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        p = self.predict_proba(X)[:, 1]
        return np.where(p > 0.5, self.classes_[1], self.classes_[0])

    def degeneracy(self, X) -> DegeneracyReport:
        return report_from_sides(self._votes(X), self.grid_.levels)
