"""End-to-end runs: reference SVM vs. Platt vs. implied posterior on a train/test split."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calibrate import (
    PlattParams,
    apply_platt,
    calibration_report,
    fit_platt,
    normalize_scores,
)
from .data import Dataset, apply_scaling, fit_scaling, generate_gaussian_2d, tutorial_spec
from .implied import (
    DegeneracyReport,
    HyperplaneGrid,
    build_hyperplane_grid,
    classification_matrix,
    estimate_from_sides,
    report_from_sides,
)
from .kernel_svm import KernelSpec, PenaltyConfig, SvmModel, decision_values, train_weighted_svm

__all__ = [
    "ComparisonResult",
    "TutorialResult",
    "reference_penalties",
    "run_comparison",
    "run_tutorial",
    "separator_angles",
    "probe_lattice",
]


def reference_penalties(base: PenaltyConfig) -> PenaltyConfig:
    """Penalties of the reference model, i.e. weights ``(0.5, 0.5)``."""
    return PenaltyConfig(0.5 * base.c_plus, 0.5 * base.c_minus)


@dataclass
class ComparisonResult:
    test: Dataset
    reference: SvmModel
    grid: HyperplaneGrid
    platt: PlattParams
    raw_scores: np.ndarray
    normalized: np.ndarray
    platt_estimates: np.ndarray
    implied: list
    reports: dict = field(default_factory=dict)

    @property
    def implied_values(self) -> np.ndarray:
        return np.array([e.value for e in self.implied])

    def summary(self) -> dict:
        out = {}
        for name in ("raw", "platt", "implied"):
            out[f"calibration_score.{name}"] = self.reports[name].calibration_score
        for name in ("raw", "platt", "implied"):
            out[f"auc.{name}"] = self.reports[name].auc
        out["platt.A"] = self.platt.A
        out["platt.B"] = self.platt.B
        out["n_test"] = len(self.test)
        out["n_models"] = self.grid.n_models
        out["n_degenerate"] = sum(e.degenerate for e in self.implied)
        out["first_test_estimate"] = self.implied[0].value if self.implied else math.nan
        return out


def run_comparison(
    train: Dataset,
    test: Dataset,
    kernel: KernelSpec,
    base: PenaltyConfig,
    n_models: int = 199,
    mode: str = "auto",
    scaling: str = "none",
    n_bins: int = 10,
    tol: float = 1e-3,
    max_iter: int = 10_000_000,
    n_jobs: int | None = None,
    eps_on_plane: float | None = None,
) -> ComparisonResult:
    """Train the reference model and the grid, then calibrate all three estimators.

    Platt's sigmoid is fit on the reference model's training-set decision
    values and applied to the test scores.  Isotonic fits use the test set.
    """
    if scaling == "minmax":
        params = fit_scaling(train)
        train, test = apply_scaling(train, params), apply_scaling(test, params)
    elif scaling != "none":
        raise ValueError(f"unknown scaling {scaling!r}")
    reference, _ = train_weighted_svm(train, kernel, reference_penalties(base), tol, max_iter)
    platt = fit_platt(decision_values(reference, train.features), train.labels)
    raw = decision_values(reference, test.features)
    normalized = normalize_scores(raw)
    platt_est = apply_platt(platt, raw)
    grid = build_hyperplane_grid(train, kernel, base, n_models, mode, tol, max_iter, n_jobs)
    _, S = classification_matrix(grid, test.features, eps_on_plane)
    implied = [estimate_from_sides(row) for row in S]
    result = ComparisonResult(test, reference, grid, platt, raw, normalized, platt_est, implied)
    labels = test.labels
    result.reports = {
        "raw": calibration_report("raw", normalized, labels, n_bins),
        "platt": calibration_report("platt", platt_est, labels, n_bins),
        "implied": calibration_report("implied", result.implied_values, labels, n_bins),
    }
    return result


def probe_lattice(ds: Dataset, n: int = 101, pad: float = 0.5) -> np.ndarray:
    """Regular ``n x n`` lattice over the padded bounding box of a 2D dataset."""
    lo = ds.features.min(axis=0) - pad
    hi = ds.features.max(axis=0) + pad
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n))
    return np.column_stack([gx.ravel(), gy.ravel()])


def separator_angles(grid: HyperplaneGrid) -> np.ndarray:
    """Angle in degrees between each linear separator's normal and the first one's."""
    W = np.array([e.model.coef for e in grid.trained])
    W = W / np.linalg.norm(W, axis=1, keepdims=True)
    cos = np.clip(W @ W[0], -1.0, 1.0)
    return np.degrees(np.arccos(cos))


@dataclass
class TutorialResult:
    train: Dataset
    test: Dataset
    grid: HyperplaneGrid
    scores: np.ndarray
    sides: np.ndarray
    estimates: list
    lattice: np.ndarray
    lattice_report: DegeneracyReport
    angles: np.ndarray

    def summary(self) -> dict:
        return {
            "n_models": self.grid.n_models,
            "n_test": len(self.test),
            "n_degenerate_test": sum(e.degenerate for e in self.estimates),
            "n_lattice": len(self.lattice),
            "n_degenerate_lattice": self.lattice_report.n_degenerate,
            "max_separator_angle_deg": float(np.max(self.angles)),
            "min_estimate": min(e.value for e in self.estimates),
            "max_estimate": max(e.value for e in self.estimates),
        }


def run_tutorial(
    seed: int = 7,
    c: float = 20.0,
    n_models: int = 9,
    n_test: int = 10,
    lattice_size: int = 101,
    tol: float = 1e-3,
) -> TutorialResult:
    """Two 2D Gaussian classes, linear kernel, equal penalties ``c``, ``n_models`` levels."""
    spec = tutorial_spec(seed)
    train = generate_gaussian_2d(spec)
    test_spec = type(spec)(spec.mean_plus, spec.cov_plus, spec.mean_minus, spec.cov_minus,
                           n_test, n_test, seed + 1)
    test = generate_gaussian_2d(test_spec)
    grid = build_hyperplane_grid(train, KernelSpec("linear"), PenaltyConfig(c, c), n_models,
                                 tol=tol)
    F, S = classification_matrix(grid, test.features)
    estimates = [estimate_from_sides(row) for row in S]
    lattice = probe_lattice(train, lattice_size)
    _, SL = classification_matrix(grid, lattice)
    return TutorialResult(train, test, grid, F, S, estimates, lattice,
                          report_from_sides(SL, grid.levels), separator_angles(grid))

