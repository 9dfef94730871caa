"""Implied posterior probabilities for class-weighted SVMs."""
from .calibrate import (
    IsotonicCalibrator,
    PlattCalibrator,
    calibration_report,
    fit_isotonic,
    fit_platt,
    roc_and_auc,
)
from .data import Dataset, load_csv, load_german_credit, split_consecutive
from .implied import (
    HyperplaneGrid,
    ImpliedPosteriorSVC,
    build_hyperplane_grid,
    degeneracy_report,
    estimate_batch,
    vote_estimate,
)
from .kernel_svm import KernelSpec, PenaltyConfig, WeightedSVC, train_weighted_svm
from .pipeline import run_comparison, run_tutorial
from .weighting import EffectiveCounts, WeightPair, implied_probability_general

__all__ = [
    "Dataset",
    "EffectiveCounts",
    "HyperplaneGrid",
    "ImpliedPosteriorSVC",
    "IsotonicCalibrator",
    "KernelSpec",
    "PenaltyConfig",
    "PlattCalibrator",
    "WeightPair",
    "WeightedSVC",
    "build_hyperplane_grid",
    "calibration_report",
    "degeneracy_report",
    "estimate_batch",
    "fit_isotonic",
    "fit_platt",
    "implied_probability_general",
    "load_csv",
    "load_german_credit",
    "roc_and_auc",
    "run_comparison",
    "run_tutorial",
    "split_consecutive",
    "train_weighted_svm",
    "vote_estimate",
]
