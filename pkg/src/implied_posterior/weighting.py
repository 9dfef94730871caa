"""Effective point counts and the closed-form implied posterior levels.

Every function here accepts Python scalars or numpy arrays and broadcasts.
Out-of-range arguments raise ``ValueError``.

The canonical parameterization is the weight pair ``(z_plus, z_minus)``:
the penalties actually applied to the SVM are ``z_plus * C+`` and
``z_minus * C-``, with ``z_plus = z_minus = 0.5`` as the baseline, and the
effective budget ``z+ C+ n+ + z- C- n-`` held at ``0.5 (C+ n+ + C- n-)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EffectiveCounts",
    "WeightPair",
    "delta_minus_for_delta_plus",
    "z_minus_for_z_plus",
    "z_plus_bounds",
    "implied_probability_balanced",
    "implied_probability_general",
    "implied_probability_balanced_reduced",
    "z_plus_for_target_probability",
    "z_plus_from_delta_plus",
    "density_ratio_estimate",
    "posterior_from_ratios",
]


@dataclass(frozen=True)
class EffectiveCounts:
    """Penalty-weighted class masses ``C+ n+`` and ``C- n-``."""

    e_plus: float
    e_minus: float

    def __post_init__(self):
        object.__setattr__(self, "e_plus", float(self.e_plus))
        object.__setattr__(self, "e_minus", float(self.e_minus))
        if not (np.isfinite(self.e_plus) and np.isfinite(self.e_minus)):
            raise ValueError("effective counts must be finite")
        if self.e_plus <= 0 or self.e_minus <= 0:
            raise ValueError(
                f"effective counts must be positive, got ({self.e_plus}, {self.e_minus})"
            )

    @classmethod
    def from_penalties(cls, c_plus, n_plus, c_minus, n_minus) -> "EffectiveCounts":
        return cls(float(c_plus) * n_plus, float(c_minus) * n_minus)

    @property
    def total(self) -> float:
        return self.e_plus + self.e_minus

    @property
    def prior_plus(self) -> float:
        """Estimated P(+) as the positive share of the effective mass."""
        return self.e_plus / self.total

    @property
    def prior_minus(self) -> float:
        return self.e_minus / self.total

    @property
    def balanced(self) -> bool:
        return self.e_plus == self.e_minus


@dataclass(frozen=True)
class WeightPair:
    """Per-class penalty multipliers around the 0.5 baseline."""

    z_plus: float
    z_minus: float

    def __post_init__(self):
        object.__setattr__(self, "z_plus", float(self.z_plus))
        object.__setattr__(self, "z_minus", float(self.z_minus))

    @classmethod
    def for_counts(cls, z_plus: float, counts: EffectiveCounts) -> "WeightPair":
        return cls(float(z_plus), float(z_minus_for_z_plus(z_plus, counts)))

    def budget_residual(self, counts: EffectiveCounts) -> float:
        """``z+ e+ + z- e- - 0.5 total``; zero when the budget is preserved."""
        return (
            self.z_plus * counts.e_plus
            + self.z_minus * counts.e_minus
            - 0.5 * counts.e_plus
            - 0.5 * counts.e_minus
        )

    def delta_plus(self, c_plus: float) -> float:
        """Additive shift of the applied positive penalty away from ``0.5 C+``."""
        return (self.z_plus - 0.5) * c_plus

    def delta_minus(self, c_minus: float) -> float:
        return (0.5 - self.z_minus) * c_minus


def _check_open(name, value, lo, hi):
    value = np.asarray(value, dtype=float)
    if not np.all((value > lo) & (value < hi)):
        raise ValueError(f"{name} must lie in the open interval ({lo}, {hi})")
    return value


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def delta_minus_for_delta_plus(delta_plus, n_plus, n_minus):
    """Decrease of ``C-`` that offsets an increase ``delta_plus`` of ``C+``."""
    if n_minus <= 0:
        raise ValueError("n_minus must be positive")
    return _out(np.asarray(delta_plus, dtype=float) * n_plus / n_minus)


def z_plus_bounds(counts: EffectiveCounts) -> tuple[float, float]:
    """Open interval of admissible ``z_plus`` under the fixed budget."""
    return 0.0, 0.5 * counts.total / counts.e_plus


def z_minus_bounds(counts: EffectiveCounts) -> tuple[float, float]:
    return 0.0, 0.5 * counts.total / counts.e_minus


def z_minus_for_z_plus(z_plus, counts: EffectiveCounts):
    lo, hi = z_plus_bounds(counts)
    z_plus = _check_open("z_plus", z_plus, lo, hi)
    return _out(0.5 + (0.5 - z_plus) * counts.e_plus / counts.e_minus)


def implied_probability_balanced(z_plus):
    """Level of a hyperplane when ``C+ n+ == C- n-``: the weight itself."""
    return _out(_check_open("z_plus", z_plus, 0.0, 1.0))


def implied_probability_general(z_plus, counts: EffectiveCounts):
    lo, hi = z_plus_bounds(counts)
    z = _check_open("z_plus", z_plus, lo, hi)
    a, b = counts.e_minus, counts.e_plus
    return _out(z * a / ((0.5 + z) * a + (0.5 - z) * b))


def implied_probability_balanced_reduced(delta_plus, c):
    """Level for balanced data and a common ``C`` shifted by ``delta_plus``."""
    if c <= 0:
        raise ValueError("c must be positive")
    d = _check_open("delta_plus", delta_plus, -c, c)
    return _out(0.5 + 0.5 * d / c)


def z_plus_from_delta_plus(delta_plus, c):
    """Weight equivalent to shifting a common applied penalty ``c`` by ``delta_plus``.

    The applied baseline ``c`` corresponds to ``0.5 * C`` in the weight form,
    hence ``z+ = 0.5 + 0.5 * delta_plus / c``.
    """
    return _out(0.5 + 0.5 * np.asarray(delta_plus, dtype=float) / c)


def z_plus_for_target_probability(p, counts: EffectiveCounts):
    """Invert :func:`implied_probability_general` for a target level ``p``."""
    p = _check_open("p", p, 0.0, 1.0)
    a, b = counts.e_minus, counts.e_plus
    return _out(0.5 * p * (a + b) / (a - p * (a - b)))


def density_ratio_estimate(z_plus, counts: EffectiveCounts):
    """Class-conditional density ratio read off a reweighted separating surface.

    On the surface the reweighted class masses balance, so the ratio equals
    the inverse ratio of the reweighted masses, ``z- e- / (z+ e+)``.
    """
    z_minus = np.asarray(z_minus_for_z_plus(z_plus, counts))
    return _out(z_minus * counts.e_minus / (np.asarray(z_plus) * counts.e_plus))


def posterior_from_ratios(density_ratio, prior_ratio):
    """Combine a density ratio and the prior ratio ``e+/e-`` into a level."""
    return _out(1.0 / (1.0 + np.asarray(density_ratio, dtype=float) * prior_ratio))
