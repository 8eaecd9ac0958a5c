"""Laplace and Gaussian mechanisms, the stable histogram, and basic composition."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import EmptyRelease, InvalidParameter


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidParameter(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 <= self.delta < 1.0:
            raise InvalidParameter(f"delta must lie in [0, 1), got {self.delta}")

    def split(self, parts: int) -> "PrivacyBudget":
        return PrivacyBudget(self.epsilon / parts, self.delta / parts)


@dataclass
class CompositionLedger:
    """Running record of every budget spent, totalled by basic composition."""

    entries: list = field(default_factory=list)

    def charge(self, label: str, epsilon: float, delta: float = 0.0):
        self.entries.append((label, float(epsilon), float(delta)))

    def charge_budget(self, label: str, budget: PrivacyBudget, times: int = 1):
        for _ in range(times):
            self.charge(label, budget.epsilon, budget.delta)

    @property
    def total(self) -> tuple[float, float]:
        return (
            math.fsum(e for _, e, _ in self.entries),
            math.fsum(d for _, _, d in self.entries),
        )

    def to_dict(self) -> dict:
        eps, delta = self.total
        return {"epsilon": eps, "delta": delta, "entries": [list(e) for e in self.entries]}


@dataclass(frozen=True)
class HistogramRelease:
    bins: dict
    tau: float

    def __post_init__(self):
        assert all(c >= self.tau for c in self.bins.values())

    def __len__(self):
        return len(self.bins)


def laplace_mechanism(value: float, sensitivity: float, epsilon: float, rng) -> float:
    if not epsilon > 0:
        raise InvalidParameter("epsilon must be positive")
    if not (sensitivity >= 0 and math.isfinite(sensitivity)):
        raise InvalidParameter("sensitivity must be finite and nonnegative")
    if sensitivity == 0:
        return value
    return value + rngmod.laplace(rngmod.make_rng(rng), sensitivity / epsilon)


def gaussian_sigma(l2_sensitivity: float, budget: PrivacyBudget) -> float:
    if budget.delta <= 0:
        raise InvalidParameter("the Gaussian mechanism needs delta > 0")
    return l2_sensitivity * math.sqrt(2.0 * math.log(1.25 / budget.delta)) / budget.epsilon


def gaussian_mechanism(value, l2_sensitivity: float, budget: PrivacyBudget, rng) -> np.ndarray:
    sigma = gaussian_sigma(l2_sensitivity, budget)
    value = np.asarray(value, dtype=float)
    if l2_sensitivity == 0:
        return value.copy()
    return value + sigma * rngmod.standard_normal(rngmod.make_rng(rng), value.shape or 1).reshape(value.shape)


def histogram_threshold(budget: PrivacyBudget) -> float:
    if budget.delta <= 0:
        raise InvalidParameter("the stable histogram needs delta > 0")
    return 1.0 + 2.0 * math.log(1.0 / budget.delta) / budget.epsilon


def stable_histogram(bin_assignments, budget: PrivacyBudget, rng) -> HistogramRelease:
    """Noisy counts of the non-empty bins; only counts above the threshold survive.

    Bins are visited in increasing id order so the noise assignment is
    deterministic given the generator.
    """
    counts = Counter(int(b) for b in np.asarray(bin_assignments).ravel())
    if not counts:
        raise InvalidParameter("stable_histogram needs at least one item")
    tau = histogram_threshold(budget)
    ids = sorted(counts)
    noise = rngmod.laplace(rngmod.make_rng(rng), 2.0 / budget.epsilon, size=len(ids))
    released = {}
    for b, z in zip(ids, noise):
        c = counts[b] + float(z)
        if c >= tau:
            released[b] = c
    return HistogramRelease(bins=released, tau=tau)


def argmax_released_bin(release: HistogramRelease) -> int:
    if not release.bins:
        raise EmptyRelease("every bin fell below the release threshold")
    return min(release.bins, key=lambda b: (-release.bins[b], b))


def hockey_stick(p, q, epsilon: float) -> float:
    """sum_w max(p(w) - e^eps q(w), 0) for two mass vectors on the same atoms.

    This is the smallest delta with Pr_p[E] <= e^eps Pr_q[E] + delta for all
    events E; the maximizing event is {w : p(w) > e^eps q(w)}.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.sum(np.maximum(p - math.exp(epsilon) * q, 0.0), axis=-1)
    return float(out) if p.ndim == 1 else out
