"""Monte-Carlo sweeps used to pick the concrete constants the estimators rely on."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import EmptyRelease
from .primitives import PrivacyBudget, argmax_released_bin, stable_histogram
from .rescaled import goodness_check, lambda_default
from .synth import SynthSpec, synthesize


@dataclass(frozen=True)
class SweepPoint:
    constant: float
    successes: int
    trials: int

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else math.nan


def lambda_sweep(constants, n: int, d: int, beta: float, trials: int, seed: int = 0,
                 family: str = "gaussian") -> list[SweepPoint]:
    """Fraction of synthetic 3n-point datasets that are lambda-good, per c_lambda.

    The same datasets are reused for every constant, so the rates are monotone.
    """
    worst = np.empty(trials)
    for i in range(trials):
        x = synthesize(SynthSpec(family, np.zeros(d), np.eye(d), 3 * n), rngmod.trial_stream(seed, i))
        worst[i] = goodness_check(x, math.inf).worst_value
    out = []
    for c in constants:
        lam = lambda_default(n, d, beta, c)
        out.append(SweepPoint(float(c), int(np.sum(worst <= lam)), trials))
    return out


def histogram_sample_size(c: float, budget: PrivacyBudget, beta: float) -> int:
    return int(math.ceil(c / budget.epsilon * math.log(1.0 / (beta * budget.delta))))


def concentrated_bins(n: int, centre: int, rng, spill: float = 0.03) -> np.ndarray:
    """97% of mass on centre-1..centre+1, the rest scattered over far-away bins."""
    near = rng.choice([centre - 1, centre, centre + 1], size=n, p=[0.25, 0.5, 0.25])
    far = rng.integers(centre + 10, centre + 10_000, size=n)
    return np.where(rng.random(n) < spill, far, near)


def histogram_sweep(constants, budget: PrivacyBudget, beta: float, trials: int, seed: int = 0,
                    centre: int = 0) -> list[SweepPoint]:
    """How often the modal released bin lands next to the true mode, per constant C."""
    out = []
    for c in constants:
        n = histogram_sample_size(c, budget, beta)
        ok = 0
        for i in range(trials):
            rng = rngmod.trial_stream(seed, i)
            bins = concentrated_bins(n, centre, rng)
            try:
                ok += abs(argmax_released_bin(stable_histogram(bins, budget, rng)) - centre) <= 1
            except EmptyRelease:
                pass
        out.append(SweepPoint(float(c), ok, trials))
    return out


def smallest_passing(points, target: float):
    """Smallest constant whose rate reaches target, or None."""
    passing = [p.constant for p in points if p.rate >= target]
    return min(passing) if passing else None
