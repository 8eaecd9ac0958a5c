"""Synthetic (sub)Gaussian datasets: mu + Sigma^{1/2} v with v from a fixed family."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as rngmod
from .errors import InvalidParameter
from .linalg import PsdMatrix, as_psd

# Each family's coordinates are independent, mean 0, variance 1 and strictly
# subgaussian (variance proxy equal to the variance), so c_s = 1 for all three.
FAMILIES = {"gaussian": 1.0, "scaled_uniform": 1.0, "rademacher_mixture": 1.0}


@dataclass(frozen=True)
class SynthSpec:
    family: str
    mu: np.ndarray
    sigma: PsdMatrix
    n: int
    seed: Optional[int] = None
    c_s: float = field(init=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameter(f"unknown family {self.family!r}; choose from {sorted(FAMILIES)}")
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = as_psd(self.sigma)
        if sigma.dim != mu.shape[0]:
            raise InvalidParameter("mu and sigma dimensions differ")
        if self.n < 0:
            raise InvalidParameter("n must be nonnegative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "c_s", FAMILIES[self.family])

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def standard_draws(family: str, n: int, d: int, rng) -> np.ndarray:
    if family == "gaussian":
        return rngmod.standard_normal(rng, (n, d))
    if family == "scaled_uniform":
        return math.sqrt(3.0) * (2.0 * rng.random((n, d)) - 1.0)
    if family == "rademacher_mixture":
        return 2.0 * rng.integers(0, 2, size=(n, d)).astype(float) - 1.0
    raise InvalidParameter(f"unknown family {family!r}")


def synthesize(spec: SynthSpec, rng=None) -> np.ndarray:
    rng = rngmod.make_rng(spec.seed if rng is None else rng)
    v = standard_draws(spec.family, spec.n, spec.dim, rng)
    return spec.mu + v @ spec.sigma.root
