"""Private eigenvalue and per-coordinate range estimates used to build grids."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRelease, EstimationFailed, InsufficientSamples, InvalidParameter
from .primitives import PrivacyBudget, argmax_released_bin, stable_histogram

# shared constant for the sample-and-aggregate block count
BLOCK_CONSTANT = 40.0
EXPONENT_RANGE = (-60, 60)


@dataclass(frozen=True)
class EigenEstimate:
    value: float
    index_k: int

    @property
    def exponent(self) -> int:
        return int(round(math.log2(self.value)))


@dataclass(frozen=True)
class RangeEstimate:
    per_coordinate: tuple

    def __post_init__(self):
        for lo, hi in self.per_coordinate:
            if not lo < hi:
                raise InvalidParameter("empty interval in range estimate")

    @property
    def radius(self) -> float:
        return max(max(abs(lo), abs(hi)) for lo, hi in self.per_coordinate)

    def covers(self, x) -> bool:
        x = np.atleast_2d(x)
        lo = np.array([a for a, _ in self.per_coordinate])
        hi = np.array([b for _, b in self.per_coordinate])
        return bool(np.all((x >= lo) & (x <= hi)))


def block_count(budget: PrivacyBudget, beta: float) -> int:
    return math.ceil(BLOCK_CONSTANT / budget.epsilon * math.log(1.0 / (budget.delta * beta)))


def power_of_two_exponent(values) -> np.ndarray:
    """floor(log2 v), clamped to the supported exponent range (nonpositive v -> lower end)."""
    v = np.asarray(values, dtype=float)
    lo, hi = EXPONENT_RANGE
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(v > 0, np.floor(np.log2(np.where(v > 0, v, 1.0))), lo)
    return np.clip(q, lo, hi).astype(np.int64)


def block_eigenvalues(u: np.ndarray, k: int, m: int) -> np.ndarray:
    """k-th largest eigenvalue of (1/b) sum x x^T on each of m equal blocks of size b."""
    n, d = u.shape
    b = n // m
    blocks = u[: m * b].reshape(m, b, d)
    covs = np.einsum("mbi,mbj->mij", blocks, blocks) / b
    return np.linalg.eigvalsh(covs)[:, d - k]


def private_eigenvalue(u, k: int, budget: PrivacyBudget, beta: float, rng) -> EigenEstimate:
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    n, d = u.shape
    if not 1 <= k <= d:
        raise InvalidParameter(f"k={k} outside [1, {d}]")
    if not np.all(np.isfinite(u)):
        raise InvalidParameter("data contains non-finite values")
    m = block_count(budget, beta)
    if n < 2 * m * d:
        raise InsufficientSamples(f"need n >= 2*m*d = {2 * m * d}, got {n}")
    z = power_of_two_exponent(block_eigenvalues(u, k, m))
    release = stable_histogram(z, budget, rng)
    try:
        b = argmax_released_bin(release)
    except EmptyRelease as exc:
        raise EstimationFailed("eigenvalue histogram released no bins") from exc
    return EigenEstimate(value=2.0**b, index_k=k)


def range_half_width(n: int, d: int, sigma: float, beta: float) -> float:
    return 11.0 * sigma * math.log(n * d / beta)


def private_range(x, sigma2: float, budget: PrivacyBudget, beta: float, rng) -> RangeEstimate:
    """Per-coordinate enclosing intervals, each from a stable histogram at (eps/d, delta/d)."""
    if not sigma2 > 0:
        raise InvalidParameter("sigma2 must be positive")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    sigma = math.sqrt(sigma2)
    width = 3.0 * sigma
    half = range_half_width(n, d, sigma, beta)
    per_coord = budget.split(d)
    out = []
    for j in range(d):
        bins = np.floor(x[:, j] / width).astype(np.int64)
        release = stable_histogram(bins, per_coord, rng)
        try:
            b = argmax_released_bin(release)
        except EmptyRelease as exc:
            raise EstimationFailed(f"range histogram for coordinate {j} released no bins") from exc
        center = width * b
        out.append((center - half, center + half))
    return RangeEstimate(tuple(out))
