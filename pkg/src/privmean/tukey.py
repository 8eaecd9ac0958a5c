"""Tukey depth, grid level sets, and the restricted exponential mechanism with PTR.

Scores are integer depths q(x; y) = n * T_x(y).  Everything below works on
an axis-aligned grid of points k * alpha' (|k| <= K) inside [-R, R]^d.  Only
the cells inside the bounding box of the data are materialized; every other
grid point lies outside the convex hull of the data and has depth exactly 0.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from . import rng as rngmod
from .errors import (
    BadShape,
    EmptySupport,
    GridTooLarge,
    InstanceTooLarge,
    InvalidParameter,
    UnsupportedDimension,
)
from .linalg import mahalanobis
from .outcome import Outcome
from .preprocess import private_eigenvalue, private_range
from .primitives import CompositionLedger, PrivacyBudget, hockey_stick

DEFAULT_CELL_CAP = 10**7
ANGLE_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Points k * alpha_prime for integer k in [-K, K]^d, K = ceil(R / alpha_prime)."""

    radius: float
    alpha_prime: float
    dim: int
    cap: int = DEFAULT_CELL_CAP

    def __post_init__(self):
        if not (self.radius > 0 and self.alpha_prime > 0):
            raise InvalidParameter("grid radius and resolution must be positive")
        if self.dim < 1:
            raise InvalidParameter("grid dimension must be positive")

    @property
    def half_count(self) -> int:
        return max(1, math.ceil(self.radius / self.alpha_prime - 1e-9))

    @property
    def per_axis(self) -> int:
        return 2 * self.half_count + 1

    @property
    def total_cells(self) -> int:
        return self.per_axis**self.dim

    def snap_indices(self, x) -> np.ndarray:
        """Nearest grid index per coordinate (this is the L1-nearest grid point).

        Ties go to the smaller index, which makes the snapped point the
        lexicographically smallest among the tied candidates.
        """
        x = np.asarray(x, dtype=float)
        k = np.ceil(x / self.alpha_prime - 0.5)
        return np.clip(k, -self.half_count, self.half_count).astype(np.int64)

    def snap(self, x) -> np.ndarray:
        return self.snap_indices(x) * self.alpha_prime


@dataclass
class DepthProfile:
    """Integer depths on the materialized block of the grid.

    ``lo`` holds the first grid index per axis and ``counts`` has the block's
    shape; cells outside the block have depth 0.
    """

    grid: GridSpec
    n: int
    lo: np.ndarray
    counts: np.ndarray

    @property
    def depths(self) -> np.ndarray:
        return self.counts / self.n

    @property
    def materialized(self) -> int:
        return int(self.counts.size)

    def centers(self) -> np.ndarray:
        axes = [np.arange(lo, lo + s) for lo, s in zip(self.lo, self.counts.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1) * self.grid.alpha_prime

    def cells_at_least(self, level: float) -> int:
        """#grid cells with q >= level; any level <= 0 means the whole box."""
        if level <= 0:
            return self.grid.total_cells
        return int(np.count_nonzero(self.counts >= level))

    def volume(self, level: float) -> float:
        return self.cells_at_least(level) * self.grid.alpha_prime**self.grid.dim

    def level_counts(self) -> list:
        """ge[s] = #cells with q >= s for s = 0..n+1 (ge[0] is the whole box)."""
        hist = np.bincount(self.counts.ravel(), minlength=self.n + 2)[: self.n + 2]
        ge = [int(v) for v in np.cumsum(hist[::-1])[::-1]]
        ge[0] = self.grid.total_cells
        return ge


@dataclass(frozen=True)
class SafetyCertificate:
    certified_distance: int
    gap: float
    volume_ratio: float
    passed: bool


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1:
        raise BadShape("expected a nonempty (n, d) array of points")
    return x


def _max_open_halfplane(angles: np.ndarray) -> int:
    """Most angles inside any open half-circle, for angles in (-pi, pi]."""
    s = np.sort(angles)
    ext = np.concatenate([s - 2 * np.pi, s, s + 2 * np.pi])
    lo = np.searchsorted(ext, s - ANGLE_TOL, side="left")
    hi = np.searchsorted(ext, s + np.pi - ANGLE_TOL, side="left")
    return int((hi - lo).max())


def _depth_counts_2d(x: np.ndarray, ys: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    out = np.empty(len(ys), dtype=np.int64)
    chunk = max(1, 400_000 // n)
    scale = 1.0 + np.abs(x).max()
    for s in range(0, len(ys), chunk):
        yb = ys[s : s + chunk]
        diff = x[None, :, :] - yb[:, None, :]
        coinc = np.all(np.abs(diff) <= 1e-12 * scale, axis=2)
        ang = np.arctan2(diff[..., 1], diff[..., 0])
        for r in range(len(yb)):
            a = ang[r][~coinc[r]]
            # the closed half-plane minimum is m minus the best open complement
            out[s + r] = n - (_max_open_halfplane(a) if a.size else 0)
    return out


def depth_counts(x, ys) -> np.ndarray:
    """Integer depths n * T_x(y) for every row y of ``ys``."""
    x = _as_points(x)
    ys = np.asarray(ys, dtype=float).reshape(-1, x.shape[1])
    d = x.shape[1]
    if d == 1:
        xs = np.sort(x[:, 0])
        y = ys[:, 0]
        ge = len(xs) - np.searchsorted(xs, y, side="left")
        le = np.searchsorted(xs, y, side="right")
        return np.minimum(ge, le).astype(np.int64)
    if d == 2:
        return _depth_counts_2d(x, ys)
    raise UnsupportedDimension(f"exact depth is implemented for d <= 2, got d={d}")


def tukey_depth(x, y) -> float:
    x = _as_points(x)
    return float(depth_counts(x, np.atleast_1d(y))[0]) / x.shape[0]


def expected_tukey_depth(y, mu, sigma) -> float:
    """Depth of y under N(mu, sigma): Phi(-||y - mu||_sigma)."""
    diff = np.atleast_1d(np.asarray(y, dtype=float) - np.asarray(mu, dtype=float))
    return float(ndtr(-mahalanobis(diff, sigma)))


def depth_profile(x, grid: GridSpec, full: bool = False) -> DepthProfile:
    """Depths on the grid block covering the data's bounding box (or the whole grid)."""
    x = _as_points(x)
    n, d = x.shape
    if d != grid.dim:
        raise BadShape(f"data dimension {d} does not match grid dimension {grid.dim}")
    K = grid.half_count
    if full:
        lo = np.full(d, -K)
        hi = np.full(d, K)
    else:
        lo = np.clip(np.ceil(x.min(axis=0) / grid.alpha_prime - 1e-9), -K, K + 1).astype(np.int64)
        hi = np.clip(np.floor(x.max(axis=0) / grid.alpha_prime + 1e-9), -K - 1, K).astype(np.int64)
    shape = tuple(int(v) for v in np.maximum(hi - lo + 1, 0))
    size = math.prod(shape)
    if size > grid.cap:
        raise GridTooLarge(f"{size} grid cells to evaluate exceeds the cap {grid.cap}")
    prof = DepthProfile(grid, n, lo, np.zeros(shape, dtype=np.int64))
    if size:
        prof.counts = depth_counts(x, prof.centers()).reshape(shape)
    return prof


def _level_count(ge, level):
    lev = math.ceil(level) if level > 0 else 0
    if lev >= len(ge):
        return 0
    return ge[lev]


def safety_certificate(profile: DepthProfile, budget: PrivacyBudget, t: float, k: int, g=None) -> SafetyCertificate:
    """Volume test showing every dataset within Hamming distance k of x is safe.

    Passes when Vol(Y_{t-k-1}) / Vol(Y_{t+k+g+1}) * exp(-eps g / 2) <= delta / (4 e^eps).
    Levels at or below 0 use the whole box; levels above n are empty, which
    fails the test.
    """
    n = profile.n
    g = n / 8 if g is None else g
    if g <= 0:
        raise InvalidParameter("gap g must be positive")
    num = profile.cells_at_least(t - k - 1)
    den = profile.cells_at_least(t + k + g + 1)
    if den == 0:
        return SafetyCertificate(k, g, math.inf, False)
    ratio = num / den
    lhs = math.log(num) - math.log(den) - budget.epsilon * g / 2
    rhs = math.log(budget.delta) - math.log(4.0) - budget.epsilon
    return SafetyCertificate(k, g, ratio, bool(lhs <= rhs))


def certified_distance(profile: DepthProfile, budget: PrivacyBudget, t: float, g=None) -> int:
    """1 + the largest k whose certificate passes (0 if k = 0 already fails).

    The test is monotone in k, so this is the length of the passing prefix.
    """
    n = profile.n
    g = n / 8 if g is None else g
    ge = profile.level_counts()
    rhs = math.log(budget.delta) - math.log(4.0) - budget.epsilon + budget.epsilon * g / 2
    h = 0
    for k in range(n + 1):
        num = _level_count(ge, t - k - 1)
        den = _level_count(ge, t + k + g + 1)
        if den == 0 or math.log(num) - math.log(den) > rhs:
            break
        h = k + 1
    return h


# ---- exact distance to UNSAFE on tiny one-dimensional grids ----

EXACT_MAX_N = 6
EXACT_MAX_CELLS = 12


def restricted_distribution(counts, epsilon: float, t: float) -> np.ndarray:
    """Exact output masses of the restricted sampler over cells plus an EMPTY atom.

    ``counts`` is an (M, G) array of per-cell depths; the returned array has
    shape (M, G + 1) and the last column is the mass on "no eligible cell".
    """
    q = np.asarray(counts, dtype=float)
    elig = q >= t
    logw = np.where(elig, epsilon * q / 2, -np.inf)
    top = logw.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    w = np.where(elig, np.exp(logw - top), 0.0)
    z = w.sum(axis=1, keepdims=True)
    empty = (z[:, 0] == 0).astype(float)
    probs = np.where(z > 0, w / np.where(z > 0, z, 1.0), 0.0)
    return np.concatenate([probs, empty[:, None]], axis=1)


def multiset_depths_1d(count_vectors: np.ndarray) -> np.ndarray:
    """Depth of every grid cell for datasets given as per-cell count vectors (d=1)."""
    c = np.asarray(count_vectors, dtype=np.int64)
    n = c.sum(axis=1, keepdims=True)
    le = np.cumsum(c, axis=1)
    ge = n - le + c
    return np.minimum(le, ge)


def _all_count_vectors(cells: int, n: int) -> np.ndarray:
    rows = [np.bincount(comb, minlength=cells) for comb in itertools.combinations_with_replacement(range(cells), n)]
    return np.array(rows, dtype=np.int64)


@dataclass(frozen=True)
class ExactTables:
    """Every size-n multiset on a tiny grid with its sampler law and safety.

    ``counts`` rows are per-cell count vectors, ``laws`` the exact sampler
    laws (cells plus EMPTY), ``neighbors`` the row index of every one-point
    change (-1 where the move is impossible), and ``distance`` the Hamming
    distance of each multiset to the nearest unsafe one (n + 1 if none).
    """

    counts: np.ndarray
    laws: np.ndarray
    unsafe: np.ndarray
    neighbors: np.ndarray
    distance: np.ndarray
    codes: np.ndarray
    order: np.ndarray

    def lookup(self, count_vector) -> int:
        n = int(self.counts[0].sum())
        base = (n + 1) ** np.arange(self.counts.shape[1], dtype=np.int64)
        code = int(np.asarray(count_vector, dtype=np.int64) @ base)
        return int(self.order[np.searchsorted(self.codes[self.order], code)])


@lru_cache(maxsize=32)
def _exact_tables(cells: int, n: int, epsilon: float, delta: float, t: float) -> ExactTables:
    C = _all_count_vectors(cells, n)
    M = len(C)
    P = restricted_distribution(multiset_depths_1d(C), epsilon, t)
    base = (n + 1) ** np.arange(cells, dtype=np.int64)
    codes = C @ base
    order = np.argsort(codes)
    sorted_codes = codes[order]
    moves = [(a, b) for a in range(cells) for b in range(cells) if a != b]
    nbr = np.full((M, len(moves)), -1, dtype=np.int64)
    unsafe = np.zeros(M, dtype=bool)
    for j, (a, b) in enumerate(moves):
        rows = np.nonzero(C[:, a] > 0)[0]
        if rows.size == 0:
            continue
        nb = order[np.searchsorted(sorted_codes, codes[rows] - base[a] + base[b])]
        nbr[rows, j] = nb
        fwd = hockey_stick(P[rows], P[nb], epsilon)
        bwd = hockey_stick(P[nb], P[rows], epsilon)
        unsafe[rows[np.maximum(fwd, bwd) > delta + 1e-12]] = True
    # multiset Hamming distance is the path length in the one-change graph
    dist = np.where(unsafe, 0, n + 1)
    frontier = unsafe.copy()
    level = 0
    while frontier.any() and level < n:
        level += 1
        reach = nbr[frontier].ravel()
        reach = reach[reach >= 0]
        new = np.zeros(M, dtype=bool)
        new[reach] = True
        new &= dist > level
        dist[new] = level
        frontier = new
    return ExactTables(C, P, unsafe, nbr, dist, codes, order)


def grid_count_vector(x, grid: GridSpec) -> np.ndarray:
    idx = grid.snap_indices(_as_points(x)[:, 0]) + grid.half_count
    return np.bincount(idx, minlength=grid.per_axis).astype(np.int64)


def _check_tiny(x, grid):
    x = _as_points(x)
    if x.shape[1] != 1 or grid.dim != 1:
        raise InstanceTooLarge("the exact oracle handles d = 1 only")
    if x.shape[0] > EXACT_MAX_N or grid.total_cells > EXACT_MAX_CELLS:
        raise InstanceTooLarge(
            f"exact oracle caps: n <= {EXACT_MAX_N}, cells <= {EXACT_MAX_CELLS}; "
            f"got n={x.shape[0]}, cells={grid.total_cells}"
        )
    return x


def exact_tables(grid: GridSpec, n: int, budget: PrivacyBudget, t: float) -> ExactTables:
    return _exact_tables(grid.total_cells, n, float(budget.epsilon), float(budget.delta), float(t))


def unsafe_multisets(grid: GridSpec, n: int, budget: PrivacyBudget, t: float) -> np.ndarray:
    tab = exact_tables(grid, n, budget, t)
    return tab.counts[tab.unsafe]


def exact_unsafe_distance(x, grid: GridSpec, budget: PrivacyBudget, t=None) -> int:
    """Hamming distance from x to the nearest unsafe grid dataset, by enumeration.

    Returns n + 1 when no grid dataset is unsafe.
    """
    x = _check_tiny(x, grid)
    n = x.shape[0]
    t = n / 4 if t is None else t
    tab = exact_tables(grid, n, budget, t)
    return int(tab.distance[tab.lookup(grid_count_vector(x, grid))])


# ---- sampling and the full mechanism ----


def restricted_exp_mechanism(profile: DepthProfile, epsilon: float, t: float, rng) -> np.ndarray:
    """Sample a grid point with probability proportional to exp(eps q / 2) over {q >= t}."""
    rng = rngmod.make_rng(rng)
    grid = profile.grid
    q = profile.counts.ravel()
    elig = np.nonzero(q >= t)[0]
    outside = grid.total_cells - profile.materialized if t <= 0 else 0
    if elig.size == 0 and outside == 0:
        raise EmptySupport(f"no grid cell reaches depth {t}")
    logw = epsilon * q[elig] / 2.0
    if outside:
        logw = np.append(logw, math.log(outside))
    pick = int(np.argmax(logw + rngmod.gumbel(rng, logw.size)))
    if pick < elig.size:
        idx = np.unravel_index(elig[pick], profile.counts.shape)
        return (profile.lo + np.array(idx)) * grid.alpha_prime
    # uniform over the zero-depth cells outside the materialized block
    K = grid.half_count
    hi = profile.lo + np.array(profile.counts.shape) - 1
    while True:
        k = rng.integers(-K, K + 1, size=grid.dim)
        if np.any((k < profile.lo) | (k > hi)):
            return k * grid.alpha_prime


def ptr_threshold(budget: PrivacyBudget) -> float:
    return math.log(1.0 / (2.0 * budget.delta)) / budget.epsilon


def tukey_ptr(
    x,
    grid: GridSpec,
    budget: PrivacyBudget,
    t=None,
    rng=None,
    distance_mode: str = "certificate",
    g=None,
) -> Outcome:
    """Propose-test-release around the restricted exponential sampler.

    The distance h to the unsafe set is either a certified lower bound
    (production) or exact enumeration (tiny d = 1 instances).  Privacy is
    (2 eps, e^eps delta).
    """
    rng = rngmod.make_rng(rng)
    x = _as_points(x)
    n = x.shape[0]
    t = n / 4 if t is None else t
    profile = depth_profile(x, grid)
    if distance_mode == "certificate":
        h = certified_distance(profile, budget, t, g)
    elif distance_mode == "exact":
        h = exact_unsafe_distance(x, grid, budget, t)
    else:
        raise InvalidParameter(f"unknown distance mode {distance_mode!r}")
    z = rngmod.laplace(rng, 1.0 / budget.epsilon)
    if h + z < ptr_threshold(budget):
        return Outcome.fail("distance test", h=h)
    try:
        y = restricted_exp_mechanism(profile, budget.epsilon, t, rng)
    except EmptySupport:
        return Outcome.fail("empty support", h=h)
    return Outcome.release(y, h=h)


def tukey_alpha_prime(alpha: float, lambda_d: float, d: int, c_g: float = 1.0) -> float:
    return c_g * alpha * math.sqrt(lambda_d) / d


def pair_differences(x: np.ndarray) -> np.ndarray:
    """u_i = (x_i - x_{i+n}) / sqrt(2) over the first 2n rows."""
    n = x.shape[0] // 2
    return (x[:n] - x[n : 2 * n]) / math.sqrt(2.0)


def discrete_tukey_pipeline(
    x,
    budget: PrivacyBudget,
    alpha: float,
    beta: float,
    rng=None,
    c_g: float = 1.0,
    distance_mode: str = "certificate",
    cap: int = DEFAULT_CELL_CAP,
) -> Outcome:
    """Estimate eigenvalue scale and range privately, snap to a grid, run the PTR sampler.

    Input has 2n rows.  The returned outcome carries the composition ledger
    (two eigenvalue runs, one range run, and the PTR stage).
    """
    rng = rngmod.make_rng(rng)
    x = _as_points(x)
    if x.shape[0] % 2:
        raise BadShape("the Tukey pipeline expects an even number of points")
    d = x.shape[1]
    if d > 2:
        raise UnsupportedDimension("the Tukey pipeline supports d <= 2")
    ledger = CompositionLedger()
    u = pair_differences(x)
    lam1 = private_eigenvalue(u, 1, budget, beta, rng)
    ledger.charge_budget("eigen k=1", budget)
    lamd = private_eigenvalue(u, d, budget, beta, rng)
    ledger.charge_budget(f"eigen k={d}", budget)
    rng_est = private_range(x, 4.0 * lam1.value, budget, beta, rng)
    ledger.charge_budget("range coordinate", budget.split(d), times=d)
    ap = tukey_alpha_prime(alpha, lamd.value, d, c_g)
    grid = GridSpec(ap + rng_est.radius, ap, d, cap)
    snapped = grid.snap(x)
    out = tukey_ptr(snapped, grid, budget, rng=rng, distance_mode=distance_mode)
    ledger.charge("tukey ptr", 2 * budget.epsilon, math.exp(budget.epsilon) * budget.delta)
    out.ledger = ledger
    out.diagnostics.update(lambda_1=lam1.value, lambda_d=lamd.value, alpha_prime=ap, radius=grid.radius)
    return out
