"""Empirically rescaled Gaussian mechanism.

Data come as 3n ordered points.  The mean is taken over the last third and
the covariance from the paired differences of the first two thirds:

    mu_x    = (1/n)  sum_i x_{i+2n}
    Sigma_x = (1/2n) sum_i (x_i - x_{i+n})(x_i - x_{i+n})^T

A dataset is lambda-good when Sigma_x is invertible and every point is
within squared Mahalanobis distance lambda of mu_x.  The mechanism checks
privately that the (shuffled) data are close to the good set, projects onto
it, and releases a draw from N(mu, C^2 Sigma) of the projection.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as rngmod
from .errors import BadShape, InstanceTooLarge, InvalidParameter, ProjectionFailed
from .linalg import PsdMatrix, TOL
from .outcome import Outcome
from .preprocess import private_eigenvalue, private_range
from .primitives import CompositionLedger, PrivacyBudget
from .tukey import GridSpec, pair_differences

C_LAMBDA = 1.5
C_GATE = 10.0
EXACT_MAX_POINTS = 9
EXACT_MAX_CELLS = 8


@dataclass(frozen=True)
class TripleDataset:
    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] == 0 or p.shape[0] % 3:
            raise BadShape(f"expected 3n points, got shape {p.shape}")
        object.__setattr__(self, "points", p)

    @property
    def n(self) -> int:
        return self.points.shape[0] // 3

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


def as_triple(x) -> TripleDataset:
    return x if isinstance(x, TripleDataset) else TripleDataset(x)


def noise_scale_sq(k: float, lam: float, n: int, epsilon: float, delta: float) -> float:
    """C^2 = 32 k^2 / (eps^2 n^2) * lam / (1 - 2 k lam / n) * log(1.25 / delta)."""
    if 2 * k * lam >= n:
        raise InvalidParameter("noise scale needs 2 k lambda < n")
    return 32 * k**2 / (epsilon**2 * n**2) * (lam / (1 - 2 * k * lam / n)) * math.log(1.25 / delta)


def privacy_conditions_hold(k: float, lam: float, n: int, epsilon: float, delta: float) -> bool:
    """n > 2 k lam and eps >= 10 k lam (1/(n - 2 k lam) + 1/n) log(2/delta)."""
    if not n > 2 * k * lam:
        return False
    return epsilon >= 10 * k * lam * (1 / (n - 2 * k * lam) + 1 / n) * math.log(2 / delta)


def lambda_default(n: int, d: int, beta: float, c_lambda: float = C_LAMBDA) -> float:
    return c_lambda * d * math.log(3 * n / beta)


@dataclass(frozen=True)
class GoodnessParams:
    lam: float
    k: float
    C2: Optional[float]
    t_threshold: float

    @classmethod
    def build(cls, n: int, d: int, budget: PrivacyBudget, beta: float, lam: Optional[float] = None,
              c_lambda: float = C_LAMBDA) -> "GoodnessParams":
        eps, delta = budget.epsilon, budget.delta
        lam = lambda_default(n, d, beta, c_lambda) if lam is None else lam
        k = 2 / eps * math.log(1 / (delta * beta)) + 1
        C2 = noise_scale_sq(k, lam, n, eps, delta) if 2 * k * lam < n else None
        return cls(lam=lam, k=k, C2=C2, t_threshold=math.log(1 / beta) / eps)


def sample_size_ok(n: int, params: GoodnessParams, budget: PrivacyBudget, c_gate: float = C_GATE) -> bool:
    return n >= c_gate * params.k * params.lam * math.log(1 / budget.delta) / budget.epsilon


def empirical_mean_cov(x):
    x = as_triple(x)
    n, p = x.n, x.points
    mu = p[2 * n :].mean(axis=0)
    u = p[:n] - p[n : 2 * n]
    return mu, PsdMatrix(u.T @ u / (2 * n))


@dataclass(frozen=True)
class GoodnessResult:
    good: bool
    worst_index: int
    worst_value: float

    def __bool__(self):
        return self.good


def goodness_check(x, lam: float) -> GoodnessResult:
    x = as_triple(x)
    mu, sigma = empirical_mean_cov(x)
    if not sigma.invertible:
        return GoodnessResult(False, -1, math.inf)
    z = (x.points - mu) @ sigma.inv_root
    dist = np.einsum("ij,ij->i", z, z)
    i = int(np.argmax(dist))
    return GoodnessResult(bool(dist[i] <= lam), i, float(dist[i]))


def _batch_good(batch: np.ndarray, n: int, lam: float) -> np.ndarray:
    """Goodness of a stack of candidate datasets with shape (B, 3n, d)."""
    mu = batch[:, 2 * n :].mean(axis=1)
    u = batch[:, :n] - batch[:, n : 2 * n]
    cov = np.einsum("bni,bnj->bij", u, u) / (2 * n)
    w, v = np.linalg.eigh(cov)
    ok = (w[:, -1] > 0) & (w[:, 0] > TOL.invertible * w[:, -1])
    wsafe = np.where(ok[:, None], w, 1.0)
    z = np.einsum("bni,bij->bnj", batch - mu[:, None, :], v) / np.sqrt(wsafe)[:, None, :]
    dist = np.einsum("bnj,bnj->bn", z, z)
    return ok & (dist.max(axis=1) <= lam)


def grid_points(grid: GridSpec) -> np.ndarray:
    K = grid.half_count
    axes = [np.arange(-K, K + 1)] * grid.dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1) * grid.alpha_prime


def _project_exact(x: TripleDataset, lam: float, grid: GridSpec):
    pts = x.points
    N = len(pts)
    if N > EXACT_MAX_POINTS or grid.total_cells > EXACT_MAX_CELLS:
        raise InstanceTooLarge(
            f"exact projection caps: 3n <= {EXACT_MAX_POINTS}, cells <= {EXACT_MAX_CELLS}"
        )
    cells = grid_points(grid)
    G = len(cells)
    for h in range(N + 1):
        assigns = np.array(list(itertools.product(range(G), repeat=h)), dtype=np.int64).reshape(G**h, h)
        for subset in itertools.combinations(range(N), h):
            batch = np.repeat(pts[None], len(assigns), axis=0)
            if h:
                batch[:, list(subset)] = cells[assigns]
            good = _batch_good(batch, x.n, lam)
            if good.any():
                return h, TripleDataset(batch[int(np.argmax(good))])
    raise ProjectionFailed("no grid dataset of this size is lambda-good")


def _project_greedy(x: TripleDataset, lam: float, grid: Optional[GridSpec], max_steps: Optional[int]):
    pts = x.points.copy()
    modified = np.zeros(len(pts), dtype=bool)
    steps = x.n if max_steps is None else max_steps
    for step in range(steps + 1):
        res = goodness_check(pts, lam)
        if res.good:
            return int(modified.sum()), TripleDataset(pts)
        if step == steps:
            break
        if res.worst_index < 0:
            raise ProjectionFailed("empirical covariance is singular; no witness to replace")
        w = res.worst_index
        if modified[w]:
            raise ProjectionFailed("a replaced point is still the worst offender")
        keep = ~modified
        keep[w] = False
        med = np.median(pts[keep], axis=0)
        pts[w] = grid.snap(med) if grid is not None else med
        modified[w] = True
    raise ProjectionFailed(f"not lambda-good after {steps} replacements")


def distance_to_good(x, lam: float, grid: Optional[GridSpec] = None, mode: str = "greedy",
                     max_steps: Optional[int] = None):
    """(h, projection): Hamming distance to the good set and a good dataset at that distance.

    ``exact`` enumerates grid datasets (tiny instances only), trying index
    subsets in lexicographic order and then cell assignments in product order,
    so ties resolve deterministically.  ``greedy`` repeatedly replaces the
    worst point with the coordinate-wise median of the untouched points and
    returns an upper bound on h.
    """
    x = as_triple(x)
    if mode == "exact":
        if grid is None:
            raise InvalidParameter("exact projection needs a grid")
        return _project_exact(x, lam, grid)
    if mode == "greedy":
        return _project_greedy(x, lam, grid, max_steps)
    raise InvalidParameter(f"unknown projection mode {mode!r}")


def mechanism_budget(budget: PrivacyBudget) -> tuple[float, float]:
    e = math.exp(budget.epsilon)
    return 3 * budget.epsilon, e * (1 + e) * budget.delta


def rescaled_gaussian_mechanism(
    x,
    budget: PrivacyBudget,
    beta: float,
    rng=None,
    mode: str = "greedy",
    grid: Optional[GridSpec] = None,
    lam: Optional[float] = None,
    c_lambda: float = C_LAMBDA,
    c_gate: float = C_GATE,
) -> Outcome:
    """Gate, shuffle, noisy distance test, project, then sample N(mu, C^2 Sigma)."""
    rng = rngmod.make_rng(rng)
    x = as_triple(x)
    n, d = x.n, x.dim
    params = GoodnessParams.build(n, d, budget, beta, lam, c_lambda)
    ledger = CompositionLedger()
    ledger.charge("rescaled gaussian", *mechanism_budget(budget))
    diag = dict(lam=params.lam, k=params.k)
    if not sample_size_ok(n, params, budget, c_gate):
        out = Outcome.fail("sample size gate", **diag)
        out.ledger = ledger
        return out
    if not privacy_conditions_hold(params.k, params.lam, n, budget.epsilon, budget.delta):
        out = Outcome.fail("privacy conditions", **diag)
        out.ledger = ledger
        return out
    xbar = TripleDataset(x.points[rng.permutation(len(x))])
    projection_failed = False
    try:
        h, proj = distance_to_good(xbar, params.lam, grid, mode)
    except ProjectionFailed:
        h, proj, projection_failed = math.inf, None, True
    r = rngmod.laplace(rng, 1.0 / budget.epsilon)
    if h + r > params.t_threshold:
        out = Outcome.fail("distance test", h=h, projection_failed=projection_failed, **diag)
        out.ledger = ledger
        return out
    mu, sigma = empirical_mean_cov(proj)
    z = rngmod.standard_normal(rng, d)
    est = mu + math.sqrt(params.C2) * (sigma.root @ z)
    out = Outcome.release(est, h=h, C2=params.C2, **diag)
    out.ledger = ledger
    return out


def gaussian_alpha_prime(alpha: float, lam1: float, lamd: float, d: int, n: int, beta: float) -> float:
    return alpha * min(lamd / lam1 / (d**1.5 * math.log(n / beta)), math.sqrt(lamd / d))


def discrete_rescaled_pipeline(
    x,
    budget: PrivacyBudget,
    alpha: float,
    beta: float,
    c_s: float = 1.0,
    rng=None,
    mode: str = "greedy",
    c_lambda: float = C_LAMBDA,
    c_gate: float = C_GATE,
) -> Outcome:
    """Private scale and range estimates, snapping to a grid, then the main mechanism."""
    rng = rngmod.make_rng(rng)
    x = as_triple(x)
    n, d = x.n, x.dim
    ledger = CompositionLedger()
    u = pair_differences(x.points[: 2 * n])
    lam1 = private_eigenvalue(u, 1, budget, beta, rng)
    ledger.charge_budget("eigen k=1", budget)
    lamd = private_eigenvalue(u, d, budget, beta, rng)
    ledger.charge_budget(f"eigen k={d}", budget)
    rng_est = private_range(x.points, 4.0 * c_s * lam1.value, budget, beta, rng)
    ledger.charge_budget("range coordinate", budget.split(d), times=d)
    ap = gaussian_alpha_prime(alpha, lam1.value, lamd.value, d, n, beta)
    grid = GridSpec(ap + rng_est.radius, ap, d)
    snapped = TripleDataset(grid.snap(x.points))
    out = rescaled_gaussian_mechanism(snapped, budget, beta, rng, mode, grid, None, c_lambda, c_gate)
    for entry in out.ledger.entries:
        ledger.charge(*entry)
    out.ledger = ledger
    out.diagnostics.update(lambda_1=lam1.value, lambda_d=lamd.value, alpha_prime=ap, radius=grid.radius)
    return out
