"""Empirical and exact checks of (eps, delta)-indistinguishability.

The central quantity is the hockey-stick divergence

    delta(eps) = max over events E of  P(E) - e^eps Q(E),

computed in both directions.  Exact mode works on explicit mass vectors;
Monte-Carlo mode runs a mechanism on two adjacent inputs and estimates the
divergence with sample splitting: the first half of the draws picks the
event, the second half estimates its masses with 99% Clopper-Pearson
intervals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import beta as beta_dist
from scipy.stats import binom

from . import rng as rngmod
from .errors import InvalidParameter, SingularMatrix
from .linalg import as_psd, matrix_norms
from .primitives import PrivacyBudget, hockey_stick
from .tukey import GridSpec, exact_tables, grid_count_vector, ptr_threshold

CONFIDENCE = 0.99


@dataclass(frozen=True)
class DivergenceReport:
    epsilon_tested: float
    delta_hat: float
    confidence_interval: tuple
    trials: int
    exact: bool
    plug_in: Optional[float] = None

    def __post_init__(self):
        lo, hi = self.confidence_interval
        assert 0.0 <= self.delta_hat <= 1.0
        assert lo <= self.delta_hat <= hi


@dataclass(frozen=True)
class AdjacentPair:
    x: np.ndarray
    x_prime: np.ndarray
    changed_index: int
    strategy: str

    @property
    def hamming(self) -> int:
        return int(np.any(self.x != self.x_prime, axis=1).sum())


def clopper_pearson(k: int, n: int, confidence: float = CONFIDENCE) -> tuple[float, float]:
    a = (1 - confidence) / 2
    lo = 0.0 if k == 0 else float(beta_dist.ppf(a, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - a, k + 1, n - k))
    return lo, hi


def exact_hockey_stick(p, q, epsilon: float) -> DivergenceReport:
    """Exact divergence between two mass vectors over the same atoms, both directions."""
    d = max(hockey_stick(p, q, epsilon), hockey_stick(q, p, epsilon))
    d = min(max(d, 0.0), 1.0)
    return DivergenceReport(epsilon, d, (d, d), 0, True)


def _tally(keys, labels):
    idx = {k: i for i, k in enumerate(labels)}
    out = np.zeros(len(labels), dtype=np.int64)
    for k in keys:
        out[idx[k]] += 1
    return out


def default_binner(outcome):
    """Output key for discrete mechanisms: FAIL or the rounded estimate."""
    if outcome.failed:
        return "FAIL"
    return tuple(np.round(outcome.estimate, 9).tolist())


def interval_binner(edges) -> Callable:
    """Data-independent binning of scalar or vector outputs; FAIL is its own atom."""
    edges = np.asarray(edges, dtype=float)

    def key(outcome):
        if outcome.failed:
            return "FAIL"
        return tuple(np.searchsorted(edges, outcome.estimate, side="right").tolist())

    return key


def _split_direction(a1, b1, a2, b2, m2, epsilon):
    """Estimate P(W) - e^eps Q(W) on held-out draws for W chosen on the first half."""
    e = math.exp(epsilon)
    event = a1 > e * b1
    pk, qk = int(a2[event].sum()), int(b2[event].sum())
    p, q = pk / m2, qk / m2
    plo, phi = clopper_pearson(pk, m2)
    qlo, qhi = clopper_pearson(qk, m2)
    est = min(max(p - e * q, 0.0), 1.0)
    lo = min(max(plo - e * qhi, 0.0), est)
    hi = max(min(max(phi - e * qlo, 0.0), 1.0), est)
    return est, lo, hi


def mc_hockey_stick(
    mechanism: Callable,
    pair: AdjacentPair,
    epsilon: float,
    trials: int,
    rng=None,
    binner: Callable = default_binner,
) -> DivergenceReport:
    """Monte-Carlo divergence of ``mechanism(data, rng) -> Outcome`` on an adjacent pair."""
    if trials < 4:
        raise InvalidParameter("need at least 4 trials per side")
    rng = rngmod.make_rng(rng)
    seed_x, seed_y = (int(s) for s in rng.integers(0, 2**63 - 1, size=2))
    keys_x = [binner(mechanism(pair.x, rngmod.trial_stream(seed_x, i))) for i in range(trials)]
    keys_y = [binner(mechanism(pair.x_prime, rngmod.trial_stream(seed_y, i))) for i in range(trials)]
    labels = sorted(set(keys_x) | set(keys_y), key=repr)
    m1 = trials // 2
    m2 = trials - m1
    a1, a2 = _tally(keys_x[:m1], labels) / m1, _tally(keys_x[m1:], labels)
    b1, b2 = _tally(keys_y[:m1], labels) / m1, _tally(keys_y[m1:], labels)
    fwd = _split_direction(a1, b1, a2, b2, m2, epsilon)
    bwd = _split_direction(b1, a1, b2, a2, m2, epsilon)
    pa = _tally(keys_x, labels) / trials
    pb = _tally(keys_y, labels) / trials
    plug = max(hockey_stick(pa, pb, epsilon), hockey_stick(pb, pa, epsilon))
    return DivergenceReport(
        epsilon,
        max(fwd[0], bwd[0]),
        (max(fwd[1], bwd[1]), max(fwd[2], bwd[2])),
        trials,
        False,
        plug_in=min(plug, 1.0),
    )


# ---- exact audit of the propose-test-release sampler on tiny 1-D grids ----


def laplace_cdf(a: np.ndarray, scale: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.where(a < 0, 0.5 * np.exp(np.minimum(a, 0) / scale), 1 - 0.5 * np.exp(-np.maximum(a, 0) / scale))


def ptr_output_law(P: np.ndarray, h: np.ndarray, budget: PrivacyBudget) -> np.ndarray:
    """Exact law over (cells..., FAIL) of the full test-then-sample mechanism.

    ``P`` rows are sampler laws with a trailing EMPTY atom, which the
    mechanism reports as FAIL.
    """
    pfail = laplace_cdf(ptr_threshold(budget) - np.asarray(h, dtype=float), 1 / budget.epsilon)
    law = (1 - pfail)[:, None] * P
    law[:, -1] += pfail
    return law


@dataclass(frozen=True)
class ExactAuditResult:
    delta_hat: float
    neighbors: int
    distance: int
    worst_neighbor: Optional[np.ndarray] = field(default=None, repr=False)


def exact_ptr_audit(x, grid: GridSpec, budget: PrivacyBudget, epsilon_test: float, t=None) -> ExactAuditResult:
    """Largest exact divergence between the PTR mechanism on x and on any neighbor."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = len(x)
    t = n / 4 if t is None else t
    tab = exact_tables(grid, n, budget, t)
    ix = tab.lookup(grid_count_vector(x[:, None], grid))
    nbrs = tab.neighbors[ix]
    nbrs = nbrs[nbrs >= 0]
    law_x = ptr_output_law(tab.laws[[ix]], tab.distance[[ix]], budget)[0]
    laws = ptr_output_law(tab.laws[nbrs], tab.distance[nbrs], budget)
    lx = np.broadcast_to(law_x, laws.shape)
    div = np.maximum(hockey_stick(lx, laws, epsilon_test), hockey_stick(laws, lx, epsilon_test))
    j = int(np.argmax(div))
    return ExactAuditResult(float(div[j]), len(nbrs), int(tab.distance[ix]), tab.counts[nbrs[j]])


# ---- Gaussian pairs ----


@dataclass(frozen=True)
class PrivacyLossReport:
    epsilon_hat: float
    confidence_interval: tuple
    trials: int
    delta: float


def _log_density(w, mu, s):
    z = (w - mu) @ s.inv_root
    return -0.5 * np.einsum("ij,ij->i", z, z) - 0.5 * s.logdet


def _quantile_with_band(values: np.ndarray, p: float, confidence: float = CONFIDENCE):
    v = np.sort(values)
    N = len(v)
    a = (1 - confidence) / 2
    est = float(np.quantile(v, p, method="inverted_cdf"))
    lo_rank = int(binom.ppf(a, N, p))
    hi_rank = int(binom.ppf(1 - a, N, p)) + 1
    lo = float(v[lo_rank - 1]) if lo_rank >= 1 else -math.inf
    hi = float(v[hi_rank - 1]) if hi_rank <= N else math.inf
    return est, min(lo, est), max(hi, est)


def gaussian_pair_privacy_loss(mu1, sigma1, mu2, sigma2, delta: float, trials: int, rng=None) -> PrivacyLossReport:
    """(1 - delta)-quantile of |log p1(w) - log p2(w)| under each law; report the larger.

    P[|loss| > eps] <= delta under both laws is sufficient for
    (eps, delta)-indistinguishability.
    """
    rng = rngmod.make_rng(rng)
    s1, s2 = as_psd(sigma1), as_psd(sigma2)
    if not (s1.invertible and s2.invertible):
        raise SingularMatrix("both covariances must be invertible")
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    d = s1.dim
    best = None
    for mu_a, s_a in ((mu1, s1), (mu2, s2)):
        w = mu_a + rngmod.standard_normal(rng, (trials, d)) @ s_a.root
        loss = np.abs(_log_density(w, mu1, s1) - _log_density(w, mu2, s2))
        q = _quantile_with_band(loss, 1 - delta)
        if best is None or q[0] > best[0]:
            best = q
    return PrivacyLossReport(best[0], (best[1], best[2]), trials, delta)


def gaussian_privacy_loss_1d(shift: float, delta: float) -> float:
    """Exact (1 - delta)-quantile of |shift w - shift^2 / 2| for w ~ N(0, 1)."""
    from scipy.optimize import brentq
    from scipy.stats import norm

    s = abs(shift)
    if s == 0:
        return 0.0

    def tail(e):
        # P[|s w - s^2/2| > e]
        return norm.sf((e + s * s / 2) / s) + norm.cdf((-e + s * s / 2) / s) - delta

    return brentq(tail, 0.0, 50 * s + s * s + 50)


# ---- adjacent pairs ----


def adjacent_pair_generator(x, strategy: str, rng=None, sampler: Optional[Callable] = None,
                            index: Optional[int] = None) -> AdjacentPair:
    """Replace one point of x to build a neighbouring dataset.

    worst_subspace moves the point onto the best-fit (d-1)-dimensional affine
    subspace of the others; far_outlier sends it to 1e6 * max|x| * (1, ..., 1);
    random_swap replaces it with a fresh draw from ``sampler(rng)``.
    """
    rng = rngmod.make_rng(rng)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    i = int(rng.integers(n)) if index is None else int(index)
    xp = x.copy()
    if strategy == "worst_subspace":
        others = np.delete(x, i, axis=0)
        c = others.mean(axis=0)
        if d == 1 or len(others) < 2:
            xp[i] = c
        else:
            _, _, vt = np.linalg.svd(others - c, full_matrices=False)
            v = vt[: d - 1].T
            xp[i] = c + v @ (v.T @ (x[i] - c))
    elif strategy == "far_outlier":
        scale = np.abs(x).max() or 1.0
        xp[i] = 1e6 * scale * np.ones(d)
    elif strategy == "random_swap":
        draw = sampler(rng) if sampler is not None else rngmod.standard_normal(rng, d)
        xp[i] = np.asarray(draw, dtype=float).reshape(d)
    else:
        raise InvalidParameter(f"unknown strategy {strategy!r}")
    return AdjacentPair(x, xp, i, strategy)


# ---- Hanson-Wright ----


@dataclass(frozen=True)
class HansonWrightReport:
    violation_rate: float
    confidence_interval: tuple
    trials: int
    lower: float
    upper: float
    passed: bool


def hanson_wright_bounds(dmatrix, beta: float) -> tuple[float, float]:
    D = np.asarray(dmatrix, dtype=float)
    norms = matrix_norms(D)
    L = math.log(2 / beta)
    tr = float(np.trace(D))
    return tr - 2 * norms.frobenius * math.sqrt(L), tr + 2 * norms.frobenius * math.sqrt(L) + 2 * norms.spectral * L


def hanson_wright_check(dmatrix, beta: float, trials: int, rng=None) -> HansonWrightReport:
    """Fraction of u ~ N(0, I) with u^T D u outside the two-sided bound; passes unless
    the violation rate is significantly above beta."""
    rng = rngmod.make_rng(rng)
    D = np.asarray(dmatrix, dtype=float)
    lo, hi = hanson_wright_bounds(D, beta)
    u = rngmod.standard_normal(rng, (trials, D.shape[0]))
    quad = np.einsum("ti,ij,tj->t", u, D, u)
    viol = int(np.count_nonzero((quad < lo) | (quad > hi)))
    ci = clopper_pearson(viol, trials)
    return HansonWrightReport(viol / trials, ci, trials, lo, hi, bool(ci[0] <= beta))
