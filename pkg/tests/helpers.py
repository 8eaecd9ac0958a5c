"""Constructions shared by several test modules."""
import numpy as np

from privmean import rng as rngmod
from privmean.rescaled import goodness_check


def random_cov(rng, d, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w = np.exp(rng.uniform(0, np.log(cond), size=d))
    return (q * w) @ q.T


def good_dataset(n, d, lam, rng, tries=50):
    """3n Gaussian points (random covariance and mean) that pass goodness at lam."""
    for _ in range(tries):
        cov = random_cov(rng, d)
        mu = rng.uniform(-5, 5, size=d)
        x = mu + rngmod.standard_normal(rng, (3 * n, d)) @ np.linalg.cholesky(cov).T
        if goodness_check(x, lam).good:
            return x, mu, cov
    raise RuntimeError("could not draw a good dataset")


def good_pair(n, d, k, lam, rng, adversarial=False, tries=200):
    """(x, y) both lambda-good with y differing from x in at most k positions.

    Adversarial pairs push the replaced points out to ~0.9 sqrt(lam) in x's
    empirical Mahalanobis metric, along a common random direction.
    """
    from privmean.rescaled import empirical_mean_cov

    x, mu, cov = good_dataset(n, d, lam, rng)
    m, s = empirical_mean_cov(x)
    for _ in range(tries):
        y = x.copy()
        idx = rng.choice(3 * n, size=k, replace=False)
        if adversarial:
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            y[idx] = m + 0.9 * np.sqrt(lam) * (s.root @ v) * rng.choice([-1.0, 1.0], size=(k, 1))
        else:
            y[idx] = mu + rngmod.standard_normal(rng, (k, d)) @ np.linalg.cholesky(cov).T
        if goodness_check(y, lam).good:
            return x, y
    raise RuntimeError("could not build a good neighbour")
