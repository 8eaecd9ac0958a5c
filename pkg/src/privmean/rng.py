"""Seedable random sources and the noise samplers built on them.

All randomness flows through ``numpy.random.Generator`` objects.  Laplace
noise uses the inverse CDF of one uniform draw per sample and normal noise
uses Box-Muller on pairs of uniforms, so the number of uniforms consumed
per call is fixed and replays are exact.

Per-trial streams are derived from a master seed with a counter split::

    stream(master_seed, i) = PCG64(SeedSequence([master_seed, i]))

so any single trial can be replayed in isolation.
"""
from __future__ import annotations

import numpy as np

STREAM_DERIVATION = "PCG64(SeedSequence([master_seed, trial_index]))"


def make_rng(seed=None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def trial_stream(master_seed: int, trial_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(master_seed), int(trial_index)])
    return np.random.Generator(np.random.PCG64(ss))


def _open_uniform(rng, size):
    # uniforms on the open interval (0, 1)
    u = rng.random(size)
    return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


def laplace(rng: np.random.Generator, scale: float, size=None):
    """Laplace(0, scale) by inversion: L = -b sgn(u - 1/2) log(1 - 2|u - 1/2|)."""
    u = _open_uniform(rng, size) - 0.5
    out = -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return float(out) if size is None else out


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Box-Muller on the given generator; consumes 2*ceil(N/2) uniforms."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    total = int(np.prod(shape)) if shape else 1
    half = (total + 1) // 2
    u1 = _open_uniform(rng, half)
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:total]
    return z.reshape(shape)


def gumbel(rng: np.random.Generator, size) -> np.ndarray:
    return -np.log(-np.log(_open_uniform(rng, size)))
