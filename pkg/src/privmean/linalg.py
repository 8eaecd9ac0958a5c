"""Small dense linear algebra: Mahalanobis geometry, norms, PSD roots.

Eigendecompositions go through ``numpy.linalg.eigh`` (LAPACK tridiagonal
reduction followed by an implicit QL/QR sweep), which is plenty for the
d <= 64 matrices every estimator here works with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BadShape, InvalidParameter, SingularMatrix


@dataclass(frozen=True)
class Tolerances:
    symmetry: float = 1e-10
    psd: float = 1e-10
    invertible: float = 1e-12
    sandwich: float = 1e-9
    root_reconstruction: float = 1e-9
    whitening: float = 1e-8


TOL = Tolerances()


@dataclass(frozen=True)
class MatrixNorms:
    trace_norm: float
    frobenius: float
    spectral: float


@dataclass(frozen=True, eq=False)
class PsdMatrix:
    """Symmetric positive-semidefinite matrix with cached factorizations.

    Construction symmetrizes the input and checks the spectrum against the
    relative tolerances in ``TOL``. Use ``invertible`` before asking for
    anything that needs the inverse.
    """

    entries: np.ndarray
    tol: Tolerances = field(default=TOL, repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise BadShape(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidParameter("matrix has non-finite entries")
        scale = max(np.abs(a).max(initial=0.0), np.finfo(float).tiny)
        if np.abs(a - a.T).max(initial=0.0) > self.tol.symmetry * scale:
            raise InvalidParameter("matrix is not symmetric")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        w = self.eigenvalues
        if w[0] < -self.tol.psd * max(w[-1], 0.0) - np.finfo(float).tiny:
            raise InvalidParameter(f"matrix is not PSD (min eigenvalue {w[0]:.3g})")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def _eigh(self):
        w, v = np.linalg.eigh(self.entries)
        return w, v

    @property
    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues."""
        return self._eigh[0]

    @property
    def invertible(self) -> bool:
        w = self.eigenvalues
        return bool(w[-1] > 0 and w[0] > self.tol.invertible * w[-1])

    def require_invertible(self):
        if not self.invertible:
            raise SingularMatrix("matrix is singular relative to its largest eigenvalue")

    @cached_property
    def root(self) -> np.ndarray:
        w, v = self._eigh
        return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T

    @cached_property
    def inv_root(self) -> np.ndarray:
        self.require_invertible()
        w, v = self._eigh
        return (v / np.sqrt(w)) @ v.T

    @cached_property
    def inverse(self) -> np.ndarray:
        self.require_invertible()
        w, v = self._eigh
        return (v / w) @ v.T

    @cached_property
    def logdet(self) -> float:
        self.require_invertible()
        return float(np.sum(np.log(self.eigenvalues)))

    def kth_largest_eigenvalue(self, k: int) -> float:
        if not 1 <= k <= self.dim:
            raise InvalidParameter(f"k={k} outside [1, {self.dim}]")
        return float(self.eigenvalues[-k])


def as_psd(sigma) -> PsdMatrix:
    return sigma if isinstance(sigma, PsdMatrix) else PsdMatrix(np.asarray(sigma, dtype=float))


def mahalanobis(v, sigma) -> float:
    """sqrt(v^T sigma^{-1} v)."""
    s = as_psd(sigma)
    s.require_invertible()
    v = np.asarray(v, dtype=float).reshape(s.dim)
    return float(np.linalg.norm(s.inv_root @ v))


def mahalanobis_rows(points, center, sigma) -> np.ndarray:
    """Squared Mahalanobis distance of every row of ``points`` from ``center``."""
    s = as_psd(sigma)
    z = (np.asarray(points, dtype=float) - center) @ s.inv_root
    return np.einsum("ij,ij->i", z, z)


def matrix_norms(a) -> MatrixNorms:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidParameter("matrix has non-finite entries")
    sv = np.linalg.svd(a, compute_uv=False)
    return MatrixNorms(
        trace_norm=float(sv.sum()),
        frobenius=math.hypot(*sv),  # no underflow for tiny singular values
        spectral=float(sv.max(initial=0.0)),
    )


def whitened(sigma1, sigma2) -> np.ndarray:
    """sigma1^{-1/2} sigma2 sigma1^{-1/2}, symmetrized."""
    s1, s2 = as_psd(sigma1), as_psd(sigma2)
    m = s1.inv_root @ s2.entries @ s1.inv_root
    return 0.5 * (m + m.T)


def spectral_sandwich(sigma1, sigma2, gamma: float, tol: float = TOL.sandwich) -> bool:
    """True iff (1-gamma) sigma1 <= sigma2 <= (1+gamma) sigma1 in Loewner order."""
    if not 0.0 < gamma < 1.0:
        raise InvalidParameter("gamma must lie in (0, 1)")
    s1, s2 = as_psd(sigma1), as_psd(sigma2)
    s1.require_invertible()
    s2.require_invertible()
    w = np.linalg.eigvalsh(whitened(s1, s2))
    return bool(w[0] >= 1 - gamma - tol and w[-1] <= 1 + gamma + tol)


def psd_factor(sigma):
    """Return (sigma^{1/2}, sigma^{-1/2}); the inverse root needs invertibility."""
    s = as_psd(sigma)
    return s.root, s.inv_root
