"""Differentially private mean estimation with unknown covariance."""
from .errors import PrivMeanError
from .linalg import PsdMatrix, mahalanobis, matrix_norms, spectral_sandwich
from .outcome import Outcome
from .primitives import CompositionLedger, PrivacyBudget
from .rescaled import discrete_rescaled_pipeline, rescaled_gaussian_mechanism
from .tukey import GridSpec, discrete_tukey_pipeline, tukey_depth, tukey_ptr

__all__ = [
    "PrivMeanError", "PsdMatrix", "mahalanobis", "matrix_norms", "spectral_sandwich", "Outcome",
    "CompositionLedger", "PrivacyBudget", "discrete_rescaled_pipeline", "rescaled_gaussian_mechanism",
    "GridSpec", "discrete_tukey_pipeline", "tukey_depth", "tukey_ptr",
]
