"""Expressive capacity of finitely sampled quantum feature maps."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .simcore import EncodingSpec, probabilities, random_encoding
from .sampling import FeatureMatrix, ShotRecord, feature_matrix, sample_features
from .spectral import (SpectralResult, correct_finite_shots, eigentasks, estimate_moments,
                       expressive_capacity, function_capacity, solve_nsr, solve_nsr_gram_free)
from .metrics import expected_total_correlation, kc_cutoff, total_correlation, two_design_reference

__all__ = [
    "BACKEND", "EncodingSpec", "FeatureMatrix", "ShotRecord", "SpectralResult",
    "correct_finite_shots", "eigentasks", "estimate_moments", "expected_total_correlation",
    "expressive_capacity", "feature_matrix", "function_capacity", "kc_cutoff", "probabilities",
    "random_encoding", "sample_features", "solve_nsr", "solve_nsr_gram_free", "total_correlation",
    "two_design_reference",
]
