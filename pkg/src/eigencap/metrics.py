"""Correlation measures, eigentask cutoff and the 2-design reference."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import simcore
from .spectral import MomentMatrices


@dataclass(frozen=True, eq=False)
class CorrelationReport:
    etc: float
    L: int
    per_input: np.ndarray | None = None


def _entropy_bits(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def bit_marginals(x) -> np.ndarray:
    """P(b_l = 1) for each qubit, shape (..., L)."""
    x = np.asarray(x, dtype=float)
    K = x.shape[-1]
    L = K.bit_length() - 1
    lead = x.shape[:-1]
    out = np.empty(lead + (L,))
    for l in range(L):
        v = x.reshape(lead + (1 << l, 2, K >> (l + 1)))
        out[..., l] = v[..., 1, :].sum(axis=(-2, -1))
    return out


def total_correlation(x) -> float | np.ndarray:
    """sum_l H(b_l) - H(b_1..b_L) in bits; vectorized over leading axes."""
    x = np.asarray(x, dtype=float)
    K = x.shape[-1]
    if K < 2 or K & (K - 1):
        raise ValueError(f"length {K} is not a power of two >= 2")
    p1 = np.clip(bit_marginals(x), 0.0, 1.0)
    marg = _entropy_bits(np.stack([p1, 1.0 - p1], axis=-1)).sum(axis=-1)
    T = np.maximum(marg - _entropy_bits(x), 0.0)
    return float(T) if T.ndim == 0 else T


def expected_total_correlation(spec: simcore.EncodingSpec, inputs) -> CorrelationReport:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.size == 0:
        raise ValueError("inputs must be nonempty")
    if spec.L == 1:
        per = np.zeros(inputs.size)
    else:
        per = total_correlation(simcore.probabilities(spec, inputs))
    return CorrelationReport(etc=float(np.mean(per)), L=spec.L, per_input=np.atleast_1d(per))


def kc_cutoff(beta2, S: float) -> int:
    """Number of eigentasks whose NSR eigenvalue is below S."""
    return int(np.count_nonzero(np.asarray(beta2, dtype=float) < S))


def two_design_moments(K: int) -> MomentMatrices:
    """Haar-averaged Gram and second-moment matrices for K outcomes."""
    if K < 2:
        raise ValueError("K must be >= 2")
    G = (np.ones((K, K)) + np.eye(K)) / (K * (K + 1))
    return MomentMatrices(G=G, d=np.full(K, 1.0 / K), N=0, S=math.inf)


def two_design_reference(K: int, S: float):
    """Analytic 2-design spectrum (0, K, ..., K) and C_T = K (S + 1) / (S + K)."""
    if K < 2:
        raise ValueError("K must be >= 2")
    if S < 1:
        raise ValueError("S must be >= 1")
    beta2 = np.full(K, float(K))
    beta2[0] = 0.0
    CT = float(K) if math.isinf(S) else K * (S + 1.0) / (S + K)
    return beta2, CT


MOMENT_STREAM = 0x303E


@dataclass(frozen=True, eq=False)
class MomentNSR:
    """Empirical relative noise of Walsh-moment estimates at one input.

    ``per_mask[B]`` is the std over repeats of m_hat_B / m_B - 1; ``median[m]``
    is its median over masks with m qubits (index 0 is the trivial mask).
    """

    per_mask: np.ndarray
    median: np.ndarray
    moments: np.ndarray
    S: int
    repeats: int


def moment_nsr(spec: simcore.EncodingSpec, u: float, S: int, repeats: int,
               seed: int = 0) -> MomentNSR:
    from .sampling import sample_counts

    if repeats < 2:
        raise ValueError("need at least two repeats")
    x = simcore.probabilities(spec, [u])[0]
    m = simcore.probability_to_moments(x)
    draws = sample_counts(np.tile(x, (repeats, 1)), S,
                          seed=int(np.random.SeedSequence([seed, MOMENT_STREAM]).generate_state(1)[0]))
    m_hat = simcore.probability_to_moments(draws / S)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = m_hat / m - 1.0
    per = np.std(rel, axis=0, ddof=1)
    # an exactly vanishing moment has no relative error to speak of
    per[m == 0] = np.inf
    per[0] = 0.0
    orders = simcore.moment_orders(len(x))
    med = np.array([np.median(per[orders == k]) for k in range(spec.L + 1)])
    return MomentNSR(per_mask=per, median=med, moments=m, S=int(S), repeats=int(repeats))
