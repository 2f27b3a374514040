"""Noise-to-signal spectra, eigentasks and capacities.

All routines work in the probability representation: features are outcome
frequencies, so the second-moment matrix D is diagonal with D_kk = E_u[x_k]
and the per-shot covariance averages to V = D - G. The generalized problem
V r = beta^2 G r is solved through the symmetric matrix D^{-1/2} G D^{-1/2},
whose eigenvalues are alpha = 1 / (1 + beta^2).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .sampling import FeatureMatrix

log = logging.getLogger(__name__)

# alpha at or below this (relative to alpha_max = 1) is a null direction: beta^2 = inf
ALPHA_TOL = 1e-12
PINV_RTOL = 1e-10
DEGENERACY_TOL = 1e-9


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MomentMatrices:
    G: np.ndarray
    d: np.ndarray  # diagonal of D
    N: int
    S: float = math.inf
    spec_hash: str = ""

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.d)

    @property
    def V(self) -> np.ndarray:
        return np.diag(self.d) - self.G

    @property
    def K(self) -> int:
        return len(self.d)


@dataclass(frozen=True, eq=False)
class SpectralResult:
    """Sorted NSR spectrum with G-orthonormal combination vectors.

    ``r[:, k]`` belongs to ``beta2[k]``. Pruned features and null directions
    carry ``beta2 = inf``. After :func:`correct_finite_shots`, ``beta2_raw``
    keeps the uncorrected values.
    """

    beta2: np.ndarray
    r: np.ndarray
    alpha: np.ndarray
    corrected: bool = False
    uncorrectable: tuple[int, ...] = ()
    pruned: tuple[int, ...] = ()
    beta2_raw: np.ndarray | None = None
    N: int = 0
    S: float = math.inf
    spec_hash: str = ""

    @property
    def K(self) -> int:
        return len(self.beta2)


@dataclass(frozen=True, eq=False)
class EigentaskSet:
    Y: np.ndarray
    inputs: np.ndarray | None = None


def estimate_moments(F: FeatureMatrix) -> MomentMatrices:
    if F.N < 2:
        raise ValueError("need at least two inputs")
    X = F.values
    G = X.T @ X / F.N
    G = 0.5 * (G + G.T)
    d = X.mean(axis=0)
    return MomentMatrices(G=G, d=d, N=F.N, S=F.S, spec_hash=F.spec_hash)


def prune_mask(d: np.ndarray, N: int, S: float) -> np.ndarray:
    """Features kept for inversion of D.

    With finite S a feature observed at least once has d >= 1/(N S); half that
    separates "never observed" from rounding. Expected features are dropped
    only when identically zero.
    """
    if math.isfinite(S):
        thresh = 0.5 / (N * S)
    else:
        thresh = 0.0
    return d > thresh


def _sign_fix(r: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(r), axis=0)
    s = np.sign(r[idx, np.arange(r.shape[1])])
    s[s == 0] = 1.0
    return r * s


def _order(beta2: np.ndarray, r: np.ndarray) -> np.ndarray:
    order = list(np.argsort(beta2, kind="stable"))
    out = []
    i = 0
    while i < len(order):
        j = i + 1
        b0 = beta2[order[i]]
        while j < len(order):
            b = beta2[order[j]]
            if math.isinf(b0) and math.isinf(b):
                j += 1
                continue
            if abs(b - b0) <= DEGENERACY_TOL * max(1.0, abs(b0)):
                j += 1
                continue
            break
        group = order[i:j]
        if len(group) > 1:
            group.sort(key=lambda c: tuple(np.round(r[:, c], 9)))
        out.extend(group)
        i = j
    return np.array(out, dtype=int)


def _assemble(alpha_kept, T, keep, d, N, S, spec_hash) -> SpectralResult:
    K = len(d)
    kept = np.flatnonzero(keep)
    dm = 1.0 / np.sqrt(d[kept])
    alpha_kept = np.clip(alpha_kept, 0.0, 1.0)
    null = alpha_kept <= ALPHA_TOL
    r_kept = dm[:, None] * T
    scale = np.where(null, 1.0, 1.0 / np.sqrt(np.where(null, 1.0, alpha_kept)))
    r_kept = r_kept * scale[None, :]
    with np.errstate(divide="ignore"):
        beta2_kept = np.where(null, np.inf, 1.0 / np.where(null, 1.0, alpha_kept) - 1.0)
    beta2_kept = np.maximum(beta2_kept, 0.0)

    n_pr = K - len(kept)
    r = np.zeros((K, K))
    r[kept, : len(kept)] = r_kept
    pruned = np.flatnonzero(~keep)
    for j, k in enumerate(pruned):
        r[k, len(kept) + j] = 1.0
    beta2 = np.concatenate([beta2_kept, np.full(n_pr, np.inf)])
    alpha = np.concatenate([np.where(null, 0.0, alpha_kept), np.zeros(n_pr)])

    r = _sign_fix(r)
    order = _order(beta2, r)
    return SpectralResult(beta2=beta2[order], r=r[:, order], alpha=alpha[order],
                          pruned=tuple(int(k) for k in pruned), N=N, S=S, spec_hash=spec_hash)


def solve_nsr(M: MomentMatrices) -> SpectralResult:
    """NSR eigenvalues and G-orthonormal eigenvectors from moment matrices."""
    keep = prune_mask(M.d, M.N, M.S)
    if not keep.any():
        raise SpectralError("every feature was pruned")
    kept = np.flatnonzero(keep)
    dk = M.d[kept]
    if (dk <= 0).any():
        raise SpectralError("nonpositive second moment survived pruning")
    dm = 1.0 / np.sqrt(dk)
    A = dm[:, None] * M.G[np.ix_(kept, kept)] * dm[None, :]
    A = 0.5 * (A + A.T)
    w, T = scipy.linalg.eigh(A)
    return _assemble(w[::-1], T[:, ::-1], keep, M.d, M.N, M.S, M.spec_hash)


def solve_nsr_gram_free(F: FeatureMatrix) -> SpectralResult:
    """Same result as ``solve_nsr(estimate_moments(F))`` via an SVD of D^{-1/2} F^T / sqrt(N)."""
    if F.N < 2:
        raise ValueError("need at least two inputs")
    d = F.values.mean(axis=0)
    keep = prune_mask(d, F.N, F.S)
    if not keep.any():
        raise SpectralError("every feature was pruned")
    kept = np.flatnonzero(keep)
    dm = 1.0 / np.sqrt(d[kept])
    A = dm[:, None] * F.values[:, kept].T / math.sqrt(F.N)
    Kk = len(kept)
    U, s, _ = scipy.linalg.svd(A, full_matrices=F.N < Kk, lapack_driver="gesvd")
    alpha = np.zeros(Kk)
    alpha[: len(s)] = s ** 2
    return _assemble(alpha, U[:, :Kk], keep, d, F.N, F.S, F.spec_hash)


def correct_finite_shots(result: SpectralResult, S: float | None = None) -> SpectralResult:
    """Map raw finite-S eigenvalues to their infinite-shot estimates.

    beta2 = S b / ((S - 1) - b) for raw b < S - 1. The rest are flagged
    uncorrectable and set to inf so that they drop out of the capacity.
    Eigenvectors are unchanged.
    """
    S = result.S if S is None else float(S)
    if not math.isfinite(S):
        raise ValueError("correction needs a finite shot count")
    raw = np.asarray(result.beta2, dtype=float)
    ok = raw < (S - 1.0)
    out = np.full_like(raw, np.inf)
    out[ok] = S * raw[ok] / ((S - 1.0) - raw[ok])
    bad = tuple(int(k) for k in np.flatnonzero(~ok))
    return replace(result, beta2=out, corrected=True, uncorrectable=bad, beta2_raw=raw, S=S)


def expressive_capacity(beta2, S: float, exclude=()) -> float:
    """C_T = sum_k 1 / (1 + beta2_k / S); infinite or excluded entries give 0."""
    b = np.asarray(beta2, dtype=float)
    if (b < 0).any() or np.isnan(b).any():
        raise ValueError("beta2 must be nonnegative")
    terms = np.zeros_like(b)
    fin = np.isfinite(b)
    if math.isinf(S):
        terms[fin] = 1.0
    else:
        if S <= 0:
            raise ValueError("S must be positive")
        terms[fin] = 1.0 / (1.0 + b[fin] / S)
    if len(exclude):
        terms[list(exclude)] = 0.0
    return float(terms.sum())


def capacity_curve(beta2, shots) -> np.ndarray:
    return np.array([expressive_capacity(beta2, S) for S in shots])


def eigentasks(result: SpectralResult, F: FeatureMatrix) -> EigentaskSet:
    """Eigentask values Y = F R on the rows of ``F``."""
    if F.K != result.r.shape[0]:
        raise ValueError(f"feature count {F.K} does not match r dimension {result.r.shape[0]}")
    return EigentaskSet(Y=F.values @ result.r, inputs=F.inputs)


def _pinv_sym(A: np.ndarray) -> np.ndarray:
    return np.linalg.pinv(A, rcond=PINV_RTOL, hermitian=True)


def function_capacity(F: FeatureMatrix, target, S: float | None = None):
    """Optimal linear readout capacity for ``target`` and its weights.

    Expected features use G + V/S (the exact noisy-readout normal equations);
    sampled features already contain the noise, so their empirical Gram is
    used directly. Returns ``(C, w)`` with C clamped to [0, 1].
    """
    f = np.asarray(target, dtype=float).reshape(-1)
    if f.shape[0] != F.N:
        raise ValueError("target length does not match feature rows")
    f2 = float(f @ f) / F.N
    if f2 <= 0:
        raise ValueError("target is identically zero")
    M = estimate_moments(F)
    if F.is_expected:
        S = math.inf if S is None else float(S)
        A = M.G if math.isinf(S) else M.G + M.V / S
    else:
        A = M.G
    b = F.values.T @ f / F.N
    w = _pinv_sym(A) @ b
    err = f2 - 2.0 * float(w @ b) + float(w @ A @ w)
    raw = 1.0 - err / f2
    C = min(1.0, max(0.0, raw))
    if C != raw:
        log.info("function capacity clamped from %.3e", raw)
    return C, w
