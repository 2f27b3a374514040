"""Finite-shot features drawn from exact outcome probabilities.

Randomness comes from Philox generators keyed on ``(seed, stream, row)``; row
``n`` of a sampled feature matrix always uses the same substream, whatever
the evaluation order. numpy's multinomial sampler draws by sequential
binomial conditioning, which is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import simcore

ROW_STREAM = 0x5A4D


@dataclass(frozen=True)
class ShotRecord:
    """Outcome counts for one input."""

    u: float
    counts: Mapping[int, int]
    S: int
    K: int | None = None

    def __post_init__(self):
        counts = {int(k): int(v) for k, v in self.counts.items() if int(v) != 0}
        if any(v < 0 for v in counts.values()):
            raise ValueError("counts must be nonnegative")
        if sum(counts.values()) != int(self.S):
            raise ValueError(f"counts sum to {sum(counts.values())}, expected S={self.S}")
        if any(k < 0 for k in counts):
            raise ValueError("outcome indices must be nonnegative")
        if self.K is not None and any(k >= self.K for k in counts):
            raise ValueError(f"outcome index >= K={self.K}")
        object.__setattr__(self, "counts", dict(sorted(counts.items())))
        object.__setattr__(self, "S", int(self.S))
        object.__setattr__(self, "u", float(self.u))

    def features(self, K: int | None = None) -> np.ndarray:
        K = K or self.K
        if K is None:
            raise ValueError("number of outcomes K unknown")
        x = np.zeros(K)
        for k, c in self.counts.items():
            x[k] = c
        return x / self.S


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """N x K features over an input grid.

    ``shots`` is None for expected (S = infinity) features.
    """

    inputs: np.ndarray
    values: np.ndarray
    shots: int | None = None
    spec_hash: str = ""

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != inputs.shape[0]:
            raise ValueError(f"values shape {values.shape} does not match {inputs.shape[0]} inputs")
        inputs.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "values", values)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    @property
    def is_expected(self) -> bool:
        return self.shots is None

    @property
    def S(self) -> float:
        return float("inf") if self.shots is None else float(self.shots)

    def with_values(self, values) -> "FeatureMatrix":
        return FeatureMatrix(self.inputs, values, self.shots, self.spec_hash)


def row_rng(seed: int, row: int, stream: int = ROW_STREAM) -> np.random.Generator:
    return simcore.spec_rng(seed, stream, row)


def _check_probs(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or (x < -1e-12).any() or abs(x.sum() - 1.0) > 1e-9:
        raise ValueError("x must be a probability vector")
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def draw_counts(x, S: int, rng: np.random.Generator) -> np.ndarray:
    return rng.multinomial(int(S), _check_probs(x))


def sample_shots(x, S: int, seed: int, u: float = 0.0) -> ShotRecord:
    """One multinomial draw of ``S`` shots from probabilities ``x``."""
    if int(S) < 1:
        raise ValueError("S must be >= 1")
    x = _check_probs(x)
    counts = draw_counts(x, S, simcore.spec_rng(seed, ROW_STREAM))
    return ShotRecord(u=u, counts={k: c for k, c in enumerate(counts) if c}, S=S, K=len(x))


def covariance(x) -> np.ndarray:
    """Per-shot covariance diag(x) - x x^T."""
    x = np.asarray(x, dtype=np.float64)
    return np.diag(x) - np.outer(x, x)


def input_grid(N: int, kind: str = "grid", seed: int = 0) -> np.ndarray:
    """N inputs on [-1, 1]: equispaced (``grid``) or i.i.d. uniform (``iid``)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if kind == "grid":
        return np.linspace(-1.0, 1.0, N)
    if kind == "iid":
        return simcore.spec_rng(seed, 0x1D).uniform(-1.0, 1.0, N)
    raise ValueError(f"unknown grid kind {kind!r}")


def sample_counts(probs: np.ndarray, S: int, seed: int) -> np.ndarray:
    """Integer counts, one row-keyed multinomial draw per row of ``probs``."""
    probs = np.asarray(probs, dtype=np.float64)
    out = np.empty(probs.shape, dtype=np.int64)
    for n in range(probs.shape[0]):
        out[n] = draw_counts(probs[n], S, row_rng(seed, n))
    return out


def feature_matrix(spec: simcore.EncodingSpec, inputs: Sequence[float],
                   shots: int | None = None, seed: int = 0) -> FeatureMatrix:
    """Feature matrix for ``spec`` over ``inputs``; ``shots=None`` gives expected features."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.size == 0:
        raise ValueError("inputs must be nonempty")
    probs = simcore.probabilities(spec, inputs)
    if shots is None:
        return FeatureMatrix(inputs, probs, None, spec.spec_hash())
    return sample_features(probs, inputs, shots, seed, spec.spec_hash())


def sample_features(probs, inputs, shots: int, seed: int, spec_hash: str = "") -> FeatureMatrix:
    if int(shots) < 1:
        raise ValueError("shots must be >= 1")
    counts = sample_counts(probs, shots, seed)
    return FeatureMatrix(inputs, counts / int(shots), int(shots), spec_hash)


def shot_records(F: FeatureMatrix) -> list[ShotRecord]:
    """Recover integer counts from a sampled feature matrix."""
    if F.is_expected:
        raise ValueError("expected features carry no shot counts")
    counts = np.rint(F.values * F.shots).astype(np.int64)
    return [ShotRecord(u=u, counts={k: int(c) for k, c in enumerate(row) if c}, S=F.shots, K=F.K)
            for u, row in zip(F.inputs, counts)]


def from_shot_records(records: Sequence[ShotRecord], K: int | None = None,
                      spec_hash: str = "") -> FeatureMatrix:
    if not records:
        raise ValueError("no records")
    S = {r.S for r in records}
    if len(S) != 1:
        raise ValueError(f"records mix shot counts {sorted(S)}")
    if K is None:
        Ks = {r.K for r in records if r.K is not None}
        if len(Ks) > 1:
            raise ValueError(f"records disagree on K: {sorted(Ks)}")
        K = Ks.pop() if Ks else _next_pow2(1 + max(max(r.counts, default=0) for r in records))
    values = np.array([r.features(K) for r in records])
    return FeatureMatrix([r.u for r in records], values, S.pop(), spec_hash)


def _next_pow2(n: int) -> int:
    K = 1
    while K < n:
        K <<= 1
    return max(K, 2)
