"""Input-parameterized quantum states for the circuit and Hamiltonian ansatze.

Outcome index convention: the binary expansion of ``k`` lists qubit 0 first,
i.e. qubit 0 is the most significant bit. Only |amplitude|^2 is exposed, so
global phases never matter.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from . import kernels

CIRCUIT = "circuit"
HAMILTONIAN = "hamiltonian"
ANSATZE = (CIRCUIT, HAMILTONIAN)


class EncodingError(ValueError):
    """Invalid encoding parameters or inputs."""


def line_connectivity(L: int) -> tuple[tuple[int, int], ...]:
    return tuple((l, l + 1) for l in range(L - 1))


def ring_connectivity(L: int) -> tuple[tuple[int, int], ...]:
    if L < 3:
        return line_connectivity(L)
    return line_connectivity(L) + ((L - 1, 0),)


def _tuple(v) -> tuple[float, ...]:
    return tuple(float(a) for a in v)


@dataclass(frozen=True)
class EncodingSpec:
    """Complete description of a parameterized feature generator.

    Circuit fields (``tau``, ``J``, ``theta_*``) are ignored by the Hamiltonian
    ansatz and vice versa (``t``, ``J_couplings``, ``h*``).
    """

    ansatz: str
    L: int
    seed: int = 0
    connectivity: tuple[tuple[int, int], ...] = ()
    # circuit ansatz
    tau: int = 3
    J: float = 0.0
    theta_x: tuple[float, ...] = ()
    theta_z: tuple[float, ...] = ()
    theta_I: tuple[float, ...] = ()
    # hamiltonian ansatz
    t: float = 0.0
    J_couplings: tuple[float, ...] = ()
    hx: tuple[float, ...] = ()
    hz: tuple[float, ...] = ()
    hI: tuple[float, ...] = ()

    def __post_init__(self):
        if self.ansatz not in ANSATZE:
            raise EncodingError(f"unknown ansatz {self.ansatz!r}; expected one of {ANSATZE}")
        if int(self.L) < 1:
            raise EncodingError(f"L must be >= 1, got {self.L}")
        L = int(self.L)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "seed", int(self.seed))
        conn = tuple((int(a), int(b)) for a, b in self.connectivity)
        seen = set()
        for a, b in conn:
            if a == b or not (0 <= a < L and 0 <= b < L):
                raise EncodingError(f"invalid connectivity pair ({a}, {b}) for L={L}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise EncodingError(f"duplicate connectivity pair ({a}, {b})")
            seen.add(key)
        object.__setattr__(self, "connectivity", conn)

        if self.ansatz == CIRCUIT:
            names = ("theta_x", "theta_z", "theta_I")
            if int(self.tau) < 1:
                raise EncodingError(f"tau must be >= 1, got {self.tau}")
            object.__setattr__(self, "tau", int(self.tau))
            object.__setattr__(self, "J", float(self.J))
        else:
            names = ("hx", "hz", "hI")
            if float(self.t) < 0:
                raise EncodingError(f"t must be >= 0, got {self.t}")
            object.__setattr__(self, "t", float(self.t))
            jc = _tuple(self.J_couplings)
            if len(jc) != len(conn):
                raise EncodingError(
                    f"J_couplings has {len(jc)} entries for {len(conn)} connectivity pairs")
            object.__setattr__(self, "J_couplings", jc)
        for name in names:
            v = _tuple(getattr(self, name))
            if len(v) != L:
                raise EncodingError(f"{name} must have length L={L}, got {len(v)}")
            if not all(math.isfinite(a) for a in v):
                raise EncodingError(f"{name} contains non-finite values")
            object.__setattr__(self, name, v)

    @property
    def K(self) -> int:
        return 1 << self.L

    def to_dict(self) -> dict:
        d = asdict(self)
        d["connectivity"] = [list(p) for p in self.connectivity]
        ignore = ("t", "J_couplings", "hx", "hz", "hI") if self.ansatz == CIRCUIT else (
            "tau", "J", "theta_x", "theta_z", "theta_I")
        for k in ignore:
            d.pop(k)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise EncodingError(f"unknown encoding fields: {sorted(unknown)}")
        if "ansatz" not in d or "L" not in d:
            raise EncodingError("encoding requires 'ansatz' and 'L'")
        kw = dict(d)
        if "connectivity" not in kw:
            kw["connectivity"] = default_connectivity(kw["ansatz"], int(kw["L"]))
        return cls(**kw)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def spec_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def with_coupling(self, J: float) -> "EncodingSpec":
        """Same encoding with every coupling set to ``J``."""
        if self.ansatz == CIRCUIT:
            return replace(self, J=float(J))
        return replace(self, J_couplings=tuple(float(J) for _ in self.connectivity))


def default_connectivity(ansatz: str, L: int):
    return line_connectivity(L) if ansatz == CIRCUIT else ring_connectivity(L)


def spec_rng(seed: int, *extra: int) -> np.random.Generator:
    """Counter-based generator keyed on ``(seed, *extra)``."""
    ss = np.random.SeedSequence([int(seed) & ((1 << 64) - 1), *[int(e) for e in extra]])
    return np.random.Generator(np.random.Philox(ss))


def random_encoding(
    ansatz: str,
    L: int,
    J_or_couplings: float | Sequence[float] = 0.0,
    seed: int = 0,
    *,
    tau: int = 3,
    t: float = 5.0,
    rms: Sequence[float] = (20.0, 5.0, 5.0),
    mean: Sequence[float] = (0.0, 0.0, 0.0),
    J_max: float | None = None,
    connectivity=None,
) -> EncodingSpec:
    """Draw a random encoding.

    Circuit: theta_x, theta_z ~ Unif[0, 2pi], theta_I ~ Unif[0, 10pi].
    Hamiltonian: (hx, hz, hI) = mean + rms * N(0, 1) per qubit; couplings are
    the given scalar on every edge, an explicit per-edge list, or
    Unif[0, J_max] when ``J_max`` is set.
    """
    if ansatz not in ANSATZE:
        raise EncodingError(f"unknown ansatz {ansatz!r}")
    if L < 1:
        raise EncodingError(f"L must be >= 1, got {L}")
    conn = default_connectivity(ansatz, L) if connectivity is None else tuple(
        tuple(p) for p in connectivity)
    rng = spec_rng(seed, L, ANSATZE.index(ansatz))
    if ansatz == CIRCUIT:
        tx = rng.uniform(0.0, 2 * np.pi, L)
        tz = rng.uniform(0.0, 2 * np.pi, L)
        ti = rng.uniform(0.0, 10 * np.pi, L)
        return EncodingSpec(ansatz=CIRCUIT, L=L, seed=seed, connectivity=conn, tau=tau,
                            J=float(J_or_couplings), theta_x=tx, theta_z=tz, theta_I=ti)
    mx, mz, mi = (float(a) for a in mean)
    rx, rz, ri = (float(a) for a in rms)
    hx = mx + rx * rng.standard_normal(L)
    hz = mz + rz * rng.standard_normal(L)
    hI = mi + ri * rng.standard_normal(L)
    if J_max is not None:
        jc = rng.uniform(0.0, float(J_max), len(conn))
    elif np.ndim(J_or_couplings) == 0:
        jc = np.full(len(conn), float(J_or_couplings))
    else:
        jc = np.asarray(J_or_couplings, dtype=float)
    return EncodingSpec(ansatz=HAMILTONIAN, L=L, seed=seed, connectivity=conn, t=t,
                        J_couplings=jc, hx=hx, hz=hz, hI=hI)


def _check_inputs(us) -> np.ndarray:
    us = np.atleast_1d(np.asarray(us, dtype=np.float64))
    if us.ndim != 1:
        raise EncodingError("inputs must be a scalar or 1-D sequence")
    bad = ~((us >= -1.0) & (us <= 1.0))
    if bad.any():
        raise EncodingError(f"inputs must lie in [-1, 1]; got {us[bad][0]!r}")
    return us


def _circuit_args(spec: EncodingSpec):
    signs = kernels.zz_signs(spec.L, spec.connectivity)
    total = signs.sum(axis=0) if len(spec.connectivity) else np.zeros(spec.K)
    zz_phase = np.exp(-0.5j * spec.J * total)
    return (np.asarray(spec.theta_x), np.asarray(spec.theta_z), np.asarray(spec.theta_I),
            np.ascontiguousarray(zz_phase), spec.tau)


def hamiltonian_terms(spec: EncodingSpec) -> tuple[np.ndarray, np.ndarray]:
    """Dense H0 (K x K) and the diagonal of H1, as in H(u) = H0 + u H1."""
    L, K = spec.L, spec.K
    idx = np.arange(K)
    zs = np.array([1.0 - 2.0 * ((idx >> (L - 1 - l)) & 1) for l in range(L)])  # (L, K)
    diag0 = np.zeros(K)
    for Jc, (a, b) in zip(spec.J_couplings, spec.connectivity):
        diag0 += Jc * zs[a] * zs[b]
    diag0 += np.asarray(spec.hz) @ zs
    H0 = np.diag(diag0).astype(np.complex128)
    for l in range(L):
        flip = idx ^ (1 << (L - 1 - l))
        H0[flip, idx] += spec.hx[l]
    h1 = np.asarray(spec.hI) @ zs
    if np.abs(H0 - H0.conj().T).max() >= 1e-10:
        raise EncodingError("assembled Hamiltonian is not Hermitian")
    return H0, h1


def _hamiltonian_states(spec: EncodingSpec, us: np.ndarray) -> np.ndarray:
    H0, h1 = hamiltonian_terms(spec)
    out = np.empty((len(us), spec.K), dtype=np.complex128)
    for n, u in enumerate(us):
        H = H0 + np.diag(u * h1)
        w, V = scipy.linalg.eigh(H)
        out[n] = V @ (np.exp(-1j * w * spec.t) * V[0].conj())
    return out


def states(spec: EncodingSpec, us) -> np.ndarray:
    """State vectors U(u)|0...0>, one row per input."""
    us = _check_inputs(us)
    if spec.ansatz == CIRCUIT:
        return kernels.circuit_states(*_circuit_args(spec), us)
    return _hamiltonian_states(spec, us)


def _normalize(p: np.ndarray) -> np.ndarray:
    # rounding can leave entries at -1e-17 or sums at 1 +- 1e-15
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=-1, keepdims=True)


def probabilities(spec: EncodingSpec, us) -> np.ndarray:
    """Outcome probabilities x_k(u) for every input, shape (N, K)."""
    us = _check_inputs(us)
    if spec.ansatz == CIRCUIT:
        p = kernels.circuit_probabilities(*_circuit_args(spec), us)
    else:
        psi = _hamiltonian_states(spec, us)
        p = psi.real ** 2 + psi.imag ** 2
    return _normalize(p)


def probabilities_circuit(spec: EncodingSpec, u: float) -> np.ndarray:
    if spec.ansatz != CIRCUIT:
        raise EncodingError("spec is not a circuit encoding")
    return probabilities(spec, [u])[0]


def probabilities_hamiltonian(spec: EncodingSpec, u: float) -> np.ndarray:
    if spec.ansatz != HAMILTONIAN:
        raise EncodingError("spec is not a Hamiltonian encoding")
    return probabilities(spec, [u])[0]


def evolution_operator(spec: EncodingSpec, u: float) -> np.ndarray:
    """Dense K x K evolution operator U(u)."""
    u = float(_check_inputs([u])[0])
    K = spec.K
    if spec.ansatz == CIRCUIT:
        cols = kernels.circuit_states(*_circuit_args(spec), np.full(K, u),
                                      init=np.eye(K, dtype=np.complex128))
        return cols.T
    H0, h1 = hamiltonian_terms(spec)
    w, V = scipy.linalg.eigh(H0 + np.diag(u * h1))
    return (V * np.exp(-1j * w * spec.t)) @ V.conj().T


def probability_to_moments(x) -> np.ndarray:
    """Pauli-z product expectations m_B = sum_k (-1)^{popcount(k & B)} x_k.

    Works on a single vector or along the last axis of a matrix. Dividing the
    transform of the moments by K recovers ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    K = x.shape[-1]
    if K & (K - 1) or K == 0:
        raise EncodingError(f"length {K} is not a power of two")
    return kernels.fwht(x)


def moment_orders(K: int) -> np.ndarray:
    """Number of qubits in each subset mask 0..K-1."""
    return np.array([bin(b).count("1") for b in range(K)])
