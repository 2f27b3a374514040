"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop for loop.
Bit convention: qubit 0 is the most significant bit of the outcome index.
"""

import numpy as np


def zz_signs(L, pairs):
    """Return an (n_pairs, K) array of sigma^z sigma^z eigenvalues (+1/-1)."""
    K = 1 << L
    idx = np.arange(K)
    out = np.empty((len(pairs), K), dtype=np.float64)
    for p, (a, b) in enumerate(pairs):
        ba = (idx >> (L - 1 - a)) & 1
        bb = (idx >> (L - 1 - b)) & 1
        out[p] = 1.0 - 2.0 * (ba ^ bb)
    return out


def _apply_rx(psi, L, q, half_angle):
    # psi: (B, K); rotate qubit q by exp(-i * 2*half_angle * X / 2)
    B = psi.shape[0]
    view = psi.reshape(B, 1 << q, 2, 1 << (L - 1 - q))
    c = np.cos(half_angle)
    s = -1j * np.sin(half_angle)
    a0 = view[:, :, 0, :].copy()
    a1 = view[:, :, 1, :]
    view[:, :, 0, :] = c * a0 + s * a1
    view[:, :, 1, :] = s * a0 + c * a1


def _apply_rz(psi, L, q, angles):
    # angles: (B,) per-row rotation angle phi; Rz(phi) = diag(e^{-i phi/2}, e^{i phi/2})
    B = psi.shape[0]
    view = psi.reshape(B, 1 << q, 2, 1 << (L - 1 - q))
    ph = np.exp(-0.5j * angles)[:, None, None]
    view[:, :, 0, :] *= ph
    view[:, :, 1, :] *= np.conj(ph)


def circuit_states(theta_x, theta_z, theta_i, zz_phase, tau, us, init=None):
    """Evolve a batch of states through ``tau`` circuit blocks.

    ``zz_phase`` is the length-K diagonal of the coupling layer W(J). Each row
    of the result is U(u_n)|init_n>, with |0...0> when ``init`` is None.
    """
    L = len(theta_x)
    K = 1 << L
    us = np.asarray(us, dtype=np.float64)
    B = us.shape[0]
    if init is None:
        psi = np.zeros((B, K), dtype=np.complex128)
        psi[:, 0] = 1.0
    else:
        psi = np.array(init, dtype=np.complex128, copy=True).reshape(B, K)
    zang = theta_z[None, :] + np.outer(us, theta_i)
    for _ in range(tau):
        for q in range(L):
            _apply_rx(psi, L, q, theta_x[q] / 4.0)
        for q in range(L):
            _apply_rz(psi, L, q, zang[:, q])
        psi *= zz_phase[None, :]
        for q in range(L):
            _apply_rx(psi, L, q, theta_x[q] / 4.0)
    return psi


def circuit_probabilities(theta_x, theta_z, theta_i, zz_phase, tau, us):
    psi = circuit_states(theta_x, theta_z, theta_i, zz_phase, tau, us)
    return psi.real ** 2 + psi.imag ** 2


def fwht(x):
    """Unnormalized Walsh-Hadamard transform along the last axis (copy)."""
    a = np.array(x, dtype=np.float64, copy=True)
    K = a.shape[-1]
    lead = a.shape[:-1]
    h = 1
    while h < K:
        v = a.reshape(lead + (K // (2 * h), 2, h))
        top = v[..., 0, :].copy()
        bot = v[..., 1, :]
        v[..., 0, :] = top + bot
        v[..., 1, :] = top - bot
        h *= 2
    return a
