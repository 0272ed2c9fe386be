"""Pfaffians and the Pfaffian ground-state / two-hole amplitudes.

Amplitudes are defined up to single-particle factors and are returned both
directly and as ``(log|psi|, phase)`` so that large particle numbers do not
overflow.
"""
from __future__ import annotations

import numpy as np


class PfaffianError(ValueError):
    pass


def _as_skew(A) -> np.ndarray:
    A = np.array(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise PfaffianError("matrix must be square")
    if A.shape[0] % 2:
        raise PfaffianError("Pfaffian needs an even dimension")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A + A.T), initial=0.0) > 1e-12 * scale:
        raise PfaffianError("matrix is not skew-symmetric")
    return A


def skew_from_upper(upper, dim: int) -> np.ndarray:
    """Skew matrix from its strictly upper triangle given row by row."""
    if dim % 2:
        raise PfaffianError("Pfaffian needs an even dimension")
    A = np.zeros((dim, dim), dtype=complex)
    iu = np.triu_indices(dim, 1)
    A[iu] = np.asarray(upper, dtype=complex)
    return A - A.T


def log_pfaffian(A) -> tuple[float, complex]:
    """``(log|Pf A|, phase)`` by Parlett-Reid elimination with pivoting.

    ``phase`` is a unit complex number; for a singular matrix ``(-inf, 0)``.
    """
    A = _as_skew(A)
    n = A.shape[0]
    logabs, phase = 0.0, 1.0 + 0j
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(A[k + 1:, k])))
        if kp != k + 1:
            A[[k + 1, kp], :] = A[[kp, k + 1], :]
            A[:, [k + 1, kp]] = A[:, [kp, k + 1]]
            phase = -phase
        piv = A[k, k + 1]
        if piv == 0:
            return -np.inf, 0j
        logabs += np.log(abs(piv))
        phase *= piv / abs(piv)
        if k + 2 < n:
            tau = A[k, k + 2:] / piv
            col = A[k + 2:, k + 1].copy()
            A[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return float(logabs), phase


def pfaffian(A) -> complex:
    logabs, phase = log_pfaffian(A)
    if phase == 0:
        return 0j
    return complex(phase * np.exp(logabs))


def _check_points(z, name="positions"):
    z = np.asarray(z, dtype=complex).ravel()
    if len(z) % 2:
        raise PfaffianError(f"need an even number of {name}")
    if len(z) > 1:
        d = np.abs(z[:, None] - z[None, :])[~np.eye(len(z), dtype=bool)]
        if np.min(d) == 0:
            raise PfaffianError(f"coincident {name}")
    return z


def _log_jastrow(z) -> tuple[float, complex]:
    i, j = np.triu_indices(len(z), 1)
    d = (z[i] - z[j]) ** 2
    return float(np.sum(np.log(np.abs(d)))), complex(np.prod(d / np.abs(d)))


def _kernel(z) -> np.ndarray:
    d = z[:, None] - z[None, :]
    np.fill_diagonal(d, 1.0)
    K = 1.0 / d
    np.fill_diagonal(K, 0.0)
    return K


def ground_state_log_amplitude(z) -> tuple[float, complex]:
    """``(log|psi|, phase)`` of ``Pf[1/(z_i - z_j)] prod_{k<l} (z_k - z_l)^2``."""
    z = _check_points(z)
    lp, ph = log_pfaffian(_kernel(z))
    lj, pj = _log_jastrow(z)
    return lp + lj, ph * pj


def ground_state_amplitude(z) -> complex:
    la, ph = ground_state_log_amplitude(z)
    return complex(ph * np.exp(la)) if ph != 0 else 0j


def two_hole_log_amplitude(z1, z2, z) -> tuple[float, complex]:
    """``(log|psi|, phase)`` of ``Pf[(z1-z2)/(z1 z2 (z_i-z_j))] prod_{k<l} (z_k-z_l)^2``.

    The Jastrow product runs over the particle positions ``z``.
    """
    z1, z2 = complex(z1), complex(z2)
    if z1 == 0 or z2 == 0:
        raise PfaffianError("hole at the origin")
    z = _check_points(z)
    if np.any(z == z1) or np.any(z == z2):
        raise PfaffianError("hole coincides with a particle")
    if z1 == z2:
        return -np.inf, 0j
    c = (z1 - z2) / (z1 * z2)
    lp, ph = log_pfaffian(c * _kernel(z))
    if ph == 0:
        return -np.inf, 0j
    lj, pj = _log_jastrow(z)
    return lp + lj, ph * pj


def two_hole_amplitude(z1, z2, z) -> complex:
    la, ph = two_hole_log_amplitude(z1, z2, z)
    return complex(ph * np.exp(la)) if ph != 0 else 0j


__all__ = ["PfaffianError", "pfaffian", "log_pfaffian", "skew_from_upper",
           "ground_state_amplitude", "ground_state_log_amplitude",
           "two_hole_amplitude", "two_hole_log_amplitude"]
