"""Richardson equations for the quantum pairing model and an exact-diagonalization oracle.

Quantum conventions (seniority-zero sector, pair levels ``l = 0..n-1``):

* ``t^3_l = n_l - 1/2`` with ``n_l`` the pair occupation.
* ``H_P = sum_l 2 eps_l t^3_l - g sum_{l,l'} t^+_l t^-_{l'}``.
* Richardson equations ``1/g = sum_{p != k} 2/(e_k - e_p) + sum_l 1/(2 eps_l - e_k)``.
* A converged root set gives the eigenvalue ``sum_k e_k - sum_l eps_l`` of ``H_P``.

The solver does not continue the pair energies directly.  It continues the
variables ``x_l = g sum_k 1/(2 eps_l - e_k)``, which satisfy the quadratic system
``x_l^2 - x_l - g sum_{l' != l} (x_l - x_l') / (z_l - z_l') = 0`` (``z = 2 eps``)
and stay regular where pair energies collide with each other or with ``z_l``.
The pair energies are then the roots of the monic polynomial ``p`` with
``g p'(z_l) = x_l p(z_l)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Optional, Sequence

import numpy as np

from .model import EnergySpectrum
from .polyroots import polynomial_roots

MAX_SECTOR_DIM = 5000


class ContinuationStall(RuntimeError):
    def __init__(self, g_last: float, reason: str):
        super().__init__(f"continuation stalled after g={g_last!r}: {reason}")
        self.g_last = g_last


class RichardsonError(RuntimeError):
    pass


@dataclass
class RichardsonSolution:
    pair_energies: np.ndarray
    residual: float
    g_path: list
    spectrum: EnergySpectrum
    occupation: tuple
    x: np.ndarray = field(repr=False, default=None)

    @property
    def total_energy(self) -> complex:
        return complex(np.sum(self.pair_energies))

    @property
    def eigenvalue(self) -> float:
        """Eigenvalue of ``H_P`` with ``t^3 = +-1/2`` (vacuum offset applied)."""
        return float(self.total_energy.real - np.sum(self.spectrum.eps))


class SenioritySector:
    """Dense matrices of the pairing operators on all ``N``-pair configurations."""

    def __init__(self, spec: EnergySpectrum):
        n, N = spec.n, spec.N
        dim = comb(n, N)
        if dim > MAX_SECTOR_DIM:
            raise RichardsonError(f"sector dimension {dim} exceeds guard {MAX_SECTOR_DIM}")
        self.spec = spec
        self.basis = [tuple(c) for c in itertools.combinations(range(n), N)]
        self.index = {b: i for i, b in enumerate(self.basis)}
        self.dim = dim
        occ = np.zeros((dim, n))
        for i, b in enumerate(self.basis):
            occ[i, list(b)] = 1.0
        self.occ = occ
        self.t3 = [np.diag(occ[:, l] - 0.5) for l in range(n)]
        # hop[l][m]: moves the pair at level m to the empty level l
        self.hop = [[None] * n for _ in range(n)]
        for l in range(n):
            for m in range(n):
                mat = np.zeros((dim, dim))
                if l == m:
                    mat = np.diag(occ[:, l])
                else:
                    for i, b in enumerate(self.basis):
                        if m in b and l not in b:
                            nb = tuple(sorted(set(b) - {m} | {l}))
                            mat[self.index[nb], i] = 1.0
                self.hop[l][m] = mat
        eps, g = spec.eps, spec.g
        self.H = sum(2 * eps[l] * self.t3[l] for l in range(n)) - g * sum(
            self.hop[l][m] for l in range(n) for m in range(n))
        self.R = []
        for l in range(n):
            r = self.t3[l].copy()
            for m in range(n):
                if m != l:
                    dot = self.t3[l] @ self.t3[m] + 0.5 * (self.hop[l][m] + self.hop[m][l])
                    r = r - g * dot / (eps[l] - eps[m])
            self.R.append(r)
        self.T3 = sum(self.t3)
        self.T3_squared = self.T3 @ self.T3


def exact_diagonalize(spec: EnergySpectrum, sector: Optional[SenioritySector] = None):
    """Sorted eigenvalues and orthonormal eigenvectors of ``H_P`` in the ``N``-pair sector."""
    sector = sector or SenioritySector(spec)
    w, v = np.linalg.eigh(sector.H)
    return w, v


def verify_decomposition(sector: SenioritySector, spec: EnergySpectrum) -> float:
    """Max-abs residual of ``H_P = 2 sum eps_l R_l + g[(T3)^2 - T3 - n(d^2-1)/4]``, d = 2."""
    eps, g, n = spec.eps, spec.g, spec.n
    rhs = sum(2 * eps[l] * sector.R[l] for l in range(n))
    rhs = rhs + g * (sector.T3_squared - sector.T3 - 0.25 * n * 3 * np.eye(sector.dim))
    return float(np.max(np.abs(sector.H - rhs))) if sector.dim else 0.0


def commutator_norms(sector: SenioritySector) -> dict:
    def c(a, b):
        return float(np.linalg.norm(a @ b - b @ a, 2)) if sector.dim else 0.0
    n = len(sector.R)
    return {
        "H_R": [c(sector.H, r) for r in sector.R],
        "R_R": [c(sector.R[i], sector.R[j]) for i in range(n) for j in range(i + 1, n)],
    }


# --- continuation in the x variables -------------------------------------------------

def _x_system(x, g, z):
    dz = z[:, None] - z[None, :]
    np.fill_diagonal(dz, 1.0)
    inv = 1.0 / dz
    np.fill_diagonal(inv, 0.0)
    dx = x[:, None] - x[None, :]
    coup = (dx * inv).sum(axis=1)
    F = x * x - x - g * coup
    J = g * inv
    np.fill_diagonal(J, 2 * x - 1 - g * inv.sum(axis=1))
    Fg = -coup
    return F, J, Fg


def _newton(x, g, z, tol=1e-14, max_iter=12):
    # Near half filling with strong coupling all x_l approach 1/2 and J becomes
    # ill-conditioned, so the steps stall at rounding level while F is already
    # at machine precision; either test ends the iteration.
    for _ in range(max_iter):
        F, J, _ = _x_system(x, g, z)
        if np.max(np.abs(F)) <= 4 * np.finfo(float).eps * (1 + np.max(np.abs(x))) ** 2:
            return x, True
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return x, False
        x = x + step
        if np.max(np.abs(step)) <= tol * (1 + np.max(np.abs(x))):
            return x, True
    return x, False


def _continue_x(occ_vec, g_target, z, min_step=1e-12):
    x = occ_vec.astype(float)
    g = 0.0
    path = [0.0]
    dg = g_target / 16.0
    while g != g_target:
        if abs(dg) > abs(g_target - g):
            dg = g_target - g
        _, J, Fg = _x_system(x, g, z)
        try:
            tangent = np.linalg.solve(J, -Fg)
        except np.linalg.LinAlgError:
            raise ContinuationStall(g, "singular Jacobian")
        pred = x + dg * tangent
        xn, ok = _newton(pred, g + dg, z)
        if ok and np.max(np.abs(xn - pred)) <= 0.05 * (1 + np.max(np.abs(x))):
            g = g + dg if abs(g_target - g - dg) > 1e-15 * abs(g_target) else g_target
            x = xn
            path.append(g)
            dg *= 1.5
        else:
            dg *= 0.5
            if abs(dg) < min_step * max(abs(g_target), 1.0):
                raise ContinuationStall(g, "step size collapsed (damped Newton did not converge)")
    return x, path


def _pair_polynomial(x, g, z, N):
    """Monic coefficients of ``p(z) = prod (z - e_k)`` from ``g p'(z_l) = x_l p(z_l)``."""
    if N == 0:
        return np.array([1.0]), 0.0, 1.0
    center = z.mean()
    scale = max(np.ptp(z) / 2, 1e-300) if len(z) > 1 else 1.0
    w = (z - center) / scale
    gt = g / scale
    # unknowns: c_0..c_{N-1} of p~(w) = w^N + sum c_j w^j
    A = np.empty((len(z), N))
    for j in range(N):
        dterm = j * w ** (j - 1) if j > 0 else np.zeros_like(w)
        A[:, j] = gt * dterm - x * w ** j
    b = -(gt * N * w ** (N - 1) - x * w ** N)
    rows = 1.0 / np.maximum(1.0, np.abs(x))
    c, *_ = np.linalg.lstsq(A * rows[:, None], b * rows, rcond=None)
    coeffs = np.concatenate(([1.0], c[::-1]))
    return coeffs, center, scale


def richardson_residuals(e, spec: EnergySpectrum) -> np.ndarray:
    """Per-root residual in cleared form.

    The raw residual ``1 - g sum 2/(e_k - e_p) - g sum 1/(z_l - e_k)`` is
    multiplied by ``min(1, |e_k - q| / s)`` for every pole ``q`` of the k-th
    equation, which removes the spurious poles without changing the residual
    away from them.
    """
    z = 2 * spec.eps
    g = spec.g
    e = np.asarray(e, dtype=complex)
    s = max(1.0, np.ptp(z))
    out = np.empty(len(e))
    for k in range(len(e)):
        others = np.delete(e, k)
        raw = 1 - g * np.sum(2 / (e[k] - others)) - g * np.sum(1 / (z - e[k]))
        damp = np.prod(np.minimum(1.0, np.abs(e[k] - np.concatenate((others, z))) / s))
        out[k] = abs(raw) * damp
    return out


def _polish(e, spec: EnergySpectrum, iters=4):
    z = 2 * spec.eps
    g = spec.g
    e = np.array(e, dtype=complex)
    best = np.max(richardson_residuals(e, spec)) if len(e) else 0.0
    for _ in range(iters):
        N = len(e)
        F = np.empty(N, complex)
        J = np.zeros((N, N), complex)
        for k in range(N):
            others = np.delete(e, k)
            F[k] = 1 / g - np.sum(2 / (e[k] - e[np.arange(N) != k])) - np.sum(1 / (z - e[k]))
            for p in range(N):
                if p != k:
                    J[k, p] = -2 / (e[k] - e[p]) ** 2
            J[k, k] = np.sum(2 / (e[k] - others) ** 2) - np.sum(1 / (z - e[k]) ** 2)
        try:
            cand = e - np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            break
        r = np.max(richardson_residuals(cand, spec))
        if not np.isfinite(r) or r >= best:
            break
        e, best = cand, r
    return e


def solve_richardson(spec: EnergySpectrum, start_occupation: Optional[Sequence[int]] = None,
                     tol: float = 1e-10) -> RichardsonSolution:
    """Pair energies continued from ``e_k = 2 eps_{l_k}`` at ``g = 0``.

    ``start_occupation`` lists the ``N`` occupied levels at zero coupling
    (default: the lowest ``N``).
    """
    n, N = spec.n, spec.N
    if start_occupation is None:
        start_occupation = tuple(range(N))
    occ = tuple(sorted(int(l) for l in start_occupation))
    if len(occ) != N or len(set(occ)) != N or any(l < 0 or l >= n for l in occ):
        raise RichardsonError(f"start_occupation must be {N} distinct levels in [0, {n})")
    z = 2 * spec.eps
    occ_vec = np.zeros(n)
    occ_vec[list(occ)] = 1.0
    if N == 0:
        return RichardsonSolution(np.zeros(0, complex), 0.0, [0.0, spec.g], spec, occ, occ_vec)
    x, path = _continue_x(occ_vec, spec.g, z)
    coeffs, center, scale = _pair_polynomial(x, spec.g, z, N)
    e = center + scale * polynomial_roots(coeffs)
    e = _polish(e, spec)
    res = float(np.max(richardson_residuals(e, spec)))
    if not np.isfinite(res) or res >= tol:
        raise RichardsonError(f"residual {res:.3e} above tolerance {tol:.1e} at g={spec.g!r}")
    order = np.lexsort((e.imag, e.real))
    return RichardsonSolution(e[order], res, path, spec, occ, x)


def _permanent(m: np.ndarray) -> complex:
    """Ryser's formula."""
    n = m.shape[0]
    if n == 0:
        return 1.0
    total = 0.0
    for subset in range(1, 1 << n):
        cols = [j for j in range(n) if subset >> j & 1]
        rows = m[:, cols].sum(axis=1)
        total += (-1) ** len(cols) * np.prod(rows)
    return (-1) ** n * total


def build_richardson_state(sol: RichardsonSolution, sector: SenioritySector) -> np.ndarray:
    """Components of ``prod_k b_k^dagger |0>`` in the sector basis."""
    z = 2 * sol.spectrum.eps
    e = sol.pair_energies
    gap = np.abs(z[None, :] - e[:, None]) if len(e) else np.ones(1)
    if np.min(gap) < 1e-13 * max(1.0, np.max(np.abs(z))):
        raise RichardsonError("a pair energy coincides with 2*eps_l; b_k^dagger is singular")
    psi = np.empty(sector.dim, dtype=complex)
    for i, b in enumerate(sector.basis):
        C = 1.0 / (z[list(b)][None, :] - e[:, None])
        psi[i] = _permanent(C)
    if not np.any(psi):
        raise RichardsonError("Richardson state vanishes identically")
    return psi


def eigen_residual(sector: SenioritySector, psi: np.ndarray, energy: float) -> float:
    return float(np.linalg.norm(sector.H @ psi - energy * psi) / np.linalg.norm(psi))
