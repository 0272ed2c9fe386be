"""Riemann theta function with an error-controlled truncated lattice sum.

``theta(z | B) = sum_n exp(2 pi i (n.z + n.B.n / 2))``.  Writing ``Y = Im B`` and
``c = -Y^{-1} Im z`` the sum is evaluated as

    exp(pi y.Y^{-1}.y) * sum_n exp(2 pi i n.x + pi i n.X.n - pi (n-c).Y.(n-c))

over the integer points of an ellipsoid centred at ``c``.  The radius comes
from the uniform tail bound of Deconinck, Heil, Bobenko, van Hoeij and
Schmies (Math. Comp. 2004), so the error of the oscillatory sum is below
``tol`` for every ``z``.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.special import gamma, gammaincc


class ThetaError(ValueError):
    pass


def _shortest_vector(L: np.ndarray) -> float:
    """Length of the shortest nonzero vector of the lattice with basis columns ``L``."""
    g = L.shape[1]
    # LLL is overkill at this size; enumerate a box large enough to contain it
    col = np.min(np.linalg.norm(L, axis=0))
    sv = np.linalg.svd(L, compute_uv=False)
    bound = int(np.ceil(col / sv[-1]))
    best = col
    rng = range(-bound, bound + 1)
    for v in itertools.product(rng, repeat=g):
        if any(v):
            best = min(best, float(np.linalg.norm(L @ np.array(v))))
    return best


def _tail_bound(R: float, rho: float, g: int) -> float:
    x = (R - rho / 2) ** 2
    return g / 2 * (2 / rho) ** g * gammaincc(g / 2, x) * gamma(g / 2)


class ThetaContext:
    """Precomputed truncation geometry for a fixed period matrix."""

    def __init__(self, B, tol: float = 1e-14):
        B = np.atleast_2d(np.asarray(B, dtype=complex))
        if B.shape[0] != B.shape[1]:
            raise ThetaError("period matrix must be square")
        if np.max(np.abs(B - B.T)) > 1e-8 * max(1.0, np.max(np.abs(B))):
            raise ThetaError("period matrix is not symmetric")
        B = 0.5 * (B + B.T)
        Y = B.imag
        try:
            T = np.linalg.cholesky(Y).T  # Y = T^t T
        except np.linalg.LinAlgError:
            raise ThetaError("Im B is not positive definite") from None
        if tol <= 0:
            raise ThetaError("tol must be positive")
        self.B, self.X, self.Y, self.T, self.tol = B, B.real, Y, T, float(tol)
        self.Yinv = np.linalg.inv(Y)
        g = B.shape[0]
        self.genus = g
        L = np.sqrt(np.pi) * T
        rho = _shortest_vector(L)
        R = max((np.sqrt(g) + rho) / 2, rho / 2 + 1.0)
        while _tail_bound(R, rho, g) >= tol:
            R *= 1.05
        self.radius = R
        self.rho = rho
        # integer points within R of some shift in the unit cube around the centre
        reach = R + np.linalg.norm(L, 2) * np.sqrt(g) / 2
        box = int(np.ceil(reach / np.sqrt(np.pi * np.linalg.eigvalsh(Y)[0])))
        pts = np.array(list(itertools.product(range(-box, box + 1), repeat=g)), dtype=float)
        keep = np.linalg.norm(pts @ L.T, axis=1) < reach
        self.points = pts[keep]

    def _terms(self, z):
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        c = -self.Yinv @ y
        n = np.round(c) + self.points
        d = n - c
        phase = 2j * np.pi * (n @ x) + 1j * np.pi * np.einsum("ki,ij,kj->k", n, self.X, n)
        gauss = -np.pi * np.einsum("ki,ij,kj->k", d, self.Y, d)
        return n, np.exp(phase + gauss), float(np.pi * y @ self.Yinv @ y)

    def oscillatory(self, z) -> tuple[complex, float]:
        """``(S, e)`` with ``theta(z) = exp(e) * S``; ``|S|`` is O(1)."""
        _, w, e = self._terms(z)
        return complex(w.sum()), e


def theta(z, ctx: ThetaContext) -> complex:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if z.shape != (ctx.genus,):
        raise ThetaError(f"z must have {ctx.genus} components")
    s, e = ctx.oscillatory(z)
    return complex(np.exp(e) * s)


def theta_normalized(z, ctx: ThetaContext) -> complex:
    """``theta(z) * exp(-pi y.Y^{-1}.y)``: bounded, used for vanishing tests."""
    s, _ = ctx.oscillatory(np.atleast_1d(np.asarray(z, dtype=complex)))
    return s


def theta_gradient(z, ctx: ThetaContext):
    """``(theta, d theta / dz)`` both scaled by ``exp(-pi y.Y^{-1}.y)``."""
    n, w, _ = ctx._terms(np.atleast_1d(np.asarray(z, dtype=complex)))
    return complex(w.sum()), 2j * np.pi * (n.T @ w)
