"""Simultaneous polynomial root finding (Aberth-Ehrlich) with a companion fallback."""
from __future__ import annotations

from typing import Optional

import numpy as np


class RootFindingError(RuntimeError):
    pass


def _initial_guesses(c: np.ndarray) -> np.ndarray:
    d = len(c) - 1
    # Fujiwara-type bound on root moduli
    mags = [abs(c[k] / c[0]) ** (1.0 / k) for k in range(1, d + 1) if c[k] != 0]
    radius = 2.0 * max(mags) if mags else 1.0
    center = -c[1] / (d * c[0])
    ang = 2 * np.pi * np.arange(d) / d + 0.4
    return center + 0.5 * radius * np.exp(1j * ang)


def aberth(coeffs, x0: Optional[np.ndarray] = None, tol: float = 1e-15, max_iter: int = 500):
    """Roots of ``coeffs`` (highest degree first) by Aberth-Ehrlich iteration.

    Returns ``(roots, converged)``.  ``x0`` may supply starting values, which
    is how the sweep module continues roots along a path.
    """
    c = np.asarray(coeffs, dtype=complex)
    c = np.trim_zeros(c, "f")
    d = len(c) - 1
    if d < 1:
        return np.zeros(0, complex), True
    dc = np.polyder(c)
    x = _initial_guesses(c) if x0 is None else np.array(x0, dtype=complex)
    converged = np.zeros(d, bool)
    for _ in range(max_iter):
        p = np.polyval(c, x)
        dp = np.polyval(dc, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = p / dp
            diff = x[:, None] - x[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            w = ratio / (1.0 - ratio * inv.sum(axis=1))
        w = np.where(converged | ~np.isfinite(w), 0.0, w)
        x = x - w
        converged |= np.abs(w) <= tol * np.maximum(np.abs(x), 1.0)
        if converged.all():
            return x, True
    return x, False


def newton_polish(coeffs, roots, iters: int = 3) -> np.ndarray:
    c = np.asarray(coeffs, dtype=complex)
    dc = np.polyder(c)
    x = np.array(roots, dtype=complex)
    for _ in range(iters):
        dp = np.polyval(dc, x)
        ok = dp != 0
        step = np.zeros_like(x)
        step[ok] = np.polyval(c, x[ok]) / dp[ok]
        x_new = x - step
        # keep a step only if it does not increase the residual
        better = np.abs(np.polyval(c, x_new)) <= np.abs(np.polyval(c, x))
        x = np.where(better, x_new, x)
    return x


def polynomial_roots(coeffs, x0: Optional[np.ndarray] = None) -> np.ndarray:
    """All roots of a polynomial; Aberth first, then the companion matrix."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "f")
    if len(c) <= 1:
        return np.zeros(0, complex)
    x, ok = aberth(c, x0)
    if not ok or not np.all(np.isfinite(x)):
        x = np.roots(c).astype(complex)
        if not np.all(np.isfinite(x)):
            raise RootFindingError("polynomial root finding failed")
    return newton_polish(c, x)
