"""Lax matrix, spectral curve ``y^2 = Q(lambda)``, cuts, homology basis and periods.

Lax matrix entries (``A = -2/g``)::

    a(l) = A + sum_i S3_i / (l - eps_i)
    b(l) = sum_i S-_i / (l - eps_i)
    c(l) = sum_i S+_i / (l - eps_i)

and ``Q = (a^2 + b c) (g P / 2)^2`` with ``P = prod (l - eps_i)``.  ``Q`` is
monic of degree ``2n`` and nonnegative on the real axis for real spins.

Branch points are put in *chain order*: sorted by real part, ties broken by
imaginary part.  Consecutive chain points ``p_0 p_1, p_2 p_3, ...`` are the
cuts and ``p_1 p_2, p_3 p_4, ...`` the gaps.  The sheet ``y_+`` is the product
of one factor per cut, each with its branch cut on that segment and
``~ lambda`` at infinity, so ``y_+ ~ lambda^n`` at infinity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .model import ClassicalSpinState, EnergySpectrum, ModelError
from .polyroots import polynomial_roots


class CurveError(RuntimeError):
    pass


class CoalescenceBoundary(CurveError):
    """Branch points on (or too close to) the real axis, or colliding."""


# --- Lax matrix and Q ------------------------------------------------------------

class LaxMatrix:
    """Rational 2x2 Lax matrix.  ``g`` may be complex (used by parameter sweeps)."""

    def __init__(self, spins, epsilons, g):
        self.spins = np.asarray(spins, dtype=float)
        self.eps = np.asarray(epsilons, dtype=float)
        self.g = g
        self.const = -2.0 / g
        self.s3 = self.spins[:, 2]
        self.sm = self.spins[:, 0] + 1j * self.spins[:, 1]
        self.sp = self.spins[:, 0] - 1j * self.spins[:, 1]

    def a(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return self.const + np.sum(self.s3[:, None] / (lam.ravel()[None, :] - self.eps[:, None]), 0).reshape(lam.shape)

    def b(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return np.sum(self.sm[:, None] / (lam.ravel()[None, :] - self.eps[:, None]), 0).reshape(lam.shape)

    def c(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return np.sum(self.sp[:, None] / (lam.ravel()[None, :] - self.eps[:, None]), 0).reshape(lam.shape)

    def __call__(self, lam) -> np.ndarray:
        a, b, c = self.a(lam), self.b(lam), self.c(lam)
        return np.array([[a, b], [c, -a]])

    # polynomial numerators (coefficients highest first)
    def _partial_products(self):
        n = len(self.eps)
        return [np.poly(np.delete(self.eps, i)) if n > 1 else np.array([1.0]) for i in range(n)]

    def numerators(self):
        """``(gPa/2, gPb/2, gPc/2)`` as polynomial coefficient arrays."""
        P = np.poly(self.eps)
        Pi = self._partial_products()
        half_g = self.g / 2
        pa = -P.astype(complex)
        pa[1:] += half_g * sum(s * p for s, p in zip(self.s3, Pi))
        pb = half_g * sum(s * p for s, p in zip(self.sm, Pi))
        pc = half_g * sum(s * p for s, p in zip(self.sp, Pi))
        return pa, np.atleast_1d(pb), np.atleast_1d(pc)


def q_coefficients(spins, epsilons, g) -> np.ndarray:
    """Coefficients of ``Q`` (highest degree first, length ``2n+1``)."""
    lax = LaxMatrix(spins, epsilons, g)
    pa, pb, pc = lax.numerators()
    q = np.polymul(pa, pa)
    bc = np.polymul(pb, pc)
    q[len(q) - len(bc):] += bc
    return q


# --- chain ordering and the sheet function ----------------------------------------

def chain_order(points, tie_tol: float = 1e-9) -> np.ndarray:
    """Indices sorting ``points`` by real part, ties (within ``tie_tol`` * scale) by imaginary part."""
    pts = np.asarray(points, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(pts)))) if len(pts) else 1.0
    idx = sorted(range(len(pts)), key=lambda i: pts[i].real)
    # group near-equal real parts, then order each group by imaginary part
    out, group = [], []
    for i in idx:
        if group and abs(pts[i].real - pts[group[0]].real) > tie_tol * scale:
            out += sorted(group, key=lambda k: pts[k].imag)
            group = []
        group.append(i)
    out += sorted(group, key=lambda k: pts[k].imag)
    return np.array(out, dtype=int)


def _cut_factor(lam, a, b, da=None, db=None):
    """``w sqrt((l-a)(l-b)/w^2)`` with ``w = l - (a+b)/2``: branch cut on [a, b], ~ l at infinity.

    ``da = l - a`` and ``db = l - b`` may be passed in when they are known
    more accurately than the subtraction would give (quadrature near an endpoint).
    """
    da = lam - a if da is None else da
    db = lam - b if db is None else db
    w = 0.5 * (da + db)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = w * np.sqrt(da * db / (w * w))
    # at the midpoint itself (on the cut) take the limit from the right side
    bad = ~np.isfinite(r)
    if np.any(bad):
        m = 0.5 * (a + b)
        r = np.where(bad, np.sqrt((m - a) * (m - b) + 0j), r)
    return r


@lru_cache(maxsize=None)
def _legendre(nodes: int):
    return np.polynomial.legendre.leggauss(nodes)


@dataclass
class HyperellipticCurve:
    q_coeffs: np.ndarray
    branch_points: np.ndarray  # chain order
    real: bool = True

    def __post_init__(self):
        self.q_coeffs = np.asarray(self.q_coeffs, dtype=complex)
        self.branch_points = np.asarray(self.branch_points, dtype=complex)
        self.n = (len(self.q_coeffs) - 1) // 2
        self.dq_coeffs = np.polyder(self.q_coeffs)
        self.scale = max(1.0, float(np.max(np.abs(self.branch_points)))) if self.n else 1.0

    @property
    def genus(self) -> int:
        return self.n - 1

    @property
    def cuts(self) -> list:
        p = self.branch_points
        return [(p[2 * j], p[2 * j + 1]) for j in range(self.n)]

    @property
    def gaps(self) -> list:
        p = self.branch_points
        return [(p[2 * j + 1], p[2 * j + 2]) for j in range(self.n - 1)]

    def Q(self, lam):
        return np.polyval(self.q_coeffs, lam)

    def dQ(self, lam):
        return np.polyval(self.dq_coeffs, lam)

    def y_plus(self, lam, skip=None):
        """``y`` on the sheet with ``y ~ +lambda^n`` at infinity; factors of cuts in ``skip`` are left out."""
        lam = np.asarray(lam, dtype=complex)
        out = np.ones(lam.shape, dtype=complex)
        skip = () if skip is None else np.atleast_1d(skip)
        for j, (a, b) in enumerate(self.cuts):
            if j not in skip:
                out = out * _cut_factor(lam, a, b)
        return out

    def y(self, lam, sheet):
        return np.asarray(sheet) * self.y_plus(lam)

    def sheet_of(self, lam, yval) -> np.ndarray:
        """+1 or -1 depending on which branch ``yval`` is closer to."""
        yp = self.y_plus(lam)
        return np.where(np.abs(yval - yp) <= np.abs(yval + yp), 1, -1)

    def distance_to_cuts(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        d = np.full(lam.shape, np.inf)
        for a, b in self.cuts:
            d = np.minimum(d, segment_distance(lam, a, b))
        return d

    def to_dict(self) -> dict:
        return {
            "q_coeffs": [[float(c.real), float(c.imag)] for c in self.q_coeffs],
            "branch_points": [[float(c.real), float(c.imag)] for c in self.branch_points],
            "cuts": [[2 * j, 2 * j + 1] for j in range(self.n)],
            "genus": self.genus,
        }


def segment_distance(lam, a, b):
    lam = np.asarray(lam, dtype=complex)
    d = b - a
    t = np.clip(((lam - a) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
    return np.abs(lam - (a + t * d))


def branch_points_and_cuts(q_coeffs, real: bool = True, real_tol: float = 1e-9) -> np.ndarray:
    """Roots of ``Q`` in chain order.

    For real curves the roots are snapped to exact conjugate pairs; a root
    within ``real_tol`` * scale of the real axis is a coalescence boundary.
    """
    q = np.asarray(q_coeffs, dtype=complex)
    roots = polynomial_roots(q)
    n = len(roots) // 2
    scale = max(1.0, float(np.max(np.abs(roots)))) if len(roots) else 1.0
    if real:
        if np.any(np.abs(roots.imag) < real_tol * scale):
            raise CoalescenceBoundary("branch point on the real axis (degenerate curve)")
        upper = roots[roots.imag > 0]
        lower = roots[roots.imag < 0]
        if len(upper) != n or len(lower) != n:
            raise CoalescenceBoundary("branch points are not conjugate-paired")
        snapped = []
        used = np.zeros(n, bool)
        for u in upper:
            k = np.argmin(np.where(used, np.inf, np.abs(lower - np.conj(u))))
            used[k] = True
            v = 0.5 * (u + np.conj(lower[k]))
            snapped += [np.conj(v), v]
        roots = np.array(snapped)
    return roots[chain_order(roots)]


def curve_from_coefficients(q_coeffs, real: bool = True) -> HyperellipticCurve:
    q = np.asarray(q_coeffs, dtype=complex)
    if real:
        q = q.real.astype(complex)
    return HyperellipticCurve(q, branch_points_and_cuts(q, real=real), real=real)


def build_curve(state: ClassicalSpinState, spec: EnergySpectrum) -> HyperellipticCurve:
    if state.n != spec.n:
        raise ModelError(f"state has {state.n} spins but spectrum has {spec.n} levels")
    q = q_coefficients(state.spins, spec.eps, spec.g)
    return curve_from_coefficients(q.real, real=True)


# --- separation variables ----------------------------------------------------------

@dataclass
class SeparationRoots:
    u: np.ndarray
    y: np.ndarray
    sheets: np.ndarray
    cut_distance: np.ndarray
    which: str = "b"

    @property
    def on_cuts(self) -> bool:
        """Whether every root lies on a cut (within 1e-8 of a segment)."""
        return bool(np.all(self.cut_distance < 1e-8))


def separation_roots(state: ClassicalSpinState, spec: EnergySpectrum, which: str = "b",
                     curve: Optional[HyperellipticCurve] = None) -> SeparationRoots:
    """Roots of the numerator of ``b`` (or ``c``) with the curve point above them.

    At a ``b``-root the curve point is ``y = (g/2) a(u) P(u)``; at a ``c``-root
    it is ``y = -(g/2) a(u) P(u)``.  With these sheet choices both root sets
    obey ``du/dt = 2 i y / prod_{j != k} (u_k - u_j)``.
    """
    if which not in ("b", "c"):
        raise ValueError("which must be 'b' or 'c'")
    curve = curve or build_curve(state, spec)
    lax = LaxMatrix(state.spins, spec.eps, spec.g)
    pa, pb, pc = lax.numerators()
    num = pb if which == "b" else pc
    if spec.n == 1:
        empty = np.zeros(0, complex)
        return SeparationRoots(empty, empty, np.zeros(0, int), np.zeros(0), which)
    lead = num[0] if len(num) == spec.n else 0.0
    if abs(lead) < 1e-14 * max(1.0, np.max(np.abs(num))):
        raise CurveError("separation root at infinity (J- vanishes)")
    u = polynomial_roots(num)
    y = np.polyval(pa, u) * (1 if which == "b" else -1)
    sheets = curve.sheet_of(u, y)
    return SeparationRoots(u, y, sheets, curve.distance_to_cuts(u), which)


# --- homology and periods -------------------------------------------------------------

@dataclass
class HomologyBasis:
    """Canonical cycles as integer combinations of the chain cycles ``c_1 .. c_{2n-1}``.

    ``c_{2j-1}`` is the counter-clockwise loop on sheet + around cut ``j``;
    ``c_{2j}`` runs along gap ``j`` on sheet - and back on sheet +.  Consecutive
    chain cycles intersect with ``c_k . c_{k+1} = +1``.  Then
    ``alpha_j = c_{2j-1}`` and ``beta_j = sum_{k >= j} c_{2k}``.
    """

    chain: np.ndarray
    alpha: np.ndarray = field(init=False)
    beta: np.ndarray = field(init=False)

    def __post_init__(self):
        n = len(self.chain) // 2
        g = n - 1
        m = 2 * n - 1
        self.alpha = np.zeros((g, m), dtype=int)
        self.beta = np.zeros((g, m), dtype=int)
        for j in range(g):
            self.alpha[j, 2 * j] = 1
            for k in range(j, g):
                self.beta[j, 2 * k + 1] = 1

    @property
    def genus(self) -> int:
        return self.alpha.shape[0]

    @staticmethod
    def chain_form(m: int) -> np.ndarray:
        om = np.zeros((m, m), dtype=int)
        for k in range(m - 1):
            om[k, k + 1] = 1
            om[k + 1, k] = -1
        return om

    def intersection_matrix(self) -> np.ndarray:
        """Intersection numbers of (alpha_1..alpha_g, beta_1..beta_g)."""
        basis = np.vstack([self.alpha, self.beta])
        return basis @ self.chain_form(basis.shape[1]) @ basis.T

    def paths(self) -> list:
        """Human-readable description of each chain cycle with sheet labels."""
        p = self.chain
        out = []
        for k in range(len(p) - 1):
            a, b = p[k], p[k + 1]
            if k % 2 == 0:
                out.append({"cycle": f"c{k + 1}", "kind": "loop around cut", "ends": [a, b], "sheets": ["+"]})
            else:
                out.append({"cycle": f"c{k + 1}", "kind": "gap", "ends": [a, b], "sheets": ["-", "+"]})
        return out


def homology_basis(curve: HyperellipticCurve) -> HomologyBasis:
    return HomologyBasis(curve.branch_points)


@dataclass
class PeriodData:
    M: np.ndarray
    B: np.ndarray
    chain_periods: np.ndarray  # periods of mu_i over c_1..c_{2n-1}
    beta_periods: np.ndarray
    nodes: int

    @property
    def genus(self) -> int:
        return self.M.shape[0]

    @property
    def Minv(self) -> np.ndarray:
        return np.linalg.inv(self.M)

    def normalization_residual(self) -> float:
        return float(np.max(np.abs(np.linalg.solve(self.M, self.M) - np.eye(self.genus))))

    def to_dict(self) -> dict:
        def cm(a):
            return [[[float(x.real), float(x.imag)] for x in row] for row in np.atleast_2d(a)]
        return {"M": cm(self.M), "B": cm(self.B), "quadrature_nodes": self.nodes}


def _powers(lam, g):
    return np.array([lam ** (g - i) for i in range(1, g + 1)])


def chain_cycle_periods(curve: HyperellipticCurve, nodes: int) -> np.ndarray:
    """Periods of ``mu_i = lambda^{g-i} dlambda / y`` over every chain cycle."""
    g = curve.genus
    p = curve.branch_points
    out = np.empty((g, 2 * curve.n - 1), dtype=complex)
    th = (np.arange(nodes) + 0.5) * np.pi / nodes
    x, w = _legendre(nodes)
    thg = 0.5 * (x + 1) * np.pi
    wg = 0.5 * np.pi * w
    s2 = np.sin(0.5 * thg) ** 2
    c2 = np.cos(0.5 * thg) ** 2
    for k in range(2 * curve.n - 1):
        a, b = p[k], p[k + 1]
        if k % 2 == 0:
            # loop around cut k//2: Gauss-Chebyshev in the cut parameter
            m, h = 0.5 * (a + b), 0.5 * (b - a)
            lam = m + h * np.cos(th)
            out[:, k] = 2j * np.pi / nodes * np.sum(_powers(lam, g) / curve.y_plus(lam, skip=k // 2), axis=1)
        else:
            # gap between cut j (ending at a) and cut j+1 (starting at b)
            j = k // 2
            lam = a + (b - a) * s2
            dl = 0.5 * (b - a) * np.sin(thg)
            yv = curve.y_plus(lam, skip=(j, j + 1))
            yv = yv * _cut_factor(lam, p[k - 1], a, da=lam - p[k - 1], db=(b - a) * s2)
            yv = yv * _cut_factor(lam, b, p[k + 2], da=-(b - a) * c2, db=lam - p[k + 2])
            # sqrt endpoint behaviour is absorbed by sin(theta)
            out[:, k] = -2 * np.sum(_powers(lam, g) / yv * dl * wg, axis=1)
    return out


def period_data(curve: HyperellipticCurve, basis: Optional[HomologyBasis] = None,
                rtol: float = 1e-13, max_nodes: int = 1 << 13, noise_floor: float = 1e-9) -> PeriodData:
    """Period matrices by Gauss-Chebyshev / Gauss-Legendre with node doubling.

    Doubling stops at relative change ``rtol``, or earlier once the change
    stalls below ``noise_floor`` (summation rounding near close branch points).
    """
    if curve.genus < 1:
        raise CurveError("genus 0 curve has no periods")
    basis = basis or homology_basis(curve)
    nodes = 64
    prev = chain_cycle_periods(curve, nodes)
    last_change = np.inf
    while True:
        nodes *= 2
        cur = chain_cycle_periods(curve, nodes)
        change = np.max(np.abs(cur - prev))
        prev = cur
        scale = max(1.0, np.max(np.abs(cur)))
        if change <= rtol * scale:
            break
        # rounding floor: doubling no longer helps and the change is already tiny
        if nodes >= 1024 and change > 0.25 * last_change and change <= noise_floor * scale:
            break
        last_change = change
        if nodes >= max_nodes:
            raise CurveError(f"period quadrature did not converge (change {change:.2e})")
    M = cur @ basis.alpha.T
    Pb = cur @ basis.beta.T
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise CoalescenceBoundary(f"ill-conditioned alpha-period matrix (cond {cond:.2e})")
    B = np.linalg.solve(M, Pb)
    return PeriodData(M, B, cur, Pb, nodes)
