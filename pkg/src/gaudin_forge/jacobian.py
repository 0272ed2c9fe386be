"""Abel-Jacobi map, Riemann vector, linear flow and theta-divisor inversion.

Points of the curve are pairs ``(lam, sheet)`` where ``sheet`` is +1 or -1
relative to ``HyperellipticCurve.y_plus``.  The base point is ``inf+``, the
point at infinity on the sheet where ``y ~ +lam^n``.

The divisor map is ``z = sum_k A(P_k) + K``.  Given ``z``, the points
``P_k`` are the zeros of ``f(P) = theta(A(P) - z)``: with ``K`` defined by
``theta(A(D) + K) = 0`` for effective ``D`` of degree ``g-1``, no further
shift by ``K`` is needed inside ``f``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import itertools

import numpy as np
from scipy.interpolate import make_interp_spline

from .curve import HyperellipticCurve, PeriodData, _cut_factor, period_data
from .quadrature import gk_adaptive
from .theta import ThetaContext, theta_gradient, theta_normalized


class AbelError(RuntimeError):
    pass


class DivisorInversionError(RuntimeError):
    pass


class SamplingError(RuntimeError):
    pass


# --- lattice ---------------------------------------------------------------------

@dataclass(frozen=True)
class JacobianPoint:
    z: np.ndarray
    reduced: bool = False


def reduce_point(z, B) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``z = r + m + B n`` with ``r`` in the fundamental domain; returns ``(r, m, n)``."""
    z = np.asarray(z, dtype=complex)
    Y = B.imag
    n = np.round(np.linalg.solve(Y, z.imag))
    r = z - B @ n
    m = np.round(r.real)
    return r - m, m, n


def lattice_distance(z, B) -> float:
    """Distance from ``z`` to the nearest lattice vector ``m + B n``."""
    z = np.asarray(z, dtype=complex)
    n0 = np.round(np.linalg.solve(B.imag, z.imag))
    best = np.inf
    g = len(z)
    # check neighbouring cells so skewed lattices are handled
    for dn in itertools.product((-1, 0, 1), repeat=g):
        n = n0 + np.array(dn)
        r = z - B @ n
        m = np.round(r.real)
        best = min(best, float(np.max(np.abs(r - m))))
    return best


def nearest_small(dz, B) -> np.ndarray:
    """Representative of ``dz`` modulo the lattice closest to 0."""
    dz = np.asarray(dz, dtype=complex)
    n0 = np.round(np.linalg.solve(B.imag, dz.imag))
    best, arg = np.inf, dz
    for dn in itertools.product((-1, 0, 1), repeat=len(dz)):
        n = n0 + np.array(dn)
        r = dz - B @ n
        r = r - np.round(r.real)
        if np.max(np.abs(r)) < best:
            best, arg = np.max(np.abs(r)), r
    return arg


# --- geometry helpers ----------------------------------------------------------------

def _segments_cross(p0, p1, a, b, eps=0.0) -> bool:
    """Whether segment p0-p1 crosses segment a-b (proper or touching interior)."""
    def cross(o, p, q):
        return ((p - o).conjugate() * (q - o)).imag
    d1 = cross(a, b, p0)
    d2 = cross(a, b, p1)
    d3 = cross(p0, p1, a)
    d4 = cross(p0, p1, b)
    return (d1 * d2 < -eps) and (d3 * d4 < -eps)


def _ray_segment_distance(origin, direction, a, b) -> float:
    """Distance between the ray ``origin + s*direction`` (s >= 0) and segment ``[a, b]``."""
    far = origin + direction * 1e6 * (1 + abs(a) + abs(b) + abs(origin))
    if _segments_cross(origin, far, a, b):
        return 0.0

    def pt_seg(p, q0, q1):
        d = q1 - q0
        t = np.clip(((p - q0) * np.conj(d)).real / max(abs(d) ** 2, 1e-300), 0, 1)
        return abs(p - (q0 + t * d))

    def pt_ray(p):
        t = max(0.0, ((p - origin) * np.conj(direction)).real)
        return abs(p - (origin + t * direction))

    return min(pt_ray(a), pt_ray(b), pt_seg(origin, a, b))


# --- Abel map ----------------------------------------------------------------------

class AbelContext:
    """Curve, periods, theta context and Riemann vector with base point ``inf+``."""

    def __init__(self, curve: HyperellipticCurve, periods: Optional[PeriodData] = None,
                 theta_tol: float = 1e-14, quad_tol: float = 1e-14):
        if curve.genus < 1:
            raise AbelError("Abel map needs genus >= 1")
        self.curve = curve
        self.periods = periods or period_data(curve)
        self.g = curve.genus
        self.Minv = np.linalg.inv(self.periods.M)
        self.B = 0.5 * (self.periods.B + self.periods.B.T)
        self.theta = ThetaContext(self.B, theta_tol)
        self.quad_tol = quad_tol
        E = curve.branch_points
        self._E = E
        dist = np.abs(E[:, None] - E[None, :]) + np.diag(np.full(len(E), np.inf))
        self._anchor_radius = 0.2 * dist.min(axis=1)
        self._E_abel = np.array([self._abel_ray(e, exclude_cut=k // 2) for k, e in enumerate(E)])
        self.A_inf_minus = 2 * self._E_abel[-1]
        self.K = riemann_vector(self)

    # differentials ----------------------------------------------------------
    def omega_plus(self, lam):
        """Normalized differentials on sheet +, as coefficients of ``d lam``; shape (g, len)."""
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        pw = np.array([lam ** (self.g - i) for i in range(1, self.g + 1)])
        return self.Minv @ (pw / self.curve.y_plus(lam))

    def omega_near(self, k: int, delta):
        """``omega_plus(E_k + delta)`` with the own cut factor built from the exact offset."""
        delta = np.atleast_1d(np.asarray(delta, dtype=complex))
        j = k // 2
        a, b = self.curve.cuts[j]
        lam = self._E[k] + delta
        if k % 2 == 0:
            own = _cut_factor(lam, a, b, da=delta, db=delta + (a - b))
        else:
            own = _cut_factor(lam, a, b, da=delta + (b - a), db=delta)
        y = self.curve.y_plus(lam, skip=j) * own
        pw = np.array([lam ** (self.g - i) for i in range(1, self.g + 1)])
        return self.Minv @ (pw / y)

    # ray integration from infinity ----------------------------------------------
    def _choose_direction(self, lam, exclude_cut=None):
        best, best_d = -1.0, None
        for k in range(16):
            d = np.exp(1j * np.pi * k / 8 + 0.013)
            score = np.inf
            for j, (a, b) in enumerate(self.curve.cuts):
                if j == exclude_cut:
                    # leaving a branch point: stay away from its own cut direction
                    other = b if abs(a - lam) < abs(b - lam) else a
                    ang = abs(np.angle((other - lam) / d))
                    score = min(score, ang * abs(other - lam))
                    continue
                score = min(score, _ray_segment_distance(lam, d, a, b))
            if score > best:
                best, best_d = score, d
        if best <= 0:
            raise AbelError(f"no cut-free ray from {lam!r}")
        return best_d

    def _abel_ray(self, lam, exclude_cut=None):
        """``A_+(lam)``: integral from ``inf+`` along a cut-free ray, sheet +."""
        lam = complex(lam)
        d = self._choose_direction(lam, exclude_cut)
        branch = None if exclude_cut is None else int(np.argmin(np.abs(self._E - lam)))
        L = max(self.curve.scale, abs(lam))

        def f(tau):
            r = tau / (1 - tau)
            s = L * r * r
            ds = 2 * L * r / (1 - tau) ** 2
            if exclude_cut is None:
                return self.omega_plus(lam + d * s) * (d * ds)
            return self.omega_near(branch, d * s) * (d * ds)

        val, err = gk_adaptive(f, 0.0, 1.0, atol=self.quad_tol, rtol=self.quad_tol)
        return -val

    def _abel_anchored(self, lam, sheet, k):
        """``A(lam, sheet)`` as ``A_+(E_k) + sheet * int_{E_k}^{lam} omega_+``."""
        e = self._E[k]
        dl = lam - e

        def f(s):
            return self.omega_near(k, dl * s * s) * (2 * dl * s)

        val, _ = gk_adaptive(f, 0.0, 1.0, atol=self.quad_tol, rtol=self.quad_tol)
        return self._E_abel[k] + sheet * val

    def _anchor_for(self, lam):
        d = np.abs(self._E - lam)
        k = int(np.argmin(d))
        if d[k] >= self._anchor_radius[k]:
            return None
        e = self._E[k]
        # the straight segment from E_k must not cross any cut
        for j, (a, b) in enumerate(self.curve.cuts):
            if k // 2 == j:
                other = b if k % 2 == 0 else a
                if abs(np.angle((lam - e) / (other - e))) < 1e-3:
                    return None
                continue
            if _segments_cross(e, lam, a, b):
                return None
        return k

    def abel(self, lam, sheet: int = 1) -> np.ndarray:
        """``A(lam, sheet)`` (not reduced).  ``lam = inf`` gives ``inf+`` / ``inf-``."""
        if lam is None or (np.isscalar(lam) and np.isinf(abs(lam))):
            return np.zeros(self.g, complex) if sheet == 1 else self.A_inf_minus.copy()
        lam = complex(lam)
        k = self._anchor_for(lam)
        if k is not None:
            return self._abel_anchored(lam, sheet, k)
        a_plus = self._abel_ray(lam)
        return a_plus if sheet == 1 else self.A_inf_minus - a_plus

    def branch_point_abel(self) -> np.ndarray:
        """``A_+(E_k)`` for every branch point (chain order)."""
        return self._E_abel.copy()

    def divisor_image(self, lams, sheets) -> np.ndarray:
        return sum(self.abel(l, s) for l, s in zip(lams, sheets)) + self.K


def abel_map(P, ctx: AbelContext) -> JacobianPoint:
    """Abel-Jacobi image of ``P = (lam, sheet)``; ``lam = inf`` allowed."""
    lam, sheet = P
    return JacobianPoint(ctx.abel(lam, sheet), reduced=False)


def riemann_vector(ctx: AbelContext, checks: int = 4, tol: float = 1e-8) -> np.ndarray:
    """Riemann vector for base point ``inf+``, chosen by the vanishing property.

    Candidates are ``+-(g-1)/2 A(inf-)`` plus half periods; the one for which
    ``theta(sum A(P_j) + K)`` vanishes on random effective divisors of degree
    ``g-1`` (and ``theta(K) = 0``) is returned.
    """
    g, B = ctx.g, ctx.B
    rng = np.random.default_rng(12345)
    scale = ctx.curve.scale
    tests = []
    for _ in range(checks if g > 1 else 0):
        lams = rng.normal(size=g - 1) * scale + 1j * rng.normal(size=g - 1) * scale
        sh = rng.choice([-1, 1], size=g - 1)
        tests.append(sum(ctx.abel(l, int(s)) for l, s in zip(lams, sh)))
    tests.append(np.zeros(g, complex))
    best, best_val = None, np.inf
    for sign in (1, -1):
        base = sign * 0.5 * (g - 1) * ctx.A_inf_minus
        for a in itertools.product((0, 1), repeat=g):
            for b in itertools.product((0, 1), repeat=g):
                K = base + 0.5 * np.array(a) + 0.5 * B @ np.array(b)
                val = max(abs(theta_normalized(w + K, ctx.theta)) for w in tests)
                if val < best_val:
                    best, best_val = K, val
        if g == 1:
            break
    if best_val > tol:
        raise AbelError(f"no Riemann vector candidate passes the vanishing test ({best_val:.2e})")
    return reduce_point(best, B)[0]


# --- flow ----------------------------------------------------------------------------

def analytic_velocity(ctx: AbelContext) -> np.ndarray:
    """``d/dt sum A(u_k)`` implied by the Dubrovin equations: ``2 i M^{-1} e_1``."""
    return 2j * ctx.Minv[:, 0]


def calibrate_velocity(ctx: AbelContext, u0, y0, spec, state0, h: float = 1e-3,
                       tol: float = 1e-13) -> np.ndarray:
    """Finite-difference velocity of ``sum A(u_k(t))`` from a short Dubrovin run."""
    from .dubrovin import integrate_dubrovin

    sheets0 = ctx.curve.sheet_of(np.asarray(u0), np.asarray(y0))
    z0 = ctx.divisor_image(u0, sheets0)
    zs = []
    for hh in (h, -h):
        tr = integrate_dubrovin(u0, y0, ctx.curve, spec, state0, hh, tol)
        zs.append(ctx.divisor_image(tr.u[-1], tr.sheets[-1]))
    fwd = nearest_small(zs[0] - z0, ctx.B)
    bwd = nearest_small(zs[1] - z0, ctx.B)
    return (fwd - bwd) / (2 * h)


def flow(z0, t: float, mode: str = "calibrated", velocity=None, B=None) -> JacobianPoint:
    """Linear motion on the Jacobian.

    ``mode="paper"`` moves the last coordinate with unit imaginary speed;
    ``mode="calibrated"`` uses ``z0 + t V``.  If ``B`` is given the result is
    reduced to the fundamental domain.
    """
    z0 = np.asarray(z0.z if isinstance(z0, JacobianPoint) else z0, dtype=complex)
    if mode == "paper":
        v = np.zeros_like(z0)
        v[-1] = 1j
    elif mode == "calibrated":
        if velocity is None:
            raise ValueError("calibrated flow needs a velocity")
        v = np.asarray(velocity, dtype=complex)
    else:
        raise ValueError(f"unknown flow mode {mode!r}")
    z = z0 + t * v
    if B is not None:
        return JacobianPoint(reduce_point(z, B)[0], reduced=True)
    return JacobianPoint(z, reduced=False)


# --- inversion -----------------------------------------------------------------------

@dataclass
class _Pt:
    lam: complex
    sheet: int
    A: np.ndarray


def _crosses_cut(curve, p0, p1):
    return [j for j, (a, b) in enumerate(curve.cuts) if _segments_cross(p0, p1, a, b)]


def _move(ctx: AbelContext, pt: _Pt, lam_new: complex) -> _Pt:
    """Carry a point to ``lam_new`` along the straight segment, updating sheet and Abel image."""
    lam_new = complex(lam_new)
    crossings = _crosses_cut(ctx.curve, pt.lam, lam_new)
    sheet = pt.sheet * (-1) ** len(crossings)
    step = abs(lam_new - pt.lam)
    if not crossings and step > 0:
        clearance = np.min(np.abs(ctx._E - 0.5 * (pt.lam + lam_new))) - 0.5 * step
        if clearance > 2 * step:
            nodes = pt.lam + (lam_new - pt.lam) * 0.5 * (1 + _GL_X)
            w = ctx.omega_plus(nodes) @ _GL_W * 0.5 * (lam_new - pt.lam)
            return _Pt(lam_new, sheet, pt.A + sheet * w)
    return _Pt(lam_new, sheet, ctx.abel(lam_new, sheet))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _newton_point(ctx: AbelContext, pt: _Pt, z, max_iter=30, tol=1e-13) -> tuple[_Pt, bool]:
    """Newton iteration on ``theta(A(P) - z) = 0`` in a local chart."""
    curve = ctx.curve
    big = 10 * curve.scale
    for _ in range(max_iter):
        th, grad = theta_gradient(pt.A - z, ctx.theta)
        yv = pt.sheet * curve.y_plus(pt.lam)
        pw = np.array([pt.lam ** (ctx.g - i) for i in range(1, ctx.g + 1)])
        k = int(np.argmin(np.abs(ctx._E - pt.lam)))
        dE = pt.lam - ctx._E[k]
        if abs(pt.lam) > big:
            # chart v = 1/lam:  dA/dv = -lam^2 omega
            dA = -(pt.lam ** 2) * (ctx.Minv @ pw) / yv
            v_new = 1 / pt.lam - th / (grad @ dA)
            lam_new = 1 / v_new
        elif abs(dE) < ctx._anchor_radius[k]:
            # chart tau with lam = E + tau^2, tau ~ y / sqrt(Q'(E))
            kappa = np.sqrt(curve.dQ(ctx._E[k]))
            tau = np.sqrt(dE)
            if (np.conj(kappa * tau) * yv).real < 0:
                tau = -tau
            dA = (ctx.Minv @ pw) * (2 * tau) / yv if tau != 0 else (ctx.Minv @ pw) * 2 / kappa
            tau_new = tau - th / (grad @ dA)
            lam_new = ctx._E[k] + tau_new ** 2
            y_guess = kappa * tau_new
            sheet_new = int(curve.sheet_of(lam_new, y_guess))
            new = _Pt(complex(lam_new), sheet_new, ctx.abel(lam_new, sheet_new))
            done = abs(tau_new - tau) <= tol * max(1.0, abs(tau))
            pt = new
            if done:
                return pt, True
            continue
        else:
            dA = (ctx.Minv @ pw) / yv
            lam_new = pt.lam - th / (grad @ dA)
        if not np.isfinite(lam_new):
            return pt, False
        done = abs(lam_new - pt.lam) <= tol * max(1.0, abs(pt.lam)) * (1 + (abs(pt.lam) > big) * abs(pt.lam))
        pt = _move(ctx, pt, lam_new)
        if done:
            return pt, True
    return pt, False


def _solve_from_seeds(ctx: AbelContext, seeds: Sequence[_Pt], z, fresh: bool = True):
    pts = []
    for s in seeds:
        p, ok = _newton_point(ctx, s, z)
        if not ok:
            return None, "Newton iteration did not converge"
        pts.append(p)
    lams = np.array([p.lam for p in pts])
    if len(pts) > 1:
        gap = np.min(np.abs(lams[:, None] - lams[None, :]) + np.diag(np.full(len(pts), np.inf)))
        if gap < 1e-7 * ctx.curve.scale:
            dup = [(p.lam, p.sheet) for p in pts]
            if len(set((round(l.real, 6), round(l.imag, 6), s) for l, s in dup)) < len(dup):
                return None, "two seeds converged to the same zero"
    # round trip check, with the Abel images evaluated afresh when asked
    images = [ctx.abel(p.lam, p.sheet) for p in pts] if fresh else [p.A for p in pts]
    resid = lattice_distance(sum(images) + ctx.K - z, ctx.B)
    if resid > 1e-6:
        return None, f"round trip residual {resid:.2e}"
    return [_Pt(p.lam, p.sheet, a) for p, a in zip(pts, images)], None


def _continuation_seeds(ctx: AbelContext, start: Sequence[_Pt], z, tol=1e-10):
    """Carry a known divisor to the one with image ``z`` by the Jacobi inversion ODE."""
    from . import ode

    g = ctx.g
    z_start = sum(p.A for p in start) + ctx.K
    dz = nearest_small(z - z_start, ctx.B)
    w = ctx.periods.M @ dz
    curve = ctx.curve

    def rhs(s, state):
        lam = state[:g]
        y = state[g:]
        V = np.array([lam ** (g - i) for i in range(1, g + 1)])
        v = np.linalg.solve(V, w)
        return np.concatenate((y * v, 0.5 * curve.dQ(lam) * v))

    lam0 = np.array([p.lam for p in start])
    y0 = np.array([p.sheet for p in start]) * curve.y_plus(lam0)
    res = ode.integrate(rhs, np.concatenate((lam0, y0)), (0.0, 1.0), tol)
    lam1 = res.y[-1][:g]
    y1 = res.y[-1][g:]
    sheets = curve.sheet_of(lam1, y1)
    return [_Pt(complex(l), int(s), ctx.abel(l, int(s))) for l, s in zip(lam1, sheets)]


def _default_start(ctx: AbelContext):
    """A fixed divisor away from cuts: points just right of each of the first g cuts."""
    out = []
    for j in range(ctx.g):
        a, b = ctx.curve.cuts[j]
        lam = 0.5 * (a + b) + 0.37 * abs(b - a) + 0.11j * abs(b - a)
        out.append(_Pt(complex(lam), 1, ctx.abel(lam, 1)))
    return out


def invert_divisor(z, ctx: AbelContext, seeds: Optional[Sequence] = None):
    """Points ``(lam_k, sheet_k)`` with ``sum A(P_k) + K = z`` modulo the lattice.

    With ``seeds`` (pairs ``(lam, sheet)``) Newton starts from them directly;
    otherwise a fixed reference divisor is continued to ``z`` first.
    """
    z = np.asarray(z.z if isinstance(z, JacobianPoint) else z, dtype=complex)
    if seeds is not None:
        start = [_Pt(complex(l), int(s), ctx.abel(l, int(s))) for l, s in seeds]
        pts, why = _solve_from_seeds(ctx, start, z)
        if pts is not None:
            return [(p.lam, p.sheet) for p in pts]
    start = _default_start(ctx)
    for attempt in range(3):
        try:
            cand = _continuation_seeds(ctx, start, z)
        except Exception as exc:  # noqa: BLE001 - retry from another start below
            why = str(exc)
            cand = None
        if cand is not None:
            pts, why = _solve_from_seeds(ctx, cand, z)
            if pts is not None:
                return [(p.lam, p.sheet) for p in pts]
        # shift the reference divisor and try again
        start = [_Pt(p.lam + 0.23j * ctx.curve.scale, 1, ctx.abel(p.lam + 0.23j * ctx.curve.scale, 1))
                 for p in start]
    raise DivisorInversionError(f"theta-divisor inversion failed: {why}")


@dataclass
class ThetaTrajectory:
    times: np.ndarray
    u: np.ndarray
    sheets: np.ndarray
    z: np.ndarray
    velocity: np.ndarray
    mode: str
    refinements: int


def track_divisor(ctx: AbelContext, z0, velocity, times, start, mode: str = "calibrated",
                  max_depth: int = 12, check_every: int = 25) -> ThetaTrajectory:
    """Invert ``z0 + t V`` at each time, seeding Newton from the previous solution.

    ``start`` holds the ``(lam, sheet)`` points at ``times[0]``.  Intervals where
    the seeded Newton fails are bisected.  Abel images are carried along
    incrementally and recomputed from scratch every ``check_every`` samples.
    """
    times = np.asarray(times, dtype=float)
    z0 = np.asarray(z0, dtype=complex)
    V = np.asarray(velocity, dtype=complex) if mode == "calibrated" else None
    if mode == "paper":
        V = np.zeros(ctx.g, complex)
        V[-1] = 1j
    cur = [_Pt(complex(l), int(s), ctx.abel(l, int(s))) for l, s in start]
    z_first = z0 + times[0] * V
    cur, why = _solve_from_seeds(ctx, cur, z_first)
    if cur is None:
        raise DivisorInversionError(f"inversion at t={times[0]!r} failed: {why}")
    us = [[p.lam for p in cur]]
    sh = [[p.sheet for p in cur]]
    prev = None
    refinements = 0

    def advance(pts, pts_prev, t0, t1, depth, fresh=False):
        nonlocal refinements
        z1 = z0 + t1 * V
        if pts_prev is not None:
            seeds = [_move(ctx, p, p.lam + (p.lam - q.lam) * (t1 - t0) / max(t0 - tq, 1e-300))
                     for p, q, tq in zip(pts, pts_prev[0], [pts_prev[1]] * len(pts))]
        else:
            seeds = pts
        new, why = _solve_from_seeds(ctx, seeds, z1, fresh=fresh)
        if new is not None and all(abs(a.lam - b.lam) < 0.25 * ctx.curve.scale + 2 * abs(b.lam)
                                   for a, b in zip(new, pts)):
            return new
        if depth >= max_depth:
            raise DivisorInversionError(f"tracking failed near t={t1!r}: {why}")
        refinements += 1
        tm = 0.5 * (t0 + t1)
        mid = advance(pts, None, t0, tm, depth + 1)
        return advance(mid, (pts, t0), tm, t1, depth + 1)

    for i in range(1, len(times)):
        t0, t1 = times[i - 1], times[i]
        nxt = advance(cur, prev, t0, t1, 0, fresh=(i % check_every == 0))
        prev = (cur, t0)
        cur = nxt
        us.append([p.lam for p in cur])
        sh.append([p.sheet for p in cur])
    zs = z0[None, :] + times[:, None] * V[None, :]
    return ThetaTrajectory(times, np.array(us), np.array(sh), zs, V, mode, refinements)


# --- observables -----------------------------------------------------------------------

def reconstruct_observables(times, u, state0, spec, quad_tol: float = 1e-7):
    """``(U(t), J-(t))`` from sampled separation variables.

    ``U = 2 sum_k u_k`` and ``J-(t) = J-(0) exp(-i int_0^t (g J3 + 2 sum eps - U) ds)``.
    The integral uses a quintic spline; the estimate from every other sample
    must agree within ``quad_tol`` or :class:`SamplingError` is raised.
    ``times`` must start at 0 (either direction).
    """
    times = np.asarray(times, dtype=float)
    u = np.asarray(u, dtype=complex).reshape(len(times), -1)
    if times[0] != 0.0:
        raise ValueError("times must start at 0")
    U = 2 * u.sum(axis=1)
    c = spec.g * state0.j3 + 2 * float(np.sum(spec.eps))
    if u.shape[1] == 0 or len(times) < 2:
        integral = np.zeros(len(times), complex)
    else:
        integral = _cumulative(times, U)
        if len(times) >= 13:
            coarse = _cumulative(times[::2], U[::2])
            err = np.max(np.abs(coarse - integral[::2]))
            if err > quad_tol:
                raise SamplingError(f"time samples too sparse: quadrature estimates differ by {err:.2e}")
    phase = c * times - integral
    return U, state0.j_minus * np.exp(-1j * phase)


def _cumulative(t, f):
    sign = 1.0 if t[-1] >= t[0] else -1.0
    ts = sign * t
    k = 5 if len(t) > 5 else len(t) - 1
    re = make_interp_spline(ts, f.real, k=k).antiderivative()
    im = make_interp_spline(ts, f.imag, k=k).antiderivative()
    return sign * ((re(ts) - re(ts[0])) + 1j * (im(ts) - im(ts[0])))
