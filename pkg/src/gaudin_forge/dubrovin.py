"""Dubrovin equations for the separation variables and the J- phase equation.

Each point is carried as ``(u, y)`` with ``y^2 = Q(u)``::

    du_k/dt = 2 i y_k / prod_{j != k} (u_k - u_j)
    dy_k/dt = i Q'(u_k) / prod_{j != k} (u_k - u_j)
    i dJ-/dt = J- (g J3 + 2 sum eps - 2 sum_k u_k)

Carrying ``y`` alongside ``u`` keeps the system regular when a point passes
a branch point, so no local square-root chart is needed there.  Far from
the origin a point switches to ``v = 1/u``, ``w = y v^n``, where

    dv/dt = -2 i w / prod_{j != k} (1 - v u_j)
    dw/dt = -i Q~'(v) / prod_{j != k} (1 - v u_j),    Q~(v) = v^{2n} Q(1/v).

A point can pass through infinity in finite time in this chart.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import ode
from .curve import HyperellipticCurve
from .model import ClassicalSpinState, EnergySpectrum


class DubrovinSingularity(RuntimeError):
    def __init__(self, t, msg):
        super().__init__(f"{msg} at t={t!r}")
        self.t = t


@dataclass
class DivisorTrajectory:
    times: np.ndarray
    u: np.ndarray        # (T, g)
    y: np.ndarray        # (T, g)
    sheets: np.ndarray   # (T, g), +1/-1 relative to y_plus
    jminus: np.ndarray   # (T,)
    diagnostics: dict = field(default_factory=dict)


def dubrovin_rhs(u, sheets, curve: HyperellipticCurve) -> np.ndarray:
    """``du_k/dt`` with ``y(u_k)`` taken on the recorded sheet."""
    u = np.asarray(u, dtype=complex)
    y = np.asarray(sheets) * curve.y_plus(u)
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, 1.0)
    gap = np.min(np.abs(d[~np.eye(len(u), dtype=bool)])) if len(u) > 1 else np.inf
    if gap < 1e-12 * curve.scale:
        raise DubrovinSingularity(None, "separation variables collide")
    return 2j * y / np.prod(d, axis=1)


class _System:
    def __init__(self, curve: HyperellipticCurve, g_coupling: float, j3: float, eps_sum: float):
        self.curve = curve
        self.n = curve.n
        self.gdim = curve.genus
        self.q = curve.q_coeffs
        self.dq = curve.dq_coeffs
        self.qt = self.q[::-1]  # coefficients of Q~(v) (highest first)
        self.dqt = np.polyder(self.qt)
        self._dq = [complex(c) for c in self.dq]
        self._dqt = [complex(c) for c in self.dqt]
        self.const = g_coupling * j3 + 2 * eps_sum
        self.charts = np.zeros(self.gdim, dtype=bool)  # True: point uses v = 1/u
        self.R = 10.0 * curve.scale

    def u_of(self, state):
        z = state[0:2 * self.gdim:2]
        return np.where(self.charts, 1.0 / np.where(self.charts, z, 1.0), z)

    def y_of(self, state):
        z = state[0:2 * self.gdim:2]
        Y = state[1:2 * self.gdim:2]
        u = self.u_of(state)
        return np.where(self.charts, Y * u ** self.n, Y)

    def rhs(self, t, state):
        # plain complex arithmetic: for a handful of points this beats numpy overhead
        g = self.gdim
        sv = state.tolist()
        z = sv[0:2 * g:2]
        Y = sv[1:2 * g:2]
        ch = self.charts.tolist()
        u = [1.0 / zk if c else zk for zk, c in zip(z, ch)]
        out = [0j] * (2 * g + 1)
        for k in range(g):
            den = 1.0 + 0j
            if ch[k]:
                for j in range(g):
                    if j != k:
                        den *= 1.0 - z[k] * u[j]
                dp = 0j
                for c in self._dqt:
                    dp = dp * z[k] + c
                num_z, num_y = -2j * Y[k], -1j * dp
            else:
                for j in range(g):
                    if j != k:
                        den *= u[k] - u[j]
                dp = 0j
                for c in self._dq:
                    dp = dp * u[k] + c
                num_z, num_y = 2j * Y[k], 1j * dp
            if den == 0:
                raise DubrovinSingularity(t, "separation variables collide")
            out[2 * k] = num_z / den
            out[2 * k + 1] = num_y / den
        out[2 * g] = -1j * sv[2 * g] * (self.const - 2 * sum(u))
        return np.array(out)

    def project(self, state):
        """Put each ``(u, y)`` back on ``y^2 = Q(u)`` in place, keeping the nearer root."""
        g = self.gdim
        z = state[0:2 * g:2]
        Y = state[1:2 * g:2]
        q = np.where(self.charts, np.polyval(self.qt, z), np.polyval(self.q, z))
        r = np.sqrt(q.astype(complex))
        r = np.where(np.abs(Y - r) <= np.abs(Y + r), r, -r)
        state[1:2 * g:2] = r

    def wants_switch(self, state) -> bool:
        u = self.u_of(state)
        big = np.abs(u) > self.R
        small = np.abs(u) < 0.5 * self.R
        return bool(np.any(big & ~self.charts) or np.any(small & self.charts))

    def switch(self, state):
        """Move points across the chart boundary; returns the converted state."""
        state = state.copy()
        u = self.u_of(state)
        y = self.y_of(state)
        for k in range(self.gdim):
            if not self.charts[k] and abs(u[k]) > self.R:
                self.charts[k] = True
                state[2 * k] = 1.0 / u[k]
                state[2 * k + 1] = y[k] / u[k] ** self.n
            elif self.charts[k] and abs(u[k]) < 0.5 * self.R:
                self.charts[k] = False
                state[2 * k] = u[k]
                state[2 * k + 1] = y[k]
        return state


def integrate_dubrovin(u0, y0, curve: HyperellipticCurve, spec: EnergySpectrum,
                       state0: ClassicalSpinState, t_end: float, tol: float,
                       t_eval: Optional[Sequence[float]] = None, project: bool = True) -> DivisorTrajectory:
    """Integrate the separation variables and ``J-`` from the spin state ``state0``.

    ``u0`` and ``y0`` are the starting points on the curve, normally the
    ``u`` and ``y`` fields of :func:`curve.separation_roots`.  ``t_end`` may
    be negative (backward in time).  With ``project`` each accepted step puts
    ``y`` back on ``y^2 = Q(u)``; without it the curve residual drifts and
    near-infinity excursions amplify the drift.
    """
    u0 = np.asarray(u0, dtype=complex)
    y0 = np.asarray(y0, dtype=complex)
    g = curve.genus
    if len(u0) != g or len(y0) != g:
        raise ValueError(f"need {g} starting points")
    if tol <= 0:
        raise ValueError("tol must be positive")
    system = _System(curve, spec.g, state0.j3, float(np.sum(spec.eps)))
    if t_eval is None:
        t_eval = np.array([0.0, t_end])
    t_eval = np.asarray(t_eval, dtype=float)
    state = np.empty(2 * g + 1, dtype=complex)
    state[0:2 * g:2] = u0
    state[1:2 * g:2] = y0
    state[2 * g] = state0.j_minus
    state = system.switch(state)

    diag = {"min_gap": np.inf, "min_branch_distance": np.inf, "max_curve_residual": 0.0,
            "chart_switches": [], "accepted": 0, "rejected": 0}
    E = curve.branch_points

    def audit(t, s):
        if project:
            system.project(s)
        u = system.u_of(s)
        if g > 1:
            d = np.abs(u[:, None] - u[None, :])[~np.eye(g, dtype=bool)]
            diag["min_gap"] = min(diag["min_gap"], float(d.min()))
            if d.min() < 1e-12 * curve.scale:
                raise DubrovinSingularity(t, "separation variables collide")
        diag["min_branch_distance"] = min(diag["min_branch_distance"],
                                          float(np.min(np.abs(u[:, None] - E[None, :]))))

    times, states, charts_at = [], [], []
    t = 0.0
    remaining = t_eval
    h = None
    direction = 1.0 if t_end >= 0 else -1.0
    while True:
        res = ode.integrate(system.rhs, state, (t, t_end), tol, t_eval=remaining, h0=h,
                            on_step=audit, stop_when=lambda tt, s: system.wants_switch(s))
        diag["accepted"] += res.accepted
        diag["rejected"] += res.rejected
        for tt, s in zip(res.t, res.y):
            times.append(tt)
            states.append(s)
            charts_at.append(system.charts.copy())
        if not res.stopped_early:
            break
        t = res.t_stop
        h = res.h_last
        state = system.switch(res.y_stop)
        diag["chart_switches"].append(float(t))
        remaining = remaining[direction * (remaining - t) > 0]
        if len(remaining) == 0:
            remaining = np.array([t_end])

    times = np.array(times)
    states = np.array(states)
    u = np.empty((len(times), g), dtype=complex)
    y = np.empty_like(u)
    saved = system.charts.copy()
    for i, (s, ch) in enumerate(zip(states, charts_at)):
        system.charts = ch
        u[i] = system.u_of(s)
        y[i] = system.y_of(s)
    system.charts = saved
    sheets = curve.sheet_of(u, y) if g else np.zeros((len(times), 0), int)
    if g:
        resid = np.abs(y ** 2 - curve.Q(u)) / np.maximum(1.0, np.abs(u)) ** (2 * curve.n)
        diag["max_curve_residual"] = float(resid.max())
    flips = []
    for k in range(g):
        for i in np.nonzero(np.diff(sheets[:, k]))[0]:
            flips.append({"point": k, "t": float(times[i + 1])})
    diag["sheet_changes"] = flips
    return DivisorTrajectory(times, u, y, sheets, states[:, 2 * g], diag)


def spin_b_roots(spins: np.ndarray, spec: EnergySpectrum, reference: Optional[np.ndarray] = None):
    """Roots of the ``b`` numerator for a stack of spin states, matched to ``reference``.

    Used as the spin-ODE side of the dynamics cross-check: each time slice is
    matched to the previous one (or to ``reference`` at the first slice) by
    minimal total displacement.
    """
    from scipy.optimize import linear_sum_assignment

    from .curve import LaxMatrix
    from .polyroots import polynomial_roots

    out = []
    prev = None if reference is None else np.asarray(reference, dtype=complex)
    for s in spins:
        _, pb, _ = LaxMatrix(s, spec.eps, spec.g).numerators()
        r = polynomial_roots(pb, x0=prev)
        if prev is not None:
            cost = np.abs(prev[:, None] - r[None, :])
            _, col = linear_sum_assignment(cost)
            r = r[col]
        out.append(r)
        prev = r
    return np.array(out)
