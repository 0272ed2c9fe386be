"""Parameter sweeps of the spectral curve: branch-point tracking, coalescence
events, braid words and the monodromy action on first homology.

The monodromy matrix is obtained by continuing the periods of the basis
cycles along the path.  At every accepted step the carried cycles are
re-expressed in the local (alpha, beta) basis of the new curve; since a
cycle is determined by its periods, the coefficients are integers and are
snapped exactly.  Steps are refined until the coefficients are within
``0.1`` of integers and the carried periods move continuously.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .curve import (CurveError, HyperellipticCurve, chain_order, homology_basis,
                    period_data, q_coefficients)
from .model import ClassicalSpinState, EnergySpectrum
from .polyroots import polynomial_roots


class TrackingError(RuntimeError):
    def __init__(self, s, msg):
        super().__init__(f"{msg} at path parameter s={s!r}")
        self.s = s


class MonodromyError(RuntimeError):
    pass


# --- parameter paths ---------------------------------------------------------------

_COMPONENTS = ("g", "eps", "radius", "spin")


def _check_component(name: str, n: int):
    parts = name.split(":")
    if parts[0] == "g" and len(parts) == 1:
        return
    if parts[0] in ("eps", "radius") and len(parts) == 2 and 0 <= int(parts[1]) < n:
        return
    if parts[0] == "spin" and len(parts) == 3 and 0 <= int(parts[1]) < n and parts[2] in ("theta", "phi"):
        return
    raise ValueError(f"unknown path component {name!r}")


@dataclass
class ParameterPath:
    """Piecewise-linear path through parameter space.

    ``waypoints`` is a list of mappings from component names to values.
    Components: ``"g"`` (may be complex), ``"eps:i"``, ``"radius:i"``,
    ``"spin:i:theta"`` and ``"spin:i:phi"`` (polar and azimuthal angle of
    spin ``i``).  Components absent from a waypoint keep the template value.
    ``samples`` is the number of base samples per segment; steps are
    refined adaptively between them.
    """

    waypoints: list
    samples: int = 64
    closed: bool = False

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("a path needs at least two waypoints")
        if self.samples < 2:
            raise ValueError("samples must be >= 2")
        keys = set().union(*[set(w) for w in self.waypoints])
        for w in self.waypoints:
            if set(w) != keys:
                raise ValueError("every waypoint must set the same components")
        self.components = sorted(keys)
        if self.closed:
            a, b = self.waypoints[0], self.waypoints[-1]
            if any(complex(a[k]) != complex(b[k]) for k in keys):
                raise ValueError("closed path must end where it starts")

    @property
    def length(self) -> float:
        return float(len(self.waypoints) - 1)

    def values(self, s: float) -> dict:
        """Component values at path parameter ``s`` in ``[0, length]``."""
        s = min(max(s, 0.0), self.length)
        i = min(int(math.floor(s)), len(self.waypoints) - 2)
        f = s - i
        a, b = self.waypoints[i], self.waypoints[i + 1]
        out = {}
        for k in self.components:
            va, vb = complex(a[k]), complex(b[k])
            v = va + f * (vb - va)
            out[k] = v if k == "g" else v.real
        return out

    def is_real(self) -> bool:
        return all(complex(w.get("g", 0)).imag == 0 for w in self.waypoints)

    def then(self, other: "ParameterPath") -> "ParameterPath":
        """Concatenation: this path followed by ``other``."""
        if set(self.components) != set(other.components):
            raise ValueError("paths use different components")
        a, b = self.waypoints[-1], other.waypoints[0]
        if any(complex(a[k]) != complex(b[k]) for k in self.components):
            raise ValueError("paths do not join")
        return ParameterPath(self.waypoints + other.waypoints[1:], self.samples,
                             self.closed and other.closed)

    def reversed(self) -> "ParameterPath":
        return ParameterPath(self.waypoints[::-1], self.samples, self.closed)

    @classmethod
    def lasso(cls, base: complex, center: complex, radius: float, component: str = "g",
              sides: int = 16, samples: int = 16, turns: int = 1) -> "ParameterPath":
        """Closed path: ``base`` to the circle around ``center``, ``turns`` counter-clockwise
        laps of a ``sides``-gon, and back."""
        base, center = complex(base), complex(center)
        if abs(base - center) <= radius:
            raise ValueError("base point lies inside the loop")
        phi0 = cmath.phase(base - center)
        ring = [center + radius * cmath.exp(1j * (phi0 + 2 * math.pi * k / sides))
                for k in range(sides * turns + 1)]
        pts = [base] + ring + [base]
        if component != "g":
            if any(abs(p.imag) > 0 for p in pts):
                raise ValueError("only g may take complex values")
            pts = [p.real for p in pts]
        return cls([{component: p} for p in pts], samples, closed=True)


def realize(values: dict, state: ClassicalSpinState, spec: EnergySpectrum):
    """``(spins, eps, g)`` after applying path component ``values`` to the templates."""
    spins = np.array(state.spins, dtype=float)
    eps = np.array(spec.eps, dtype=float)
    g = spec.g
    for name, v in values.items():
        _check_component(name, spec.n)
        parts = name.split(":")
        if parts[0] == "g":
            g = v if complex(v).imag != 0 else float(complex(v).real)
        elif parts[0] == "eps":
            eps[int(parts[1])] = v
        elif parts[0] == "radius":
            i = int(parts[1])
            spins[i] *= v / np.linalg.norm(spins[i])
        else:
            i = int(parts[1])
            r = np.linalg.norm(spins[i])
            th = np.arccos(np.clip(spins[i, 2] / r, -1, 1))
            ph = np.arctan2(spins[i, 1], spins[i, 0])
            if parts[2] == "theta":
                th = v
            else:
                ph = v
            spins[i] = r * np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    if g == 0:
        raise ValueError("coupling g = 0 on the path")
    return spins, eps, g


# --- results ---------------------------------------------------------------------

@dataclass
class MonodromyResult:
    permutation: list
    braid_word: list                 # [(i, +1/-1), ...], 1-based generators
    matrix: Optional[np.ndarray]     # integer (2g x 2g) on (alpha, beta), object dtype
    events: list
    start_points: np.ndarray
    end_points: np.ndarray
    steps: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def braid_string(self) -> str:
        return " ".join(f"s{i}" if e == 1 else f"s{i}^-1" for i, e in self.braid_word)

    def to_dict(self) -> dict:
        def cl(a):
            return [[float(x.real), float(x.imag)] for x in a]
        return {
            "permutation": [int(p) for p in self.permutation],
            "braid_word": self.braid_string,
            "matrix": None if self.matrix is None else [[int(x) for x in row] for row in self.matrix],
            "events": self.events,
            "start_points": cl(self.start_points),
            "end_points": cl(self.end_points),
            "steps": self.steps,
        }


def symplectic_form(g: int) -> np.ndarray:
    """``J`` with ``alpha_i . beta_j = delta_ij`` in (alpha, beta) coordinates, object dtype."""
    J = np.zeros((2 * g, 2 * g), dtype=object)
    for i in range(g):
        J[i, g + i] = 1
        J[g + i, i] = -1
    return J


def is_symplectic(M) -> bool:
    M = np.asarray(M, dtype=object)
    J = symplectic_form(M.shape[0] // 2)
    return bool(np.all(M.T.dot(J).dot(M) == J))


def integer_det(M) -> int:
    """Exact determinant by fraction-free elimination (Bareiss)."""
    A = [[int(x) for x in row] for row in np.asarray(M, dtype=object)]
    n = len(A)
    sign, prev = 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            for r in range(k + 1, n):
                if A[r][k] != 0:
                    A[k], A[r] = A[r], A[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


def integer_rank(M) -> int:
    """Exact rank over the rationals."""
    A = [[Fraction(int(x)) for x in row] for row in np.asarray(M, dtype=object)]
    rank, rows = 0, len(A)
    cols = len(A[0]) if rows else 0
    for c in range(cols):
        piv = next((r for r in range(rank, rows) if A[r][c] != 0), None)
        if piv is None:
            continue
        A[rank], A[piv] = A[piv], A[rank]
        for r in range(rows):
            if r != rank and A[r][c] != 0:
                f = A[r][c] / A[rank][c]
                A[r] = [x - f * y for x, y in zip(A[r], A[rank])]
        rank += 1
    return rank


# --- tracking --------------------------------------------------------------------

_TILT = 0.05  # projection direction for braid reading (radians from the real axis)


def _proj(p):
    p = np.asarray(p) * np.exp(-1j * _TILT)
    return p.real, p.imag


def _adjacent_swaps(order_a, order_b):
    """Positions ``i`` such that ``order_b`` is ``order_a`` with disjoint swaps (i, i+1); None otherwise."""
    a, b = list(order_a), list(order_b)
    swaps, i = [], 0
    while i < len(a):
        if a[i] == b[i]:
            i += 1
        elif i + 1 < len(a) and a[i] == b[i + 1] and a[i + 1] == b[i]:
            swaps.append(i)
            i += 2
        else:
            return None
    return swaps


def _basis_periods(q, real: bool):
    from .curve import branch_points_and_cuts

    pts = branch_points_and_cuts(q, real=real)
    curve = HyperellipticCurve(q.real.astype(complex) if real else q, pts, real=real)
    pd = period_data(curve, homology_basis(curve))
    return np.hstack([pd.M, pd.beta_periods]), curve


def _realify(P):
    return np.vstack([P.real, P.imag])


class _Tracker:
    def __init__(self, path: ParameterPath, state, spec, delta, want_periods, max_depth):
        self.path, self.state, self.spec = path, state, spec
        self.delta = delta
        self.want_periods = want_periods
        self.max_depth = max_depth
        self.real = path.is_real()

    def q_at(self, s):
        spins, eps, g = realize(self.path.values(s), self.state, self.spec)
        q = q_coefficients(spins, eps, g)
        return q.real.astype(complex) if self.real else q

    def run(self):
        s0 = 0.0
        q0 = self.q_at(s0)
        roots = polynomial_roots(q0)
        roots = roots[chain_order(roots)]
        self.start = roots.copy()
        m = len(roots)
        pts = roots
        order = np.argsort(_proj(pts)[0], kind="stable")
        word, events, steps = [], [], 0
        carried, basis0 = None, None
        if self.want_periods:
            basis0, _ = _basis_periods(q0, self.real)
            carried = basis0.copy()
        active = None  # current event below delta
        min_seen = np.inf

        base = np.linspace(0.0, self.path.length, int(self.path.samples * self.path.length) + 1)
        stack = []
        s = s0
        for target in base[1:]:
            stack = [target]
            while stack:
                t = stack[-1]
                if t - s < 1e-12 * max(1.0, self.path.length):
                    raise TrackingError(s, "step size underflow while tracking branch points")
                ok, new = self._try_step(s, t, pts, order, carried)
                if not ok:
                    stack.append(0.5 * (s + t))
                    if len(stack) > self.max_depth:
                        raise TrackingError(s, f"tracking ambiguity ({new})")
                    continue
                stack.pop()
                pts, new_order, swaps, carried = new
                for i in swaps:
                    # strand entering position i+1 from the left: sign from which side it passes
                    left, right = order[i], order[i + 1]
                    im = _proj(pts)[1]
                    gen = (i + 1, 1 if im[left] < im[right] else -1)
                    if word and word[-1] == (gen[0], -gen[1]):
                        word.pop()  # free reduction
                    else:
                        word.append(gen)
                order = new_order
                s = t
                steps += 1
                d = np.abs(pts[:, None] - pts[None, :]) + np.diag(np.full(m, np.inf))
                k = np.unravel_index(np.argmin(d), d.shape)
                dmin = float(d[k])
                min_seen = min(min_seen, dmin)
                if dmin < self.delta:
                    if active is None:
                        active = {"s_enter": s, "s_min": s, "pair": sorted(int(x) for x in k),
                                  "min_distance": dmin}
                    elif dmin < active["min_distance"]:
                        active.update(s_min=s, pair=sorted(int(x) for x in k), min_distance=dmin)
                elif active is not None:
                    active["s_exit"] = s
                    events.append(active)
                    active = None
        if active is not None:
            active["s_exit"] = s
            events.append(active)

        # strand k started at chain position k; permutation[k] = chain position at the end
        end = pts
        end_chain = chain_order(end)
        position = np.empty(m, int)
        position[end_chain] = np.arange(m)
        perm = [int(position[k]) for k in range(m)]

        matrix = None
        if self.want_periods:
            end_basis, _ = _basis_periods(self.q_at(self.path.length), self.real)
            C = np.linalg.solve(_realify(end_basis), _realify(carried))
            Ci = np.round(C)
            if np.max(np.abs(C - Ci)) > 1e-6:
                raise MonodromyError(f"non-integer monodromy entries (off by {np.max(np.abs(C - Ci)):.2e})")
            matrix = np.array([[int(x) for x in row] for row in Ci], dtype=object)
        for ev in events:
            ev["values"] = {k: _jsonable(v) for k, v in self.path.values(ev["s_min"]).items()}
        return MonodromyResult(perm, word, matrix, events, self.start, end, steps,
                               {"min_distance": min_seen})

    def _try_step(self, s, t, pts, order, carried):
        q = self.q_at(t)
        new = polynomial_roots(q, x0=pts)
        cost = np.abs(pts[:, None] - new[None, :])
        _, col = linear_sum_assignment(cost)
        new = new[col]
        m = len(pts)
        d = np.abs(pts[:, None] - pts[None, :]) + np.diag(np.full(m, np.inf))
        move = np.abs(new - pts)
        if np.max(move) > 0.3 * d.min():
            return False, "branch points move too far in one step"
        new_order = np.argsort(_proj(new)[0], kind="stable")
        swaps = _adjacent_swaps(order, new_order)
        if swaps is None:
            return False, "projection order changes by more than adjacent swaps"
        if self.want_periods:
            try:
                basis, _ = _basis_periods(q, self.real)
            except CurveError as exc:
                return False, str(exc)
            C = np.linalg.solve(_realify(basis), _realify(carried))
            Ci = np.round(C)
            if np.max(np.abs(C - Ci)) > 0.1:
                return False, "carried cycles not close to integer combinations"
            snapped = basis @ Ci
            jump = np.max(np.abs(snapped - carried), axis=0) / np.max(np.abs(carried), axis=0)
            if np.max(jump) > 0.25:
                return False, "carried periods jump"
            carried = snapped
        return True, (new, new_order, swaps, carried)


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag] if v.imag else v.real
    return float(v)


def sweep_and_detect(path: ParameterPath, state: ClassicalSpinState, spec: EnergySpectrum,
                     delta: float, max_depth: int = 40) -> MonodromyResult:
    """Track branch points along ``path`` and record coalescence events (distance < ``delta``)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return _Tracker(path, state, spec, delta, False, max_depth).run()


def monodromy_matrix(path: ParameterPath, state: ClassicalSpinState, spec: EnergySpectrum,
                     delta: float = 1e-2, max_depth: int = 40) -> MonodromyResult:
    """Integer action of a closed path on the (alpha, beta) homology basis.

    Column ``j`` holds the carried basis cycle ``j`` expanded in the basis at
    the end of the path, so concatenating ``p1`` then ``p2`` gives ``M2 @ M1``.
    """
    if not path.closed:
        raise ValueError("monodromy needs a closed path")
    res = _Tracker(path, state, spec, delta, True, max_depth).run()
    M = res.matrix
    if not is_symplectic(M):
        raise MonodromyError("monodromy matrix is not symplectic")
    if integer_det(M) != 1:
        raise MonodromyError("monodromy matrix does not have determinant 1")
    return res


# --- oscillation period probe -------------------------------------------------------

def oscillation_period(state: ClassicalSpinState, spec: EnergySpectrum, t_max: float,
                       tol: float = 1e-10, samples: int = 4001) -> float:
    """Mean time between upward median crossings of ``u_g(t)`` (Dubrovin flow).

    ``u_g`` is projected on its principal axis in the complex plane first.

    Returns ``inf`` when fewer than two crossings occur before ``t_max``.
    """
    from .curve import build_curve, separation_roots
    from .dubrovin import integrate_dubrovin

    curve = build_curve(state, spec)
    sr = separation_roots(state, spec, curve=curve)
    ts = np.linspace(0.0, t_max, samples)
    tr = integrate_dubrovin(sr.u, sr.y, curve, spec, state, t_max, tol, t_eval=ts)
    w = tr.u[:, -1] - tr.u[:, -1].mean()
    pts = np.vstack([w.real, w.imag])
    _, vecs = np.linalg.eigh(pts @ pts.T)
    x = vecs[:, -1] @ pts
    mid = np.median(x)
    up = np.nonzero((x[:-1] < mid) & (x[1:] >= mid))[0]
    if len(up) < 2:
        return math.inf
    # linear interpolation of the crossing times
    tc = ts[up] + (mid - x[up]) / (x[up + 1] - x[up]) * (ts[up + 1] - ts[up])
    return float(np.mean(np.diff(tc)))


def probe_events(result: MonodromyResult, path: ParameterPath, state, spec, ds: float,
                 t_max: float, workers: int = 1) -> MonodromyResult:
    """Attach oscillation-period estimates at ``s_min - ds``, ``s_min`` and ``s_min + ds`` to each event.

    Probes run on up to ``workers`` threads; results are merged in event order.
    """
    jobs = [(i, label, s) for i, ev in enumerate(result.events)
            for label, s in (("before", ev["s_min"] - ds), ("at", ev["s_min"]), ("after", ev["s_min"] + ds))]

    def one(job):
        spins, eps, g = realize(path.values(job[2]), state, spec)
        if isinstance(g, complex) or np.any(np.diff(eps) <= 0):
            return None
        try:
            return oscillation_period(ClassicalSpinState(spins), EnergySpectrum(eps, g), t_max)
        except (CurveError, RuntimeError):
            return None

    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, jobs))
    else:
        values = [one(j) for j in jobs]
    for ev in result.events:
        ev["period_estimates"] = {}
    for (i, label, _), v in zip(jobs, values):
        result.events[i]["period_estimates"][label] = v
    return result


# --- fractional levels --------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibleLevel:
    m: int
    k: Fraction
    k_plus_2: Fraction
    c: Fraction
    q_phase: Fraction   # q = exp(i pi q_phase), q_phase reduced to [0, 2)
    q: complex

    def to_dict(self) -> dict:
        return {"m": self.m, "k": str(self.k), "k_plus_2": str(self.k_plus_2), "c": str(self.c),
                "q_phase_over_pi": str(self.q_phase), "q": [self.q.real, self.q.imag]}


def admissible_levels(m: int) -> AdmissibleLevel:
    """Level ``k = 2(1-8m)/(1+8m)``, central charge ``3k/(k+2)`` and ``q = exp(i pi/(k+2))``."""
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ValueError("m must be a positive integer")
    m = int(m)
    k = Fraction(2 * (1 - 8 * m), 1 + 8 * m)
    kp2 = k + 2
    c = 3 * k / kp2
    phase = (1 / kp2) % 2
    q = cmath.exp(1j * math.pi * phase)
    return AdmissibleLevel(m, k, kp2, c, phase, q)
