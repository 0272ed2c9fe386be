"""Pairing-model data types and the classical Gaudin spin dynamics.

Conventions used throughout the package:

* ``S^- = S^1 + i S^2`` and ``S^+ = S^1 - i S^2``; ``J^- = sum_i S^-_i``.
* Classical Hamiltonian ``H = sum_l 2 eps_l S^3_l - (g/2) J^+ J^-``.
* Equations of motion ``dS_i/dt = S_i x dH/dS_i``; for a single spin this
  gives ``i dJ^-/dt = J^- (g J^3 + 2 eps)``.
* Gaudin invariants ``R_l = S^3_l - (g/2) sum_{l' != l} S_l.S_l' / (eps_l - eps_l')``
  Poisson-commute with ``H`` under this flow.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import ode


class ModelError(ValueError):
    """Invalid model input (bad spectrum, shape mismatch, zero-length spin)."""


@dataclass(frozen=True)
class EnergySpectrum:
    """One-particle levels ``epsilons``, coupling ``g`` and pair count ``N``."""

    epsilons: tuple
    g: float
    N: int = 0

    def __post_init__(self):
        eps = tuple(float(e) for e in np.atleast_1d(np.asarray(self.epsilons, dtype=float)))
        object.__setattr__(self, "epsilons", eps)
        errors = []
        if len(eps) < 1:
            errors.append("epsilons: need at least one level")
        if not all(np.isfinite(eps)):
            errors.append("epsilons: non-finite value")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            errors.append("epsilons: must be strictly increasing (distinct)")
        g = self.g
        if isinstance(g, complex) or np.iscomplexobj(g):
            errors.append("g: must be real")
        elif not np.isfinite(g) or g == 0:
            errors.append("g: must be finite and nonzero")
        else:
            object.__setattr__(self, "g", float(g))
        if not isinstance(self.N, (int, np.integer)) or not 0 <= int(self.N) <= len(eps):
            errors.append(f"N: must be an integer in [0, {len(eps)}]")
        else:
            object.__setattr__(self, "N", int(self.N))
        if errors:
            raise ModelError("; ".join(errors))

    @property
    def n(self) -> int:
        return len(self.epsilons)

    @property
    def eps(self) -> np.ndarray:
        return np.array(self.epsilons)


@dataclass(frozen=True)
class ClassicalSpinState:
    """``n`` classical spin vectors; radii are cached at construction."""

    spins: np.ndarray
    radii: np.ndarray = field(init=False)

    def __post_init__(self):
        s = np.array(self.spins, dtype=float)
        if s.ndim != 2 or s.shape[1] != 3:
            raise ModelError("spins: expected an (n, 3) array")
        if not np.all(np.isfinite(s)):
            raise ModelError("spins: non-finite component")
        r = np.linalg.norm(s, axis=1)
        if np.any(r <= 0):
            raise ModelError("spins: every spin needs a positive radius")
        s.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "spins", s)
        object.__setattr__(self, "radii", r)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, radii=None) -> "ClassicalSpinState":
        """Uniform directions on the sphere with the given radii (default 1)."""
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1)[:, None]
        r = np.ones(n) if radii is None else np.broadcast_to(np.asarray(radii, float), (n,))
        return cls(v * r[:, None])

    @property
    def n(self) -> int:
        return self.spins.shape[0]

    @property
    def s_minus(self) -> np.ndarray:
        return self.spins[:, 0] + 1j * self.spins[:, 1]

    @property
    def s_plus(self) -> np.ndarray:
        return self.spins[:, 0] - 1j * self.spins[:, 1]

    @property
    def j3(self) -> float:
        return float(self.spins[:, 2].sum())

    @property
    def j_minus(self) -> complex:
        return complex(self.s_minus.sum())


@dataclass
class Trajectory:
    times: np.ndarray
    spins: np.ndarray  # shape (T, n, 3)
    accepted: int
    rejected: int
    max_drift: dict

    def __post_init__(self):
        if len(self.times) != len(self.spins):
            raise ModelError("times and states differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ModelError("times must be strictly increasing")

    def state(self, i: int) -> ClassicalSpinState:
        return ClassicalSpinState(self.spins[i])

    @property
    def j_minus(self) -> np.ndarray:
        return (self.spins[:, :, 0] + 1j * self.spins[:, :, 1]).sum(axis=1)


def _check(state: ClassicalSpinState, spec: EnergySpectrum):
    if state.n != spec.n:
        raise ModelError(f"state has {state.n} spins but spectrum has {spec.n} levels")


def _hamiltonian_array(s: np.ndarray, eps: np.ndarray, g: float) -> float:
    j = s.sum(axis=0)
    return float(2.0 * eps @ s[:, 2] - 0.5 * g * (j[0] ** 2 + j[1] ** 2))


def _invariants_array(s: np.ndarray, eps: np.ndarray, g: float) -> np.ndarray:
    dots = s @ s.T
    diff = eps[:, None] - eps[None, :]
    np.fill_diagonal(diff, 1.0)
    w = dots / diff
    np.fill_diagonal(w, 0.0)
    return s[:, 2] - 0.5 * g * w.sum(axis=1)


def _rhs_array(s: np.ndarray, eps: np.ndarray, g: float) -> np.ndarray:
    # S x (-g J^1, -g J^2, 2 eps), written out to avoid np.cross overhead
    j1 = -g * s[:, 0].sum()
    j2 = -g * s[:, 1].sum()
    out = np.empty_like(s)
    out[:, 0] = s[:, 1] * 2.0 * eps - s[:, 2] * j2
    out[:, 1] = s[:, 2] * j1 - s[:, 0] * 2.0 * eps
    out[:, 2] = s[:, 0] * j2 - s[:, 1] * j1
    return out


def hamiltonian(state: ClassicalSpinState, spec: EnergySpectrum) -> float:
    _check(state, spec)
    return _hamiltonian_array(state.spins, spec.eps, spec.g)


def gaudin_invariants(state: ClassicalSpinState, spec: EnergySpectrum) -> np.ndarray:
    """Return ``(R_1, ..., R_n)``."""
    _check(state, spec)
    return _invariants_array(state.spins, spec.eps, spec.g)


def spin_time_derivative(state: ClassicalSpinState, spec: EnergySpectrum) -> np.ndarray:
    """``dS_i/dt`` as an ``(n, 3)`` array."""
    _check(state, spec)
    return _rhs_array(state.spins, spec.eps, spec.g)


def _audit_values(s, eps, g):
    j3 = s[:, 2].sum()
    return np.concatenate(([_hamiltonian_array(s, eps, g), j3],
                           _invariants_array(s, eps, g), np.linalg.norm(s, axis=1)))


def integrate_spins(
    state0: ClassicalSpinState,
    spec: EnergySpectrum,
    t_end: float,
    tol: float,
    t_eval: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Adaptive DP5(4) integration of the spin flow up to ``t_end``.

    The returned diagnostics hold the largest deviation of each conserved
    quantity seen over every accepted step (not just at output times).
    Raises :class:`ode.StepSizeUnderflow` if the controller collapses.
    """
    _check(state0, spec)
    if tol <= 0 or t_end <= 0:
        raise ModelError("t_end and tol must be positive")
    eps, g, n = spec.eps, spec.g, spec.n
    ref = _audit_values(state0.spins, eps, g)
    worst = np.zeros_like(ref)

    def rhs(t, y):
        return _rhs_array(y.reshape(n, 3), eps, g).ravel()

    def audit(t, y):
        np.maximum(worst, np.abs(_audit_values(y.reshape(n, 3), eps, g) - ref), out=worst)

    if t_eval is None:
        t_eval = np.array([0.0, t_end])
    res = ode.integrate(rhs, state0.spins.ravel(), (0.0, t_end), tol, t_eval=t_eval, on_step=audit)
    drift = {
        "H": float(worst[0]),
        "J3": float(worst[1]),
        "R": [float(x) for x in worst[2:2 + n]],
        "radius": [float(x) for x in worst[2 + n:]],
    }
    return Trajectory(res.t, res.y.reshape(-1, n, 3), res.accepted, res.rejected, drift)
