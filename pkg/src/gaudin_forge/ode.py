"""Embedded Dormand-Prince 5(4) integrator with PI step-size control.

Shared by the spin equations of motion and the Dubrovin equations so that
tolerances mean the same thing in both places.  Works on real or complex
state vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4
_A_ROWS = [np.array(row) for row in _A]

# PI controller gains (Gustafsson); exponents are divided by the order 5.
_BETA1 = 0.7 / 5
_BETA2 = 0.4 / 5
_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 5.0


class StepSizeUnderflow(RuntimeError):
    """Raised when the controller asks for a step below the floating-point floor."""

    def __init__(self, t: float, h: float):
        super().__init__(f"step size underflow at t={t!r} (h={h!r})")
        self.t = t
        self.h = h


@dataclass
class ODEResult:
    t: np.ndarray
    y: np.ndarray
    accepted: int
    rejected: int
    stopped_early: bool = False
    t_stop: Optional[float] = None
    y_stop: Optional[np.ndarray] = None
    h_last: Optional[float] = None
    extras: dict = field(default_factory=dict)


def _error_norm(err, y_old, y_new, tol):
    scale = tol * (1.0 + np.maximum(np.abs(y_old), np.abs(y_new)))
    return float(np.sqrt(np.mean((np.abs(err) / scale) ** 2)))


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    t_span: tuple[float, float],
    tol: float,
    t_eval: Optional[Sequence[float]] = None,
    h0: Optional[float] = None,
    max_steps: int = 2_000_000,
    on_step: Optional[Callable[[float, np.ndarray], None]] = None,
    stop_when: Optional[Callable[[float, np.ndarray], bool]] = None,
) -> ODEResult:
    """Integrate ``y' = rhs(t, y)`` over ``t_span`` (forward or backward).

    ``tol`` is the per-step local error target, applied as a mixed
    absolute/relative scale ``tol * (1 + |y|)``.  Steps are clipped so that
    every point of ``t_eval`` is hit exactly (no interpolation).  ``on_step``
    is called after every accepted step; ``stop_when`` can end the run after
    an accepted step, in which case the returned result carries ``t_stop``
    and ``y_stop``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0, t1 = float(t_span[0]), float(t_span[1])
    direction = 1.0 if t1 >= t0 else -1.0
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float).copy()
    if t_eval is None:
        targets = np.array([t1])
    else:
        targets = np.asarray(t_eval, dtype=float)
        if np.any(direction * np.diff(targets) <= 0):
            raise ValueError("t_eval must be strictly monotone in the integration direction")
        if targets.size and (direction * (targets[0] - t0) < 0 or direction * (targets[-1] - t1) > 0):
            raise ValueError("t_eval outside t_span")

    out_t: list[float] = []
    out_y: list[np.ndarray] = []
    ti = 0
    while ti < len(targets) and targets[ti] == t0:
        out_t.append(t0)
        out_y.append(y.copy())
        ti += 1

    t = t0
    span = abs(t1 - t0)
    if span == 0.0:
        return ODEResult(np.array(out_t), np.array(out_y), 0, 0)

    k1 = np.asarray(rhs(t, y))
    if h0 is None:
        d0 = np.sqrt(np.mean(np.abs(y) ** 2)) + 1e-12
        d1 = np.sqrt(np.mean(np.abs(k1) ** 2)) + 1e-12
        h = min(0.01 * d0 / d1, span, 1e-2 * max(span, 1.0))
        h = max(h, 1e-6 * span)
    else:
        h = abs(h0)
    err_prev = 1e-4
    accepted = rejected = 0
    ks = [None] * 7

    while direction * (t1 - t) > 0:
        if accepted + rejected > max_steps:
            raise RuntimeError(f"max_steps exceeded at t={t!r}")
        next_target = targets[ti] if ti < len(targets) else t1
        remaining = abs(next_target - t)
        clipped = h >= remaining
        h_try = remaining if clipped else h
        if h_try < 1e-14 * max(abs(t), 1.0) and not clipped:
            raise StepSizeUnderflow(t, h_try)
        hs = direction * h_try
        ks[0] = k1
        for s in range(1, 7):
            K = np.array(ks[:s])
            acc = y + hs * (_A_ROWS[s] @ K)
            ks[s] = np.asarray(rhs(t + _C[s] * hs, acc))
        y_new = acc  # last stage argument is the 5th-order solution (FSAL)
        err_vec = hs * (_E @ np.array(ks))
        err = _error_norm(err_vec, y, y_new, tol)
        if not np.isfinite(err):
            rejected += 1
            h = h_try * _FAC_MIN
            continue
        if err <= 1.0:
            t = next_target if clipped else t + hs
            y = y_new
            k1 = ks[6]
            accepted += 1
            if clipped and ti < len(targets) and t == targets[ti]:
                out_t.append(t)
                out_y.append(y.copy())
                ti += 1
            if on_step is not None:
                on_step(t, y)
            if err == 0.0:
                fac = _FAC_MAX
            else:
                fac = _SAFETY * err ** (-_BETA1) * err_prev ** _BETA2
            err_prev = max(err, 1e-4)
            if not clipped:
                h = h_try * min(_FAC_MAX, max(_FAC_MIN, fac))
            if stop_when is not None and stop_when(t, y):
                return ODEResult(np.array(out_t), np.array(out_y), accepted, rejected,
                                 stopped_early=direction * (t1 - t) > 0,
                                 t_stop=t, y_stop=y.copy(), h_last=h)
        else:
            rejected += 1
            h = h_try * max(_FAC_MIN, _SAFETY * err ** (-1 / 5))
    return ODEResult(np.array(out_t), np.array(out_y), accepted, rejected,
                     t_stop=t, y_stop=y.copy(), h_last=h)
