import numpy as np
import pytest

from gaudin_forge.curve import LaxMatrix, build_curve, separation_roots
from gaudin_forge.dubrovin import dubrovin_rhs, integrate_dubrovin, spin_b_roots
from gaudin_forge.model import ClassicalSpinState, EnergySpectrum, integrate_spins, spin_time_derivative


def _setup(n, seed):
    rng = np.random.default_rng(seed)
    spec = EnergySpectrum(np.sort(rng.uniform(0, 2, n)), 1.0)
    st = ClassicalSpinState.random(n, rng)
    cv = build_curve(st, spec)
    return spec, st, cv, separation_roots(st, spec, curve=cv)


@pytest.mark.parametrize("n,seed", [(2, 1), (3, 2), (4, 3)])
def test_rhs_matches_implicit_differentiation(n, seed):
    # b's numerator is linear in the spins, so du/dt = -b_t(u) / b_lambda(u)
    spec, st, cv, sr = _setup(n, seed)
    _, pb, _ = LaxMatrix(st.spins, spec.eps, spec.g).numerators()
    _, pb_dot, _ = LaxMatrix(spin_time_derivative(st, spec), spec.eps, spec.g).numerators()
    expect = -np.polyval(pb_dot, sr.u) / np.polyval(np.polyder(pb), sr.u)
    got = dubrovin_rhs(sr.u, sr.sheets, cv)
    np.testing.assert_allclose(got, expect, rtol=1e-9)


def test_short_run_agrees_with_spin_flow():
    spec, st, cv, sr = _setup(3, 5)
    ts = np.linspace(0, 2, 41)
    dv = integrate_dubrovin(sr.u, sr.y, cv, spec, st, 2.0, 1e-12, t_eval=ts)
    sp = integrate_spins(st, spec, 2.0, 1e-12, t_eval=ts)
    ub = spin_b_roots(sp.spins, spec, reference=sr.u)
    assert np.max(np.abs(np.sort_complex(dv.u[-1]) - np.sort_complex(ub[-1]))) < 1e-8
    assert np.max(np.abs(dv.jminus - sp.j_minus)) < 1e-8


def test_forward_then_backward_returns():
    spec, st, cv, sr = _setup(2, 1)
    fwd = integrate_dubrovin(sr.u, sr.y, cv, spec, st, 3.0, 1e-12)
    sp = integrate_spins(st, spec, 3.0, 1e-12)
    st1 = ClassicalSpinState(sp.spins[-1])
    back = integrate_dubrovin(fwd.u[-1], fwd.y[-1], cv, spec, st1, -3.0, 1e-12)
    assert np.max(np.abs(back.u[-1] - sr.u)) < 1e-8


def test_projection_keeps_points_on_curve():
    spec, st, cv, sr = _setup(4, 4)
    dv = integrate_dubrovin(sr.u, sr.y, cv, spec, st, 6.0, 1e-12)
    assert dv.diagnostics["max_curve_residual"] < 1e-10


def test_argument_checks():
    spec, st, cv, sr = _setup(3, 2)
    with pytest.raises(ValueError):
        integrate_dubrovin(sr.u[:1], sr.y[:1], cv, spec, st, 1.0, 1e-10)
    with pytest.raises(ValueError):
        integrate_dubrovin(sr.u, sr.y, cv, spec, st, 1.0, 0.0)
