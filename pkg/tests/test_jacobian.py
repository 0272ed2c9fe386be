import numpy as np
import pytest

from gaudin_forge.curve import build_curve, separation_roots
from gaudin_forge.jacobian import (AbelContext, AbelError, SamplingError, analytic_velocity,
                                   calibrate_velocity, flow, invert_divisor, lattice_distance,
                                   nearest_small, reconstruct_observables, reduce_point)
from gaudin_forge.model import ClassicalSpinState, EnergySpectrum
from gaudin_forge.theta import theta_normalized


def _ctx(n, seed):
    rng = np.random.default_rng(seed)
    spec = EnergySpectrum(np.sort(rng.uniform(0, 2, n)), 1.0)
    st = ClassicalSpinState.random(n, rng)
    cv = build_curve(st, spec)
    return spec, st, cv, AbelContext(cv)


@pytest.fixture(scope="module")
def genus2():
    return _ctx(3, 2)


def test_reduce_point_and_lattice_distance():
    B = np.array([[1.1j + 0.2, 0.3j], [0.3j, 0.9j - 0.1]])
    r = np.array([0.1 + 0.05j, -0.2 + 0.1j])
    z = r + np.array([2, -1]) + B @ np.array([1, 3])
    rr, m, n = reduce_point(z, B)
    np.testing.assert_allclose(rr, r, atol=1e-12)
    np.testing.assert_array_equal(n, [1, 3])
    assert lattice_distance(z - r, B) < 1e-12
    assert lattice_distance(r, B) > 0.05
    np.testing.assert_allclose(nearest_small(z, B), r, atol=1e-12)


def test_sheets_sum_to_image_of_infinity_minus(genus2, rng):
    # the hyperelliptic involution maps A(P) to A(inf-) - A(P)
    _, _, cv, ctx = genus2
    for lam in rng.normal(size=4) + 1j * rng.normal(size=4):
        d = ctx.abel(lam, 1) + ctx.abel(lam, -1) - ctx.A_inf_minus
        assert lattice_distance(d, ctx.B) < 1e-10


def test_abel_derivative_is_the_differential(genus2):
    _, _, cv, ctx = genus2
    lam, h = 0.37 + 1.9j, 1e-5
    fd = (ctx.abel(lam + h) - ctx.abel(lam - h)) / (2 * h)
    np.testing.assert_allclose(fd, ctx.omega_plus(lam)[:, 0], rtol=1e-7)


def test_riemann_vanishing(genus2, rng):
    _, _, _, ctx = genus2
    for lam in rng.normal(size=3) + 1j * rng.normal(size=3):
        assert abs(theta_normalized(ctx.abel(lam) + ctx.K, ctx.theta)) < 1e-9
    # generic degree-g divisor: theta does not vanish
    assert abs(theta_normalized(ctx.abel(0.3 + 2j) + ctx.abel(-0.8 + 1j, -1) + ctx.K, ctx.theta)) > 1e-4


def test_genus_one_riemann_vector_is_the_odd_half_period():
    _, _, _, ctx = _ctx(2, 1)
    K = ctx.K
    half = 0.5 + 0.5 * ctx.B[0, 0]
    assert lattice_distance(K - half, ctx.B) < 1e-10


def test_invert_divisor_round_trip(genus2, rng):
    _, _, _, ctx = genus2
    lams = [0.4 + 1.3j, 1.6 - 0.7j]
    z = ctx.divisor_image(lams, [1, -1])
    pts = invert_divisor(z, ctx)
    z2 = ctx.divisor_image([p[0] for p in pts], [p[1] for p in pts])
    assert lattice_distance(z2 - z, ctx.B) < 1e-9


def test_velocity_analytic_matches_calibrated(genus2):
    spec, st, cv, ctx = genus2
    sr = separation_roots(st, spec, curve=cv)
    V = calibrate_velocity(ctx, sr.u, sr.y, spec, st)
    np.testing.assert_allclose(V, analytic_velocity(ctx), rtol=1e-6, atol=1e-8)


def test_flow_modes():
    B = np.array([[1.0j]])
    z = flow(np.array([0.2 + 0.1j]), 2.0, "calibrated", velocity=[0.5])
    np.testing.assert_allclose(z.z, [1.2 + 0.1j])
    p = flow(np.array([0.0j, 0.0j]), 0.5, "paper")
    np.testing.assert_allclose(p.z, [0, 0.5j])
    r = flow(np.array([0.2 + 0.1j]), 2.0, "calibrated", velocity=[0.5], B=B)
    assert r.reduced and abs(r.z[0] - (0.2 + 0.1j)) < 1e-12
    with pytest.raises(ValueError):
        flow(np.zeros(1), 1.0, "calibrated")
    with pytest.raises(ValueError):
        flow(np.zeros(1), 1.0, "other", velocity=[1])


def test_genus_zero_has_no_abel_map():
    spec = EnergySpectrum((0.0,), 1.0)
    cv = build_curve(ClassicalSpinState([[0.3, 0.4, 0.5]]), spec)
    with pytest.raises(AbelError):
        AbelContext(cv)


def test_reconstruct_observables_checks():
    spec = EnergySpectrum((0.0, 1.0), 1.0)
    st = ClassicalSpinState([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    with pytest.raises(ValueError):
        reconstruct_observables(np.linspace(1, 2, 20), np.zeros((20, 1)), st, spec)
    t = np.linspace(0, 10, 15)
    with pytest.raises(SamplingError):
        reconstruct_observables(t, np.exp(5j * t)[:, None], st, spec)
    # constant u: the phase is linear in t
    U, jm = reconstruct_observables(t, np.full((15, 1), 0.25 + 0j), st, spec)
    c = spec.g * st.j3 + 2 * 1.0 - 0.5
    np.testing.assert_allclose(jm, st.j_minus * np.exp(-1j * c * t), rtol=1e-12)
