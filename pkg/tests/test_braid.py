import math

import numpy as np
import pytest

from gaudin_forge.braid import (MonodromyError, ParameterPath, admissible_levels, integer_det, integer_rank,
                                is_symplectic, monodromy_matrix, oscillation_period, realize,
                                sweep_and_detect, symplectic_form)
from gaudin_forge.curve import build_curve, period_data
from gaudin_forge.jacobian import AbelContext, analytic_velocity
from gaudin_forge.model import ClassicalSpinState, EnergySpectrum

G_STAR = 0.01549164184248602 + 0.6623151371133174j


@pytest.fixture(scope="module")
def seed7():
    return ClassicalSpinState.random(2, np.random.default_rng(7)), EnergySpectrum((0.0, 1.0), 1.0)


def test_path_validation():
    with pytest.raises(ValueError):
        ParameterPath([{"g": 1.0}])
    with pytest.raises(ValueError):
        ParameterPath([{"g": 1.0}, {"eps:0": 0.1}])
    with pytest.raises(ValueError):
        ParameterPath([{"g": 1.0}, {"g": 2.0}], closed=True)
    with pytest.raises(ValueError):
        ParameterPath.lasso(1.0, 1.05, 0.1)
    with pytest.raises(ValueError):
        ParameterPath([{"g": 1.0}, {"g": 2.0}]).then(ParameterPath([{"g": 3.0}, {"g": 1.0}]))


def test_path_values_and_realize(seed7):
    st, spec = seed7
    p = ParameterPath([{"g": 1.0, "eps:1": 1.0}, {"g": 2 + 2j, "eps:1": 3.0}])
    v = p.values(0.5)
    assert v["g"] == 1.5 + 1j and v["eps:1"] == 2.0
    spins, eps, g = realize({"radius:0": 2.0, "spin:1:theta": 0.0}, st, spec)
    assert abs(np.linalg.norm(spins[0]) - 2.0) < 1e-14
    np.testing.assert_allclose(spins[1], [0, 0, np.linalg.norm(st.spins[1])], atol=1e-14)
    with pytest.raises(ValueError):
        realize({"eps:5": 1.0}, st, spec)


def test_exact_integer_helpers():
    M = np.array([[2, 1], [1, 1]], dtype=object)
    assert integer_det(M) == 1 and is_symplectic(M)
    assert integer_det(np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=object)) == -1
    assert integer_rank(np.array([[1, 2], [2, 4]], dtype=object)) == 1
    assert integer_rank(np.zeros((3, 3), dtype=object)) == 0
    J = symplectic_form(2)
    assert is_symplectic(J) and not is_symplectic(np.diag([2, 1, 1, 1]).astype(object))


def test_contractible_loop_is_trivial(seed7):
    st, spec = seed7
    res = monodromy_matrix(ParameterPath.lasso(1.0, 2.5 + 0.3j, 0.2), st, spec)
    assert np.array_equal(res.matrix, np.eye(2, dtype=int).astype(object))
    assert res.permutation == sorted(res.permutation)


def test_reversed_loop_gives_inverse(seed7):
    st, spec = seed7
    p = ParameterPath.lasso(1.0, G_STAR, 0.1)
    M = monodromy_matrix(p, st, spec).matrix
    Mr = monodromy_matrix(p.reversed(), st, spec).matrix
    assert np.array_equal(M.dot(Mr), np.eye(2, dtype=int).astype(object))


def test_sweep_records_the_coalescence(seed7):
    st, spec = seed7
    res = sweep_and_detect(ParameterPath.lasso(1.0, G_STAR, 0.1), st, spec, delta=0.4)
    assert len(res.events) >= 1
    # the braid word's permutation matches the tracked permutation
    perm = list(range(len(res.permutation)))
    for i, _ in res.braid_word:
        perm[i - 1], perm[i] = perm[i], perm[i - 1]
    assert sorted(perm) == sorted(res.permutation)


def test_open_path_rejected(seed7):
    st, spec = seed7
    with pytest.raises(ValueError):
        monodromy_matrix(ParameterPath([{"g": 1.0}, {"g": 2.0}]), st, spec)
    with pytest.raises(ValueError):
        sweep_and_detect(ParameterPath([{"g": 1.0}, {"g": 2.0}]), st, spec, delta=0.0)


@pytest.mark.parametrize("seed", [7, 1])
def test_oscillation_period_matches_velocity(seed):
    # genus one: u(t) is periodic with period 1/|V|
    st = ClassicalSpinState.random(2, np.random.default_rng(seed))
    spec = EnergySpectrum((0.0, 1.0), 1.0)
    V = analytic_velocity(AbelContext(build_curve(st, spec)))
    T = oscillation_period(st, spec, 12 / abs(V[0]))
    assert abs(T * abs(V[0]) - 1) < 1e-6


def test_admissible_levels():
    lv = admissible_levels(1)
    assert str(lv.k) == "-14/9" and str(lv.c) == "-21/2"
    assert abs(lv.q - np.exp(1j * math.pi * 9 / 4)) < 1e-14
    for bad in (0, -3, 1.5):
        with pytest.raises(ValueError):
            admissible_levels(bad)
