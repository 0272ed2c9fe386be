import cmath

import mpmath
import numpy as np
import pytest

from gaudin_forge.theta import ThetaContext, ThetaError, theta, theta_gradient, theta_normalized


def test_genus_one_matches_jacobi_theta3():
    tau = 0.3 + 1.1j
    ctx = ThetaContext([[tau]])
    q = cmath.exp(1j * cmath.pi * tau)
    for z in (0.1, 0.37 - 0.2j, -0.8 + 0.5j):
        ref = complex(mpmath.jtheta(3, mpmath.pi * z, q))
        assert abs(theta([z], ctx) - ref) < 1e-13 * max(1, abs(ref))


def test_product_of_genus_one_for_diagonal_b():
    B = np.diag([1.2j, 0.5 + 0.9j])
    ctx = ThetaContext(B)
    c1, c2 = ThetaContext([[B[0, 0]]]), ThetaContext([[B[1, 1]]])
    z = np.array([0.2 + 0.1j, -0.4 + 0.3j])
    assert abs(theta(z, ctx) - theta([z[0]], c1) * theta([z[1]], c2)) < 1e-13


def test_gradient_matches_finite_differences():
    B = np.array([[1.0j + 0.2, 0.3 + 0.1j], [0.3 + 0.1j, 1.4j - 0.1]])
    ctx = ThetaContext(B)
    z = np.array([0.31 + 0.2j, -0.12 - 0.1j])
    val, grad = theta_gradient(z, ctx)
    scale = theta(z, ctx) / theta_normalized(z, ctx)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (theta(z + e, ctx) - theta(z - e, ctx)) / (2 * h)
        assert abs(grad[j] * scale - fd) < 1e-7 * max(1, abs(fd))
    assert abs(val * scale - theta(z, ctx)) < 1e-13 * abs(theta(z, ctx))


def test_bad_period_matrices():
    with pytest.raises(ThetaError):
        ThetaContext([[1j, 0.5], [0.2, 1j]])
    with pytest.raises(ThetaError):
        ThetaContext([[-1j]])
    with pytest.raises(ThetaError):
        theta([0.1, 0.2], ThetaContext([[1j]]))
