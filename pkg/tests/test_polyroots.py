import numpy as np
import pytest

from gaudin_forge.polyroots import aberth, polynomial_roots


def _match(a, b):
    from scipy.optimize import linear_sum_assignment
    c = np.abs(a[:, None] - b[None, :])
    r, k = linear_sum_assignment(c)
    return c[r, k].max()


@pytest.mark.parametrize("deg", [1, 2, 5, 8, 12])
def test_recovers_known_roots(deg):
    rng = np.random.default_rng(deg)
    roots = rng.normal(size=deg) + 1j * rng.normal(size=deg)
    found = polynomial_roots(np.poly(roots))
    assert _match(found, roots) < 1e-9


def test_real_conjugate_pairs():
    roots = np.array([0.3 + 1j, 0.3 - 1j, -2 + 0.5j, -2 - 0.5j])
    found = polynomial_roots(np.poly(roots).real)
    assert _match(found, roots) < 1e-12


def test_warm_start_converges_to_same_roots():
    roots = np.array([1.0, 2.0, -1.5 + 0.2j])
    c = np.poly(roots)
    x, ok = aberth(c, x0=roots + 0.05)
    assert ok
    assert _match(x, roots) < 1e-12


def test_agrees_with_companion_matrix():
    c = np.array([1.0, -3.2, 0.7, 4.1, -2.2, 0.9])
    assert _match(polynomial_roots(c), np.roots(c)) < 1e-10


def test_leading_zeros_trimmed():
    found = polynomial_roots(np.array([0.0, 0.0, 1.0, -3.0, 2.0]))
    assert _match(found, np.array([1.0, 2.0])) < 1e-13
