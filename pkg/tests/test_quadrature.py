import numpy as np
import pytest

from qsdlab._quadrature import LogAntiderivative, PanelAntiderivative, gauss_legendre


@pytest.mark.parametrize("order", [4, 8, 16])
def test_gauss_legendre_exact_for_polynomials(order):
    x, w = gauss_legendre(order)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    for p in range(2 * order):
        assert np.dot(w, x**p) == pytest.approx(1.0 / (p + 1), rel=1e-12)


def test_panel_antiderivative_matches_closed_form():
    F = PanelAntiderivative(np.cos, np.linspace(0.0, 10.0, 41), v_anchor=2.0)
    v = np.linspace(0.0, 10.0, 333)
    assert np.max(np.abs(F(v) - (np.sin(v) - np.sin(2.0)))) < 1e-12
    assert F(2.0) == pytest.approx(0.0, abs=1e-15)


def test_panel_antiderivative_shapes_and_range():
    F = PanelAntiderivative(np.exp, np.linspace(0.0, 1.0, 5), v_anchor=0.0)
    v = np.linspace(0.1, 0.9, 6).reshape(2, 3)
    assert F(v).shape == (2, 3)
    with pytest.raises(ValueError):
        F(1.5)


def test_log_antiderivative_singular_integrand():
    # int_1^x s^-1/2 ds = 2 sqrt(x) - 2, resolved down to 1e-12
    F = LogAntiderivative(lambda s: s**-0.5, 1e-12, 10.0, anchor=1.0)
    x = np.array([1e-12, 1e-6, 0.5, 3.0, 10.0])
    assert np.allclose(F(x), 2 * np.sqrt(x) - 2, rtol=1e-11, atol=1e-12)
