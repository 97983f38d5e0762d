import numpy as np
import pytest

from charwave.curves import RegularizedCurve
from charwave.initialdata import InitialData
from charwave.invariants import chi_base_independence

CUBIC = RegularizedCurve.from_text("x^3 + eps*x")


def test_chi_zero_psi():
    d = InitialData.from_text("x^2", "0")
    assert np.all(d.chi(CUBIC, np.linspace(-2, 2, 9), 0.1) == 0)


def test_chi_unit_psi_is_identity():
    d = InitialData.from_text("0", "1")
    ys = np.linspace(-2, 2, 9)
    assert np.allclose(d.chi(CUBIC, ys, 0.1), ys, atol=1e-13)


def test_chi_linear_curve():
    d = InitialData.from_text("0", "x")
    c = RegularizedCurve.from_text("eps*x", inverse="y/eps")
    ys = np.linspace(-1, 1, 11)
    assert np.allclose(d.chi(c, ys, 0.2), ys**2 / 0.4, rtol=1e-12, atol=1e-14)


def test_u0_on_curve_is_phi():
    d = InitialData.from_text("sin(x)", "cos(x)")
    for x in (-0.7, 0.1, 1.3):
        assert d.u0(CUBIC, x, CUBIC.eval(x, 0.1), 0.1) == pytest.approx(np.sin(x), abs=1e-13)


def test_u0_unit_psi():
    d = InitialData.from_text("0", "1")
    assert d.u0(CUBIC, 0.4, 1.5, 0.1) == pytest.approx(1.5 - CUBIC.eval(0.4, 0.1), abs=1e-13)


def test_u0_example1_point():
    d = InitialData.from_text("x^2", "1")
    assert d.u0(CUBIC, 1.0, 2.0, 0.1) == pytest.approx(1.9, abs=1e-12)


def test_grid_and_table_agree_with_pointwise():
    d = InitialData.from_text("x^2", "cos(x)")
    xs, ys = np.linspace(-1, 1, 7), np.linspace(-1, 1, 5)
    G = d.u0_grid(CUBIC, 0.1, xs, ys)
    for i in (0, 3, 6):
        for j in (0, 2, 4):
            assert G[i, j] == pytest.approx(d.u0(CUBIC, xs[i], ys[j], 0.1), abs=1e-12)


def test_base_point_independence():
    d = InitialData.from_text("x^2", "cos(x)")
    r = chi_base_independence(d, CUBIC, np.random.default_rng(3), n=20)
    assert r.passed, r.line()
