import numpy as np
import pytest

from charwave.association import (
    DiracTerm,
    DistributionTarget,
    HeavisideTerm,
    SupportError,
    TestFunction,
    bump_mass,
    check_association,
    pair,
    pair_field,
    pair_samples,
)
from charwave.asymptotics import geometric_eps
from charwave.curves import RegularizedCurve, build_frame
from charwave.goursat import GridField, make_grid
from charwave.invariants import pairing_linearity

EPS = geometric_eps(0.5, 0.5, 8)


def _field(values_fn, n=257):
    c = RegularizedCurve.from_text("x")
    fr = build_frame(c, 1, 1, 0.1)
    xs, ys = make_grid(fr, n, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return GridField(fr, xs, ys, values_fn(X, Y), 0.1)


def test_unit_bump_has_unit_mass():
    th = TestFunction.unit_bump(0.1, 0.4, -0.2, 0.3)
    assert th.integral() == pytest.approx(1.0, rel=1e-12)
    assert bump_mass() == pytest.approx(0.4439938161680793, rel=1e-13)


def test_zero_and_constant_fields():
    th = TestFunction.unit_bump(0.0, 0.5, 0.0, 0.5)
    assert pair_field(_field(lambda X, Y: 0 * X), th) == 0.0
    assert pair_field(_field(lambda X, Y: 3.5 + 0 * X), th) == pytest.approx(3.5, rel=1e-7)


def test_support_outside_grid_raises():
    th = TestFunction.unit_bump(0.9, 0.5, 0.0, 0.5)
    with pytest.raises(SupportError):
        pair_field(_field(lambda X, Y: X), th)


def test_dirac_and_heaviside_targets():
    th = TestFunction.unit_bump(0.0, 0.5, 0.0, 0.5)
    d = DistributionTarget(diracs=(DiracTerm(-2.0),))
    assert d.pair(th) == pytest.approx(-2 * float(th(0.0, 0.0)) / th.factor("y")(0.0) * th.factor("y").mass)
    h = DistributionTarget(heavisides=(HeavisideTerm(1.0),))
    assert h.pair(th) == pytest.approx(0.5, rel=1e-12)


def test_smooth_target_matches_field_pairing():
    th = TestFunction.unit_bump(0.2, 0.4, -0.1, 0.5)
    t = DistributionTarget(smooth="x*y + cos(y)")
    f = _field(lambda X, Y: X * Y + np.cos(Y))
    assert pair_field(f, th) == pytest.approx(t.pair(th), abs=1e-7)


def test_derivative_pairing_sign():
    th = TestFunction.unit_bump(0.0, 0.5, 0.0, 0.5)
    f = _field(lambda X, Y: X**2 + 2 * Y)
    # <d/dx u, theta> = <2x, theta>; <d/dy u, theta> = 2
    assert pair_field(f, th, (1, 0)) == pytest.approx(0.0, abs=1e-10)
    assert pair_field(f, th, (0, 1)) == pytest.approx(2.0, rel=1e-9)


def test_pair_samples_1d_step_family():
    th = TestFunction.unit_bump(0.0, 0.5)
    xs = np.linspace(-1, 1, 4001)
    vals = [pair_samples(xs, np.tanh(xs / e) / e * 0 + (1 - np.tanh(xs / e) ** 2) / e, th) for e in (0.05, 0.01)]
    assert vals[-1] == pytest.approx(2 * float(th(0.0)), rel=1e-2)


def test_pair_over_family():
    th = TestFunction.unit_bump(0.0, 0.5, 0.0, 0.5)
    fam = [_field(lambda X, Y, c=c: c + 0 * X, n=65) for c in (1.0, 2.0)]
    assert pair(fam, th) == pytest.approx([1.0, 2.0], rel=1e-7)


def test_check_association_constant():
    v = check_association([0.7] * len(EPS), EPS, 0.7)
    assert v.converges and v.err == 0.0


def test_check_association_linear_extrapolation():
    eps = np.asarray(EPS)
    v = check_association(1.25 + eps, EPS, 1.25)
    assert v.converges
    assert v.extrapolated == pytest.approx(1.25, abs=1e-8)


def test_check_association_rejects_wrong_target():
    v = check_association([1.0] * len(EPS), EPS, 2.0)
    assert not v.converges


def test_oscillation_flag():
    eps = np.asarray(EPS)
    v = check_association(1 + eps * (-1.0) ** np.arange(eps.size), EPS, 1.0)
    assert v.oscillating


def test_pairing_linearity_random():
    f = _field(lambda X, Y: np.exp(X) * np.sin(3 * Y))
    r = pairing_linearity(f, np.random.default_rng(5), n=20)
    assert r.passed, r.line()
