import math

import numpy as np
import pytest

from charwave.curves import RegularizedCurve, build_frame
from charwave.goursat import (
    DomainIntegrator,
    GridField,
    SolveError,
    SourceTerm,
    gronwall_bound,
    integrate_over_D,
    make_grid,
    mixed_residual,
    picard_solve,
)
from charwave.initialdata import InitialData

IDENT = RegularizedCurve.from_text("x")
CUBIC = RegularizedCurve.from_text("x^3 + eps*x")
ZERO = InitialData.from_text("0", "0")


def test_integral_of_zero():
    assert integrate_over_D(lambda x, y: 0 * x, CUBIC, 0.3, 0.9, 0.1) == 0.0


def test_integral_on_curve_is_zero():
    assert integrate_over_D(lambda x, y: 1 + 0 * x, CUBIC, 0.5, CUBIC.eval(0.5, 0.1), 0.1) == 0.0


def test_triangle_area():
    v = integrate_over_D(lambda x, y: 1 + 0 * x, IDENT, 0.0, 1.0, 0.1)
    assert v == pytest.approx(0.5, abs=1e-13)


def test_grid_integrator_matches_pointwise_oracle():
    src = SourceTerm.from_text("cos(x)*exp(y/3)")
    fr = build_frame(CUBIC, 1, 1, 0.2)
    xs, ys = make_grid(fr, 129, 129)
    I = DomainIntegrator(src, CUBIC, xs, ys, 0.2)(np.zeros((xs.size, ys.size)))

    def g(x, y):
        return np.cos(x) * np.exp(y / 3)

    worst = 0.0
    for i in (10, 40, 64, 90, 120):
        for j in (5, 50, 64, 100, 127):
            ref = integrate_over_D(g, CUBIC, xs[i], ys[j], 0.2)
            worst = max(worst, abs(I[i, j] - ref))
    assert worst < 1e-4


def test_example1_point_value():
    d = InitialData.from_text("x^2", "1")
    fr = build_frame(CUBIC, 2, 2, 0.1)
    u, rep = picard_solve(d, SourceTerm.from_text("0"), CUBIC, fr, (257, 257), 0.1)
    assert rep.iterations == 1 and rep.converged
    assert u.at(1.0, 2.0) == pytest.approx(1.9, abs=1e-6)
    assert rep.traces_ok and rep.apriori_ok


def test_zero_data_sin_source_stays_zero():
    fr = build_frame(IDENT, 1, 1, 0.1)
    u, rep = picard_solve(ZERO, SourceTerm.from_text("sin(u)"), IDENT, fr, (33, 33), 0.1)
    assert np.all(u.values == 0)


def test_nonlinear_solve_has_small_residual():
    d = InitialData.from_text("sin(x)", "cos(x)")
    src = SourceTerm.from_text("0.5*sin(u) + x*y")
    fr = build_frame(CUBIC, 1, 1, 0.2)
    coarse, _ = picard_solve(d, src, CUBIC, fr, (65, 65), 0.2)
    fine, rep = picard_solve(d, src, CUBIC, fr, (129, 129), 0.2)
    assert rep.converged and rep.final_update < 1e-10
    assert mixed_residual(fine, src) < mixed_residual(coarse, src)
    assert mixed_residual(fine, src) < 1e-2
    assert rep.traces_ok and rep.apriori_ok


def test_max_iter_exceeded_raises():
    d = InitialData.from_text("sin(x)", "cos(x)")
    fr = build_frame(CUBIC, 1, 1, 0.2)
    with pytest.raises(SolveError) as info:
        picard_solve(d, SourceTerm.from_text("2*sin(u)"), CUBIC, fr, (33, 33), 0.2, max_iter=2)
    assert info.value.report is not None


def test_gronwall_examples():
    fr = build_frame(IDENT, 1, 1, 0.1)
    assert gronwall_bound(ZERO, SourceTerm.from_text("0"), IDENT, fr, 0.1)[0] == 0.0
    bound, C, m = gronwall_bound(ZERO, SourceTerm.from_text("cos(u)"), IDENT, fr, 0.1)
    assert C == pytest.approx(4.0)
    assert m == pytest.approx(1.0, abs=1e-9)
    assert bound == pytest.approx(4 * math.e**2, rel=1e-8)
    d = InitialData.from_text("x^2", "1")
    fr = build_frame(CUBIC, 1, 1, 0.1)
    bound, C, _ = gronwall_bound(d, SourceTerm.from_text("0"), CUBIC, fr, 0.1)
    (x0, x1), (y0, y1) = fr.K_eps
    X, Y = np.meshgrid(np.linspace(x0, x1, 401), np.linspace(y0, y1, 401), indexing="ij")
    sup_u0 = np.max(np.abs(X**2 + Y - X**3 - 0.1 * X))
    assert bound == pytest.approx(sup_u0, rel=1e-3)


def test_source_term_derivative_and_flags():
    s = SourceTerm.from_text("u^2 + x")
    assert s.depends_on_u and not s.is_zero
    assert s.du(0.0, 0.0, 3.0, 0.1) == pytest.approx(6.0)
    assert SourceTerm.from_text("0").is_zero


def test_gridfield_csv_round_trip(tmp_path):
    fr = build_frame(CUBIC, 1, 1, 0.3)
    xs, ys = make_grid(fr, 9, 7)
    vals = np.add.outer(np.sin(xs), ys**2) / 3.0
    g = GridField(fr, xs, ys, vals, 0.3, name="u")
    p = tmp_path / "f.csv"
    g.to_csv(p)
    h = GridField.from_csv(p)
    assert np.array_equal(h.values, g.values)
    assert np.array_equal(h.xs, g.xs) and np.array_equal(h.ys, g.ys)
    assert h.eps == 0.3 and h.name == "u"


def test_bilinear_at_is_exact_for_bilinear_fields():
    fr = build_frame(IDENT, 1, 1, 0.3)
    xs, ys = make_grid(fr, 11, 11)
    g = GridField(fr, xs, ys, 1 + 2 * xs[:, None] - ys[None, :] + xs[:, None] * ys[None, :], 0.3)
    assert g.at(0.123, -0.456) == pytest.approx(1 + 0.246 + 0.456 - 0.123 * 0.456, abs=1e-14)
