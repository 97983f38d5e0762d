"""Randomised invariant checks shared by the test suite and ``charwave verify``.

Each check draws ``n`` cases from a seeded generator and returns an
:class:`InvariantResult` with the worst observed deviation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .association import TestFunction, pair_field
from .curves import RegularizedCurve, build_frame
from .exprdsl import DomainError, Expr, as_expr, differentiate, evaluate
from .goursat import GridField, SourceTerm, make_grid, picard_solve
from .initialdata import InitialData

DERIV_TOL = 1e-6
ROUNDTRIP_TOL = 1e-11
BASE_TOL = 1e-12
LINEARITY_TOL = 1e-12


@dataclass
class InvariantResult:
    name: str
    passed: bool
    cases: int
    worst: float
    detail: str = ""

    def line(self) -> str:
        return (f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.cases} cases, "
                f"worst {self.worst:.3e}" + (f" ({self.detail})" if self.detail else ""))


def derivative_vs_fd(expr, var: str, rng: np.random.Generator, n: int = 100,
                     tol: float = DERIV_TOL, box: float = 1.0,
                     eps_range=(0.05, 1.0), name: Optional[str] = None) -> InvariantResult:
    """Symbolic d/dvar against a centered difference at random points.

    Deviation is measured relative to 1 + |derivative|; points where the
    expression leaves its domain are redrawn.
    """
    e = as_expr(expr)
    d = differentiate(e, var)
    names = sorted(e.variables() | {var})
    worst, cases, tries = 0.0, 0, 0
    while cases < n and tries < 20 * n:
        tries += 1
        pt = {v: float(rng.uniform(-box, box)) for v in names}
        if "eps" in pt:
            pt["eps"] = float(rng.uniform(*eps_range))
        try:
            exact = float(evaluate(d, pt))
            h = 1e-5 * max(1.0, abs(pt[var]))
            hi, lo = dict(pt), dict(pt)
            hi[var] += h
            lo[var] -= h
            fd = (float(evaluate(e, hi)) - float(evaluate(e, lo))) / (2 * h)
        except (DomainError, OverflowError, ZeroDivisionError):
            continue
        if not (np.isfinite(exact) and np.isfinite(fd)):
            continue
        cases += 1
        worst = max(worst, abs(exact - fd) / (1.0 + abs(exact)))
    return InvariantResult(name or f"d/d{var} {e} vs finite difference", worst <= tol and cases == n,
                           cases, worst)


def inversion_roundtrip(c: RegularizedCurve, rng: np.random.Generator, n: int = 100,
                        tol: float = ROUNDTRIP_TOL, eps_range=(0.01, 1.0), x_box: float = 2.0,
                        eps: Optional[float] = None) -> InvariantResult:
    """|f(f^-1(y)) - y| <= tol (1 + |y|) and the x-side round trip scaled by 1/f'."""
    worst = 0.0
    for _ in range(n):
        e = float(rng.uniform(*eps_range)) if eps is None else eps
        x = float(rng.uniform(-x_box, x_box))
        y = float(c.eval(x, e))
        y2 = y + float(rng.uniform(-0.5, 0.5)) * (1.0 + abs(y))
        r1 = abs(float(c.eval(c.invert(y2, e), e)) - y2) / (1.0 + abs(y2))
        slope = float(c.slope(x, e))
        # x-side error is amplified by 1/f'(x): compare in the scaled sense
        scale = (1.0 + abs(x)) + (1.0 + abs(y)) / max(slope, 1e-300)
        r2 = abs(float(c.invert(y, e)) - x) / scale
        worst = max(worst, r1, r2)
    return InvariantResult(f"inversion round trip of {c.forward}", worst <= tol, n, worst)


def chi_base_independence(data: InitialData, c: RegularizedCurve, rng: np.random.Generator,
                          n: int = 100, tol: float = BASE_TOL, eps_range=(0.05, 1.0),
                          box: float = 1.0, eps: Optional[float] = None) -> InvariantResult:
    """u0 = phi(x) - chi(f(x)) + chi(y) does not depend on the base point of chi."""
    worst = 0.0
    for _ in range(n):
        e = float(rng.uniform(*eps_range)) if eps is None else eps
        x = float(rng.uniform(-box, box))
        y = float(rng.uniform(-box, box))
        b1, b2 = (float(v) for v in rng.uniform(-box, box, 2))
        u1 = float(data.u0(c, x, y, e, base=b1))
        u2 = float(data.u0(c, x, y, e, base=b2))
        worst = max(worst, abs(u1 - u2) / (1.0 + abs(u1)))
    return InvariantResult("chi base-point independence of u0", worst <= tol, n, worst)


def pairing_linearity(field_: GridField, rng: np.random.Generator, n: int = 100,
                      tol: float = LINEARITY_TOL) -> InvariantResult:
    """pair(a f1 + f2, theta) = a pair(f1, theta) + pair(f2, theta)."""
    (x0, x1), (y0, y1) = (field_.xs[0], field_.xs[-1]), (field_.ys[0], field_.ys[-1])
    X, Y = np.meshgrid(field_.xs, field_.ys, indexing="ij")
    worst = 0.0
    for _ in range(n):
        a = float(rng.uniform(-3, 3))
        k1, k2 = rng.uniform(-2, 2, 2)
        f2 = field_.like(np.sin(k1 * X) * np.cos(k2 * Y) + X * Y)
        rx = float(rng.uniform(0.1, 0.45)) * (x1 - x0)
        ry = float(rng.uniform(0.1, 0.45)) * (y1 - y0)
        cx = float(rng.uniform(x0 + rx, x1 - rx))
        cy = float(rng.uniform(y0 + ry, y1 - ry))
        th = TestFunction.unit_bump(cx, rx * 0.98, cy, ry * 0.98)
        lhs = pair_field(field_.like(a * field_.values + f2.values), th)
        rhs = a * pair_field(field_, th) + pair_field(f2, th)
        scale = 1.0 + abs(a) * abs(pair_field(field_.like(np.abs(field_.values)), th)) \
            + abs(pair_field(f2.like(np.abs(f2.values)), th))
        worst = max(worst, abs(lhs - rhs) / scale)
    return InvariantResult("pairing linearity", worst <= tol, n, worst)


def oracle_equivalence(data: InitialData, c: RegularizedCurve, a: float, b: float, eps: float,
                       grid=(65, 65), tol: float = 1e-9) -> InvariantResult:
    """With F = 0 the Picard solution equals phi(x) - chi(f(x)) + chi(y) on the grid."""
    fr = build_frame(c, a, b, eps)
    u, _ = picard_solve(data, SourceTerm.from_text("0"), c, fr, grid, eps)
    exact = (np.asarray(data.phi_at(u.xs))[:, None] - data.chi(c, c.eval(u.xs, eps), eps)[:, None]
             + data.chi(c, u.ys, eps)[None, :])
    err = float(np.max(np.abs(u.values - exact)))
    return InvariantResult("F = 0 solve equals the closed form", err <= tol, u.values.size, err)


def run_config_invariants(data: InitialData, src: SourceTerm, c: RegularizedCurve, a: float,
                          b: float, eps: float, grid, seed: int = 0, n: int = 100):
    """The invariant suite for one configured problem."""
    rng = np.random.default_rng(seed)
    out = [
        derivative_vs_fd(data.phi, "x", rng, n, name="d/dx phi vs finite difference"),
        derivative_vs_fd(data.psi, "x", rng, n, name="d/dx psi vs finite difference"),
        derivative_vs_fd(src.F, "u", rng, n, name="dF/du vs finite difference"),
        derivative_vs_fd(c.forward, "x", rng, n, eps_range=(eps, eps), name="curve slope vs finite difference"),
        inversion_roundtrip(c, rng, n, eps=eps),
        chi_base_independence(data, c, rng, n, eps=eps, box=min(a, b)),
    ]
    fr = build_frame(c, a, b, eps)
    u, _ = picard_solve(data, src, c, fr, grid, eps)
    out.append(pairing_linearity(u, rng, n))
    if src.is_zero:
        out.append(oracle_equivalence(data, c, a, b, eps, grid))
    return out
