"""Pairings of eps-families with test functions and association checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .asymptotics import derivative_field
from .exprdsl import Expr, as_expr, evaluate, parse
from .goursat import GridField
from .quadrature import gauss_legendre, integrate

ASSOC_TOL = 1e-2
MIN_NODES_ACROSS = 64


class SupportError(ValueError):
    """Test-function support leaves the region where the family is known."""


@lru_cache(maxsize=None)
def bump_mass() -> float:
    """Integral of exp(-1/(1-t^2)) over (-1, 1)."""
    return integrate(lambda t: np.exp(-1.0 / (1.0 - t * t)), -1.0, 1.0, rtol=1e-14)


@dataclass(frozen=True)
class BumpFactor:
    """exp(-1/(1-((v-center)/radius)^2)) on (center-radius, center+radius), 0 elsewhere."""

    var: str
    center: float
    radius: float

    def __post_init__(self):
        if self.var not in ("x", "y"):
            raise ValueError("bump variable must be x or y")
        if not self.radius > 0:
            raise ValueError("bump radius must be positive")

    @property
    def support(self):
        return (self.center - self.radius, self.center + self.radius)

    @property
    def expr(self) -> Expr:
        c, r = repr(float(self.center)), repr(float(self.radius))
        return parse(f"exp(-1/(1 - (({self.var} - {c})/{r})^2))")

    def __call__(self, v):
        t = (np.asarray(v, dtype=float) - self.center) / self.radius
        inside = np.abs(t) < 1
        out = np.zeros(t.shape)
        ti = t[inside]
        out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
        return out

    @property
    def mass(self) -> float:
        return self.radius * bump_mass()

    def mass_right_of(self, x0: float) -> float:
        """Integral over (x0, inf)."""
        lo, hi = self.support
        if x0 >= hi:
            return 0.0
        if x0 <= lo:
            return self.mass
        return integrate(self, x0, hi, rtol=1e-13)


@dataclass(frozen=True)
class TestFunction:
    """scale * product of bump factors; compactly supported and smooth.

    A 2D test function carries one factor in x and one in y; a 1D one only
    an x factor.
    """

    factors: tuple
    scale: float = 1.0
    id: str = "theta"

    __test__ = False  # not a pytest class

    def __post_init__(self):
        names = [f.var for f in self.factors]
        if len(set(names)) != len(names) or not names or "x" not in names:
            raise ValueError("need one factor in x and at most one in y")

    @classmethod
    def unit_bump(cls, cx: float, rx: float, cy: Optional[float] = None,
                  ry: Optional[float] = None, id: str = "theta") -> "TestFunction":
        """Product bump with total integral 1."""
        fs = [BumpFactor("x", cx, rx)]
        if cy is not None:
            fs.append(BumpFactor("y", cy, ry if ry is not None else rx))
        mass = math.prod(f.mass for f in fs)
        return cls(tuple(fs), 1.0 / mass, id)

    def factor(self, var) -> Optional[BumpFactor]:
        for f in self.factors:
            if f.var == var:
                return f
        return None

    @property
    def dim(self):
        return len(self.factors)

    @property
    def support(self):
        """((x0, x1),) or ((x0, x1), (y0, y1))."""
        return tuple(self.factor(v).support for v in ("x", "y") if self.factor(v))

    @property
    def expr(self) -> Expr:
        e = as_expr(self.scale)
        for f in self.factors:
            e = e * f.expr
        return e

    def __call__(self, x, y=None):
        out = self.scale * self.factor("x")(x)
        fy = self.factor("y")
        if fy is not None:
            if y is None:
                raise ValueError("2D test function needs y")
            out = out * fy(y)
        return out

    def integral(self) -> float:
        return self.scale * math.prod(f.mass for f in self.factors)

    def check_support(self, n: int = 401, pad: float = 0.5) -> bool:
        """True if the function vanishes on probe points outside its box."""
        ok = True
        for f in self.factors:
            lo, hi = f.support
            w = hi - lo
            probe = np.concatenate([np.linspace(lo - pad * w, lo, n), np.linspace(hi, hi + pad * w, n)])
            ok &= bool(np.all(f(probe) == 0.0))
        return ok


# ---------------------------------------------------------------- targets


@dataclass(frozen=True)
class DiracTerm:
    """coef * delta(axis - loc), tensored with 1 in the other variable."""

    coef: float
    loc: float = 0.0
    axis: str = "x"


@dataclass(frozen=True)
class HeavisideTerm:
    """coef * Y(axis - loc), tensored with 1 in the other variable."""

    coef: float
    loc: float = 0.0
    axis: str = "x"


@dataclass(frozen=True)
class DistributionTarget:
    smooth: Expr = field(default_factory=lambda: as_expr(0))
    diracs: tuple = ()
    heavisides: tuple = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "smooth", as_expr(self.smooth))

    def pair(self, theta: TestFunction, order: int = 12, panels: int = 8) -> float:
        """<T, theta> from point values, one-sided masses and smooth quadrature."""
        total = 0.0
        for t in self.diracs:
            total += t.coef * _point_times_rest(theta, t.axis, t.loc)
        for t in self.heavisides:
            total += t.coef * _right_mass_times_rest(theta, t.axis, t.loc)
        if not _is_zero_expr(self.smooth):
            total += _smooth_pair(self.smooth, theta, order, panels)
        return total

    def __str__(self):
        return self.label or "target"


def _is_zero_expr(e):
    from .exprdsl import is_zero

    return is_zero(e)


def _other_mass(theta, axis):
    other = "y" if axis == "x" else "x"
    f = theta.factor(other)
    return f.mass if f is not None else 1.0


def _point_times_rest(theta, axis, loc):
    f = theta.factor(axis)
    if f is None:
        raise ValueError(f"test function has no {axis} factor")
    return theta.scale * float(f(np.array([loc]))[0]) * _other_mass(theta, axis)


def _right_mass_times_rest(theta, axis, loc):
    f = theta.factor(axis)
    if f is None:
        raise ValueError(f"test function has no {axis} factor")
    return theta.scale * f.mass_right_of(loc) * _other_mass(theta, axis)


def _gl_composite(lo, hi, order, panels):
    x, w = gauss_legendre(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return pts, wts


def _smooth_pair(expr, theta, order, panels):
    (x0, x1) = theta.factor("x").support
    px, wx = _gl_composite(x0, x1, order, panels)
    if theta.factor("y") is None:
        vals = np.broadcast_to(evaluate(expr, {"x": px, "y": 0.0}), px.shape)
        return float(np.sum(wx * vals * theta(px)))
    (y0, y1) = theta.factor("y").support
    py, wy = _gl_composite(y0, y1, order, panels)
    X, Y = np.meshgrid(px, py, indexing="ij")
    vals = np.broadcast_to(evaluate(expr, {"x": X, "y": Y}), X.shape)
    return float(np.einsum("i,j,ij->", wx, wy, vals * theta(X, Y)))


# ---------------------------------------------------------------- pairings


def _trap_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def pair_field(field_: GridField, theta: TestFunction, deriv=(0, 0)) -> float:
    """<D^deriv u, theta> for one grid field (2D product test function).

    Trapezoid on the solve grid over the nodes covering the support; when
    the grid has fewer than MIN_NODES_ACROSS nodes across the support in
    some direction the field is bilinearly interpolated onto a finer grid.
    """
    if theta.dim != 2:
        raise ValueError("grid fields pair with 2D test functions")
    (x0, x1), (y0, y1) = theta.support
    if x0 < field_.xs[0] or x1 > field_.xs[-1] or y0 < field_.ys[0] or y1 > field_.ys[-1]:
        raise SupportError(f"support {theta.support} exceeds the frame of eps={field_.eps:g}")
    values = field_.values if deriv == (0, 0) else derivative_field(field_, *deriv)
    ix = np.nonzero((field_.xs >= x0 - field_.hx) & (field_.xs <= x1 + field_.hx))[0]
    iy = np.nonzero((field_.ys >= y0 - field_.hy) & (field_.ys <= y1 + field_.hy))[0]
    sub = values[np.ix_(ix, iy)]
    xs, ys = field_.xs[ix], field_.ys[iy]
    if np.any(np.isnan(sub)):
        raise SupportError("difference stencil leaves the grid inside the support")
    if ix.size < MIN_NODES_ACROSS or iy.size < MIN_NODES_ACROSS:
        sf = GridField(field_.frame, xs, ys, sub, field_.eps)
        nx = max(ix.size, MIN_NODES_ACROSS * 2)
        ny = max(iy.size, MIN_NODES_ACROSS * 2)
        xs, ys = np.linspace(xs[0], xs[-1], nx), np.linspace(ys[0], ys[-1], ny)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        sub = sf.at(X, Y)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    wx, wy = _trap_weights(xs.size, hx), _trap_weights(ys.size, hy)
    return float(np.einsum("i,j,ij->", wx, wy, sub * theta(X, Y)))


def pair_samples(xs, values, theta: TestFunction) -> float:
    """<g, theta> for a 1D family sampled on a uniform grid ``xs``."""
    if theta.dim != 1:
        raise ValueError("1D samples pair with 1D test functions")
    xs = np.asarray(xs, float)
    values = np.asarray(values, float)
    (x0, x1), = theta.support
    if x0 < xs[0] or x1 > xs[-1]:
        raise SupportError(f"support {theta.support} exceeds the sample range")
    h = xs[1] - xs[0]
    if (x1 - x0) / h < MIN_NODES_ACROSS:
        fine = np.linspace(x0, x1, 2 * MIN_NODES_ACROSS + 1)
        values, xs, h = np.interp(fine, xs, values), fine, fine[1] - fine[0]
    return float(np.sum(_trap_weights(xs.size, h) * values * theta(xs)))


def pair(family: Sequence, theta: TestFunction, deriv=(0, 0)) -> list:
    """Per-eps pairings of a family of GridFields or (xs, values) samples."""
    out = []
    for member in family:
        if isinstance(member, GridField):
            out.append(pair_field(member, theta, deriv))
        else:
            xs, vals = member
            out.append(pair_samples(xs, vals, theta))
    return out


@dataclass(frozen=True)
class PairingObservable:
    """<D^deriv field, theta> recorded per eps in a sweep."""

    theta: TestFunction
    field: str = "u"
    deriv: tuple = (0, 0)

    @property
    def id(self):
        return f"pair[{self.field},{self.deriv[0]}{self.deriv[1]}]"

    @property
    def key(self):
        return (self.id, self.theta.id, sum(self.deriv))

    @property
    def description(self):
        return f"pairing of D^{self.deriv} {self.field} with {self.theta.id}"

    def measure(self, fields) -> float:
        return pair_field(fields[self.field], self.theta, self.deriv)


# ---------------------------------------------------------------- verdicts


@dataclass(frozen=True)
class AssociationVerdict:
    converges: bool
    extrapolated: float
    err: float
    target: float
    rate: float
    oscillating: bool
    tol: float

    def __str__(self):
        status = "PASS" if self.converges else "FAIL"
        return (f"{status}: limit {self.extrapolated:.6g} vs target {self.target:.6g} "
                f"(err {self.err:.2e}, rate eps^{self.rate:.2f}"
                + (", oscillating tail" if self.oscillating else "") + ")")


def _fit_power(eps, vals):
    """Least squares c0 + c1 eps^a with a in [0.05, 4]; returns (c0, c1, a, sse)."""
    le = np.log(eps)

    def solve(a):
        A = np.vstack([np.ones_like(eps), np.exp(a * le)]).T
        coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
        r = A @ coef - vals
        return coef, float(r @ r)

    grid = np.linspace(0.05, 4.0, 80)
    sse = [solve(a)[1] for a in grid]
    k = int(np.argmin(sse))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(lambda a: solve(a)[1], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    a = float(res.x) if res.fun <= sse[k] else float(grid[k])
    (c0, c1), s = solve(a)
    return float(c0), float(c1), a, s


def check_association(pairings, eps_list, target_value: float, tol: float = ASSOC_TOL,
                      mode: str = "limit") -> AssociationVerdict:
    """Extrapolate pairings to eps -> 0 and compare with the target.

    Fits c0 + c1 eps^a (a fitted) on the small-eps half of the sweep (at
    least 4 points); converges iff |c0 - target| < tol * |target| (absolute
    tolerance when the target is 0).  In ``rate`` mode the fitted exponent
    must also be positive, that is the pairings actually approach c0.
    A tail whose successive differences change sign more than once is
    flagged as oscillating.
    """
    if mode not in ("limit", "rate"):
        raise ValueError(f"unknown mode {mode}")
    eps = np.asarray(eps_list, float)
    vals = np.asarray(pairings, float)
    ok = np.isfinite(vals)
    eps, vals = eps[ok], vals[ok]
    if eps.size < 4:
        raise ValueError("need at least 4 pairings")
    order = np.argsort(-eps)
    eps, vals = eps[order], vals[order]
    n = max(4, eps.size // 2)
    te, tv = eps[-n:], vals[-n:]
    d = np.diff(tv)
    scale_d = max(np.max(np.abs(tv)), 1e-300)
    sig = d[np.abs(d) > 1e-12 * scale_d]
    oscillating = bool(np.sum(np.sign(sig[1:]) != np.sign(sig[:-1])) > 1) if sig.size > 1 else False
    if np.ptp(tv) <= 1e-14 * max(1.0, np.max(np.abs(tv))):
        c0, a = float(tv[-1]), 0.0
    else:
        c0, _, a, _ = _fit_power(te, tv)
    err = abs(c0 - target_value)
    scale = abs(target_value) if target_value != 0 else 1.0
    conv = err < tol * scale
    if mode == "rate":
        conv = conv and a > 0
    return AssociationVerdict(conv, c0, err, float(target_value), a, oscillating, tol)
