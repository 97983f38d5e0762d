"""Goursat solver: Picard iteration on the integral equation

    u(x, y) = u0(x, y) - int_x^{f^{-1}(y)} int_{f(xi)}^{y} F(xi, eta, u) d eta d xi

on the box covering K_eps, plus residual, trace and a priori diagnostics.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .curves import CompactFrame, RegularizedCurve
from .exprdsl import Expr, as_expr, differentiate, evaluate, is_zero
from .initialdata import CHI_RTOL, InitialData
from .quadrature import gauss_legendre, integrate_intervals

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200
_GL2 = (1.0 - 1.0 / math.sqrt(3.0)) / 2.0, (1.0 + 1.0 / math.sqrt(3.0)) / 2.0


class SolveError(RuntimeError):
    """Picard iteration failed; ``report`` and ``field`` hold the last state."""

    def __init__(self, message, report=None, field=None):
        super().__init__(message)
        self.report = report
        self.field = field


@dataclass(frozen=True)
class SourceTerm:
    F: Expr
    dFdu: Expr = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "F", as_expr(self.F))
        extra = self.F.variables() - {"x", "y", "u", "eps"}
        if extra:
            raise ValueError(f"F may only depend on x, y, u, eps; got {sorted(extra)}")
        object.__setattr__(self, "dFdu", differentiate(self.F, "u"))

    @classmethod
    def from_text(cls, text: str):
        return cls(as_expr(text))

    @property
    def is_zero(self) -> bool:
        return is_zero(self.F)

    @property
    def depends_on_u(self) -> bool:
        return "u" in self.F.variables()

    def __call__(self, x, y, u, eps):
        return evaluate(self.F, {"x": x, "y": y, "u": u, "eps": eps})

    def du(self, x, y, u, eps):
        return evaluate(self.dFdu, {"x": x, "y": y, "u": u, "eps": eps})

    def lipschitz_bound(self, xs, ys, u_range: float, eps: float, n_u: int = 33) -> float:
        """sup |dF/du| sampled on xs x ys x [-u_range, u_range]."""
        if is_zero(self.dFdu):
            return 0.0
        us = np.linspace(-u_range, u_range, n_u)
        X, Y, Uu = np.meshgrid(xs, ys, us, indexing="ij")
        v = np.abs(np.broadcast_to(np.asarray(self.du(X, Y, Uu, eps)), X.shape))
        if not np.all(np.isfinite(v)):
            raise SolveError("dF/du is not finite on the probe grid")
        i, j, k = np.unravel_index(int(np.argmax(v)), v.shape)
        # polish the sampled maximum in u around the best probe
        lo, hi = us[max(k - 1, 0)], us[min(k + 1, n_u - 1)]
        res = minimize_scalar(
            lambda z: -abs(float(self.du(float(xs[i]), float(ys[j]), z, eps))),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-12},
        )
        return max(float(v.max()), float(-res.fun))


# ---------------------------------------------------------------- grid field


@dataclass
class GridField:
    """Samples of a function on a uniform tensor grid, values[i, j] = u(x_i, y_j)."""

    frame: CompactFrame
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    eps: float
    name: str = "u"

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.xs.size, self.ys.size):
            raise ValueError("values shape does not match the grid")
        if self.xs.size < 2 or self.ys.size < 2:
            raise ValueError("grid needs at least two nodes per axis")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid field contains non-finite values")

    @property
    def nx(self):
        return self.xs.size

    @property
    def ny(self):
        return self.ys.size

    @property
    def hx(self):
        return (self.xs[-1] - self.xs[0]) / (self.nx - 1)

    @property
    def hy(self):
        return (self.ys[-1] - self.ys[0]) / (self.ny - 1)

    def like(self, values, name=None) -> "GridField":
        return GridField(self.frame, self.xs, self.ys, values, self.eps, name or self.name)

    def __sub__(self, other: "GridField") -> "GridField":
        if self.values.shape != other.values.shape or not np.allclose(self.xs, other.xs):
            raise ValueError("fields live on different grids")
        return self.like(self.values - other.values, f"{self.name}-{other.name}")

    def at(self, x, y):
        """Bilinear interpolation."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        i = np.clip(np.floor((x - self.xs[0]) / self.hx).astype(int), 0, self.nx - 2)
        j = np.clip(np.floor((y - self.ys[0]) / self.hy).astype(int), 0, self.ny - 2)
        tx = (x - self.xs[i]) / self.hx
        ty = (y - self.ys[j]) / self.hy
        V = self.values
        out = (
            V[i, j] * (1 - tx) * (1 - ty)
            + V[i + 1, j] * tx * (1 - ty)
            + V[i, j + 1] * (1 - tx) * ty
            + V[i + 1, j + 1] * tx * ty
        )
        return float(out) if out.ndim == 0 else out

    def derivative(self, ax: int, ay: int) -> np.ndarray:
        """Centered finite-difference D^(ax, ay); NaN where the stencil leaves the grid."""
        out = self.values
        for _ in range(ax):
            out = _centered(out, self.hx, axis=0)
        for _ in range(ay):
            out = _centered(out, self.hy, axis=1)
        return out

    def index_box(self, rect, shrink: int = 0):
        (x0, x1), (y0, y1) = rect
        tol_x, tol_y = 1e-9 * self.hx, 1e-9 * self.hy
        ix = np.nonzero((self.xs >= x0 - tol_x) & (self.xs <= x1 + tol_x))[0]
        iy = np.nonzero((self.ys >= y0 - tol_y) & (self.ys <= y1 + tol_y))[0]
        if shrink:
            ix = ix[shrink:-shrink] if ix.size > 2 * shrink else ix[:0]
            iy = iy[shrink:-shrink] if iy.size > 2 * shrink else iy[:0]
        return ix, iy

    # -- serialisation --------------------------------------------------

    def to_csv(self, path) -> None:
        meta = {
            "name": self.name,
            "nx": self.nx,
            "ny": self.ny,
            "x0": repr(float(self.xs[0])),
            "x1": repr(float(self.xs[-1])),
            "y0": repr(float(self.ys[0])),
            "y1": repr(float(self.ys[-1])),
            "eps": repr(float(self.eps)),
        }
        for k in ("a", "b", "alpha", "beta", "a_K", "y_lo", "y_hi", "mu"):
            meta[k] = repr(float(getattr(self.frame, k)))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"{k}={v}" for k, v in meta.items()])
        for row in self.values:
            w.writerow([repr(float(v)) for v in row])
        Path(path).write_text(buf.getvalue())

    @classmethod
    def from_csv(cls, path) -> "GridField":
        rows = list(csv.reader(io.StringIO(Path(path).read_text())))
        meta = dict(item.split("=", 1) for item in rows[0])
        nx, ny = int(meta["nx"]), int(meta["ny"])
        frame = CompactFrame(
            a=float(meta["a"]),
            b=float(meta["b"]),
            eps=float(meta["eps"]),
            alpha=float(meta["alpha"]),
            beta=float(meta["beta"]),
            a_K=float(meta["a_K"]),
            y_lo=float(meta["y_lo"]),
            y_hi=float(meta["y_hi"]),
            mu=float(meta["mu"]),
        )
        values = np.array([[float(v) for v in r] for r in rows[1 : 1 + nx]])
        return cls(
            frame,
            np.linspace(float(meta["x0"]), float(meta["x1"]), nx),
            np.linspace(float(meta["y0"]), float(meta["y1"]), ny),
            values,
            float(meta["eps"]),
            meta.get("name", "u"),
        )


def _centered(a, h, axis):
    out = np.full(a.shape, np.nan)
    sl = [slice(None)] * a.ndim
    lo, mid, hi = list(sl), list(sl), list(sl)
    lo[axis], mid[axis], hi[axis] = slice(None, -2), slice(1, -1), slice(2, None)
    out[tuple(mid)] = (a[tuple(hi)] - a[tuple(lo)]) / (2 * h)
    return out


def make_grid(frame: CompactFrame, nx: int, ny: int):
    if nx < 3 or ny < 3:
        raise ValueError("grid needs at least 3 nodes per axis")
    (x0, x1), (y0, y1) = frame.box
    return np.linspace(x0, x1, nx), np.linspace(y0, y1, ny)


# ---------------------------------------------------------------- D integrals


def integrate_over_D(
    integrand: Callable, c: RegularizedCurve, x: float, y: float, eps: float,
    inner_panels: int = 16, inner_order: int = 12, rtol: float = 1e-12,
) -> float:
    """Signed iterated integral int_x^{f^{-1}(y)} int_{f(xi)}^{y} g(xi, eta).

    Equals the area integral of ``g`` over D(x, y, f_eps) for either side of
    the curve.  ``integrand(xi, eta)`` must be vectorised.  The outer
    integral is adaptive Gauss-Legendre, the inner one composite.
    """
    xstar = float(c.invert(y, eps))
    if xstar == x:
        return 0.0
    gx, gw = gauss_legendre(inner_order)

    def inner(xi):
        shape = xi.shape
        xi = xi.ravel()
        lo = np.asarray(c.eval(xi, eps), dtype=float)
        edges = lo[:, None] + (y - lo)[:, None] * np.linspace(0, 1, inner_panels + 1)[None, :]
        a, b = edges[:, :-1], edges[:, 1:]
        half, mid = 0.5 * (b - a), 0.5 * (b + a)
        eta = mid[..., None] + half[..., None] * gx
        vals = np.asarray(integrand(np.broadcast_to(xi[:, None, None], eta.shape), eta), dtype=float)
        vals = np.broadcast_to(vals, eta.shape)
        return (np.sum((vals @ gw) * half, axis=1)).reshape(shape)

    return float(integrate_intervals(inner, np.array([x]), np.array([xstar]), rtol=rtol, atol=1e-14)[0])


class DomainIntegrator:
    """Grid operator I[F(., ., u)] evaluated at every node of a solver grid.

    Inner integrals run along node columns with 2-point Gauss-Legendre per
    cell (u linear inside a cell) and an exact partial cell ending at
    eta = f(x_i); the outer integral is trapezoidal in xi with a partial cell
    ending at xi = f^{-1}(y_j).
    """

    def __init__(self, src: SourceTerm, c: RegularizedCurve, xs, ys, eps: float):
        self.src = src
        self.eps = eps
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        nx, ny = self.xs.size, self.ys.size
        self.hx = (self.xs[-1] - self.xs[0]) / (nx - 1)
        self.hy = (self.ys[-1] - self.ys[0]) / (ny - 1)
        self.fx = np.asarray(c.eval(self.xs, eps), dtype=float)
        self.inv = np.asarray(c.invert(self.ys, eps), dtype=float)
        # inner partial cell: [y_k, f(x_i)]
        self.k = np.clip(np.searchsorted(self.ys, self.fx, side="right") - 1, 0, ny - 2)
        self.Lk = np.clip(self.fx - self.ys[self.k], 0.0, self.hy)
        # outer partial cell: [x_m, f^{-1}(y_j)]
        self.m = np.clip(np.searchsorted(self.xs, self.inv, side="right") - 1, 0, nx - 2)
        self.Lm = np.clip(self.inv - self.xs[self.m], 0.0, self.hx)
        t0, t1 = _GL2
        self.eta_cells = np.stack([self.ys[:-1] + t0 * self.hy, self.ys[:-1] + t1 * self.hy], -1)
        self.eta_part = np.stack(
            [self.ys[self.k] + t0 * self.Lk, self.ys[self.k] + t1 * self.Lk], -1
        )
        self._X3 = np.broadcast_to(self.xs[:, None, None], (nx, ny - 1, 2))
        self._E3 = np.broadcast_to(self.eta_cells[None, :, :], (nx, ny - 1, 2))
        self._X2 = np.broadcast_to(self.xs[:, None], (nx, 2))
        self._cache = None

    def __call__(self, U: np.ndarray) -> np.ndarray:
        nx, ny = self.xs.size, self.ys.size
        if self.src.is_zero:
            return np.zeros((nx, ny))
        if self._cache is not None and not self.src.depends_on_u:
            return self._cache
        t0, t1 = _GL2
        Ulo, Uhi = U[:, :-1], U[:, 1:]
        Ucell = np.stack([Ulo + t0 * (Uhi - Ulo), Ulo + t1 * (Uhi - Ulo)], -1)
        Fcell = np.broadcast_to(self.src(self._X3, self._E3, Ucell, self.eps), Ucell.shape)
        cell = 0.5 * self.hy * Fcell.sum(-1)
        Cc = np.concatenate([np.zeros((nx, 1)), np.cumsum(cell, axis=1)], axis=1)

        rows = np.arange(nx)
        uk, uk1 = U[rows, self.k], U[rows, self.k + 1]
        s = self.Lk / self.hy
        Upart = np.stack([uk + t0 * s * (uk1 - uk), uk + t1 * s * (uk1 - uk)], -1)
        Fpart = np.broadcast_to(self.src(self._X2, self.eta_part, Upart, self.eps), Upart.shape)
        Cstar = Cc[rows, self.k] + 0.5 * self.Lk * Fpart.sum(-1)
        G = Cc - Cstar[:, None]  # G[i, j] = int_{f(x_i)}^{y_j} F d eta

        T = 0.5 * self.hx * (G[:-1] + G[1:])
        Dn = np.concatenate([np.zeros((1, ny)), np.cumsum(T, axis=0)], axis=0)
        cols = np.arange(ny)
        Gm, Gm1 = G[self.m, cols], G[self.m + 1, cols]
        Gstar = Gm + (Gm1 - Gm) * (self.Lm / self.hx)
        Dstar = Dn[self.m, cols] + 0.5 * self.Lm * (Gm + Gstar)
        out = Dstar[None, :] - Dn
        if not self.src.depends_on_u:
            self._cache = out
        return out


# ---------------------------------------------------------------- reports


@dataclass
class SolveReport:
    iterations: int
    final_update: float
    residual: float
    trace_err: float
    trace_dy_err: float
    gronwall_bound: float
    converged: bool = True
    trace_estimate: float = 0.0
    trace_dy_estimate: float = 0.0
    sup_u_frame: float = 0.0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    updates: list = field(default_factory=list)
    lipschitz: float = 0.0
    m_eps: Optional[float] = None

    @property
    def contraction_ratios(self):
        u = [v for v in self.updates if v > 0]
        return [b / a for a, b in zip(u, u[1:])]

    @property
    def apriori_ok(self) -> bool:
        return self.sup_u_frame <= self.gronwall_bound + 10 * self.tol

    @property
    def traces_ok(self) -> bool:
        return (
            self.trace_err < 10 * self.trace_estimate
            and self.trace_dy_err < 10 * self.trace_dy_estimate
        )

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_update": self.final_update,
            "residual": self.residual,
            "trace_err": self.trace_err,
            "trace_estimate": self.trace_estimate,
            "trace_dy_err": self.trace_dy_err,
            "trace_dy_estimate": self.trace_dy_estimate,
            "gronwall_bound": self.gronwall_bound,
            "sup_u_frame": self.sup_u_frame,
            "lipschitz": self.lipschitz,
            "tol": self.tol,
            "max_iter": self.max_iter,
        }

    def to_text(self) -> str:
        lines = [f"{k} = {v}" for k, v in self.as_dict().items()]
        ratios = self.contraction_ratios
        if ratios:
            lines.append("contraction_ratios = " + " ".join(f"{r:.3g}" for r in ratios))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- gronwall


def gronwall_bound(
    data: InitialData, src: SourceTerm, c: RegularizedCurve, frame: CompactFrame, eps: float,
    xs=None, ys=None, n_probe: int = 65, u_range: Optional[float] = None,
    m_eps: Optional[float] = None,
):
    """A priori bound C exp(2 b m) on sup |u| over K_eps.

    C = Area(K_eps) sup |F(., ., 0)| + sup |u0|, with m = sup |dF/du| sampled
    on K_eps x [-R, R], R = max(2C, 1) unless ``u_range`` is given.  If the
    caller supplies an explicit eps-scale ``m_eps`` it replaces the sampled m.
    Returns (bound, C, m).
    """
    (x0, x1), (y0, y1) = frame.K_eps
    px = np.linspace(x0, x1, n_probe)
    py = np.linspace(y0, y1, n_probe)
    if xs is not None:
        px = np.union1d(px, xs[(xs >= x0) & (xs <= x1)])
    if ys is not None:
        py = np.union1d(py, ys[(ys >= y0) & (ys <= y1)])
    u0 = data.u0_grid(c, eps, px, py)
    sup_u0 = float(np.max(np.abs(u0)))
    if src.is_zero:
        return sup_u0, sup_u0, 0.0
    X, Y = np.meshgrid(px, py, indexing="ij")
    F0 = np.abs(np.broadcast_to(src(X, Y, 0.0, eps), X.shape))
    C = frame.area * float(F0.max()) + sup_u0
    R = max(2.0 * C, 1.0) if u_range is None else u_range
    sub = max(1, px.size // 33)
    m = src.lipschitz_bound(px[::sub], py[::sub], R, eps) if m_eps is None else m_eps
    with np.errstate(over="ignore"):
        bound = C * math.exp(min(2.0 * frame.b * m, 700.0))
    return bound, C, m


# ---------------------------------------------------------------- diagnostics


def mixed_residual(field_: GridField, src: SourceTerm, rect=None) -> float:
    """sup |u_xy - F(x, y, u)| over interior nodes (4-point mixed stencil)."""
    U = field_.values
    mixed = (U[2:, 2:] - U[2:, :-2] - U[:-2, 2:] + U[:-2, :-2]) / (4 * field_.hx * field_.hy)
    X, Y = np.meshgrid(field_.xs[1:-1], field_.ys[1:-1], indexing="ij")
    Fv = np.broadcast_to(src(X, Y, U[1:-1, 1:-1], field_.eps), mixed.shape)
    r = np.abs(mixed - Fv)
    if rect is not None:
        ix, iy = field_.index_box(rect)
        ix = ix[(ix >= 1) & (ix <= field_.nx - 2)] - 1
        iy = iy[(iy >= 1) & (iy <= field_.ny - 2)] - 1
        if ix.size == 0 or iy.size == 0:
            return 0.0
        r = r[np.ix_(ix, iy)]
    return float(r.max()) if r.size else 0.0


@dataclass
class TraceCheck:
    trace_err: float
    trace_dy_err: float
    trace_estimate: float
    trace_dy_estimate: float
    n_points: int


def _fd2(V, h, axis):
    out = np.zeros(V.shape)
    sl = [slice(None)] * 2
    a, m, b = list(sl), list(sl), list(sl)
    a[axis], m[axis], b[axis] = slice(None, -2), slice(1, -1), slice(2, None)
    out[tuple(m)] = (V[tuple(a)] - 2 * V[tuple(m)] + V[tuple(b)]) / h**2
    return np.abs(out)


def _fd3(V, h, axis):
    out = np.zeros(V.shape)
    n = V.shape[axis]
    if n < 5:
        return out
    take = lambda s: np.take(V, np.arange(s, n - 4 + s), axis=axis)  # noqa: E731
    core = (take(4) - 2 * take(3) + 2 * take(1) - take(0)) / (2 * h**3)
    idx = [slice(None)] * 2
    idx[axis] = slice(2, n - 2)
    out[tuple(idx)] = np.abs(core)
    return out


def trace_check(field_: GridField, data: InitialData, c: RegularizedCurve) -> TraceCheck:
    """Boundary traces along y = f(x) at x-cell midpoints inside K_eps.

    u is bilinearly interpolated from the grid, du/dy from the centered
    difference field.  Only curve points at least one cell inside
    [-b, b] are probed so the y-stencils stay in the frame.  The truncation
    estimates are the leading Taylor terms of the interpolation and
    difference errors, using finite-difference derivatives of the solution
    at the enclosing cell, plus a round-off/quadrature floor.
    """
    fr = field_.frame
    hx, hy = field_.hx, field_.hy
    xm = 0.5 * (field_.xs[:-1] + field_.xs[1:])
    fm = np.asarray(c.eval(xm, field_.eps), dtype=float)
    b = fr.b
    sel = (fm >= -b + hy) & (fm <= b - hy) & (fm >= field_.ys[1]) & (fm <= field_.ys[-2])
    xm, fm = xm[sel], fm[sel]
    if xm.size == 0:
        return TraceCheck(0.0, 0.0, 0.0, 0.0, 0)
    U = field_.values
    umax = float(np.max(np.abs(U)))
    phi = np.asarray(data.phi_at(xm), dtype=float)
    psi = np.asarray(data.psi_at(xm), dtype=float)
    tr = np.abs(field_.at(xm, fm) - phi)

    Dy = np.full(U.shape, 0.0)
    Dy[:, 1:-1] = (U[:, 2:] - U[:, :-2]) / (2 * hy)
    dyf = field_.like(Dy)
    trd = np.abs(dyf.at(xm, fm) - psi)

    i = np.clip(np.floor((xm - field_.xs[0]) / hx).astype(int), 0, field_.nx - 2)
    j = np.clip(np.floor((fm - field_.ys[0]) / hy).astype(int), 0, field_.ny - 2)

    def local(A):
        return np.maximum.reduce([A[i, j], A[i + 1, j], A[i, j + 1], A[i + 1, j + 1]])

    Uxx, Uyy = _fd2(U, hx, 0), _fd2(U, hy, 1)
    Uyyy = _fd3(U, hy, 1)
    Uxxy = _fd2(Dy, hx, 0)
    est = hx**2 / 8 * local(Uxx) + hy**2 / 8 * local(Uyy)
    est_dy = hy**2 / 6 * local(Uyyy) + hx**2 / 8 * local(Uxxy) + hy**2 / 8 * local(Uyyy)
    floor = (CHI_RTOL + 1e3 * np.finfo(float).eps) * (1.0 + umax)
    return TraceCheck(
        trace_err=float(tr.max()),
        trace_dy_err=float(trd.max()),
        trace_estimate=float(est.max()) + floor,
        trace_dy_estimate=float(est_dy.max()) + floor / hy,
        n_points=int(xm.size),
    )


# ---------------------------------------------------------------- solver


def picard_solve(
    data: InitialData,
    src: SourceTerm,
    c: RegularizedCurve,
    frame: CompactFrame,
    grid: tuple,
    eps: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    m_eps: Optional[float] = None,
    check_monotone: bool = True,
):
    """Solve the Goursat problem for one eps on the box of ``frame``.

    Iterates u <- u0 - I[F(., ., u)] until the sup-norm increment is below
    ``tol``.  Returns (GridField, SolveReport); raises SolveError when the
    iteration does not converge in ``max_iter`` steps or produces
    non-finite values.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    nx, ny = grid
    xs, ys = make_grid(frame, nx, ny)
    if check_monotone:
        c.check_monotone(eps, xs)
    u0 = data.u0_grid(c, eps, xs, ys)
    op = DomainIntegrator(src, c, xs, ys, eps)

    U = u0.copy()
    updates = []
    converged = False
    for it in range(1, max_iter + 1):
        with np.errstate(over="raise", invalid="raise"):
            try:
                Unew = u0 - op(U)
            except FloatingPointError as exc:
                raise SolveError(f"overflow in Picard iteration {it}: {exc}") from None
        if not np.all(np.isfinite(Unew)):
            raise SolveError(f"non-finite values in Picard iteration {it}")
        delta = float(np.max(np.abs(Unew - U)))
        updates.append(delta)
        U = Unew
        if delta < tol:
            converged = True
            break
    iterations = len(updates)
    ratios = [b / a for a, b in zip(updates, updates[1:]) if a > 0]
    if ratios:
        log.debug("Picard increments %s, ratios %s", updates, ratios)

    fieldu = GridField(frame, xs, ys, U, eps)
    residual = mixed_residual(fieldu, src)
    tc = trace_check(fieldu, data, c)
    ix, iy = fieldu.index_box(frame.K_eps)
    sup_frame = float(np.max(np.abs(U[np.ix_(ix, iy)])))
    bound, C, m = gronwall_bound(data, src, c, frame, eps, xs=xs, ys=ys, m_eps=m_eps)
    if src.depends_on_u and m_eps is None:
        # refresh the sampled u-range with the observed solution size
        R = max(2.0 * C, 2.0 * float(np.max(np.abs(U))), 1.0)
        bound, C, m = gronwall_bound(data, src, c, frame, eps, xs=xs, ys=ys, u_range=R)
    report = SolveReport(
        iterations=iterations,
        final_update=updates[-1],
        residual=residual,
        trace_err=tc.trace_err,
        trace_dy_err=tc.trace_dy_err,
        gronwall_bound=bound,
        converged=converged,
        trace_estimate=tc.trace_estimate,
        trace_dy_estimate=tc.trace_dy_estimate,
        sup_u_frame=sup_frame,
        tol=tol,
        max_iter=max_iter,
        updates=updates,
        lipschitz=m,
        m_eps=m_eps,
    )
    if not converged:
        log.warning(
            "Picard iteration did not reach tol=%g in %d steps (last update %g)",
            tol, max_iter, updates[-1],
        )
        raise SolveError(
            f"max_iter={max_iter} exceeded; last update {updates[-1]:.3g}", report, fieldu
        )
    return fieldu, report
