"""Regularised families of strictly increasing curves y = f_eps(x)."""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exprdsl import Expr, as_expr, differentiate, evaluate

MAX_BRACKET_POWER = 60
ROUNDTRIP_RTOL = 1e-12


class CurveError(Exception):
    pass


class InversionError(CurveError):
    """The curve could not be inverted (not surjective numerically, or no convergence)."""


class NonMonotoneError(CurveError):
    pass


@dataclass(frozen=True)
class RegularizedCurve:
    """An eps-family of smooth strictly increasing curves with image R.

    ``forward`` is an expression in ``x`` and ``eps``; ``inverse``, when
    given, is a closed form in ``y`` and ``eps`` used instead of root finding.
    """

    forward: Expr
    inverse: Optional[Expr] = None
    name: str = ""
    derivative: Expr = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "forward", as_expr(self.forward))
        if self.inverse is not None:
            object.__setattr__(self, "inverse", as_expr(self.inverse))
        extra = self.forward.variables() - {"x", "eps"}
        if extra:
            raise CurveError(f"curve may only depend on x and eps, got {sorted(extra)}")
        if self.inverse is not None and self.inverse.variables() - {"y", "eps"}:
            raise CurveError("closed-form inverse may only depend on y and eps")
        object.__setattr__(self, "derivative", differentiate(self.forward, "x"))

    @classmethod
    def from_text(cls, forward: str, inverse: Optional[str] = None, name: str = ""):
        return cls(as_expr(forward), as_expr(inverse) if inverse else None, name or forward)

    def __str__(self):
        return self.name or str(self.forward)

    def eval(self, x, eps: float):
        """f_eps(x); scalar in, scalar out."""
        _check_eps(eps)
        return evaluate(self.forward, {"x": _arr(x), "eps": eps})

    __call__ = eval

    def slope(self, x, eps: float):
        _check_eps(eps)
        return evaluate(self.derivative, {"x": _arr(x), "eps": eps})

    def invert(self, y, eps: float):
        """f_eps^{-1}(y) with ``|f(x) - y| <= 1e-12 (1 + |y|)``.

        Uses the closed-form inverse if configured, otherwise an expanding
        bracket [-2^k, 2^k] followed by safeguarded Newton with bisection.
        """
        _check_eps(eps)
        if self.inverse is not None:
            return evaluate(self.inverse, {"y": _arr(y), "eps": eps})
        return invert_monotone(
            lambda x: self.eval(x, eps), lambda x: self.slope(x, eps), y,
            table=_bracket_table(self, float(eps)),
        )

    def check_monotone(self, eps: float, xs) -> None:
        """Raise NonMonotoneError unless f' > 0 at every probe point."""
        d = np.asarray(self.slope(np.asarray(xs, dtype=float), eps))
        bad = ~(d > 0)
        if np.any(bad):
            x_bad = np.asarray(xs, dtype=float)[bad][0]
            raise NonMonotoneError(
                f"{self}: derivative not positive at x={x_bad:.6g} (eps={eps:g})"
            )

    def perturbed(self, scale_power: float, shape) -> "RegularizedCurve":
        """The family f_eps + eps^s * rho(x)."""
        rho = as_expr(shape)
        text = f"({self.forward})+eps^{_fmt(scale_power)}*({rho})"
        return RegularizedCurve(as_expr(text), None, f"{self} + eps^{_fmt(scale_power)}*{rho}")


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _arr(v):
    return v if isinstance(v, np.ndarray) else float(v)


def _check_eps(eps):
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")


def bracket_table(f):
    """f(+-2^k), k = 0..MAX_BRACKET_POWER, with overflow mapped to +-inf."""
    powers = 2.0 ** np.arange(MAX_BRACKET_POWER + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        upper = _safe_eval(f, powers, +np.inf)
        lower = _safe_eval(f, -powers, -np.inf)
    if np.any(np.diff(upper) < 0) or np.any(np.diff(lower) > 0):
        raise NonMonotoneError("curve is not increasing on the bracket probes")
    return powers, upper, lower


@lru_cache(maxsize=256)
def _bracket_table(c: "RegularizedCurve", eps: float):
    return bracket_table(lambda x: c.eval(x, eps))


def invert_monotone(f, df, y, rtol: float = ROUNDTRIP_RTOL, max_iter: int = 200, table=None):
    """Vectorised inverse of an increasing surjective function."""
    scalar = np.ndim(y) == 0
    y = np.atleast_1d(np.asarray(y, dtype=float))
    flat = y.ravel()

    # f(+-2^k) does not depend on y: tabulate once, then pick the first k
    # whose bracket contains each target.
    powers, upper, lower = bracket_table(f) if table is None else table
    ok = (lower[:, None] <= flat[None, :]) & (flat[None, :] <= upper[:, None])
    if not np.all(ok.any(axis=0)):
        bad = flat[~ok.any(axis=0)][0]
        raise InversionError(
            f"bracket expansion to 2^{MAX_BRACKET_POWER} failed for y={bad:.6g}; "
            "curve is not numerically surjective"
        )
    k = ok.argmax(axis=0)
    lo = -powers[k]
    hi = powers[k]
    # tighten with the previous power where possible
    prev = np.maximum(k - 1, 0)
    lo = np.where((k > 0) & (flat >= upper[prev]), powers[prev], lo)
    hi = np.where((k > 0) & (flat <= lower[prev]), -powers[prev], hi)

    # start from linear interpolation between the tabulated bracket values
    f_lo = np.where(lo < 0, lower[k], upper[prev])
    f_hi = np.where(hi > 0, upper[k], lower[prev])
    with np.errstate(all="ignore"):
        x = lo + (flat - f_lo) * (hi - lo) / (f_hi - f_lo)
    x = np.where(np.isfinite(x) & (x > lo) & (x < hi), x, 0.5 * (lo + hi))
    tol_y = rtol * (1.0 + np.abs(flat))
    active = np.ones(flat.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xa = x[idx]
        r = np.asarray(f(xa), dtype=float) - flat[idx]
        lo[idx] = np.where(r < 0, xa, lo[idx])
        hi[idx] = np.where(r > 0, xa, hi[idx])
        with np.errstate(all="ignore"):
            d = np.asarray(df(xa), dtype=float)
            xn = xa - r / d
        bis = 0.5 * (lo[idx] + hi[idx])
        good = np.isfinite(xn) & (d > 0) & (xn > lo[idx]) & (xn < hi[idx]) & (xn != xa)
        xnew = np.where(good, xn, bis)
        width = hi[idx] - lo[idx]
        exact = r == 0
        collapsed = width <= 4 * np.spacing(np.maximum(np.abs(lo[idx]), np.abs(hi[idx])))
        # converged when the Newton step is at round-off level and the
        # residual is within tolerance, or the bracket has collapsed
        tiny_step = good & (np.abs(xn - xa) <= 4 * np.spacing(np.abs(xa)) + 1e-300)
        conv = exact | collapsed | (tiny_step & (np.abs(r) <= tol_y[idx]))
        x[idx] = np.where(exact, xa, xnew)
        active[idx[conv]] = False
    res = np.abs(np.asarray(f(x), dtype=float) - flat)
    if np.any(res > tol_y):
        i = int(np.argmax(res - tol_y))
        raise InversionError(
            f"inversion residual {res[i]:.3g} exceeds tolerance at y={flat[i]:.6g}"
        )
    x = x.reshape(y.shape)
    return float(x[0]) if scalar else x


def _safe_eval(f, xs, fill):
    from .exprdsl import DomainError

    try:
        with np.errstate(all="ignore"):
            out = np.asarray(f(xs), dtype=float).copy()
        out[np.isnan(out)] = fill
        out[np.isinf(out)] = np.sign(out[np.isinf(out)]) * np.inf
        return out
    except (DomainError, OverflowError, FloatingPointError):
        pass
    out = np.empty_like(xs)
    for i, v in enumerate(xs):
        try:
            out[i] = float(f(np.array([v]))[0])
        except (DomainError, OverflowError, FloatingPointError):
            out[i] = fill
        if not math.isfinite(out[i]):
            out[i] = fill
    return out


# ---------------------------------------------------------------- frames


@dataclass(frozen=True)
class CompactFrame:
    """The enlarged rectangle K_eps built around [-a, a] x [-b, b].

    ``y_lo``/``y_hi`` extend [-b, b] to f([-a_K/2, a_K/2]); the integration
    domains D(x, y) of all points of that box stay inside it, which is what
    the solver grid covers.
    """

    a: float
    b: float
    eps: float
    alpha: float
    beta: float
    a_K: float
    y_lo: float
    y_hi: float
    mu: float

    @property
    def x_range(self):
        return (-self.a_K / 2, self.a_K / 2)

    @property
    def y_range(self):
        return (-self.b, self.b)

    @property
    def K_eps(self):
        return (self.x_range, self.y_range)

    @property
    def box(self):
        return (self.x_range, (self.y_lo, self.y_hi))

    @property
    def area(self):
        return self.a_K * 2 * self.b

    def contains(self, rect) -> bool:
        (x0, x1), (y0, y1) = rect
        (X0, X1), (Y0, Y1) = self.K_eps
        return X0 <= x0 and x1 <= X1 and Y0 <= y0 and y1 <= Y1


def build_frame(c: RegularizedCurve, a: float, b: float, eps: float) -> CompactFrame:
    if not (a > 0 and b > 0):
        raise ValueError("frame half-widths must be positive")
    beta = max(a, float(c.invert(b, eps)))
    alpha = min(-a, float(c.invert(-b, eps)))
    a_K = 2.0 * max(beta, abs(alpha))
    half = a_K / 2
    f_lo, f_hi = float(c.eval(-half, eps)), float(c.eval(half, eps))
    return CompactFrame(
        a=a,
        b=b,
        eps=eps,
        alpha=alpha,
        beta=beta,
        a_K=a_K,
        y_lo=min(-b, f_lo),
        y_hi=max(b, f_hi),
        mu=float(c.eval(alpha, eps)),
    )


# ---------------------------------------------------------------- probes


@dataclass
class CBoundReport:
    bound: float
    holds: bool
    per_eps: list
    slope: float


def _sup_on(c: RegularizedCurve, which: str, xs, eps, weight=None):
    if which == "forward":
        v = c.eval(xs, eps)
    elif which == "inverse":
        v = c.invert(xs, eps)
    elif which == "derivative":
        v = c.slope(xs, eps)
    else:
        raise ValueError(f"unknown probe target {which!r}")
    v = np.abs(np.asarray(v, dtype=float))
    if weight is not None:
        v = v * weight
    return float(np.max(v))


def check_c_bounded(
    c: RegularizedCurve,
    K: Sequence[float],
    eps_list: Sequence[float],
    which: str = "forward",
    n_probe: int = 2001,
    slack: float = 0.05,
) -> CBoundReport:
    """Probe whether the family maps K into one eps-independent compact.

    The bound is the sup of |f_eps| over K and the eps list; it "holds" when
    the per-eps sups do not grow as eps decreases (log-log slope above -slack).
    """
    if len(eps_list) == 0:
        raise ValueError("eps_list must be non-empty")
    xs = np.linspace(K[0], K[1], n_probe)
    sups = [_sup_on(c, which, xs, e) for e in eps_list]
    bound = max(sups)
    slope = 0.0
    eps_arr = np.asarray(eps_list, dtype=float)
    if len(eps_list) >= 2 and np.all(np.asarray(sups) > 0):
        slope = float(np.polyfit(np.log(eps_arr), np.log(sups), 1)[0])
    holds = math.isfinite(bound) and slope >= -slack
    return CBoundReport(bound=bound, holds=holds, per_eps=sups, slope=slope)


@dataclass
class TemperednessFit:
    N: Optional[float]
    slope: float
    r2: float
    exceeds: bool

    def __str__(self):
        return "exceeds" if self.exceeds else f"N={self.N:.3f}"


def temperedness_exponent(
    c: RegularizedCurve,
    which: str,
    eps_list: Sequence[float],
    x_range: Sequence[float],
    q: float = 1.0,
    n_probe: int = 4001,
    max_N: float = 20.0,
) -> TemperednessFit:
    """Growth exponent N with sup_x (1+|x|)^-q |g_eps(x)| = O(eps^-N)."""
    xs = np.linspace(x_range[0], x_range[1], n_probe)
    w = (1.0 + np.abs(xs)) ** (-q)
    sups = np.array([_sup_on(c, which, xs, e, w) for e in eps_list])
    eps_arr = np.asarray(eps_list, dtype=float)
    if np.any(~np.isfinite(sups)):
        return TemperednessFit(None, float("nan"), 0.0, True)
    if np.all(sups == 0):
        return TemperednessFit(0.0, 0.0, 1.0, False)
    logs = np.log(np.maximum(sups, np.finfo(float).tiny))
    slope, icpt = np.polyfit(np.log(eps_arr), logs, 1)
    pred = slope * np.log(eps_arr) + icpt
    ss = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - float(np.sum((logs - pred) ** 2)) / ss if ss > 0 else 1.0
    N = max(0.0, -float(slope))
    return TemperednessFit(N, float(slope), r2, N > max_N)
