"""Homogeneous part u0 = phi(x) - chi(f(x)) + chi(y) of the solution.

chi is a primitive of psi o f^{-1}.  Two evaluation routes are provided:

* :meth:`InitialData.chi` integrates psi(f^{-1}(t)) in t directly;
* :meth:`InitialData.chi_table` substitutes t = f(s), giving
  int psi(s) f'(s) ds, which needs no inversion inside the integrand and is
  what the grid solver uses.  Both use adaptive Gauss-Legendre.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .curves import RegularizedCurve
from .exprdsl import Expr, as_expr, evaluate
from .quadrature import cumulative_at, integrate_intervals

CHI_RTOL = 1e-11

# per-process memo of chi on solver grids; concurrent readers see whole entries
_CHI_CACHE: dict = {}
_CHI_LOCK = threading.Lock()


@dataclass(frozen=True)
class InitialData:
    phi: Expr
    psi: Expr
    base: float = 0.0
    order: int = 10

    def __post_init__(self):
        object.__setattr__(self, "phi", as_expr(self.phi))
        object.__setattr__(self, "psi", as_expr(self.psi))
        for name, e in (("phi", self.phi), ("psi", self.psi)):
            if e.variables() - {"x"}:
                raise ValueError(f"{name} may only depend on x, got {sorted(e.variables())}")

    @classmethod
    def from_text(cls, phi: str, psi: str, **kw):
        return cls(as_expr(phi), as_expr(psi), **kw)

    def phi_at(self, x):
        return evaluate(self.phi, {"x": _arr(x)})

    def psi_at(self, x):
        return evaluate(self.psi, {"x": _arr(x)})

    # -- direct route -------------------------------------------------

    def chi(self, c: RegularizedCurve, y, eps: float, base: float | None = None):
        """int_base^y psi(f_eps^{-1}(t)) dt."""
        base = self.base if base is None else base
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))

        def integrand(t):
            return np.asarray(self.psi_at(c.invert(t.ravel(), eps))).reshape(t.shape)

        out = integrate_intervals(
            integrand, np.full(y_arr.shape, base), y_arr, rtol=CHI_RTOL, order=self.order
        )
        return float(out[0]) if np.ndim(y) == 0 else out

    def u0(self, c: RegularizedCurve, x, y, eps: float, base: float | None = None):
        """phi(x) - chi(f(x)) + chi(y) evaluated pointwise via :meth:`chi`."""
        fx = c.eval(x, eps)
        return self.phi_at(x) - self.chi(c, fx, eps, base) + self.chi(c, y, eps, base)

    # -- substitution route (grid solver) -------------------------------

    def _weighted(self, c: RegularizedCurve, eps: float):
        def g(s):
            return np.asarray(self.psi_at(s)) * np.asarray(c.slope(s, eps))

        return g

    def primitive_in_x(self, c: RegularizedCurve, xs, eps: float):
        """X(s) = int_0^s psi(r) f'(r) dr at every s in ``xs``.

        chi(f(s)) - chi(f(0)) = X(s), so differences of X reproduce
        differences of chi without inverting the curve.
        """
        return cumulative_at(self._weighted(c, eps), xs, base=0.0, rtol=CHI_RTOL, order=self.order)

    def chi_table(self, c: RegularizedCurve, eps: float, xs, ys):
        """(X at xs, X at f^{-1}(ys)): the per-grid primitive values, memoised."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        key = (self, c, eps, xs.tobytes(), ys.tobytes())
        with _CHI_LOCK:
            hit = _CHI_CACHE.get(key)
        if hit is not None:
            return hit
        inv = np.asarray(c.invert(ys, eps), dtype=float)
        vals = self.primitive_in_x(c, np.concatenate([xs, inv]), eps)
        result = (vals[: xs.size], vals[xs.size :], inv)
        with _CHI_LOCK:
            if len(_CHI_CACHE) > 64:
                _CHI_CACHE.clear()
            _CHI_CACHE[key] = result
        return result

    def u0_grid(self, c: RegularizedCurve, eps: float, xs, ys):
        """u0 on the tensor grid xs x ys, shape (len(xs), len(ys))."""
        Xx, Xy, _ = self.chi_table(c, eps, xs, ys)
        return np.asarray(self.phi_at(np.asarray(xs)))[:, None] - Xx[:, None] + Xy[None, :]


def _arr(v):
    return v if isinstance(v, np.ndarray) else float(v)
