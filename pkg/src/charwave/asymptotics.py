"""Seminorms of eps-families, geometric eps-sweeps and moderate/negligible verdicts."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .curves import CompactFrame, CurveError, RegularizedCurve, build_frame
from .exprdsl import ExprError, differentiate, evaluate
from .goursat import GridField, SolveError, SourceTerm, picard_solve
from .initialdata import InitialData

log = logging.getLogger(__name__)

ABS_FLOOR = 1e-13
Q_THRESHOLD = 3.0
SLOPE_SLACK = 0.1
MAX_DEGREE = 3
MAX_ORDER = 4

# centered stencils of minimal width for d^k/dx^k, k = 0..4: (offsets, weights)
_STENCILS = {
    0: ((0,), (1.0,)),
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


class SweepError(ValueError):
    pass


def _fd(V: np.ndarray, h: float, k: int, axis: int) -> np.ndarray:
    """Centered k-th difference along ``axis``; NaN where the stencil leaves V."""
    if k == 0:
        return V
    offs, wts = _STENCILS[k]
    w = max(abs(o) for o in offs)
    n = V.shape[axis]
    out = np.full(V.shape, np.nan)
    if n <= 2 * w:
        return out
    acc = 0.0
    for o, c in zip(offs, wts):
        acc = acc + c * np.take(V, np.arange(w + o, n - w + o), axis=axis)
    idx = [slice(None)] * V.ndim
    idx[axis] = slice(w, n - w)
    out[tuple(idx)] = acc / h**k
    return out


def derivative_field(field_: GridField, ax: int, ay: int) -> np.ndarray:
    """D^(ax, ay) of a grid field by centered differences; NaN near the grid edge."""
    return _fd(_fd(field_.values, field_.hx, ax, 0), field_.hy, ay, 1)


def _check_rect(field_: GridField, K):
    (x0, x1), (y0, y1) = K
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"empty rectangle {K}")
    tx, ty = 1e-9 * (1 + abs(field_.hx)), 1e-9 * (1 + abs(field_.hy))
    if x0 < field_.xs[0] - tx or x1 > field_.xs[-1] + tx or y0 < field_.ys[0] - ty or y1 > field_.ys[-1] + ty:
        raise ValueError(f"K={K} exceeds the grid box")


def seminorm(field_: GridField, K, l: int) -> float:
    """P_{K,l}: sup over nodes of K of |D^alpha u|, |alpha| <= l.

    Derivatives use centered stencils; each order is taken over the nodes of
    K where its stencil fits inside the grid, so K is shrunk by one stencil
    width only where it touches the grid edge.
    """
    if not 0 <= l <= MAX_ORDER:
        raise ValueError(f"derivative order l={l} outside 0..{MAX_ORDER}")
    _check_rect(field_, K)
    ix, iy = field_.index_box(K)
    if ix.size == 0 or iy.size == 0:
        raise ValueError(f"K={K} contains no grid nodes")
    best = 0.0
    for order in range(l + 1):
        for ax in range(order + 1):
            D = derivative_field(field_, ax, order - ax)[np.ix_(ix, iy)]
            if np.all(np.isnan(D)):
                raise ValueError(f"stencil for D^({ax},{order - ax}) exceeds the grid on K")
            best = max(best, float(np.nanmax(np.abs(D))))
    return best


def curve_difference_seminorm(f: RegularizedCurve, g: RegularizedCurve, x_range, eps: float,
                              l: int = 0, n: int = 20001) -> float:
    """sup_{|k|<=l} sup_x |d^k (f_eps - g_eps)/dx^k| on a dense sample, exact derivatives."""
    xs = np.linspace(x_range[0], x_range[1], n)
    diff = f.forward - g.forward
    best = 0.0
    for _ in range(l + 1):
        v = np.abs(np.asarray(evaluate(diff, {"x": xs, "eps": eps}), dtype=float))
        best = max(best, float(np.max(np.broadcast_to(v, xs.shape))))
        diff = differentiate(diff, "x")
    return best


def inverse_difference_sup(f: RegularizedCurve, g: RegularizedCurve, y_range, eps: float,
                           n: int = 20001) -> float:
    """sup_y |f_eps^{-1}(y) - g_eps^{-1}(y)| on a dense sample of ``y_range``."""
    ys = np.linspace(y_range[0], y_range[1], n)
    return float(np.max(np.abs(f.invert(ys, eps) - g.invert(ys, eps))))


# ---------------------------------------------------------------- scales


@dataclass(frozen=True)
class AsymptoticScale:
    """Generator families of the overgenerated scale, sampled on a sweep.

    ``eps`` is always present; r_eps, M_eps and exp(M_eps a_eps) are added
    only when configured.
    """

    eps_list: tuple
    generators: tuple  # ((name, values), ...)

    def __post_init__(self):
        for name, vals in self.generators:
            if len(vals) != len(self.eps_list):
                raise ValueError(f"generator {name} has wrong length")
            if not all(v > 0 and math.isfinite(v) for v in vals):
                raise ValueError(f"generator {name} must be positive and finite")

    @classmethod
    def default(cls, eps_list, **extra) -> "AsymptoticScale":
        eps_list = tuple(float(e) for e in eps_list)
        gens = [("eps", eps_list)]
        for name, vals in extra.items():
            if vals is None:
                continue
            vals = tuple(float(v) for v in (vals(np.array(eps_list)) if callable(vals) else vals))
            gens.append((name, vals))
        return cls(eps_list, tuple(gens))

    @property
    def names(self):
        return tuple(n for n, _ in self.generators)

    def monomials(self, max_degree: int = MAX_DEGREE):
        """Exponent tuples of generator products of total degree <= max_degree."""
        k = len(self.generators)
        rng = range(-max_degree, max_degree + 1)
        for exps in itertools.product(rng, repeat=k):
            if sum(abs(e) for e in exps) <= max_degree:
                yield exps

    def log_values(self, exps, idx=None):
        logs = np.zeros(len(self.eps_list))
        for (name, vals), e in zip(self.generators, exps):
            if e:
                logs = logs + e * np.log(np.asarray(vals))
        return logs if idx is None else logs[idx]

    def describe(self, exps) -> str:
        parts = [f"{n}^{e}" if e != 1 else n for (n, _), e in zip(self.generators, exps) if e]
        return "*".join(parts) or "1"


@dataclass(frozen=True)
class AsymptoticVerdict:
    klass: str  # "moderate" | "negligible" | "indeterminate"
    fitted_slope: float
    fit_r2: float
    q_threshold: float
    p: Optional[float] = None
    envelope: str = ""
    n_points: int = 0
    note: str = ""

    def __str__(self):
        if self.klass == "moderate":
            return f"moderate({_fmt(self.p)})"
        return self.klass

    @property
    def is_negligible(self):
        return self.klass == "negligible"

    @property
    def is_moderate(self):
        return self.klass == "moderate"


def _fmt(v):
    r = round(v)
    return str(int(r)) if abs(v - r) < 0.05 else f"{v:.2f}"


def loglog_fit(eps, values):
    """Least-squares slope and r^2 of log P against log eps."""
    le, lp = np.log(np.asarray(eps, float)), np.log(np.asarray(values, float))
    A = np.vstack([le, np.ones_like(le)]).T
    (s, c), *_ = np.linalg.lstsq(A, lp, rcond=None)
    ss = float(np.sum((lp - lp.mean()) ** 2))
    r2 = 1.0 - float(np.sum((lp - (s * le + c)) ** 2)) / ss if ss > 0 else 1.0
    return float(s), r2


def classify_series(eps, values, scale: Optional[AsymptoticScale] = None,
                    q_threshold: float = Q_THRESHOLD, floor: float = ABS_FLOOR,
                    slack: float = SLOPE_SLACK) -> AsymptoticVerdict:
    """Verdict for one sequence P(eps) along a sweep.

    Negligible when every value is below ``floor`` or the log-log slope is at
    least ``q_threshold`` (a finite-sweep stand-in for decay faster than
    every power).  Values below ``floor`` are excluded from the fit.
    Moderate when some generator product m of degree <= 3 keeps P/m from
    growing as eps -> 0, with p = max(0, -slope).
    """
    eps = np.asarray(eps, float)
    vals = np.asarray(values, float)
    ok = np.isfinite(vals)
    eps, vals = eps[ok], vals[ok]
    if eps.size < 4:
        raise SweepError(f"need at least 4 valid points, got {eps.size}")
    if np.any(vals < 0):
        raise SweepError("seminorm values must be non-negative")
    above = vals > floor
    n_above = int(above.sum())
    if n_above == 0:
        return AsymptoticVerdict("negligible", math.inf, 1.0, q_threshold, n_points=eps.size,
                                 note=f"all values below floor {floor:g}")
    if n_above < 2:
        return AsymptoticVerdict("negligible", math.inf, 1.0, q_threshold, n_points=eps.size,
                                 note=f"only one value above floor {floor:g}")
    s, r2 = loglog_fit(eps[above], vals[above])
    note = "" if n_above == eps.size else f"{eps.size - n_above} values below floor {floor:g} excluded"
    if s >= q_threshold:
        return AsymptoticVerdict("negligible", s, r2, q_threshold, n_points=eps.size, note=note)
    if scale is None:
        scale = AsymptoticScale.default(eps)
    idx = np.array([int(np.argmin(np.abs(np.asarray(scale.eps_list) - e))) for e in eps[above]])
    best = None
    for exps in scale.monomials():
        ratio = np.log(vals[above]) - scale.log_values(exps, idx)
        # P/m must stay bounded as eps -> 0: no growth along the sweep
        slope_ratio = loglog_fit(eps[above], np.exp(ratio - ratio.max()))[0]
        if slope_ratio >= -slack:
            degree = sum(abs(e) for e in exps)
            key = (degree, -slope_ratio)
            if best is None or key < best[0]:
                best = (key, exps)
    if best is not None:
        return AsymptoticVerdict("moderate", s, r2, q_threshold, p=max(0.0, -s),
                                 envelope=scale.describe(best[1]), n_points=eps.size, note=note)
    return AsymptoticVerdict("indeterminate", s, r2, q_threshold, n_points=eps.size,
                             note=(note + "; " if note else "") + "no generator envelope of degree <= 3")


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class Observable:
    """A seminorm P_{K,l} of one field of the per-eps solve.

    ``field`` is ``u`` (first curve), ``v`` (second curve) or ``w`` (u - v).
    """

    field: str = "u"
    K: tuple = ((-1.0, 1.0), (-1.0, 1.0))
    K_id: str = "K"
    l: int = 0

    @property
    def id(self):
        return f"P[{self.field}]"

    @property
    def key(self):
        return (self.id, self.K_id, self.l)

    @property
    def description(self):
        return f"seminorm P_(K,l) of field {self.field}"

    def measure(self, fields) -> float:
        return seminorm(fields[self.field], self.K, self.l)


@dataclass(frozen=True)
class Problem:
    """One eps-family of Goursat problems, optionally with a second curve family."""

    data: InitialData
    src: SourceTerm
    curve: RegularizedCurve
    a: float = 1.0
    b: float = 1.0
    grid: tuple = (129, 129)
    tol: float = 1e-10
    max_iter: int = 200
    alt_curve: Optional[RegularizedCurve] = None
    cells_per_eps: float = 0.0  # refine x so that h_x <= eps / cells_per_eps
    m_eps: Optional[float] = None
    max_nodes: int = 2**24

    def frame(self, eps: float) -> CompactFrame:
        fr = build_frame(self.curve, self.a, self.b, eps)
        if self.alt_curve is not None:
            fr = merge_frames(fr, build_frame(self.alt_curve, self.a, self.b, eps))
        return fr

    def grid_for(self, frame: CompactFrame, eps: float):
        nx, ny = self.grid
        if self.cells_per_eps > 0:
            need = frame.a_K * self.cells_per_eps / eps
            if need > nx - 1:
                nx = 2 ** int(math.ceil(math.log2(need))) + 1
        if nx * ny > self.max_nodes:
            raise SolveError(f"grid {nx}x{ny} exceeds max_nodes={self.max_nodes} (frame width {frame.a_K:g})")
        return nx, ny

    def solve(self, eps: float):
        """Fields and reports for this eps: {'u': ..., 'v': ..., 'w': ...}."""
        fr = self.frame(eps)
        grid = self.grid_for(fr, eps)
        u, ru = picard_solve(self.data, self.src, self.curve, fr, grid, eps, self.tol,
                             self.max_iter, m_eps=self.m_eps)
        fields, reports = {"u": u}, {"u": ru}
        if self.alt_curve is not None:
            v, rv = picard_solve(self.data, self.src, self.alt_curve, fr, grid, eps, self.tol,
                                 self.max_iter, m_eps=self.m_eps)
            fields["v"], reports["v"] = v, rv
            fields["w"] = u - v
        return fields, reports


def merge_frames(a: CompactFrame, b: CompactFrame) -> CompactFrame:
    """Smallest frame whose box covers both."""
    return CompactFrame(
        a=a.a, b=a.b, eps=a.eps,
        alpha=min(a.alpha, b.alpha), beta=max(a.beta, b.beta), a_K=max(a.a_K, b.a_K),
        y_lo=min(a.y_lo, b.y_lo), y_hi=max(a.y_hi, b.y_hi), mu=min(a.mu, b.mu),
    )


def geometric_eps(eps0: float, ratio: float, count: int):
    if not (eps0 > 0 and 0 < ratio < 1):
        raise SweepError("need eps0 > 0 and 0 < ratio < 1")
    if count < 4:
        raise SweepError("a sweep needs at least 4 points")
    return tuple(float(eps0 * ratio**k) for k in range(count))


@dataclass
class SweepRecord:
    eps_list: tuple
    values: dict  # (observable-id, K-id, l) -> list of floats, NaN on failure
    failures: dict = field(default_factory=dict)  # eps -> message
    reports: dict = field(default_factory=dict)  # eps -> {field: report dict}
    provenance: dict = field(default_factory=dict)  # observable-id -> description

    def __post_init__(self):
        e = np.asarray(self.eps_list, float)
        if e.size >= 2:
            if np.any(np.diff(e) >= 0):
                raise SweepError("eps_list must be strictly decreasing")
            r = e[1:] / e[:-1]
            if np.max(np.abs(r - r[0])) > 1e-12:
                raise SweepError("eps_list must be geometric")
        for k, v in self.values.items():
            if len(v) != e.size:
                raise SweepError(f"series {k} has wrong length")
            if k[0].startswith("P[") and any(x < 0 for x in v if not math.isnan(x)):
                raise SweepError(f"series {k} has negative values")

    def series(self, key):
        return np.asarray(self.values[key], float)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "observable", "K", "l", "value"])
        for i, eps in enumerate(self.eps_list):
            for (obs, K_id, l), vals in self.values.items():
                w.writerow([repr(eps), obs, K_id, l, repr(float(vals[i]))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "SweepRecord":
        rows = list(csv.DictReader(io.StringIO(Path(path).read_text())))
        eps_list = sorted({float(r["eps"]) for r in rows}, reverse=True)
        pos = {e: i for i, e in enumerate(eps_list)}
        values: dict = {}
        for r in rows:
            key = (r["observable"], r["K"], int(r["l"]))
            values.setdefault(key, [math.nan] * len(eps_list))[pos[float(r["eps"])]] = float(r["value"])
        return cls(tuple(eps_list), values)


def _solve_one(problem: Problem, observables, eps: float):
    try:
        fields, reports = problem.solve(eps)
        vals = {ob.key: ob.measure(fields) for ob in observables}
        reps = {}
        for name, r in reports.items():
            d = r.as_dict()
            d["traces_ok"] = r.traces_ok
            d["apriori_ok"] = r.apriori_ok
            reps[name] = d
        return eps, vals, reps, None
    except (SolveError, CurveError, ExprError, ValueError, ArithmeticError) as exc:
        return eps, None, None, f"{type(exc).__name__}: {exc}"


def sweep(problem: Problem, eps0: float, ratio: float, count: int,
          observables: Sequence, jobs: int = 1) -> SweepRecord:
    """Solve the family for eps = eps0 * ratio^k and record every observable.

    Per-eps failures are recorded and leave NaN entries; the sweep continues.
    With ``jobs > 1`` the solves run in a process pool; results are merged by
    eps so the record does not depend on completion order.
    """
    if not observables:
        raise SweepError("no observables requested")
    eps_list = geometric_eps(eps0, ratio, count)
    observables = list(observables)
    if jobs is None or jobs <= 0:
        jobs = os.cpu_count() or 1
    if jobs > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, count)) as pool:
            results = list(pool.map(_solve_one, [problem] * count, [observables] * count, eps_list))
    else:
        results = [_solve_one(problem, observables, e) for e in eps_list]
    by_eps = {r[0]: r for r in results}
    values = {ob.key: [] for ob in observables}
    failures, reports = {}, {}
    for e in eps_list:
        _, vals, reps, err = by_eps[e]
        if err is not None:
            log.warning("solve failed at eps=%g: %s", e, err)
            failures[e] = err
        else:
            reports[e] = reps
        for ob in observables:
            values[ob.key].append(math.nan if err is not None else vals[ob.key])
    prov = {ob.id: ob.description for ob in observables}
    return SweepRecord(eps_list, values, failures, reports, prov)


def classify(rec: SweepRecord, key, scale: Optional[AsymptoticScale] = None,
             q_threshold: float = Q_THRESHOLD, floor: float = ABS_FLOOR) -> AsymptoticVerdict:
    """Verdict for one recorded series; gaps from failed solves are skipped."""
    vals = rec.series(key)
    if scale is None:
        scale = AsymptoticScale.default(rec.eps_list)
    v = classify_series(rec.eps_list, vals, scale, q_threshold, floor)
    if rec.failures:
        gap = f"{int(np.isnan(vals).sum())} failed solves skipped"
        v = AsymptoticVerdict(v.klass, v.fitted_slope, v.fit_r2, v.q_threshold, v.p, v.envelope,
                              v.n_points, (v.note + "; " if v.note else "") + gap)
    return v


def classify_difference(rec: SweepRecord, field_id: str, K_id: str,
                        scale: Optional[AsymptoticScale] = None,
                        q_threshold: float = Q_THRESHOLD, floor: float = ABS_FLOOR):
    """Verdicts for a solution-difference family.

    The l = 0 verdict decides; higher orders present in the record are
    returned alongside as corroboration only.
    """
    keys = sorted(k for k in rec.values if k[0] == field_id and k[1] == K_id)
    if not keys or keys[0][2] != 0:
        raise SweepError(f"record has no l=0 series for {field_id} on {K_id}")
    verdicts = {k[2]: classify(rec, k, scale, q_threshold, floor) for k in keys}
    return verdicts[0], verdicts
