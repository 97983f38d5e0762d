"""Packaged experiments: closed-form check, distributional limits,
representative (in)dependence and classical coincidence."""
from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .association import (
    DiracTerm,
    DistributionTarget,
    HeavisideTerm,
    PairingObservable,
    TestFunction,
    check_association,
)
from .asymptotics import (
    AsymptoticScale,
    Observable,
    Problem,
    SweepRecord,
    classify,
    classify_difference,
    classify_series,
    curve_difference_seminorm,
    derivative_field,
    geometric_eps,
    inverse_difference_sup,
    sweep,
)
from .curves import RegularizedCurve, build_frame
from .exprdsl import as_expr, differentiate, evaluate
from .goursat import SourceTerm, picard_solve
from .initialdata import InitialData
from .quadrature import cumulative_at

SCENARIOS = ("example1", "example2-tanh", "example2-arctan", "counterexample", "uniqueness", "classical")
DEFAULT_SWEEP = (0.5, 0.5, 11)

# C-infinity increasing step: 0 for t <= 0, 1 for t >= 1.  The tanh form is
# evaluated on t clamped to [0.02, 0.98], where tanh already saturates to +-1
# in double precision, so the plateaus are exact.  t is first squashed by the
# increasing map 10 tanh(t/10) so the abs-based clamp never cancels at huge |t|.
_CLAMP = "((abs({t} - 0.02) - abs({t} - 0.98) + 1)/2)"
_STEP = "((1 + tanh((2*{c} - 1)/(2*{c}*(1 - {c}))))/2)"


def smooth_step(t: str) -> str:
    c = _CLAMP.format(t=f"(10*tanh(({t})/10))")
    return _STEP.format(c=c)


def band_step_text() -> str:
    """n_eps: increasing, -1 below -2/eps, 0 on [-1/eps, 1/eps], 1 above 2/eps."""
    return f"{smooth_step('eps*x - 1')} - {smooth_step('-eps*x - 1')}"


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ScenarioReport:
    name: str
    title: str
    params: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    verdict_lines: list = field(default_factory=list)
    tables: list = field(default_factory=list)  # (title, header, rows)
    notes: list = field(default_factory=list)
    record: Optional[SweepRecord] = None
    plots: dict = field(default_factory=dict)  # filename -> (header, rows)
    data: dict = field(default_factory=dict)  # numeric results for programmatic use

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))

    def to_markdown(self) -> str:
        out = [f"# {self.title}", "", f"scenario: `{self.name}`", ""]
        out.append(f"overall: **{'PASS' if self.passed else 'FAIL'}**")
        out.append("")
        if self.params:
            out += ["## Parameters", ""]
            out += [f"- {k} = `{v}`" for k, v in self.params.items()]
            out.append("")
        out += ["## Checks", "", "| check | result | detail |", "|---|---|---|"]
        for c in self.checks:
            out.append(f"| {c.name} | {'PASS' if c.passed else 'FAIL'} | {c.detail} |")
        out.append("")
        if self.verdict_lines:
            out += ["## Verdicts", ""]
            out += [f"- {line}" for line in self.verdict_lines]
            out.append("")
        for title, header, rows in self.tables:
            out += [f"## {title}", "", "| " + " | ".join(header) + " |",
                    "|" + "---|" * len(header)]
            out += ["| " + " | ".join(_cell(v) for v in r) + " |" for r in rows]
            out.append("")
        if self.notes:
            out += ["## Notes", ""]
            out += [f"- {n}" for n in self.notes]
            out.append("")
        return "\n".join(out)

    def write(self, outdir) -> list:
        """Write report.md, sweep.csv and plot-data files; returns the paths."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = [outdir / "report.md", outdir / "sweep.csv"]
        paths[0].write_text(self.to_markdown())
        if self.record is not None:
            self.record.to_csv(paths[1])
        else:
            paths[1].write_text("eps,observable,K,l,value\n")
        for name, (header, rows) in sorted(self.plots.items()):
            p = outdir / name
            lines = [f"# {header}"] + [f"{a!r} {b!r}" for a, b in rows]
            p.write_text("\n".join(lines) + "\n")
            paths.append(p)
        return paths


def _cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")


# ---------------------------------------------------------------- sweep analysis


def _expect_ok(verdict, expect: str) -> bool:
    if expect == "negligible":
        return verdict.is_negligible
    if expect == "not-negligible":
        return not verdict.is_negligible
    if expect == "bounded":
        return verdict.is_moderate and verdict.fitted_slope >= -0.1
    m = re.fullmatch(r"moderate\((\d+(?:\.\d+)?)\)", expect)
    if m:
        p = float(m.group(1))
        return verdict.is_moderate and abs(verdict.fitted_slope + p) <= 0.1
    raise ValueError(f"unknown expectation {expect!r}")


def analyse_record(report: ScenarioReport, rec: SweepRecord, expectations: dict,
                   associations: dict, scale: Optional[AsymptoticScale] = None,
                   tol_assoc: float = 1e-2):
    """Classify every seminorm series and check every pairing series.

    ``expectations`` maps series keys to "negligible", "not-negligible",
    "bounded" or "moderate(p)"; ``associations`` maps pairing keys to
    (target, theta) or lists of them.  Adds checks, verdict lines, tables
    and plot data to ``report``.
    """
    rows = []
    verdicts = {}
    for key in rec.values:
        if not key[0].startswith("P["):
            continue
        v = classify(rec, key, scale)
        verdicts[key] = v
        rows.append([key[0], key[1], key[2], v.fitted_slope, v.fit_r2, str(v), v.envelope, v.note])
        s = rec.series(key)
        good = np.isfinite(s) & (s > 0)
        e = np.asarray(rec.eps_list)[good]
        report.plots[f"loglog_{_slug(key[0])}_{_slug(key[1])}_l{key[2]}.dat"] = (
            f"log(eps) log({key[0]} on {key[1]}, l={key[2]})",
            list(zip(np.log(e).tolist(), np.log(s[good]).tolist())),
        )
        expect = expectations.get(key)
        if expect is not None:
            ok = _expect_ok(v, expect)
            label = f"{key[0]} on {key[1]}, l={key[2]}"
            report.add(f"{label} is {expect}", ok, f"{v} (slope {v.fitted_slope:.4f})")
            if expect in ("negligible", "not-negligible"):
                status = "PASS" if v.is_negligible else "FAIL"
                report.verdict_lines.append(f"negligible: {status} ({v}) for {label}")
            else:
                report.verdict_lines.append(f"{expect}: {'PASS' if ok else 'FAIL'} ({v}) for {label}")
    if rows:
        report.tables.append(("Seminorm verdicts",
                              ["observable", "K", "l", "slope", "r2", "verdict", "envelope", "note"], rows))
    arows = []
    assoc = {}
    for key, spec in associations.items():
        specs = spec if isinstance(spec, list) else [spec]
        vals = rec.series(key)
        report.plots[f"pairing_{_slug(key[0])}_{_slug(key[1])}.dat"] = (
            f"eps <{key[0]}, {key[1]}>", list(zip(list(rec.eps_list), vals.tolist())))
        for target, theta, expect_pass in specs:
            tv = target.pair(theta)
            av = check_association(vals, rec.eps_list, tv, tol=tol_assoc)
            assoc[(key, str(target))] = av
            arows.append([key[0], key[1], str(target), tv, av.extrapolated, av.err, av.rate,
                          "PASS" if av.converges else "FAIL"])
            report.verdict_lines.append(f"associated: {target}: {'PASS' if av.converges else 'FAIL'}"
                                        f" ({key[0]} with {key[1]})")
            if expect_pass is not None:
                report.add(f"{key[0]} with {key[1]} associates to {target}" if expect_pass
                           else f"{key[0]} with {key[1]} does not associate to {target}",
                           av.converges == expect_pass, str(av))
    if arows:
        report.tables.append(("Association", ["pairing", "test function", "target", "<T,theta>",
                                              "extrapolated", "err", "rate", "verdict"], arows))
        prow = []
        for key in associations:
            vals = rec.series(key)
            for e, v in zip(rec.eps_list, vals):
                prow.append([key[0], key[1], e, float(v)])
        report.tables.append(("Pairing table", ["pairing", "test function", "eps", "value"], prow))
    return verdicts, assoc


def solve_health(report: ScenarioReport, rec: SweepRecord):
    """Trace and a priori checks over every solve of a sweep."""
    traces, apriori, worst_t, worst_g = True, True, 0.0, -math.inf
    for reps in rec.reports.values():
        for r in reps.values():
            traces &= r["traces_ok"]
            apriori &= r["apriori_ok"]
            worst_t = max(worst_t, r["trace_err"] / r["trace_estimate"] if r["trace_estimate"] else 0.0,
                          r["trace_dy_err"] / r["trace_dy_estimate"] if r["trace_dy_estimate"] else 0.0)
            worst_g = max(worst_g, r["sup_u_frame"] - r["gronwall_bound"])
    n = sum(len(r) for r in rec.reports.values())
    report.add("boundary traces within 10x truncation estimate", traces,
               f"{n} solves, worst error/estimate ratio {worst_t:.3g}")
    report.add("a priori bound sup|u| <= gronwall_bound + 10 tol", apriori,
               f"{n} solves, max(sup|u| - bound) = {worst_g:.3g}")
    if rec.failures:
        report.notes.append(f"{len(rec.failures)} solves failed: " +
                            "; ".join(f"eps={e:g}: {m}" for e, m in rec.failures.items()))


def _sweep_notes(report, scale_note=True):
    if scale_note:
        report.notes.append(
            "negligible means: every value below 1e-13, or log-log slope >= 3 over the sweep "
            "(a finite-sweep stand-in for decay faster than every power); values below 1e-13 "
            "are excluded from slope fits")


# ---------------------------------------------------------------- example 1


def run_example1(phi: str = "x^2", psi: str = "1", eps: float = 0.1, a: float = 2.0,
                 b: float = 2.0, n: int = 257, sweep_params=DEFAULT_SWEEP, jobs: int = 1,
                 tol: float = 1e-10) -> ScenarioReport:
    """Cubic curve x^3 + eps x with F = 0 against its closed-form solution."""
    rep = ScenarioReport("example1", "Cubic curve y = x^3 + eps*x, F = 0",
                         dict(phi=phi, psi=psi, curve="x^3 + eps*x", eps=eps, a=a, b=b, grid=f"{n}x{n}"))
    c = RegularizedCurve.from_text("x^3 + eps*x")
    data = InitialData.from_text(phi, psi)
    src = SourceTerm.from_text("0")
    fr = build_frame(c, a, b, eps)

    t0 = time.perf_counter()
    u, r = picard_solve(data, src, c, fr, (n, n), eps, tol)
    elapsed = time.perf_counter() - t0

    # oracle: phi(x) - chi(f(x)) + chi(y) with chi integrated in t directly
    chi_y = data.chi(c, u.ys, eps)
    chi_fx = data.chi(c, c.eval(u.xs, eps), eps)
    exact = np.asarray(data.phi_at(u.xs))[:, None] - chi_fx[:, None] + chi_y[None, :]
    err = float(np.max(np.abs(u.values - exact)))
    rep.add("closed form sup error < 1e-8", err < 1e-8, f"{err:.3e} on {n}x{n}")
    rep.add("solve time < 10 s", elapsed < 10.0, f"{elapsed:.2f} s")
    rep.add("F = 0 converges in one Picard iteration", r.iterations == 1, f"{r.iterations}")
    rep.data.update(sup_error=err, solve_seconds=elapsed, report=r)
    if phi == "x^2" and psi == "1" and fr.contains(((1, 1), (2, 2))):
        v = u.at(1.0, 2.0)
        rep.add("u(1, 2) = 1 + 2 - f(1) = 1.9 at eps = 0.1" if eps == 0.1 else "u(1, 2) = 3 - f(1)",
                abs(v - (3.0 - 1.0 - eps)) < 1e-6, f"{v:.12g}")

    # grid-halving: off-node (cell-centre) reconstruction error of the bilinear interpolant
    sizes = [(n - 1) // 4 + 1, (n - 1) // 2 + 1, n]
    errs = []
    for m in sizes:
        um = u if m == n else picard_solve(data, src, c, fr, (m, m), eps, tol)[0]
        xc = 0.5 * (um.xs[:-1] + um.xs[1:])
        yc = 0.5 * (um.ys[:-1] + um.ys[1:])
        ex = np.asarray(data.phi_at(xc))[:, None] - data.chi(c, c.eval(xc, eps), eps)[:, None] \
            + data.chi(c, yc, eps)[None, :]
        X, Y = np.meshgrid(xc, yc, indexing="ij")
        errs.append(float(np.max(np.abs(um.at(X, Y) - ex))))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    rep.add("grid-halving convergence order 2 +- 0.2", all(abs(o - 2) <= 0.2 for o in orders),
            "interpolation error " + ", ".join(f"{e:.3e}" for e in errs)
            + "; orders " + ", ".join(f"{o:.3f}" for o in orders))
    rep.data.update(halving_errors=errs, orders=orders)
    rep.tables.append(("Grid halving", ["grid", "cell-centre error"], [[f"{m}x{m}", e] for m, e in zip(sizes, errs)]))

    ratio_t = r.trace_err / r.trace_estimate
    ratio_d = r.trace_dy_err / r.trace_dy_estimate
    rep.add("boundary traces within 10x truncation estimate", r.traces_ok,
            f"trace {r.trace_err:.3e} (est {r.trace_estimate:.3e}, ratio {ratio_t:.3g}); "
            f"d/dy {r.trace_dy_err:.3e} (est {r.trace_dy_estimate:.3e}, ratio {ratio_d:.3g})")
    rep.add("a priori bound sup|u| <= gronwall_bound + 10 tol", r.apriori_ok,
            f"sup|u| on K_eps {r.sup_u_frame:.6g}, bound {r.gronwall_bound:.6g}")

    # x-part of the solution: u(x, 0) = h_eps(x) = H(x) - eps L(x)
    H, L = decomposition_HL(phi, psi, u.xs)
    j0 = int(np.argmin(np.abs(u.ys)))
    h_num = u.values[:, j0]
    dec = float(np.max(np.abs(h_num - (H - eps * L)))) if abs(u.ys[j0]) < 1e-14 else math.nan
    rep.add("x-part u(x, 0) = H(x) - eps L(x)", dec < 1e-8, f"sup error {dec:.3e}")
    if phi == "x^2" and psi == "1":
        dH = float(np.max(np.abs(H - (u.xs**2 - u.xs**3))))
        dL = float(np.max(np.abs(L - u.xs)))
        rep.add("H(x) = x^2 - x^3 and L(x) = x", dH < 1e-10 and dL < 1e-10, f"{dH:.2e}, {dL:.2e}")
    rep.notes.append("H(x) = phi(x) - int_0^x 3 s^2 psi(s) ds and L(x) = int_0^x psi(s) ds; "
                     "the x-part of the solution is H - eps*L")
    sel = np.linspace(0, n - 1, 9).astype(int)
    rep.tables.append(("Decomposition of the x-part", ["x", "u(x,0)", "H(x)", "L(x)"],
                       [[float(u.xs[i]), float(h_num[i]), float(H[i]), float(L[i])] for i in sel]))

    # bounded family: P_{K,0}(u_eps) over a sweep
    K = ((-1.0, 1.0), (-1.0, 1.0))
    pb = Problem(data, src, c, a=1.0, b=1.0, grid=(129, 129), tol=tol)
    obs = [Observable("u", K, "K", 0)]
    rec = sweep(pb, *sweep_params, obs, jobs=jobs)
    rep.record = rec
    analyse_record(rep, rec, {obs[0].key: "bounded"}, {})
    solve_health(rep, rec)
    _sweep_notes(rep)
    return rep


def decomposition_HL(phi: str, psi: str, xs):
    """H(x) = phi(x) - int_0^x 3 s^2 psi(s) ds and L(x) = int_0^x psi(s) ds."""
    pe, qe = as_expr(phi), as_expr(psi)

    def psi_f(s):
        return np.broadcast_to(np.asarray(evaluate(qe, {"x": s}), float), np.shape(s))

    L = cumulative_at(psi_f, xs, rtol=1e-13)
    M = cumulative_at(lambda s: 3 * s * s * psi_f(s), xs, rtol=1e-13)
    phiv = np.broadcast_to(np.asarray(evaluate(pe, {"x": np.asarray(xs)}), float), np.shape(xs))
    return phiv - M, L


# ---------------------------------------------------------------- example 2

_REG = {
    "tanh": "tanh(x/eps)",
    "arctan": "2/pi*atan(x/eps)",
}


def example2_problem(reg: str, phi: str = "0", psi: str = "cos(x)", alpha: str = "eps^3*x",
                     b: Optional[float] = None, grid=(257, 129), cells_per_eps: float = 16.0):
    if reg not in _REG:
        raise ValueError(f"unknown regularization {reg!r}")
    text = _REG[reg] + (f" + {alpha}" if alpha and alpha != "0" else "")
    if b is None:
        b = 1.0 if reg == "tanh" else 0.5
    return Problem(InitialData.from_text(phi, psi), SourceTerm.from_text("0"),
                   RegularizedCurve.from_text(text), a=1.0, b=b, grid=grid,
                   cells_per_eps=cells_per_eps)


def example2_targets(phi: str, psi: str):
    """Distribution targets for u, du/dx and du/dy of the sign-curve limit."""
    p0 = float(evaluate(as_expr(psi), {"x": 0.0}))
    dphi = differentiate(as_expr(phi), "x")
    ux = DistributionTarget(smooth=dphi, diracs=(DiracTerm(-2 * p0),), label="-2psi(0)delta+phi'")
    uy = DistributionTarget(smooth=as_expr(p0), label="psi(0)")
    u_lit = DistributionTarget(smooth=as_expr(phi) + as_expr(p0) * as_expr("y"),
                               heavisides=(HeavisideTerm(-2 * p0),), label="-2psi(0)Y_x+phi+psi(0)y")
    u_full = DistributionTarget(smooth=as_expr(phi) + as_expr(p0) * as_expr("y") + as_expr(p0),
                                heavisides=(HeavisideTerm(-2 * p0),),
                                label="-2psi(0)Y_x+phi+psi(0)y+psi(0)")
    return ux, uy, u_lit, u_full, p0


def run_example2(regularization: str = "tanh", phi: str = "0", psi: str = "cos(x)",
                 alpha: str = "eps^3*x", sweep_params=DEFAULT_SWEEP, jobs: int = 1,
                 companion: bool = True) -> ScenarioReport:
    """Sign curve regularised by tanh or arctan, F = 0: growth rates and distributional limits."""
    other = "arctan" if regularization == "tanh" else "tanh"
    pb = example2_problem(regularization, phi, psi, alpha)
    rep = ScenarioReport(f"example2-{regularization}",
                         f"Sign curve regularised by {regularization}, F = 0",
                         dict(phi=phi, psi=psi, curve=str(pb.curve), a=pb.a, b=pb.b,
                              grid=f"{pb.grid[0]}x{pb.grid[1]} (x refined to eps/16)",
                              sweep=f"eps = {sweep_params[0]} * {sweep_params[1]}^k, k < {sweep_params[2]}"))
    K = ((-1.0, 1.0), (-pb.b, pb.b))
    th0 = TestFunction.unit_bump(0.0, 0.5, 0.0, 0.5, id="theta0")
    th1 = TestFunction.unit_bump(0.25, 0.5, 0.1, 0.3, id="theta1")
    ux, uy, u_lit, u_full, p0 = example2_targets(phi, psi)
    obs = [Observable("u", K, "K", 0), Observable("u", K, "K", 1),
           PairingObservable(th0, "u", (1, 0)), PairingObservable(th0, "u", (0, 1)),
           PairingObservable(th1, "u", (0, 0))]
    t0 = time.perf_counter()
    rec = sweep(pb, *sweep_params, obs, jobs=jobs)
    elapsed = time.perf_counter() - t0
    rep.record = rec
    rep.add("sweep time < 2 min", elapsed < 120, f"{elapsed:.1f} s")
    assoc_spec = {
        obs[2].key: (ux, th0, True),
        obs[3].key: (uy, th0, True),
        obs[4].key: [(u_full, th1, True), (u_lit, th1, None)],
    }
    verdicts, assoc = analyse_record(rep, rec, {obs[0].key: "bounded", obs[1].key: "moderate(1)"}, assoc_spec)
    rep.data.update(verdicts=verdicts, association=assoc, sweep_seconds=elapsed, psi0=p0)
    solve_health(rep, rec)

    eps_list = rec.eps_list
    if companion:
        pc = example2_problem(other, phi, psi, alpha)
        rc = sweep(pc, *sweep_params, obs[2:4], jobs=jobs)
        for ob, tgt in ((obs[2], ux), (obs[3], uy)):
            mine = assoc[(ob.key, str(tgt))].extrapolated
            theirs = check_association(rc.series(ob.key), rc.eps_list, tgt.pair(th0)).extrapolated
            rel = abs(mine - theirs) / max(abs(mine), abs(theirs), 1e-300)
            rep.add(f"{ob.id} limit agrees with the {other} regularization", rel < 1e-2,
                    f"{mine:.6g} vs {theirs:.6g} (rel {rel:.2e})")
        # the two curve families differ by a non-negligible amount on [-1, 1]
        d = [curve_difference_seminorm(pb.curve, pc.curve, (-1.0, 1.0), e, 0) for e in eps_list]
        v = classify_series(eps_list, d)
        rep.add(f"{regularization} and {other} curves are not equivalent (difference not negligible)",
                not v.is_negligible, f"sup|f-g| on [-1,1]: {v} (slope {v.fitted_slope:.3f})")
        rep.tables.append(("Curve difference", ["eps", "sup|f-g| on [-1,1]"],
                           [[e, x] for e, x in zip(eps_list, d)]))
        rep.data["companion_record"] = rc
    rep.notes.append(
        "u itself tends to phi - psi(0)sgn(x) + psi(0)y, which is -2psi(0)Y_x + phi + psi(0)y plus the "
        "constant psi(0); the form without that constant is reported for comparison and is expected to fail")
    rep.notes.append(f"the curve carries the small increasing term {alpha!r} so that it is numerically "
                     "strictly increasing and onto; it decays like eps^3 or faster")
    _sweep_notes(rep)
    return rep


# ---------------------------------------------------------------- counterexample


def counterexample_curves():
    f = RegularizedCurve.from_text("eps*x", inverse="y/eps", name="f")
    g = RegularizedCurve.from_text(f"eps*x + {band_step_text()}", name="g")
    return f, g


def run_counterexample(eps_checks=(0.1, 0.01), sweep_params=DEFAULT_SWEEP, jobs: int = 1,
                       grid=(257, 129)) -> ScenarioReport:
    """Linear curve and a band-step perturbation: equal on compacts, inverses 1/eps apart."""
    f, g = counterexample_curves()
    rep = ScenarioReport("counterexample", "Linear curve against a band-step perturbation",
                         dict(f=str(f.forward), g="eps*x + n_eps(x)", psi="x", phi="0", F="0"))
    rows = []
    for e in eps_checks:
        d34 = inverse_difference_sup(f, g, (3.0, 4.0), e)
        d11 = inverse_difference_sup(f, g, (-1.0, 1.0), e)
        rel = abs(d34 - 1 / e) * e
        rep.add(f"sup over [3,4] of |f^-1 - g^-1| = 1/eps at eps = {e:g}", rel < 1e-9,
                f"{d34:.15g} (rel err {rel:.2e})")
        rep.add(f"f^-1 = g^-1 on [-1,1] at eps = {e:g}", d11 <= 1e-12 / e,
                f"sup diff {d11:.3g} (round-off of an inverse of size 1/eps)")
        rows.append([e, d34, 1 / e, d11])
    rep.tables.append(("Inverse difference", ["eps", "sup_[3,4]", "1/eps", "sup_[-1,1]"], rows))

    data = InitialData.from_text("0", "x")
    src = SourceTerm.from_text("0")
    pb = Problem(data, src, f, a=1.0, b=4.0, grid=grid, alt_curve=g)
    e = eps_checks[0]
    fields, reports = pb.solve(e)
    w = fields["w"]

    dyw = derivative_field(w, 0, 1)
    ix, iy = w.index_box(((-1.0, 1.0), (3.0, 4.0)))
    iy = iy[(iy > 0) & (iy < w.ny - 1)]
    ys = w.ys[iy]
    exact = f.invert(ys, e) - g.invert(ys, e)
    gap = float(np.max(np.abs(dyw[np.ix_(ix, iy)] - exact[None, :])))
    rep.add("d(u - v)/dy = f^-1(y) - g^-1(y) on [-1,1]x[3,4]", gap < 1e-6 / e,
            f"max deviation {gap:.3e} at eps = {e:g}")

    K = ((-1.0, 1.0), (3.0, 4.0))
    obs = [Observable("w", K, "K34", 1)]
    rec = sweep(pb, *sweep_params, obs, jobs=jobs)
    rep.record = rec
    verdicts, _ = analyse_record(rep, rec, {obs[0].key: "not-negligible"}, {})
    v = verdicts[obs[0].key]
    rep.add("difference family classified moderate(1)", str(v) == "moderate(1)", str(v))
    el = rec.eps_list
    d = [inverse_difference_sup(f, g, (3.0, 4.0), x, n=1001) for x in el]
    vi = classify_series(el, d)
    rep.add("inverse difference on [3,4] is moderate(1), not negligible",
            str(vi) == "moderate(1)" and not vi.is_negligible, f"{vi} (slope {vi.fitted_slope:.6f})")
    rep.verdict_lines.append(f"negligible: {'PASS' if vi.is_negligible else 'FAIL'} ({vi}) for f^-1 - g^-1 on [3,4]")
    rep.plots["loglog_inverse_difference.dat"] = (
        "log(eps) log(sup_[3,4] |f^-1 - g^-1|)", list(zip(np.log(el).tolist(), np.log(d).tolist())))
    rep.data.update(verdict=v, inverse_verdict=vi)
    solve_health(rep, rec)
    rep.notes.append("n_eps is a C-infinity increasing step: -1 below -2/eps, 0 on [-1/eps, 1/eps], "
                     "1 above 2/eps, built from a saturated tanh smoothstep")
    _sweep_notes(rep)
    return rep


# ---------------------------------------------------------------- representative independence


def _difference_experiment(rep, base: RegularizedCurve, pert: RegularizedCurve, data, src,
                           sweep_params, jobs, a=1.0, b=1.0, grid=(129, 129), inverse_check=True):
    K = ((-a, a), (-b, b))
    pb = Problem(data, src, pert, a=a, b=b, grid=grid, alt_curve=base)
    obs = [Observable("w", K, "K", l) for l in (0, 1, 2)]
    rec = sweep(pb, *sweep_params, obs, jobs=jobs)
    rep.record = rec
    _, _ = analyse_record(rep, rec, {obs[0].key: "negligible"}, {})
    v0, vall = classify_difference(rec, "P[w]", "K")
    rep.add("w = u - v is negligible at l = 0 (slope >= 3)",
            v0.is_negligible and v0.fitted_slope >= 3, f"{v0} (slope {v0.fitted_slope:.4f})")
    rep.notes.append("higher-order verdicts for w (corroboration only): "
                     + ", ".join(f"l={l}: {v} (slope {v.fitted_slope:.3f})" for l, v in vall.items()))
    rep.data.update(w_verdict=v0, w_verdicts=vall)
    if inverse_check:
        el = rec.eps_list
        d = [inverse_difference_sup(pert, base, (-b, b), e) for e in el]
        vi = classify_series(el, d)
        rep.add("inverse difference f^-1 - g^-1 on [-b,b] is negligible (slope >= 3)",
                vi.is_negligible and (vi.fitted_slope >= 3), f"{vi} (slope {vi.fitted_slope:.4f})")
        rep.tables.append(("Inverse difference", ["eps", "sup|f^-1 - g^-1|"], [[e, x] for e, x in zip(el, d)]))
        rep.plots["loglog_inverse_difference.dat"] = (
            "log(eps) log(sup |f^-1 - g^-1|)",
            [(math.log(e), math.log(x)) for e, x in zip(el, d) if x > 0])
        rep.data["inverse_verdict"] = vi
    solve_health(rep, rec)
    _sweep_notes(rep)
    return rep


def run_uniqueness_experiment(base: str = "x^3 + eps*x", s: float = 4.0, rho: str = "sin(x)",
                              phi: str = "sin(x)", psi: str = "cos(x)", F: str = "0.5*sin(u)",
                              sweep_params=DEFAULT_SWEEP, jobs: int = 1) -> ScenarioReport:
    """Solutions for f_eps and f_eps + eps^s rho differ by a negligible family."""
    if s < 2:
        raise ValueError("perturbation scale s must be at least 2")
    f = RegularizedCurve.from_text(base)
    g = f.perturbed(s, rho)
    rep = ScenarioReport("uniqueness", "Representative independence of the solution",
                         dict(f=base, g=str(g.forward), phi=phi, psi=psi, F=F, s=s))
    eps_list = geometric_eps(*sweep_params)
    keep = []
    for e in eps_list:
        try:
            xs = np.linspace(-4.0, 4.0, 4001)
            g.check_monotone(e, xs)
            keep.append(e)
        except Exception as exc:  # noqa: BLE001 - reported, eps dropped
            rep.notes.append(f"eps={e:g} dropped: {exc}")
    if len(keep) != len(eps_list):
        sweep_params = (keep[0], sweep_params[1], len(keep))
    data = InitialData.from_text(phi, psi)
    return _difference_experiment(rep, f, g, data, SourceTerm.from_text(F), sweep_params, jobs)


def run_classical_coincidence(g: str = "x", s: float = 4.0, rho: str = "sin(x)",
                              phi: str = "sin(x)", psi: str = "cos(x)", F: str = "0.5*sin(u)",
                              sweep_params=DEFAULT_SWEEP, jobs: int = 1) -> ScenarioReport:
    """A smooth non-characteristic curve: its classical solution matches a perturbed family."""
    gc = RegularizedCurve.from_text(g)
    fc = gc.perturbed(s, rho)
    rep = ScenarioReport("classical", "Coincidence with the classical solution",
                         dict(g=g, f=str(fc.forward), phi=phi, psi=psi, F=F, s=s))
    data = InitialData.from_text(phi, psi)
    return _difference_experiment(rep, gc, fc, data, SourceTerm.from_text(F), sweep_params, jobs,
                                  inverse_check=False)


RUNNERS: dict = {
    "example1": lambda **kw: run_example1(**kw),
    "example2-tanh": lambda **kw: run_example2("tanh", **kw),
    "example2-arctan": lambda **kw: run_example2("arctan", **kw),
    "counterexample": lambda **kw: run_counterexample(**kw),
    "uniqueness": lambda **kw: run_uniqueness_experiment(**kw),
    "classical": lambda **kw: run_classical_coincidence(**kw),
}


def run_scenario(name: str, outdir=None, jobs: int = 1) -> ScenarioReport:
    if name not in RUNNERS:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    rep = RUNNERS[name](jobs=jobs)
    if outdir is not None:
        rep.write(outdir)
    return rep
