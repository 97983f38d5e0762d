"""Command-line front end: ``charwave solve|sweep|scenario|verify``.

Exit codes: 0 success, 1 configuration error, 2 solve failure (or failed
checks), 3 sweep finished with some eps values missing.
"""
from __future__ import annotations

import argparse
import configparser
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import scenarios
from .association import DiracTerm, DistributionTarget, HeavisideTerm, PairingObservable, TestFunction
from .asymptotics import Observable, Problem, SweepError, sweep
from .curves import CurveError, RegularizedCurve
from .exprdsl import ExprError, as_expr
from .goursat import SolveError, SourceTerm
from .initialdata import InitialData
from .invariants import run_config_invariants

EXIT_OK, EXIT_CONFIG, EXIT_SOLVE, EXIT_PARTIAL = 0, 1, 2, 3
DEFAULT_OUT = "charwave-out"
_EXPECTATIONS = re.compile(r"^(negligible|not-negligible|bounded|moderate\(\s*[0-9.eE+-]+\s*\))$")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    data: InitialData
    src: SourceTerm
    curve: RegularizedCurve
    alt_curve: Optional[RegularizedCurve]
    a: float
    b: float
    grid: tuple
    cells_per_eps: float
    eps: float
    eps0: float
    ratio: float
    count: int
    tol: float
    max_iter: int
    m_eps: Optional[float]
    observables: list = field(default_factory=list)
    expectations: dict = field(default_factory=dict)
    associations: dict = field(default_factory=dict)
    out: Optional[str] = None
    text: dict = field(default_factory=dict)

    def problem(self) -> Problem:
        return Problem(self.data, self.src, self.curve, a=self.a, b=self.b, grid=self.grid,
                       tol=self.tol, max_iter=self.max_iter, alt_curve=self.alt_curve,
                       cells_per_eps=self.cells_per_eps, m_eps=self.m_eps)


def _num(sec, key, default, kind=float, positive=True):
    raw = sec.get(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        v = kind(raw)
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r} is not a valid {kind.__name__}") from None
    if positive and not v > 0:
        raise ConfigError(f"[{sec.name}] {key} must be positive, got {raw!r}")
    return v


def _expr(sec, key, default=None):
    raw = sec.get(key, default)
    if raw is None:
        raise ConfigError(f"[{sec.name}] missing required key {key!r}")
    try:
        as_expr(raw)
    except ExprError as exc:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r}: {exc}") from None
    return raw


def _floats(parts, what):
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{what}: expected numbers, got {' '.join(parts)!r}") from None


def _parse_target(oid, raw):
    fields_ = {}
    for chunk in raw[len("dist"):].split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise ConfigError(f"[targets] {oid}: expected key=value, got {chunk!r}")
        k, v = (s.strip() for s in chunk.split("=", 1))
        fields_.setdefault(k, []).append(v)
    unknown = set(fields_) - {"smooth", "delta", "heaviside", "label"}
    if unknown:
        raise ConfigError(f"[targets] {oid}: unknown target fields {sorted(unknown)}")

    def terms(kind, cls):
        out = []
        for v in fields_.get(kind, []):
            coef, _, loc = v.partition("@")
            c, l = _floats([coef, loc or "0"], f"[targets] {oid} {kind}")
            out.append(cls(c, l))
        return tuple(out)

    smooth = fields_.get("smooth", ["0"])[-1]
    try:
        smooth_e = as_expr(smooth)
    except ExprError as exc:
        raise ConfigError(f"[targets] {oid} smooth = {smooth!r}: {exc}") from None
    return DistributionTarget(smooth=smooth_e, diracs=terms("delta", DiracTerm),
                              heavisides=terms("heaviside", HeavisideTerm),
                              label=fields_.get("label", [f"target of {oid}"])[-1])


def load_config(path, eps=None, tol=None, out=None) -> RunConfig:
    """Read and validate a run configuration; flags override file values."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from None
    for name in ("problem", "frame", "sweep", "solver", "observables", "testfunctions", "targets", "output"):
        if not cp.has_section(name):
            cp.add_section(name)
    pr, fr, sw, so = cp["problem"], cp["frame"], cp["sweep"], cp["solver"]

    phi, psi, F = _expr(pr, "phi"), _expr(pr, "psi"), _expr(pr, "F", "0")
    curve_txt = _expr(pr, "curve")
    inv_txt = pr.get("curve_inverse") or None
    alt_txt = pr.get("alt_curve") or None
    try:
        data = InitialData.from_text(phi, psi)
        src = SourceTerm.from_text(F)
        curve = RegularizedCurve.from_text(curve_txt, inverse=inv_txt, name="f")
        alt = RegularizedCurve.from_text(alt_txt, name="g") if alt_txt else None
    except (ExprError, CurveError) as exc:
        raise ConfigError(f"[problem] {exc}") from None

    a, b = _num(fr, "a", 1.0), _num(fr, "b", 1.0)
    nx, ny = _num(fr, "nx", 129, int), _num(fr, "ny", 129, int)
    if nx < 3 or ny < 3:
        raise ConfigError("[frame] nx and ny must be at least 3")
    cpe = _num(fr, "cells_per_eps", 0.0, positive=False)
    eps0 = _num(sw, "eps0", 0.5)
    ratio = _num(sw, "ratio", 0.5)
    if not ratio < 1:
        raise ConfigError("[sweep] ratio must lie in (0, 1)")
    count = _num(sw, "count", 11, int)
    eps_v = eps if eps is not None else _num(sw, "eps", eps0)
    if not eps_v > 0:
        raise ConfigError("eps must be positive")
    tol_v = tol if tol is not None else _num(so, "tol", 1e-10)
    if not tol_v > 0:
        raise ConfigError("tol must be positive")
    max_iter = _num(so, "max_iter", 200, int)
    m_eps = _num(so, "m_eps", None)

    thetas = {}
    for name, raw in cp["testfunctions"].items():
        parts = raw.split()
        if not parts or parts[0] != "bump" or len(parts) != 5:
            raise ConfigError(f"[testfunctions] {name}: expected 'bump cx rx cy ry', got {raw!r}")
        cx, rx, cy, ry = _floats(parts[1:], f"[testfunctions] {name}")
        if rx <= 0 or ry <= 0:
            raise ConfigError(f"[testfunctions] {name}: radii must be positive")
        thetas[name] = TestFunction.unit_bump(cx, rx, cy, ry, id=name)

    observables, by_id = [], {}
    for oid, raw in cp["observables"].items():
        parts = raw.split()
        if not parts:
            raise ConfigError(f"[observables] {oid} is empty")
        kind = parts[0]
        if kind == "seminorm" and len(parts) == 7:
            fld = parts[1]
            l = _floats(parts[2:3], f"[observables] {oid}")[0]
            x0, x1, y0, y1 = _floats(parts[3:], f"[observables] {oid}")
            if l != int(l) or not 0 <= l <= 4:
                raise ConfigError(f"[observables] {oid}: order must be an integer in 0..4")
            if not (x0 < x1 and y0 < y1):
                raise ConfigError(f"[observables] {oid}: empty rectangle")
            ob = Observable(fld, ((x0, x1), (y0, y1)), oid, int(l))
        elif kind == "pair" and len(parts) == 5:
            fld = parts[1]
            dx, dy = _floats(parts[2:4], f"[observables] {oid}")
            if parts[4] not in thetas:
                raise ConfigError(f"[observables] {oid}: unknown test function {parts[4]!r}")
            ob = PairingObservable(thetas[parts[4]], fld, (int(dx), int(dy)))
        else:
            raise ConfigError(f"[observables] {oid}: expected 'seminorm <field> <l> <x0> <x1> <y0> <y1>' "
                              f"or 'pair <field> <dx> <dy> <testfn>', got {raw!r}")
        if fld not in ("u", "v", "w"):
            raise ConfigError(f"[observables] {oid}: field must be u, v or w")
        if fld in ("v", "w") and alt is None:
            raise ConfigError(f"[observables] {oid}: field {fld} needs [problem] alt_curve")
        observables.append(ob)
        by_id[oid] = ob

    expectations, associations = {}, {}
    for oid, raw in cp["targets"].items():
        if oid not in by_id:
            raise ConfigError(f"[targets] {oid}: no such observable")
        ob, raw = by_id[oid], raw.strip()
        if raw.startswith("dist"):
            if not isinstance(ob, PairingObservable):
                raise ConfigError(f"[targets] {oid}: distribution targets apply to pairings")
            associations.setdefault(ob.key, []).append((_parse_target(oid, raw), ob.theta, True))
        elif _EXPECTATIONS.match(raw):
            if not isinstance(ob, Observable):
                raise ConfigError(f"[targets] {oid}: growth verdicts apply to seminorms")
            expectations[ob.key] = re.sub(r"\s+", "", raw)
        else:
            raise ConfigError(f"[targets] {oid}: unrecognised target {raw!r}")

    out_dir = out or os.environ.get("CHARWAVE_OUT") or cp["output"].get("dir") or DEFAULT_OUT
    text = dict(phi=phi, psi=psi, F=F, curve=curve_txt)
    if alt_txt:
        text["alt_curve"] = alt_txt
    return RunConfig(data, src, curve, alt, a, b, (nx, ny), cpe, eps_v, eps0, ratio, count, tol_v,
                     max_iter, m_eps, observables, expectations, associations, out_dir, text)


# ---------------------------------------------------------------- commands


def cmd_solve(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        fields_, reports = cfg.problem().solve(cfg.eps)
    except SolveError as exc:
        print(f"solve failed at eps={cfg.eps:g}: {exc}", file=sys.stderr)
        rep = getattr(exc, "report", None)
        (out / "solve_report.txt").write_text(
            f"status = failed\nerror = {exc}\n" + (rep.to_text() if rep is not None else ""))
        return EXIT_SOLVE
    except (CurveError, ExprError, ArithmeticError) as exc:
        print(f"solve failed at eps={cfg.eps:g}: {exc}", file=sys.stderr)
        (out / "solve_report.txt").write_text(f"status = failed\nerror = {exc}\n")
        return EXIT_SOLVE
    parts = []
    for name in fields_:
        fname = "field.csv" if name == "u" else f"field_{name}.csv"
        fields_[name].to_csv(out / fname)
    for name, r in reports.items():
        parts.append(f"[{name}]\n{r.to_text()}")
    (out / "solve_report.txt").write_text("status = ok\n" + "\n".join(parts) + "\n")
    r = reports["u"]
    print(f"solved eps={cfg.eps:g}: {r.iterations} iterations, residual {r.residual:.3e}, "
          f"traces {'ok' if r.traces_ok else 'FAIL'}, bound {'ok' if r.apriori_ok else 'FAIL'}")
    print(f"wrote {out / 'field.csv'} and {out / 'solve_report.txt'}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, jobs: int) -> int:
    if not cfg.observables:
        print("config error: [observables] is empty", file=sys.stderr)
        return EXIT_CONFIG
    rep = scenarios.ScenarioReport("sweep", "Parameter sweep",
                                   dict(cfg.text, a=cfg.a, b=cfg.b, grid=f"{cfg.grid[0]}x{cfg.grid[1]}",
                                        sweep=f"eps = {cfg.eps0:g} * {cfg.ratio:g}^k, k < {cfg.count}"))
    t0 = time.perf_counter()
    try:
        rec = sweep(cfg.problem(), cfg.eps0, cfg.ratio, cfg.count, cfg.observables, jobs=jobs)
    except SweepError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rep.record = rec
    rep.data["sweep_seconds"] = time.perf_counter() - t0
    if len(rec.failures) == len(rec.eps_list):
        rep.notes.append("every solve failed: " + "; ".join(f"eps={e:g}: {m}" for e, m in rec.failures.items()))
        paths = rep.write(cfg.out)
        print(f"all solves failed; wrote {paths[0]}", file=sys.stderr)
        return EXIT_SOLVE
    try:
        scenarios.analyse_record(rep, rec, cfg.expectations, cfg.associations)
    except (SweepError, ValueError) as exc:
        rep.notes.append(f"classification skipped: {exc}")
    scenarios.solve_health(rep, rec)
    if rec.failures:
        n_ok = len(rec.eps_list) - len(rec.failures)
        rep.notes.append(f"partial sweep: verdicts use the {n_ok} eps values that solved")
    scenarios._sweep_notes(rep)
    paths = rep.write(cfg.out)
    for line in rep.verdict_lines:
        print(line)
    print(f"wrote {len(paths)} files to {cfg.out}")
    return EXIT_PARTIAL if rec.failures else EXIT_OK


def cmd_scenario(name: str, out: str, jobs: int) -> int:
    if name not in scenarios.RUNNERS:
        print(f"unknown scenario {name!r}; choose from {', '.join(scenarios.SCENARIOS)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep = scenarios.run_scenario(name, out, jobs=jobs)
    except (SolveError, CurveError, ArithmeticError) as exc:
        print(f"scenario {name} failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    print(f"{name}: {'PASS' if rep.passed else 'FAIL'}; report in {Path(out) / 'report.md'}")
    return EXIT_OK if rep.passed else EXIT_SOLVE


def cmd_verify(cfg: RunConfig, seed: int, n: int) -> int:
    try:
        results = run_config_invariants(cfg.data, cfg.src, cfg.curve, cfg.a, cfg.b, cfg.eps,
                                        cfg.grid, seed=seed, n=n)
    except (SolveError, CurveError, ArithmeticError) as exc:
        print(f"verify failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_SOLVE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="charwave", description="Characteristic Cauchy problem toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help="run configuration (.ini)")
            sp.add_argument("--eps", type=float, help="override [sweep] eps for a single solve")
            sp.add_argument("--tol", type=float, help="override [solver] tol")
        sp.add_argument("--out", help="output directory (beats CHARWAVE_OUT and [output] dir)")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")

    common(sub.add_parser("solve", help="single-eps solve, writes field.csv and solve_report.txt"))
    common(sub.add_parser("sweep", help="eps sweep with classification and association"))
    sc = sub.add_parser("scenario", help="run a packaged scenario")
    sc.add_argument("name")
    common(sc, config=False)
    vp = sub.add_parser("verify", help="run the invariant suite on a config")
    common(vp)
    vp.add_argument("--seed", type=int, default=0)
    vp.add_argument("--cases", type=int, default=100)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "scenario":
        out = args.out or os.environ.get("CHARWAVE_OUT") or str(Path(DEFAULT_OUT) / args.name)
        return cmd_scenario(args.name, out, args.jobs)
    try:
        cfg = load_config(args.config, eps=args.eps, tol=args.tol, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "solve":
        return cmd_solve(cfg)
    if args.command == "sweep":
        return cmd_sweep(cfg, args.jobs)
    return cmd_verify(cfg, args.seed, args.cases)


if __name__ == "__main__":
    sys.exit(main())
