"""Command line driver: ``hjlab <subcommand> problem.toml [flags]``.

Exit codes: 0 all checks within tolerance, 1 a check failed, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import sys
from typing import List, Optional

import numpy as np

from . import expr as ex
from . import exterior as ext
from . import hj, mechanics
from .connections import field_equation_residual, hamiltonian_connection, induce_connection, curvature
from .hj import GridSection, HamiltonResiduals, IntegrationError
from .mechanics import ReebError, Trajectory
from .problem import Problem, ProblemError, load_problem

__all__ = ["main", "run", "export_csv", "SUBCOMMANDS"]


def _fmt(v: float) -> str:
    return f"{v:.6e}"


class Report:
    def __init__(self, title: str):
        self.lines: List[str] = [title]
        self.failed = False

    def add(self, text: str = ""):
        self.lines.append(text)

    def check(self, label: str, value: float, tol: float, ok: Optional[bool] = None):
        ok = value <= tol if ok is None else ok
        self.failed |= not ok
        self.lines.append(f"  {label:<44s} {_fmt(value):>14s}  tol {tol:.1e}  {'PASS' if ok else 'FAIL'}")

    def text(self) -> str:
        return "\n".join(self.lines + [f"result: {'FAIL' if self.failed else 'PASS'}"]) + "\n"


def export_csv(result, path, residuals: Optional[HamiltonResiduals] = None) -> None:
    """Write a section (row-major over the grid) or a trajectory, 17 significant digits."""
    if isinstance(result, GridSection):
        cfg = result.cfg
        header = list(cfg.base) + list(cfg.fibre)
        cols = [m.ravel() for m in result.mesh()]
        cols += [result.values[..., i].ravel() for i in range(cfg.m)]
        if result.momenta is not None:
            for mu in range(cfg.n):
                for i in range(cfg.m):
                    header.append(f"sigma_{cfg.p(mu, i)}")
                    cols.append(result.momenta[..., mu, i].ravel())
        if residuals is not None:
            for mu in range(cfg.n):
                for i in range(cfg.m):
                    header.append(f"hamilton1_{mu + 1}_{i + 1}")
                    cols.append(residuals.first[..., mu, i].ravel())
            for i in range(cfg.m):
                header.append(f"hamilton2_{i + 1}")
                cols.append(residuals.second[..., i].ravel())
        rows = np.column_stack(cols)
    elif isinstance(result, Trajectory):
        header = ["t"] + list(result.names)
        rows = np.column_stack([result.times, result.states])
    else:
        raise TypeError(f"cannot export {type(result).__name__}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])


# --------------------------------------------------------------------------
# subcommands


def _points(prob: Problem, chart, rng):
    return ext.sample_points(chart, prob.samples, rng, prob.box(chart.names))


def _check_closed(prob, rng, rep, args):
    cfg, lam = prob.cfg, prob.form
    pts = _points(prob, cfg.e_chart, rng)
    res = [hj.closedness_residual(cfg, lam, p) for p in pts]
    for i in range(cfg.m):
        rep.check(f"A_{i + 1}", max(abs(r.A[i]) for r in res), prob.tolerances.ad)
    for (i, j) in res[0].B:
        rep.check(f"B_{i + 1}{j + 1}", max(abs(r.B[(i, j)]) for r in res), prob.tolerances.ad)


def _hj_residual(prob, rng, rep, args):
    cfg, lam, H, tol = prob.cfg, prob.form, prob.H, prob.tolerances
    pts = _points(prob, cfg.e_chart, rng)
    direct = np.array([hj.hj_residual(cfg, H, lam, p) for p in pts])
    lemma = np.array([hj.lemma_residual(cfg, H, lam, p) for p in pts])
    for i in range(cfg.m):
        rep.check(f"hj residual i={i + 1}", float(np.max(np.abs(direct[:, i]))), tol.ad)
    rep.check("exterior-path vs direct residual", float(np.max(np.abs(direct - lemma))), tol.ad)
    if prob.principal is not None:
        out = [hj.hj_pde_residual_S(cfg, H, prob.principal, p) for p in pts]
        rep.check("d/dy (div S + H) from S", max(float(np.max(np.abs(r))) for r, _ in out), tol.ad)
        g = [v for _, v in out]
        rep.add(f"  gauge value range [{_fmt(min(g))}, {_fmt(max(g))}]")


def _induce(prob, rng, rep, args):
    cfg = prob.cfg
    ic = induce_connection(cfg, prob.H, prob.form)
    for mu in range(cfg.n):
        for i in range(cfg.m):
            rep.add(f"  Gamma~_{mu + 1}^{i + 1} = {ic.gamma[mu][i]}")
    pts = _points(prob, cfg.e_chart, rng)
    worst = max((float(np.max(np.abs(curvature(ic, p)))) for p in pts), default=0.0)
    rep.check("max |curvature|", worst, prob.tolerances.flat)


def _integrate(prob, rng, rep, args):
    cfg, tol = prob.cfg, prob.tolerances
    ic = induce_connection(cfg, prob.H, prob.form)
    grid = hj.Grid([prob.domain[x][0] for x in cfg.base], [prob.domain[x][1] for x in cfg.base], prob.steps)
    x0 = prob.initial.get("x0", list(grid.lower))
    y0 = prob.initial.get("y0", [sum(prob.domain[y]) / 2 for y in cfg.fibre])
    sec = hj.lift_section(cfg, prob.form, hj.integrate_section(ic, x0, y0, grid, tol.path))
    res = hj.hamilton_residuals(cfg, prob.H, prob.form, sec)
    rep.add(f"  x0 = {list(map(float, x0))}  y0 = {list(map(float, y0))}  nodes = {int(np.prod(grid.shape))}")
    rep.add(f"  truncation estimate {_fmt(sec.truncation)}")
    rep.check("path-independence discrepancy", sec.path_discrepancy, sec.path_tol)
    scale = max(1.0, float(np.max(np.abs(sec.values))), float(np.max(np.abs(sec.momenta))))
    bound = tol.grid_coef * max(grid.spacing) ** 2 * scale
    rep.check("first Hamilton equation", res.max_first, bound)
    rep.check("second Hamilton equation", res.max_second, bound)
    if args.csv:
        export_csv(sec, args.csv, res)
        rep.add(f"  wrote {args.csv}")


def _verify(prob, rng, rep, args):
    cfg = prob.cfg
    r = hj.verify_theorem(cfg, prob.H, prob.form, prob.box(cfg.e_chart.names), prob.steps,
                          prob.tolerances, rng, prob.fibers, prob.samples, prob.initial.get("x0"))
    tol = prob.tolerances
    rep.add(f"  step {_fmt(r.step)}  fibres {r.fibers}")
    rep.check("closedness of lambda", r.closed_max, tol.ad)
    if r.reason == "lambda is not closed":
        rep.add(f"  refused: {r.reason}")
        return
    rep.check("curvature of induced connection", r.curvature_max, tol.flat)
    rep.check("(ii) hj residual, direct", r.hj_max, tol.ad)
    rep.check("(ii) hj residual, exterior path", r.lemma_max, tol.ad)
    if r.reason:
        rep.add(f"  refused: {r.reason}")
        rep.failed = True
        return
    rep.check("(i) first Hamilton equation", r.first_max, r.grid_bound, r.hamilton_ok)
    rep.check("(i) second Hamilton equation", r.second_max, r.grid_bound, r.hamilton_ok)
    rep.check("path-independence discrepancy", r.path_max, tol.path, r.path_flagged == 0)
    rep.add(f"  (i) <=> (ii) consistent: {'yes' if r.consistent else 'NO'}")
    if not r.consistent:
        rep.failed = True
    for y0, f1, f2, bound, disc, flag in r.fiber_rows:
        rep.add(f"    fibre y0={[round(v, 6) for v in y0]}  first {_fmt(f1)}  second {_fmt(f2)}  "
                f"bound {_fmt(bound)}{'  PATH-FLAG' if flag else ''}")


def _field_equation(prob, rng, rep, args):
    cfg, H = prob.cfg, prob.H
    C = hamiltonian_connection(cfg, H)
    chart = cfg.j1_chart
    pts = _points(prob, chart, rng)
    worst = 0.0
    for p in pts:
        for J in itertools.combinations(range(chart.dim), cfg.n + 1):
            worst = max(worst, abs(field_equation_residual(cfg, H, C, p, [chart.basis(j) for j in J])))
    rep.check("i_h Omega_h - (n-1) Omega_h on basis tuples", worst, prob.tolerances.ad)


def _need_n1(prob):
    if prob.cfg.n != 1:
        raise ProblemError("bundle.n: this subcommand needs n = 1")


def _reeb(prob, rng, rep, args):
    _need_n1(prob)
    cfg = prob.cfg
    pts = _points(prob, cfg.j1_chart, rng)
    try:
        R = mechanics.reeb_field(cfg, prob.H, pts)
        c_max, dt_max = R.contraction_max, R.dt_max
    except ReebError as exc:
        rep.add(f"  {exc}")
        rep.failed = True
        return
    for name, comp in zip(cfg.j1_chart.names, R.field.components):
        rep.add(f"  R[{name}] = {comp}")
    rep.check("max |i_R Omega_h|", c_max, 1e-9)
    rep.check("max |i_R dt - 1|", dt_max, 1e-9)
    init = prob.initial
    if "y0" in init and "p0" in init:
        t0, t1 = prob.domain["t"][0], init.get("t1", prob.domain["t"][1])
        traj = mechanics.integrate_reeb(cfg, prob.H, t0, init["y0"], init["p0"], t1, init.get("steps", 1000))
        rep.add(f"  trajectory end t={_fmt(traj.times[-1])} state={[_fmt(v) for v in traj.states[-1]]}")
        if traj.energy_drift is not None:
            rep.check("energy drift", traj.energy_drift, 1e-6)
        if args.csv:
            export_csv(traj, args.csv)
            rep.add(f"  wrote {args.csv}")


def _cosymplectic(prob, rng, rep, args):
    _need_n1(prob)
    r = mechanics.cosymplectic_check(prob.cfg, prob.H, _points(prob, prob.cfg.j1_chart, rng))
    rep.check("max |d Omega_h|", r.closed_max, r.tol)
    rep.check("min |dt ^ Omega_h^m| on coordinate basis", r.min_volume, r.tol, r.min_volume > r.tol)


def _related(prob, rng, rep, args):
    _need_n1(prob)
    cfg = prob.cfg
    pts = _points(prob, cfg.e_chart, rng)
    closed = max(hj.closedness_residual(cfg, prob.form, p).max() for p in pts)
    rep.check("closedness of lambda", closed, prob.tolerances.ad)
    rel = mechanics.lambda_related_check(cfg, prob.H, prob.form, pts)
    rep.check("(i) lambda-relatedness mismatch", rel, prob.tolerances.ad)
    hjm = max(float(np.max(np.abs(hj.lemma_residual(cfg, prob.H, prob.form, p)))) for p in pts)
    rep.check("(ii) d(h o mu o lambda)", hjm, prob.tolerances.ad)


def _characteristics(prob, rng, rep, args):
    _need_n1(prob)
    if prob.principal is None:
        raise ProblemError("principal: the characteristics subcommand needs principal functions")
    init = prob.initial
    if "y0" not in init:
        raise ProblemError("initial.y0: missing required field")
    t0, t1 = prob.domain["t"][0], init.get("t1", prob.domain["t"][1])
    try:
        r = mechanics.characteristics_consistency(prob.cfg, prob.H, prob.principal, init["y0"], t0, t1,
                                                  init.get("steps", 1000), prob.tolerances.ad)
    except ValueError as exc:
        rep.add(f"  {exc}")
        rep.failed = True
        return
    rep.check("hj residual along the curve", r.hj_max, prob.tolerances.ad)
    rep.check("max deviation from Reeb flow", r.max_deviation, 1e-5)
    if args.csv:
        export_csv(r.base, args.csv)
        rep.add(f"  wrote {args.csv}")


SUBCOMMANDS = {
    "check-closed": _check_closed,
    "hj-residual": _hj_residual,
    "induce": _induce,
    "integrate": _integrate,
    "verify-theorem": _verify,
    "field-equation": _field_equation,
    "reeb": _reeb,
    "cosymplectic": _cosymplectic,
    "related": _related,
    "characteristics": _characteristics,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjlab", description="Hamilton-Jacobi verification for field theories")
    ap.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    ap.add_argument("problem", help="problem file (TOML)")
    ap.add_argument("--seed", type=int, help="RNG seed for sample points and fibre starts")
    ap.add_argument("--samples", type=int, help="number of random sample points")
    ap.add_argument("--fibers", type=int, help="number of fibre starts for section integration")
    ap.add_argument("--tol-ad", type=float, help="tolerance for pointwise identities")
    ap.add_argument("--tol-flat", type=float, help="tolerance for curvature")
    ap.add_argument("--grid-coef", type=float, help="coefficient C in the C*h^2 grid bound")
    ap.add_argument("--path-tol", type=float, help="absolute slack for the path-independence check")
    ap.add_argument("--csv", help="write section/trajectory data here")
    return ap


_TOLERANCE_FLAGS = {"ad": "--tol-ad", "flat": "--tol-flat", "grid_coef": "--grid-coef", "path": "--path-tol"}


def run(argv: List[str], out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        prob = load_problem(args.problem)
        overrides = {}
        for key, flag in _TOLERANCE_FLAGS.items():
            v = getattr(args, flag[2:].replace("-", "_"))
            if v is None:
                continue
            if not v > 0:
                raise ProblemError(f"{flag}: must be positive")
            overrides[key] = v
        if overrides:
            prob.tolerances = dataclasses.replace(prob.tolerances, **overrides)
        for name in ("seed", "samples", "fibers"):
            if getattr(args, name) is not None:
                setattr(prob, name, getattr(args, name))
        if prob.samples < 1 or prob.fibers < 1:
            raise ProblemError("--samples/--fibers: must be positive")
        rng = np.random.default_rng(prob.seed)
        tol = prob.tolerances
        rep = Report(f"hjlab {args.subcommand}")
        rep.add(f"problem: {args.problem}")
        rep.add(f"bundle: n={prob.cfg.n} m={prob.cfg.m}  H = {prob.H}")
        rep.add(f"seed: {prob.seed}  samples: {prob.samples}")
        rep.add(f"tolerances: ad={tol.ad:g} flat={tol.flat:g} grid_coef={tol.grid_coef:g} path={tol.path:g}")
        SUBCOMMANDS[args.subcommand](prob, rng, rep, args)
    except ProblemError as exc:
        print(f"input error: {exc}", file=err)
        return 2
    except ex.EvalError as exc:
        print(f"evaluation error: {exc}", file=err)
        return 1
    except IntegrationError as exc:
        print(f"integration error: {exc}", file=err)
        return 1
    except OSError as exc:
        print(f"output error: {exc}", file=err)
        return 2
    out.write(rep.text())
    return 1 if rep.failed else 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
