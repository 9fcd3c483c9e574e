"""Hamilton-Jacobi checks for a 2-semibasic form on E.

Pointwise identities use exact AD; anything involving an integral section
lives on a grid and uses finite differences there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from . import expr as ex
from . import exterior as ext
from .connections import InducedConnection, induce_connection, max_curvature
from .multisymplectic import (BundleConfig, PrincipalFunctions, SemibasicForm,
                              compose_h_mu_lambda)

__all__ = [
    "Tolerances", "Grid", "GridSection", "HamiltonResiduals", "VerificationReport",
    "ClosednessResidual", "IntegrationError", "closedness_residual", "hj_residual",
    "lemma_residual", "hj_pde_residual_S", "integrate_section", "lift_section",
    "hamilton_residuals", "verify_theorem", "refinement_study",
]


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Tolerances:
    ad: float = 1e-8          # exact-arithmetic identities
    flat: float = 1e-7        # max |curvature| accepted as flat
    grid_coef: float = 5.0    # grid residual bound: grid_coef * step^2 * scale
    path: float = 1e-9        # absolute floor for the path-independence flag


@dataclass(frozen=True)
class Grid:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    steps: Tuple[int, ...]

    def __post_init__(self):
        lower, upper, steps = (tuple(map(float, self.lower)), tuple(map(float, self.upper)),
                               tuple(map(int, self.steps)))
        if not len(lower) == len(upper) == len(steps):
            raise ValueError("grid bounds and steps differ in length")
        for lo, hi, s in zip(lower, upper, steps):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"bad grid interval [{lo}, {hi}]")
            if s < 1:
                raise ValueError("grid needs at least one step per axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "steps", steps)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(s + 1 for s in self.steps)

    @property
    def axes(self) -> List[np.ndarray]:
        return [np.linspace(lo, hi, s + 1) for lo, hi, s in zip(self.lower, self.upper, self.steps)]

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((hi - lo) / s for lo, hi, s in zip(self.lower, self.upper, self.steps))

    def node_index(self, x0: Sequence[float]) -> Tuple[int, ...]:
        idx = []
        for x, lo, h, s in zip(x0, self.lower, self.spacing, self.steps):
            k = round((x - lo) / h)
            if not 0 <= k <= s or abs(lo + k * h - x) > 1e-9 * max(1.0, abs(x)):
                raise ValueError(f"base point {tuple(x0)} is not a grid node")
            idx.append(int(k))
        return tuple(idx)


@dataclass
class GridSection:
    cfg: BundleConfig
    grid: Grid
    values: np.ndarray                     # grid.shape + (m,)
    momenta: Optional[np.ndarray] = None   # grid.shape + (n, m)
    path_discrepancy: float = 0.0
    truncation: float = 0.0
    path_tol: float = 0.0

    @property
    def path_flagged(self) -> bool:
        return self.path_discrepancy > self.path_tol

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*self.grid.axes, indexing="ij")


@dataclass
class ClosednessResidual:
    A: np.ndarray                      # per i
    B: Dict[Tuple[int, int], float]    # i < j

    def max(self) -> float:
        vals = [float(np.max(np.abs(self.A)))] + [abs(v) for v in self.B.values()]
        return max(vals)


def _lifted_point(cfg: BundleConfig, lam: SemibasicForm, point: Mapping[str, float]) -> dict:
    q = {name: point[name] for name in cfg.e_chart.names}
    for mu in range(cfg.n):
        for i in range(cfg.m):
            q[cfg.p(mu, i)] = float(ex.evaluate(lam.lam[mu][i], point))
    return q


def closedness_residual(cfg: BundleConfig, lam: SemibasicForm, point: Mapping[str, float]) -> ClosednessResidual:
    """Components of d(lambda): A_i = dlam0/dy^i - dlam^mu_i/dx^mu, B_ij = dlam^mu_i/dy^j - dlam^mu_j/dy^i."""
    A = np.zeros(cfg.m)
    for i, y in enumerate(cfg.fibre):
        div = sum(float(ex.evaluate(ex.deriv(lam.lam[mu][i], cfg.base[mu]), point)) for mu in range(cfg.n))
        A[i] = float(ex.evaluate(ex.deriv(lam.lam0, y), point)) - div
    B = {}
    for i in range(cfg.m):
        for j in range(i + 1, cfg.m):
            worst = 0.0
            for mu in range(cfg.n):
                v = (float(ex.evaluate(ex.deriv(lam.lam[mu][i], cfg.fibre[j]), point))
                     - float(ex.evaluate(ex.deriv(lam.lam[mu][j], cfg.fibre[i]), point)))
                if abs(v) > abs(worst):
                    worst = v
            B[(i, j)] = worst
    return ClosednessResidual(A, B)


def hj_residual(cfg: BundleConfig, H: ex.Expr, lam: SemibasicForm, point: Mapping[str, float]) -> np.ndarray:
    """``dH/dy^i + dH/dp^nu_j dlam^nu_j/dy^i + dlam^mu_i/dx^mu`` with H at ``(x, y, lam(x, y))``."""
    q = _lifted_point(cfg, lam, point)
    dH_dy = ex.grad(H, q, cfg.fibre)
    dH_dp = ex.grad(H, q, cfg.momenta).reshape(cfg.n, cfg.m)
    out = np.array(dH_dy, dtype=float)
    for i, y in enumerate(cfg.fibre):
        for nu in range(cfg.n):
            for j in range(cfg.m):
                out[i] += dH_dp[nu, j] * float(ex.evaluate(ex.deriv(lam.lam[nu][j], y), point))
        for mu in range(cfg.n):
            out[i] += float(ex.evaluate(ex.deriv(lam.lam[mu][i], cfg.base[mu]), point))
    return out


def lemma_residual(cfg: BundleConfig, H: ex.Expr, lam: SemibasicForm, point: Mapping[str, float]) -> np.ndarray:
    """Same quantity read off d(h o mu o lambda) built with the exterior algebra.

    Returns minus the coefficient of ``dy^i ^ d^n x``.
    """
    form = ext.ext_deriv(compose_h_mu_lambda(cfg, H, lam).to_kform(cfg))
    out = np.zeros(cfg.m)
    for i, y in enumerate(cfg.fibre):
        c = form.coefficient((y,) + cfg.base)
        out[i] = -float(ex.evaluate(c, point))
    return out


def hj_pde_residual_S(cfg: BundleConfig, H: ex.Expr, S: PrincipalFunctions,
                      point: Mapping[str, float]) -> Tuple[np.ndarray, float]:
    """y-gradient of ``g = dS^mu/dx^mu + H(x, y, dS/dy)`` and the value of g itself.

    If the gradient vanishes, g is a function of x only and ``H - g`` solves
    the HJ equation in its standard form.
    """
    sub = {cfg.p(mu, i): ex.deriv(S.S[mu], y) for mu in range(cfg.n) for i, y in enumerate(cfg.fibre)}
    g = ex.add(ex.total(ex.deriv(S.S[mu], cfg.base[mu]) for mu in range(cfg.n)), ex.subst(H, sub))
    return ex.grad(g, point, cfg.fibre), float(ex.evaluate(g, point))


# --------------------------------------------------------------------------
# integral sections


def _as_field(value, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), shape)


def _sweep(ic: InducedConnection, grid: Grid, i0, y0: np.ndarray, order, estimate: bool):
    cfg = ic.cfg
    n, m = cfg.n, cfg.m
    sol = np.full(grid.shape + (m,), np.nan)
    trunc = np.zeros(grid.shape)
    sol[i0] = y0
    mesh = np.meshgrid(*grid.axes, indexing="ij")
    done: List[int] = []
    for axis in order:
        active = sorted(done + [axis])
        idx = tuple(slice(None) if a in active else i0[a] for a in range(n))
        p = active.index(axis)
        S = np.moveaxis(sol[idx], p, 0)
        T = np.moveaxis(trunc[idx], p, 0)
        X = [np.moveaxis(mesh[a][idx], p, 0) for a in range(n)]
        h = grid.spacing[axis]
        gam = ic.gamma[axis]
        rest = S.shape[1:-1]

        def rhs(xenv, y):
            env = dict(xenv)
            for i, name in enumerate(cfg.fibre):
                env[name] = y[..., i]
            return np.stack([_as_field(ex.evaluate(g, env), rest) for g in gam], axis=-1)

        def rk4(j, y, step, offset=0.0):
            xenv = {cfg.base[a]: X[a][j] for a in range(n)}
            xa = X[axis][j] + offset

            def at(dx):
                e = dict(xenv)
                e[cfg.base[axis]] = xa + dx
                return e
            k1 = rhs(at(0.0), y)
            k2 = rhs(at(step / 2), y + step / 2 * k1)
            k3 = rhs(at(step / 2), y + step / 2 * k2)
            k4 = rhs(at(step), y + step * k3)
            return y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

        def march(j, direction):
            step = direction * h
            with np.errstate(all="ignore"):
                y_new = rk4(j, S[j], step)
                if estimate:
                    # step doubling from the same node
                    half = rk4(j, rk4(j, S[j], step / 2), step / 2, offset=step / 2)
                    err = np.max(np.abs(y_new - half), axis=-1)
            k = j + direction
            if not np.all(np.isfinite(y_new)):
                bad = tuple(np.argwhere(~np.isfinite(y_new))[0][:-1])
                where = tuple(float(X[a][(k,) + bad]) for a in range(n))
                raise IntegrationError(f"integral section blew up at x = {where}")
            S[k] = y_new
            if estimate:
                T[k] = T[j] + err

        j0 = i0[axis]
        for j in range(j0, S.shape[0] - 1):
            march(j, +1)
        for j in range(j0, 0, -1):
            march(j, -1)
        done.append(axis)
    return sol, trunc


def integrate_section(ic: InducedConnection, x0: Sequence[float], y0: Sequence[float], grid: Grid,
                      path_tol: float = Tolerances.path) -> GridSection:
    """Integral section of the induced connection through ``(x0, y0)``.

    RK4 sweeps along axis 1 from x0, then along axis 2 from every node found so
    far, and so on.  The sweep is repeated in reversed axis order; the largest
    disagreement is the path-independence residual.  It is flagged when it
    exceeds ``path_tol + 10 * truncation`` where ``truncation`` is the
    step-doubling error estimate accumulated along the sweep.
    """
    cfg = ic.cfg
    if len(x0) != cfg.n or len(grid.steps) != cfg.n:
        raise ValueError(f"base point and grid must have {cfg.n} coordinates")
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (cfg.m,):
        raise ValueError(f"fibre value must have {cfg.m} components")
    i0 = grid.node_index(x0)
    order = list(range(cfg.n))
    sol, trunc = _sweep(ic, grid, i0, y0, order, estimate=True)
    truncation = float(np.max(trunc))
    discrepancy = 0.0
    if cfg.n > 1:
        other, _ = _sweep(ic, grid, i0, y0, order[::-1], estimate=False)
        discrepancy = float(np.max(np.abs(sol - other)))
    return GridSection(cfg, grid, sol, None, discrepancy, truncation, path_tol + 10 * truncation)


def _grid_env(section: GridSection) -> dict:
    cfg = section.cfg
    env = dict(zip(cfg.base, section.mesh()))
    for i, y in enumerate(cfg.fibre):
        env[y] = section.values[..., i]
    return env


def lift_section(cfg: BundleConfig, lam: SemibasicForm, section: GridSection) -> GridSection:
    """Attach the momenta ``lam^mu_i(x, sigma(x))``."""
    env = _grid_env(section)
    shape = section.grid.shape
    mom = np.zeros(shape + (cfg.n, cfg.m))
    for mu in range(cfg.n):
        for i in range(cfg.m):
            mom[..., mu, i] = _as_field(ex.evaluate(lam.lam[mu][i], env), shape)
    section.momenta = mom
    return section


@dataclass
class HamiltonResiduals:
    first: np.ndarray    # grid.shape + (n, m): dsigma^i/dx^mu - dH/dp^mu_i
    second: np.ndarray   # grid.shape + (m,): dsigmabar^mu_i/dx^mu + dH/dy^i

    @property
    def max_first(self) -> float:
        return float(np.max(np.abs(self.first)))

    @property
    def max_second(self) -> float:
        return float(np.max(np.abs(self.second)))


_EDGE = np.array([-11.0, 18.0, -9.0, 2.0]) / 6.0   # third-order one-sided first derivative


def _grid_gradient(values: np.ndarray, spacing) -> List[np.ndarray]:
    """Central differences inside, one-sided stencils on the boundary.

    With at least four nodes the boundary stencil is third order, so the
    boundary never dominates the second-order interior error.
    """
    g = np.gradient(values, *spacing, edge_order=2)
    out = [g] if len(spacing) == 1 else list(g)
    for axis, h in enumerate(spacing):
        if values.shape[axis] < 4:
            continue
        v = np.moveaxis(values, axis, 0)
        d = np.moveaxis(out[axis], axis, 0)
        d[0] = np.tensordot(_EDGE, v[:4], axes=1) / h
        d[-1] = -np.tensordot(_EDGE, v[::-1][:4], axes=1) / h
    return out


def hamilton_residuals(cfg: BundleConfig, H: ex.Expr, lam: SemibasicForm, section: GridSection) -> HamiltonResiduals:
    """Both Hamilton equations along ``mu o lambda o sigma`` with grid derivatives."""
    if min(section.grid.shape) < 3:
        raise ValueError("hamilton residuals need at least 3 nodes per axis")
    if section.momenta is None:
        lift_section(cfg, lam, section)
    shape = section.grid.shape
    env = _grid_env(section)
    for mu in range(cfg.n):
        for i in range(cfg.m):
            env[cfg.p(mu, i)] = section.momenta[..., mu, i]
    sp = section.grid.spacing
    first = np.zeros(shape + (cfg.n, cfg.m))
    second = np.zeros(shape + (cfg.m,))
    for i, y in enumerate(cfg.fibre):
        dsig = _grid_gradient(section.values[..., i], sp)
        for mu in range(cfg.n):
            dHdp = _as_field(ex.evaluate(ex.deriv(H, cfg.p(mu, i)), env), shape)
            first[..., mu, i] = dsig[mu] - dHdp
        div = sum(_grid_gradient(section.momenta[..., mu, i], sp)[mu] for mu in range(cfg.n))
        second[..., i] = div + _as_field(ex.evaluate(ex.deriv(H, y), env), shape)
    return HamiltonResiduals(first, second)


def refinement_study(cfg: BundleConfig, H: ex.Expr, lam: SemibasicForm, x0, y0, lower, upper,
                     steps_list: Sequence[int]):
    """Hamilton residual max-norms over successively refined grids and observed orders."""
    ic = induce_connection(cfg, H, lam)
    rows = []
    for s in steps_list:
        grid = Grid(lower, upper, (s,) * cfg.n)
        sec = lift_section(cfg, lam, integrate_section(ic, x0, y0, grid))
        res = hamilton_residuals(cfg, H, lam, sec)
        rows.append((max(grid.spacing), res.max_first, res.max_second))
    orders = []
    for (h1, f1, s1), (h2, f2, s2) in zip(rows, rows[1:]):
        r = math.log(h1 / h2)
        orders.append((math.log(f1 / f2) / r if f1 > 0 and f2 > 0 else math.inf,
                       math.log(s1 / s2) / r if s1 > 0 and s2 > 0 else math.inf))
    return rows, orders


# --------------------------------------------------------------------------
# theorem verifier


@dataclass
class VerificationReport:
    tolerances: Tolerances
    samples: int
    fibers: int
    step: float
    closed_max: float = 0.0
    curvature_max: float = math.nan
    hj_max: float = math.nan
    lemma_max: float = math.nan
    first_max: float = math.nan
    second_max: float = math.nan
    grid_bound: float = math.nan
    path_max: float = math.nan
    path_flagged: int = 0
    hamilton_failures: int = 0
    reason: str = ""
    fiber_rows: List[tuple] = field(default_factory=list)

    @property
    def closed_ok(self) -> bool:
        return self.closed_max <= self.tolerances.ad

    @property
    def flat_ok(self) -> bool:
        return self.curvature_max <= self.tolerances.flat

    @property
    def hj_ok(self) -> bool:
        """Column (ii): h o mu o lambda closed."""
        return self.hj_max <= self.tolerances.ad

    @property
    def hamilton_ok(self) -> bool:
        """Column (i): lifted integral sections solve the Hamilton equations."""
        return self.hamilton_failures == 0 and not math.isnan(self.first_max)

    @property
    def consistent(self) -> bool:
        return self.hj_ok == self.hamilton_ok

    @property
    def passed(self) -> bool:
        return (not self.reason and self.closed_ok and self.flat_ok and self.hj_ok
                and self.hamilton_ok and self.path_flagged == 0)


def verify_theorem(cfg: BundleConfig, H: ex.Expr, lam: SemibasicForm, box: Mapping[str, Tuple[float, float]],
                   steps: Sequence[int], tol: Tolerances = Tolerances(), rng: np.random.Generator | None = None,
                   fibers: int = 8, samples: int = 100, x0: Sequence[float] | None = None) -> VerificationReport:
    """Check both sides of the HJ theorem on a box.

    Side (ii) is the pointwise Lemma residual at random points; side (i) is
    the Hamilton residual of lifted integral sections started from a
    low-discrepancy set of fibre values.  Non-closed forms and non-flat
    induced connections are reported without integrating.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    box = {name: box.get(name, (-1.0, 1.0)) for name in cfg.e_chart.names}
    grid = Grid([box[x][0] for x in cfg.base], [box[x][1] for x in cfg.base], steps)
    rep = VerificationReport(tol, samples, fibers, max(grid.spacing))
    points = ext.sample_points(cfg.e_chart, samples, rng, box)

    rep.closed_max = max(closedness_residual(cfg, lam, p).max() for p in points)
    if not rep.closed_ok:
        rep.reason = "lambda is not closed"
        return rep
    ic = induce_connection(cfg, H, lam)
    rep.curvature_max = max_curvature(ic, points)
    rep.hj_max = max(float(np.max(np.abs(hj_residual(cfg, H, lam, p)))) for p in points)
    rep.lemma_max = max(float(np.max(np.abs(lemma_residual(cfg, H, lam, p)))) for p in points)
    if not rep.flat_ok:
        rep.reason = "induced connection is not flat"
        return rep

    x0 = tuple(grid.lower) if x0 is None else tuple(x0)
    fib_lo = np.array([box[y][0] for y in cfg.fibre], dtype=float)
    fib_hi = np.array([box[y][1] for y in cfg.fibre], dtype=float)
    halton = qmc.Halton(d=cfg.m, scramble=True, seed=int(rng.integers(2**32)))
    starts = qmc.scale(halton.random(fibers), fib_lo, fib_hi)

    h2 = rep.step ** 2
    rep.first_max = rep.second_max = rep.path_max = rep.grid_bound = 0.0
    for y0 in starts:
        sec = lift_section(cfg, lam, integrate_section(ic, x0, y0, grid, tol.path))
        res = hamilton_residuals(cfg, H, lam, sec)
        scale = max(1.0, float(np.max(np.abs(sec.values))), float(np.max(np.abs(sec.momenta))))
        bound = tol.grid_coef * h2 * scale
        rep.fiber_rows.append((tuple(map(float, y0)), res.max_first, res.max_second, bound,
                               sec.path_discrepancy, sec.path_flagged))
        rep.first_max = max(rep.first_max, res.max_first)
        rep.second_max = max(rep.second_max, res.max_second)
        rep.path_max = max(rep.path_max, sec.path_discrepancy)
        rep.path_flagged += int(sec.path_flagged)
        rep.grid_bound = max(rep.grid_bound, bound)
        rep.hamilton_failures += int(res.max_first > bound or res.max_second > bound)
    return rep
