"""Time-dependent mechanics: the one-dimensional base ``t``.

The autonomous cotangent-bundle case is the same machinery with H and the
closed form independent of ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import expr as ex
from . import exterior as ext
from .exterior import KForm, VectorField
from .multisymplectic import BundleConfig, PrincipalFunctions, SemibasicForm, build_omega_h, lambda_from_S
from .hj import hj_residual

__all__ = [
    "ReebError", "ReebField", "CosymplecticReport", "Trajectory", "reeb_field",
    "cosymplectic_check", "lambda_related_check", "energy_differential",
    "integrate_reeb", "characteristics_consistency", "time_dependent_hj_residual",
]


class ReebError(RuntimeError):
    pass


def _require_n1(cfg: BundleConfig):
    if cfg.n != 1:
        raise ValueError(f"mechanics needs a one-dimensional base, got n={cfg.n}")


def _default_points(cfg: BundleConfig, count=50):
    return ext.sample_points(cfg.j1_chart, count, np.random.default_rng(0))


@dataclass
class ReebField:
    field: VectorField
    contraction_max: float   # max |i_R Omega_h| on basis vectors
    dt_max: float            # max |i_R dt - 1|


def reeb_field(cfg: BundleConfig, H: ex.Expr, points=None, tol: float = 1e-9) -> ReebField:
    """``R = d/dt + dH/dp_i d/dy^i - dH/dy^i d/dp_i``, certified against its defining contractions."""
    _require_n1(cfg)
    chart = cfg.j1_chart
    comps = [ex.ONE]
    comps += [ex.deriv(H, cfg.p(0, i)) for i in range(cfg.m)]
    comps += [ex.neg(ex.deriv(H, y)) for y in cfg.fibre]
    R = VectorField(chart, tuple(comps))

    points = _default_points(cfg) if points is None else points
    contracted = ext.interior_vector(build_omega_h(cfg, H), R)
    dt_R = ext.interior_vector(KForm.differential(chart, "t"), R)
    c_max = max((ext.max_coefficient(contracted, p) for p in points), default=0.0)
    dt_max = max((abs(float(ex.evaluate(dt_R.coefficient(()), p)) - 1.0) for p in points), default=0.0)
    if c_max > tol or dt_max > tol:
        raise ReebError(f"Reeb field fails its defining equations: |i_R Omega| = {c_max:.3e}, "
                        f"|i_R dt - 1| = {dt_max:.3e}")
    return ReebField(R, c_max, dt_max)


@dataclass
class CosymplecticReport:
    closed_max: float
    volumes: List[float]     # (dt ^ Omega_h^m)(d/dt, d/dy.., d/dp..) per point
    m: int
    tol: float = 1e-9

    @property
    def normalized(self) -> List[float]:
        """Volumes divided by m!, the wedge-power multiplicity."""
        f = math.factorial(self.m)
        return [v / f for v in self.volumes]

    @property
    def min_volume(self) -> float:
        return min((abs(v) for v in self.volumes), default=math.nan)

    @property
    def passed(self) -> bool:
        return self.closed_max <= self.tol and self.min_volume > self.tol


def cosymplectic_check(cfg: BundleConfig, H: ex.Expr, points, tol: float = 1e-9) -> CosymplecticReport:
    """Closedness of Omega_h and non-degeneracy of ``dt ^ Omega_h^m``."""
    _require_n1(cfg)
    chart = cfg.j1_chart
    omega = build_omega_h(cfg, H)
    d_omega = ext.ext_deriv(omega)
    vol = KForm.differential(chart, "t")
    for _ in range(cfg.m):
        vol = ext.wedge(vol, omega)
    basis = [chart.basis(k) for k in range(chart.dim)]
    closed = max((ext.max_coefficient(d_omega, p) for p in points), default=0.0)
    volumes = [ext.evaluate(vol, p, basis) for p in points]
    return CosymplecticReport(closed, volumes, cfg.m, tol)


def lambda_related_check(cfg: BundleConfig, H: ex.Expr, lam: SemibasicForm, points,
                         autonomous: bool = False) -> float:
    """Max mismatch between ``T(mu o lambda)`` applied to the induced field and R_h on the image.

    At ``e = (t, y)``: ``q = (t, y, lam(e))``, ``v = (1, dH/dp(q))`` and the
    pushed-forward vector is ``(v, d lam_i(v))``; only the momentum block can
    differ from ``R_h(q)``.  With ``autonomous`` the inputs must not depend on t.
    """
    _require_n1(cfg)
    if autonomous:
        used = H.free | lam.lam0.free | set().union(*(c.free for c in lam.lam[0]))
        if "t" in used:
            raise ValueError("autonomous check with t-dependent data")
    worst = 0.0
    E = cfg.e_chart.names
    for pt in points:
        q = {name: pt[name] for name in E}
        for i in range(cfg.m):
            q[cfg.p(0, i)] = float(ex.evaluate(lam.lam[0][i], pt))
        v = np.concatenate([[1.0], ex.grad(H, q, cfg.momenta)])
        dH_dy = ex.grad(H, q, cfg.fibre)
        for i in range(cfg.m):
            pushed = float(ex.grad(lam.lam[0][i], pt, E) @ v)
            worst = max(worst, abs(pushed + dH_dy[i]))
    return worst


def energy_differential(cfg: BundleConfig, H: ex.Expr, lam: SemibasicForm, point) -> np.ndarray:
    """``d(H o lambda)`` in the fibre directions for autonomous data."""
    _require_n1(cfg)
    composed = ex.subst(H, lam.momentum_map(cfg))
    return ex.grad(composed, point, cfg.fibre)


def time_dependent_hj_residual(cfg: BundleConfig, H: ex.Expr, S: PrincipalFunctions, point) -> np.ndarray:
    """``d/dy^i (dS/dt + H(t, y, dS/dy))`` expanded by the chain rule with second partials of S."""
    _require_n1(cfg)
    s = S.S[0]
    q = {name: point[name] for name in cfg.e_chart.names}
    for i, y in enumerate(cfg.fibre):
        q[cfg.p(0, i)] = float(ex.grad(s, point, [y])[0])
    dH_dy = ex.grad(H, q, cfg.fibre)
    dH_dp = ex.grad(H, q, cfg.momenta)
    out = np.zeros(cfg.m)
    for i, yi in enumerate(cfg.fibre):
        out[i] = ex.second_partial(s, point, "t", yi) + dH_dy[i]
        for j, yj in enumerate(cfg.fibre):
            out[i] += dH_dp[j] * ex.second_partial(s, point, yj, yi)
    return out


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray        # (len(times), 2m): y then p
    names: Sequence[str]
    energy_drift: Optional[float] = None

    @property
    def y(self) -> np.ndarray:
        return self.states[:, : len(self.names) // 2]

    @property
    def p(self) -> np.ndarray:
        return self.states[:, len(self.names) // 2:]


def _rk4(f: Callable, t0: float, x0: np.ndarray, t1: float, steps: int):
    if steps < 1:
        raise ValueError("need at least one step")
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    h = (t1 - t0) / steps
    ts = t0 + h * np.arange(steps + 1)
    ts[-1] = t1
    xs = np.empty((steps + 1, len(x0)))
    xs[0] = x0
    x = np.asarray(x0, dtype=float)
    for k in range(steps):
        t = ts[k]
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"trajectory blew up at t = {ts[k + 1]}")
        xs[k + 1] = x
    return ts, xs


def integrate_reeb(cfg: BundleConfig, H: ex.Expr, t0: float, y0, p0, t1: float, steps: int) -> Trajectory:
    """RK4 integral curve of the Reeb field, i.e. a solution of Hamilton's equations."""
    _require_n1(cfg)
    m = cfg.m
    dH_dp = [ex.deriv(H, cfg.p(0, i)) for i in range(m)]
    dH_dy = [ex.deriv(H, y) for y in cfg.fibre]

    def env(t, x):
        e = {"t": t}
        e.update(zip(cfg.fibre, x[:m]))
        e.update(zip(cfg.momenta, x[m:]))
        return e

    def f(t, x):
        e = env(t, x)
        return np.array([float(ex.evaluate(g, e)) for g in dH_dp]
                        + [-float(ex.evaluate(g, e)) for g in dH_dy])

    x0 = np.concatenate([np.atleast_1d(np.asarray(y0, float)), np.atleast_1d(np.asarray(p0, float))])
    if x0.shape != (2 * m,):
        raise ValueError(f"initial state must have {m} positions and {m} momenta")
    ts, xs = _rk4(f, float(t0), x0, float(t1), int(steps))
    drift = None
    if "t" not in H.free:
        drift = abs(float(ex.evaluate(H, env(ts[-1], xs[-1]))) - float(ex.evaluate(H, env(ts[0], xs[0]))))
    return Trajectory(ts, xs, cfg.fibre + cfg.momenta, drift)


@dataclass
class CharacteristicsResult:
    max_deviation: float
    base: Trajectory      # (y, dS/dy) along the induced flow on E
    reeb: Trajectory
    hj_max: float


def characteristics_consistency(cfg: BundleConfig, H: ex.Expr, S: PrincipalFunctions, y0, t0: float,
                                t1: float, steps: int = 1000, tol: float = 1e-8) -> CharacteristicsResult:
    """Compare the flow of the induced field on E, lifted by dS/dy, with the Reeb flow.

    ``tol`` bounds the HJ residual of dS along the computed base curve.
    """
    _require_n1(cfg)
    m = cfg.m
    lam = lambda_from_S(cfg, S)
    momenta = lam.lam[0]
    vel = [ex.subst(ex.deriv(H, cfg.p(0, i)), lam.momentum_map(cfg)) for i in range(m)]

    def f(t, y):
        e = {"t": t, **dict(zip(cfg.fibre, y))}
        return np.array([float(ex.evaluate(g, e)) for g in vel])

    y0 = np.atleast_1d(np.asarray(y0, float))
    ts, ys = _rk4(f, float(t0), y0, float(t1), int(steps))
    lifted = np.empty((len(ts), 2 * m))
    hj_max = 0.0
    for k, (t, y) in enumerate(zip(ts, ys)):
        pt = {"t": float(t), **dict(zip(cfg.fibre, map(float, y)))}
        lifted[k, :m] = y
        lifted[k, m:] = [float(ex.evaluate(g, pt)) for g in momenta]
        hj_max = max(hj_max, float(np.max(np.abs(hj_residual(cfg, H, lam, pt)))))
    if hj_max > tol:
        raise ValueError(f"dS does not solve the HJ equation along the curve (residual {hj_max:.3e})")
    base = Trajectory(ts, lifted, cfg.fibre + cfg.momenta)
    reeb = integrate_reeb(cfg, H, t0, y0, lifted[0, m:], t1, steps)
    dev = float(np.max(np.abs(base.states - reeb.states)))
    return CharacteristicsResult(dev, base, reeb, hj_max)
