"""Ehresmann connections on the momentum bundle and the induced one on E."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Sequence, Tuple

import numpy as np

from . import expr as ex
from . import exterior as ext
from .exterior import KForm, ProjectorField
from .multisymplectic import BundleConfig, SemibasicForm, build_omega_h

__all__ = [
    "Connection", "InducedConnection", "uniform_split", "first_axis_split",
    "hamiltonian_connection", "horizontal_projector", "field_equation_form",
    "field_equation_residual", "induce_connection", "curvature", "max_curvature",
    "trace_residual",
]

Split = Callable[[BundleConfig, Sequence[ex.Expr]], Tuple]


@dataclass(frozen=True, eq=False)
class Connection:
    """Christoffels: ``gamma[mu][i]`` and ``gamma_p[mu][nu][i]`` over the momentum chart."""

    cfg: BundleConfig
    gamma: Tuple[Tuple[ex.Expr, ...], ...]
    gamma_p: Tuple[Tuple[Tuple[ex.Expr, ...], ...], ...]

    def replace_gamma(self, mu: int, i: int, value: ex.Expr) -> "Connection":
        rows = [list(r) for r in self.gamma]
        rows[mu][i] = value
        return Connection(self.cfg, tuple(map(tuple, rows)), self.gamma_p)


@dataclass(frozen=True, eq=False)
class InducedConnection:
    """``gamma[mu][i]`` over E: horizontal lifts ``d/dx^mu + gamma[mu][i] d/dy^i``."""

    cfg: BundleConfig
    gamma: Tuple[Tuple[ex.Expr, ...], ...]

    def projector(self) -> ProjectorField:
        cfg, chart = self.cfg, self.cfg.e_chart
        d = chart.dim
        mat = [[ex.ZERO] * d for _ in range(d)]
        for mu in range(cfg.n):
            mat[mu][mu] = ex.ONE
            for i in range(cfg.m):
                mat[cfg.n + i][mu] = self.gamma[mu][i]
        return ProjectorField(chart, tuple(map(tuple, mat)))


def uniform_split(cfg: BundleConfig, dH_dy: Sequence[ex.Expr]):
    """``(Gamma_mu)^nu_i = -(1/n) delta^nu_mu dH/dy^i``."""
    n = cfg.n
    return tuple(
        tuple(
            tuple(ex.neg(ex.div(dH_dy[i], ex.const(n))) if mu == nu else ex.ZERO for i in range(cfg.m))
            for nu in range(n))
        for mu in range(n))


def first_axis_split(cfg: BundleConfig, dH_dy: Sequence[ex.Expr]):
    """Whole trace on ``(Gamma_1)^1_i = -dH/dy^i``."""
    n = cfg.n
    return tuple(
        tuple(
            tuple(ex.neg(dH_dy[i]) if mu == nu == 0 else ex.ZERO for i in range(cfg.m))
            for nu in range(n))
        for mu in range(n))


def hamiltonian_connection(cfg: BundleConfig, H: ex.Expr, split: Split = uniform_split) -> Connection:
    """Connection whose integral sections solve the Hamilton equations.

    Only the trace ``sum_mu (Gamma_mu)^mu_i = -dH/dy^i`` is fixed; ``split``
    distributes it.
    """
    gamma = tuple(tuple(ex.deriv(H, cfg.p(mu, i)) for i in range(cfg.m)) for mu in range(cfg.n))
    dH_dy = [ex.deriv(H, y) for y in cfg.fibre]
    return Connection(cfg, gamma, split(cfg, dH_dy))


def trace_residual(C: Connection, H: ex.Expr, point: Mapping[str, float]) -> np.ndarray:
    cfg = C.cfg
    out = []
    for i, y in enumerate(cfg.fibre):
        tr = sum(float(ex.evaluate(C.gamma_p[mu][mu][i], point)) for mu in range(cfg.n))
        out.append(tr + float(ex.evaluate(ex.deriv(H, y), point)))
    return np.array(out)


def horizontal_projector(C: Connection) -> ProjectorField:
    """``h = H_mu (x) dx^mu`` on the momentum chart."""
    cfg, chart = C.cfg, C.cfg.j1_chart
    d = chart.dim
    mat = [[ex.ZERO] * d for _ in range(d)]
    for mu, x in enumerate(cfg.base):
        col = chart.index(x)
        mat[col][col] = ex.ONE
        for i, y in enumerate(cfg.fibre):
            mat[chart.index(y)][col] = C.gamma[mu][i]
            for nu in range(cfg.n):
                mat[chart.index(cfg.p(nu, i))][col] = C.gamma_p[mu][nu][i]
    return ProjectorField(chart, tuple(map(tuple, mat)))


@lru_cache(maxsize=32)
def field_equation_form(cfg: BundleConfig, H: ex.Expr, C: Connection) -> KForm:
    """``i_h Omega_h - (n-1) Omega_h``."""
    omega = build_omega_h(cfg, H)
    lhs = ext.insert_projector(omega, horizontal_projector(C))
    if cfg.n == 1:
        return lhs
    return lhs - omega.scale(cfg.n - 1)


def field_equation_residual(cfg: BundleConfig, H: ex.Expr, C: Connection,
                            point: Mapping[str, float], vectors) -> float:
    if len(vectors) != cfg.n + 1:
        raise ValueError(f"the field equation takes {cfg.n + 1} vectors, got {len(vectors)}")
    return ext.evaluate(field_equation_form(cfg, H, C), point, vectors)


def induce_connection(cfg: BundleConfig, H: ex.Expr, lam: SemibasicForm) -> InducedConnection:
    """``gamma[mu][i] = dH/dp^mu_i`` evaluated on ``p = lam(x, y)``."""
    sub = lam.momentum_map(cfg)
    gamma = tuple(tuple(ex.subst(ex.deriv(H, cfg.p(mu, i)), sub) for i in range(cfg.m))
                  for mu in range(cfg.n))
    return InducedConnection(cfg, gamma)


def _lift_derivative(ic: InducedConnection, mu: int, f: ex.Expr, point) -> float:
    cfg = ic.cfg
    g = ex.grad(f, point, (cfg.base[mu],) + cfg.fibre)
    out = g[0]
    for j in range(cfg.m):
        out += float(ex.evaluate(ic.gamma[mu][j], point)) * g[1 + j]
    return float(out)


def curvature(ic: InducedConnection, point: Mapping[str, float]) -> np.ndarray:
    """``R[mu, nu, i] = H_mu(gamma[nu][i]) - H_nu(gamma[mu][i])``, shape (n, n, m)."""
    cfg = ic.cfg
    R = np.zeros((cfg.n, cfg.n, cfg.m))
    lifts = [[[_lift_derivative(ic, mu, ic.gamma[nu][i], point) for i in range(cfg.m)]
              for nu in range(cfg.n)] for mu in range(cfg.n)]
    for mu in range(cfg.n):
        for nu in range(cfg.n):
            if mu != nu:
                for i in range(cfg.m):
                    R[mu, nu, i] = lifts[mu][nu][i] - lifts[nu][mu][i]
    return R


def max_curvature(ic: InducedConnection, points) -> float:
    if ic.cfg.n == 1:
        return 0.0
    return max((float(np.max(np.abs(curvature(ic, p)))) for p in points), default=0.0)
