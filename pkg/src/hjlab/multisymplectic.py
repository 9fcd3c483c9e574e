"""Bundle charts, the hamiltonian section and the forms built from it.

Coordinates: base ``x1..xn`` (``t`` when n = 1), fibre ``y1..ym``, momenta
``p{mu}_{i}`` and the extra ``p0`` of the 2-semibasic bundle.  The quotient
map to the reduced momentum bundle drops ``p0``; the hamiltonian section puts
it back as ``p0 = -H``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple

from . import expr as ex
from . import exterior as ext
from .exterior import Chart, KForm, VectorField

__all__ = [
    "BundleConfig", "SemibasicForm", "PrincipalFunctions",
    "build_theta_h", "build_omega_2", "build_omega_h", "pullback_by_section",
    "compose_h_mu_lambda", "lambda_from_S", "principal_form",
]


@dataclass(frozen=True)
class BundleConfig:
    n: int
    m: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError(f"need n >= 1 and m >= 1, got n={self.n}, m={self.m}")

    @property
    def base(self) -> Tuple[str, ...]:
        if self.n == 1:
            return ("t",)
        return tuple(f"x{mu}" for mu in range(1, self.n + 1))

    @property
    def fibre(self) -> Tuple[str, ...]:
        return tuple(f"y{i}" for i in range(1, self.m + 1))

    def p(self, mu: int, i: int) -> str:
        """Momentum name for 0-based indices (mu, i)."""
        return f"p{mu + 1}_{i + 1}"

    @property
    def momenta(self) -> Tuple[str, ...]:
        return tuple(self.p(mu, i) for mu in range(self.n) for i in range(self.m))

    @cached_property
    def m_chart(self) -> Chart:
        return Chart(self.base)

    @cached_property
    def e_chart(self) -> Chart:
        return Chart(self.base + self.fibre)

    @cached_property
    def j1_chart(self) -> Chart:
        return Chart(self.base + self.fibre + self.momenta)

    @cached_property
    def lambda2_chart(self) -> Chart:
        return Chart(self.base + self.fibre + ("p0",) + self.momenta)

    def volume(self, chart: Chart) -> KForm:
        """``d^n x`` on a chart containing the base coordinates."""
        out = KForm.function(chart, ex.ONE)
        for name in self.base:
            out = ext.wedge(out, KForm.differential(chart, name))
        return out

    def volume_minus(self, chart: Chart, mu: int) -> KForm:
        """``d^{n-1} x_mu = i_{d/dx^mu} d^n x``."""
        return ext.interior_vector(self.volume(chart), VectorField.coordinate(chart, self.base[mu]))

    def parse(self, source: str, chart: Chart | None = None, what: str = "expression") -> ex.Expr:
        """Parse ``source`` and check its variables live on ``chart`` (default: E).

        With n = 1, ``x1`` is accepted as an alias of ``t``.
        """
        chart = chart or self.e_chart
        e = ex.parse(source) if isinstance(source, str) else source
        if self.n == 1 and "x1" in e.free:
            e = ex.rename(e, {"x1": "t"})
        extra = sorted(e.free - set(chart.names))
        if extra:
            raise ValueError(f"{what} uses {extra}, not coordinates of {chart.names}")
        return e

    def hamiltonian(self, source) -> ex.Expr:
        return self.parse(source, self.j1_chart, "hamiltonian")


@dataclass(frozen=True, eq=False)
class SemibasicForm:
    """``lam0 d^n x + lam[mu][i] dy^i ^ d^{n-1} x_mu`` on E."""

    lam0: ex.Expr
    lam: Tuple[Tuple[ex.Expr, ...], ...]

    @classmethod
    def parse(cls, cfg: BundleConfig, lambda0, matrix: Sequence[Sequence]) -> "SemibasicForm":
        if len(matrix) != cfg.n or any(len(row) != cfg.m for row in matrix):
            raise ValueError(f"lambda matrix must be {cfg.n}x{cfg.m} (rows indexed by mu)")
        lam0 = cfg.parse(lambda0, what="lambda0")
        lam = tuple(tuple(cfg.parse(s, what=f"lambda[{mu}][{i}]") for i, s in enumerate(row))
                    for mu, row in enumerate(matrix))
        return cls(lam0, lam)

    def momentum_map(self, cfg: BundleConfig) -> dict:
        """Substitution ``p^mu_i <- lam^mu_i(x, y)``."""
        return {cfg.p(mu, i): self.lam[mu][i] for mu in range(cfg.n) for i in range(cfg.m)}

    def to_kform(self, cfg: BundleConfig) -> KForm:
        chart = cfg.e_chart
        out = cfg.volume(chart).scale(self.lam0)
        for mu in range(cfg.n):
            dvol = cfg.volume_minus(chart, mu)
            for i, y in enumerate(cfg.fibre):
                piece = ext.wedge(KForm.differential(chart, y), dvol)
                out = out + piece.scale(self.lam[mu][i])
        return out


@dataclass(frozen=True, eq=False)
class PrincipalFunctions:
    S: Tuple[ex.Expr, ...]

    @classmethod
    def parse(cls, cfg: BundleConfig, sources: Sequence) -> "PrincipalFunctions":
        if len(sources) != cfg.n:
            raise ValueError(f"need {cfg.n} principal functions, got {len(sources)}")
        return cls(tuple(cfg.parse(s, what=f"principal[{mu}]") for mu, s in enumerate(sources)))


def principal_form(cfg: BundleConfig, S: PrincipalFunctions) -> KForm:
    """``S^mu d^{n-1} x_mu`` as an (n-1)-form on E."""
    chart = cfg.e_chart
    out = KForm.zero(chart, cfg.n - 1)
    for mu in range(cfg.n):
        out = out + cfg.volume_minus(chart, mu).scale(S.S[mu])
    return out


def build_theta_h(cfg: BundleConfig, H: ex.Expr) -> KForm:
    """``-H d^n x + p^mu_i dy^i ^ d^{n-1} x_mu`` on the reduced momentum chart."""
    chart = cfg.j1_chart
    out = cfg.volume(chart).scale(ex.neg(H))
    for mu in range(cfg.n):
        dvol = cfg.volume_minus(chart, mu)
        for i, y in enumerate(cfg.fibre):
            piece = ext.wedge(KForm.differential(chart, y), dvol)
            out = out + piece.scale(ex.var(cfg.p(mu, i)))
    return out


def build_omega_h(cfg: BundleConfig, H: ex.Expr) -> KForm:
    """``Omega_h = -d theta_h = dH ^ d^n x - dp^mu_i ^ dy^i ^ d^{n-1} x_mu``."""
    return -ext.ext_deriv(build_theta_h(cfg, H))


def build_omega_2(cfg: BundleConfig) -> KForm:
    """Multisymplectic form on the 2-semibasic bundle, ``-d(p0 d^n x + p dy ^ d^{n-1}x)``."""
    chart = cfg.lambda2_chart
    theta = cfg.volume(chart).scale(ex.var("p0"))
    for mu in range(cfg.n):
        dvol = cfg.volume_minus(chart, mu)
        for i, y in enumerate(cfg.fibre):
            piece = ext.wedge(KForm.differential(chart, y), dvol)
            theta = theta + piece.scale(ex.var(cfg.p(mu, i)))
    return -ext.ext_deriv(theta)


def pullback_by_section(cfg: BundleConfig, H: ex.Expr, form: KForm) -> KForm:
    """Pull a form on the 2-semibasic chart back along ``h: p0 = -H``."""
    comps = {name: ex.var(name) for name in cfg.j1_chart.names}
    comps["p0"] = ex.neg(H)
    return ext.pullback(form, cfg.j1_chart, comps)


def compose_h_mu_lambda(cfg: BundleConfig, H: ex.Expr, lam: SemibasicForm) -> SemibasicForm:
    """``h o mu o lambda``: lam0 replaced by ``-H(x, y, lam(x, y))``."""
    lam0 = ex.neg(ex.subst(H, lam.momentum_map(cfg)))
    return SemibasicForm(lam0, lam.lam)


def lambda_from_S(cfg: BundleConfig, S: PrincipalFunctions) -> SemibasicForm:
    """``lambda = dS``: lam0 = dS^mu/dx^mu, lam^mu_i = dS^mu/dy^i."""
    lam0 = ex.total(ex.deriv(S.S[mu], cfg.base[mu]) for mu in range(cfg.n))
    lam = tuple(tuple(ex.deriv(S.S[mu], y) for y in cfg.fibre) for mu in range(cfg.n))
    return SemibasicForm(lam0, lam)
