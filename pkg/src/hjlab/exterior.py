"""Differential forms on a single coordinate chart.

Coefficients stay unevaluated expressions; identities are checked pointwise.
A k-form is stored sparsely as ``{increasing index tuple: Expr}``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from . import expr as ex
from .expr import Expr

__all__ = [
    "Chart", "KForm", "VectorField", "ProjectorField", "ChartMismatch",
    "wedge", "ext_deriv", "evaluate", "interior_vector", "insert_projector",
    "pullback", "coefficient_values", "max_coefficient", "sample_points",
]


class ChartMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    names: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise ValueError("a chart needs at least one coordinate")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate coordinate names in {self.names}")

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def basis(self, name_or_index) -> np.ndarray:
        i = name_or_index if isinstance(name_or_index, int) else self.index(name_or_index)
        v = np.zeros(self.dim)
        v[i] = 1.0
        return v


def _sort_sign(seq) -> Tuple[int, Tuple[int, ...]]:
    """Sign of the permutation sorting ``seq`` (0 if it repeats) and the sorted tuple."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0, ()
    inversions = sum(1 for a, b in itertools.combinations(seq, 2) if a > b)
    return (-1 if inversions % 2 else 1), tuple(sorted(seq))


@dataclass(frozen=True, eq=False)
class KForm:
    chart: Chart
    degree: int
    coeffs: Dict[Tuple[int, ...], Expr] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.degree <= self.chart.dim:
            raise ValueError(f"degree {self.degree} outside 0..{self.chart.dim}")
        clean = {}
        for idx, c in self.coeffs.items():
            idx = tuple(idx)
            if len(idx) != self.degree or any(a >= b for a, b in zip(idx, idx[1:])):
                raise ValueError(f"index tuple {idx} is not strictly increasing of length {self.degree}")
            if not (isinstance(c, ex.Const) and c.value == 0.0):
                clean[idx] = c
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def zero(cls, chart: Chart, degree: int) -> "KForm":
        return cls(chart, degree, {})

    @classmethod
    def function(cls, chart: Chart, f: Expr) -> "KForm":
        return cls(chart, 0, {(): f})

    @classmethod
    def differential(cls, chart: Chart, name: str) -> "KForm":
        return cls(chart, 1, {(chart.index(name),): ex.ONE})

    def coefficient(self, names: Sequence[str]) -> Expr:
        """Coefficient on ``d(names[0]) ^ d(names[1]) ^ ...`` including the reordering sign."""
        sign, idx = _sort_sign(self.chart.index(n) for n in names)
        if sign == 0:
            return ex.ZERO
        c = self.coeffs.get(idx, ex.ZERO)
        return c if sign > 0 else ex.neg(c)

    def _check(self, other: "KForm"):
        if other.chart != self.chart:
            raise ChartMismatch(f"{self.chart.names} vs {other.chart.names}")

    def __add__(self, other: "KForm") -> "KForm":
        self._check(other)
        if other.degree != self.degree:
            raise ValueError("cannot add forms of different degree")
        out = dict(self.coeffs)
        for idx, c in other.coeffs.items():
            out[idx] = ex.add(out[idx], c) if idx in out else c
        return KForm(self.chart, self.degree, out)

    def __neg__(self) -> "KForm":
        return KForm(self.chart, self.degree, {i: ex.neg(c) for i, c in self.coeffs.items()})

    def __sub__(self, other: "KForm") -> "KForm":
        return self + (-other)

    def scale(self, f) -> "KForm":
        f = f if isinstance(f, Expr) else ex.const(f)
        return KForm(self.chart, self.degree, {i: ex.mul(f, c) for i, c in self.coeffs.items()})

    def __repr__(self):
        terms = []
        for idx, c in self.coeffs.items():
            basis = "^".join("d" + self.chart.names[i] for i in idx) or "1"
            terms.append(f"({c})*{basis}")
        return f"KForm[{self.degree}](" + " + ".join(terms) + ")"


@dataclass(frozen=True, eq=False)
class VectorField:
    chart: Chart
    components: Tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Expr) else ex.const(c) for c in self.components)
        if len(comps) != self.chart.dim:
            raise ValueError(f"{len(comps)} components for a chart of dimension {self.chart.dim}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def coordinate(cls, chart: Chart, name: str) -> "VectorField":
        i = chart.index(name)
        return cls(chart, tuple(ex.ONE if j == i else ex.ZERO for j in range(chart.dim)))

    def at(self, point: Mapping[str, float]) -> np.ndarray:
        return np.array([float(ex.evaluate(c, point)) for c in self.components])


@dataclass(frozen=True, eq=False)
class ProjectorField:
    """A (1,1)-tensor; ``matrix[a][b]`` is the a-th component of P applied to the b-th basis vector."""

    chart: Chart
    matrix: Tuple[Tuple[Expr, ...], ...]

    def __post_init__(self):
        d = self.chart.dim
        rows = tuple(tuple(c if isinstance(c, Expr) else ex.const(c) for c in row) for row in self.matrix)
        if len(rows) != d or any(len(r) != d for r in rows):
            raise ValueError(f"projector must be {d}x{d}")
        object.__setattr__(self, "matrix", rows)

    @classmethod
    def identity(cls, chart: Chart) -> "ProjectorField":
        d = chart.dim
        return cls(chart, tuple(tuple(ex.ONE if a == b else ex.ZERO for b in range(d)) for a in range(d)))

    def at(self, point: Mapping[str, float]) -> np.ndarray:
        return np.array([[float(ex.evaluate(c, point)) for c in row] for row in self.matrix])


def wedge(a: KForm, b: KForm) -> KForm:
    a._check(b)
    k = a.degree + b.degree
    if k > a.chart.dim:
        return KForm.zero(a.chart, a.chart.dim)
    out: Dict[Tuple[int, ...], Expr] = {}
    for ia, ca in a.coeffs.items():
        for ib, cb in b.coeffs.items():
            sign, idx = _sort_sign(ia + ib)
            if sign == 0:
                continue
            term = ex.mul(ca, cb)
            term = term if sign > 0 else ex.neg(term)
            out[idx] = ex.add(out[idx], term) if idx in out else term
    return KForm(a.chart, k, out)


def ext_deriv(a: KForm) -> KForm:
    """Exterior derivative; coefficients are AD thunks over ``a``'s coefficients."""
    if a.degree >= a.chart.dim:
        raise ValueError("exterior derivative of a top-degree form")
    names = a.chart.names
    out: Dict[Tuple[int, ...], Expr] = {}
    for idx, c in a.coeffs.items():
        for j, name in enumerate(names):
            if j in idx or name not in c.free:
                continue
            # d x^j moved past the entries of idx smaller than j
            shift = sum(1 for i in idx if i < j)
            term = ex.Deriv(c, name)
            term = term if shift % 2 == 0 else ex.neg(term)
            key = tuple(sorted(idx + (j,)))
            out[key] = ex.add(out[key], term) if key in out else term
    return KForm(a.chart, a.degree + 1, out)


def _det(m: np.ndarray) -> float:
    k = m.shape[0]
    if k == 0:
        return 1.0
    if k == 1:
        return float(m[0, 0])
    if k == 2:
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    if k == 3:
        return float(
            m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
            - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
            + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
        )
    return float(np.linalg.det(m))


def coefficient_values(a: KForm, point: Mapping[str, float]) -> Dict[Tuple[int, ...], float]:
    return {idx: float(ex.evaluate(c, point)) for idx, c in a.coeffs.items()}


def max_coefficient(a: KForm, point: Mapping[str, float]) -> float:
    vals = coefficient_values(a, point)
    return max((abs(v) for v in vals.values()), default=0.0)


def evaluate(a: KForm, point: Mapping[str, float], vectors: Sequence[Sequence[float]]) -> float:
    """``a(point)(v_1, ..., v_k)`` as a sum of coefficient times minor determinant.

    The vectors are put in a canonical order first, so that permuting them
    changes the result by exactly the permutation sign.
    """
    if len(vectors) != a.degree:
        raise ValueError(f"{a.degree}-form evaluated on {len(vectors)} vectors")
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    for v in vecs:
        if v.shape != (a.chart.dim,):
            raise ValueError(f"vector of shape {v.shape} on a chart of dimension {a.chart.dim}")
    order = sorted(range(len(vecs)), key=lambda j: tuple(vecs[j]))
    sign, _ = _sort_sign(order)
    for j, k in zip(order, order[1:]):
        if np.array_equal(vecs[j], vecs[k]):
            return 0.0
    mat = np.column_stack([vecs[j] for j in order]) if vecs else np.zeros((a.chart.dim, 0))
    total = 0.0
    for idx, c in a.coeffs.items():
        minor = _det(mat[list(idx), :])
        if minor != 0.0:
            total += float(ex.evaluate(c, point)) * minor
    return sign * total


def interior_vector(a: KForm, X: VectorField) -> KForm:
    """``i_X a``: contraction in the first slot."""
    if a.chart != X.chart:
        raise ChartMismatch(f"{a.chart.names} vs {X.chart.names}")
    if a.degree < 1:
        raise ValueError("interior product of a 0-form")
    out: Dict[Tuple[int, ...], Expr] = {}
    for idx, c in a.coeffs.items():
        for s, j in enumerate(idx):
            comp = X.components[j]
            term = ex.mul(comp, c)
            if isinstance(term, ex.Const) and term.value == 0.0:
                continue
            term = term if s % 2 == 0 else ex.neg(term)
            key = idx[:s] + idx[s + 1:]
            out[key] = ex.add(out[key], term) if key in out else term
    return KForm(a.chart, a.degree - 1, out)


def insert_projector(a: KForm, P: ProjectorField) -> KForm:
    """``(i_P a)(X_1..X_k) = sum_j a(X_1, .., P X_j, .., X_k)``."""
    if a.chart != P.chart:
        raise ChartMismatch(f"{a.chart.names} vs {P.chart.names}")
    d, k = a.chart.dim, a.degree
    out: Dict[Tuple[int, ...], Expr] = {}
    for J in itertools.combinations(range(d), k):
        terms = []
        for s in range(k):
            for b in range(d):
                p = P.matrix[b][J[s]]
                if isinstance(p, ex.Const) and p.value == 0.0:
                    continue
                sign, idx = _sort_sign(J[:s] + (b,) + J[s + 1:])
                if sign == 0 or idx not in a.coeffs:
                    continue
                term = ex.mul(p, a.coeffs[idx])
                terms.append(term if sign > 0 else ex.neg(term))
        if terms:
            out[J] = ex.total(terms)
    return KForm(a.chart, k, out)


def pullback(a: KForm, chart: Chart, components: Mapping[str, Expr]) -> KForm:
    """Pull ``a`` back along the map ``chart -> a.chart`` given by ``components``.

    ``components`` holds, for every coordinate of ``a.chart``, its expression in
    the coordinates of ``chart``.
    """
    target = a.chart
    missing = [n for n in target.names if n not in components]
    if missing:
        raise ChartMismatch(f"no component for {missing}")
    comps = [components[n] for n in target.names]
    jac = [[ex.deriv(f, z) for z in chart.names] for f in comps]
    k = a.degree
    out: Dict[Tuple[int, ...], Expr] = {}
    for J in itertools.combinations(range(chart.dim), k):
        terms = []
        for I, c in a.coeffs.items():
            pulled = ex.subst(c, dict(zip(target.names, comps)))
            det_terms = []
            for perm in itertools.permutations(range(k)):
                sign, _ = _sort_sign(perm)
                prod = ex.ONE
                for r in range(k):
                    prod = ex.mul(prod, jac[I[r]][J[perm[r]]])
                if isinstance(prod, ex.Const) and prod.value == 0.0:
                    continue
                det_terms.append(prod if sign > 0 else ex.neg(prod))
            if det_terms:
                terms.append(ex.mul(pulled, ex.total(det_terms)))
        if terms:
            out[J] = ex.total(terms)
    return KForm(chart, k, out)


def sample_points(chart: Chart, count: int, rng: np.random.Generator,
                  box: Mapping[str, Tuple[float, float]] | None = None,
                  positive: Sequence[str] = ("t",)):
    """Uniform random points; default box [-1, 1], [0.5, 1.5] for ``positive`` names."""
    box = dict(box or {})
    bounds = []
    for name in chart.names:
        if name in box:
            bounds.append(tuple(map(float, box[name])))
        elif name in positive:
            bounds.append((0.5, 1.5))
        else:
            bounds.append((-1.0, 1.0))
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    raw = rng.uniform(lo, hi, size=(count, chart.dim))
    return [dict(zip(chart.names, map(float, row))) for row in raw]
