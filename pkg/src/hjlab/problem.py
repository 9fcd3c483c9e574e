"""Problem files: TOML with explicit schema validation.

Example::

    seed = 0
    hamiltonian = "(p1_1^2 + p2_1^2)/2 - y1^2"

    [bundle]
    n = 2
    m = 1

    [lambda]
    lambda0 = "0"
    lambda = [["y1"], ["y1"]]     # rows indexed by mu, columns by i

    [domain]
    x1 = [0.0, 1.0]
    x2 = [0.0, 1.0]
    y1 = [-1.0, 1.0]

    [grid]
    steps = 32

Instead of ``[lambda]`` a top-level ``principal = ["S^1", ..., "S^n"]`` may be
given.  Optional: ``[tolerances]`` (ad, flat, grid_coef, path), ``samples``,
``fibers`` and ``[initial]`` (x0, y0, p0, t1, steps).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import expr as ex
from .hj import Tolerances
from .multisymplectic import BundleConfig, PrincipalFunctions, SemibasicForm, lambda_from_S

__all__ = ["ProblemError", "Problem", "load_problem", "parse_problem"]


class ProblemError(ValueError):
    """Invalid problem file; the message starts with the offending field path."""


@dataclass
class Problem:
    cfg: BundleConfig
    H: ex.Expr
    lam: Optional[SemibasicForm]
    principal: Optional[PrincipalFunctions]
    domain: Dict[str, Tuple[float, float]]
    steps: Tuple[int, ...]
    tolerances: Tolerances = Tolerances()
    seed: int = 0
    samples: int = 100
    fibers: int = 8
    initial: Dict[str, Any] = field(default_factory=dict)

    @property
    def form(self) -> SemibasicForm:
        """The semibasic form, derived from the principal functions if those were given."""
        if self.lam is not None:
            return self.lam
        return lambda_from_S(self.cfg, self.principal)

    def box(self, names) -> Dict[str, Tuple[float, float]]:
        return {k: self.domain[k] for k in names}


def _get(tbl: dict, key: str, path: str, kind, required=True, default=None):
    full = f"{path}.{key}" if path else key
    if key not in tbl:
        if required:
            raise ProblemError(f"{full}: missing required field")
        return default
    val = tbl[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if kind is not None and (not isinstance(val, kind) or isinstance(val, bool) and kind is not bool):
        raise ProblemError(f"{full}: expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
    return val


def _expr(cfg: BundleConfig, source, path: str, chart=None) -> ex.Expr:
    if not isinstance(source, str):
        raise ProblemError(f"{path}: expected an expression string")
    try:
        return cfg.parse(source, chart, what=path)
    except ex.ParseError as exc:
        raise ProblemError(f"{path}: {exc}") from None
    except ValueError as exc:
        raise ProblemError(f"{path}: {exc}") from None


def _interval(val, path) -> Tuple[float, float]:
    if (not isinstance(val, list) or len(val) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val)):
        raise ProblemError(f"{path}: expected [lower, upper]")
    lo, hi = float(val[0]), float(val[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ProblemError(f"{path}: bounds must be finite")
    if not lo < hi:
        raise ProblemError(f"{path}: lower bound must be below upper bound")
    return lo, hi


def parse_problem(data: dict) -> Problem:
    bundle = _get(data, "bundle", "", dict)
    n = _get(bundle, "n", "bundle", int)
    m = _get(bundle, "m", "bundle", int)
    try:
        cfg = BundleConfig(n, m)
    except ValueError as exc:
        raise ProblemError(f"bundle: {exc}") from None

    H = _expr(cfg, _get(data, "hamiltonian", "", str), "hamiltonian", cfg.j1_chart)

    has_lam, has_s = "lambda" in data, "principal" in data
    if has_lam == has_s:
        raise ProblemError("lambda/principal: exactly one of the two must be present")
    lam = principal = None
    if has_lam:
        tbl = _get(data, "lambda", "", dict)
        lam0 = _expr(cfg, _get(tbl, "lambda0", "lambda", str, required=False, default="0"), "lambda.lambda0")
        mat = _get(tbl, "lambda", "lambda", list)
        if len(mat) != n or not all(isinstance(r, list) and len(r) == m for r in mat):
            raise ProblemError(f"lambda.lambda: expected {n} rows (one per mu) of {m} expressions")
        rows = tuple(tuple(_expr(cfg, s, f"lambda.lambda[{mu}][{i}]") for i, s in enumerate(r))
                     for mu, r in enumerate(mat))
        lam = SemibasicForm(lam0, rows)
    else:
        srcs = _get(data, "principal", "", list)
        if len(srcs) != n:
            raise ProblemError(f"principal: expected {n} expressions, got {len(srcs)}")
        principal = PrincipalFunctions(tuple(_expr(cfg, s, f"principal[{mu}]") for mu, s in enumerate(srcs)))

    dom = _get(data, "domain", "", dict, required=False, default={})
    unknown = sorted(set(dom) - set(cfg.j1_chart.names))
    if unknown:
        raise ProblemError(f"domain.{unknown[0]}: not a coordinate of this bundle")
    domain = {}
    for name in cfg.j1_chart.names:
        if name in dom:
            domain[name] = _interval(dom[name], f"domain.{name}")
        else:
            domain[name] = (0.5, 1.5) if name == "t" else (-1.0, 1.0)

    grid = _get(data, "grid", "", dict, required=False, default={"steps": 32})
    steps = grid.get("steps", 32)
    if isinstance(steps, int) and not isinstance(steps, bool):
        steps = [steps] * n
    if not isinstance(steps, list) or len(steps) != n or not all(isinstance(s, int) for s in steps):
        raise ProblemError(f"grid.steps: expected an integer or a list of {n} integers")
    if any(s < 4 for s in steps):
        raise ProblemError("grid.steps: need at least 4 steps per axis")

    tol_tbl = _get(data, "tolerances", "", dict, required=False, default={})
    unknown = sorted(set(tol_tbl) - {f.name for f in dataclasses.fields(Tolerances)})
    if unknown:
        raise ProblemError(f"tolerances.{unknown[0]}: unknown tolerance")
    tol = Tolerances(**{k: _get(tol_tbl, k, "tolerances", float) for k in tol_tbl})
    for f in dataclasses.fields(Tolerances):
        if not getattr(tol, f.name) > 0:
            raise ProblemError(f"tolerances.{f.name}: must be positive")

    seed = _get(data, "seed", "", int, required=False, default=0)
    samples = _get(data, "samples", "", int, required=False, default=100)
    fibers = _get(data, "fibers", "", int, required=False, default=8)
    if samples < 1 or fibers < 1:
        raise ProblemError("samples/fibers: must be positive")

    init = _get(data, "initial", "", dict, required=False, default={})
    initial: Dict[str, Any] = {}
    for key, size in (("x0", n), ("y0", m), ("p0", m)):
        if key in init:
            v = init[key]
            v = [v] if isinstance(v, (int, float)) and not isinstance(v, bool) else v
            if not isinstance(v, list) or len(v) != size or not all(isinstance(a, (int, float)) for a in v):
                raise ProblemError(f"initial.{key}: expected {size} numbers")
            initial[key] = [float(a) for a in v]
    if "t1" in init:
        initial["t1"] = _get(init, "t1", "initial", float)
    if "steps" in init:
        initial["steps"] = _get(init, "steps", "initial", int)
        if initial["steps"] < 1:
            raise ProblemError("initial.steps: must be at least 1")

    return Problem(cfg, H, lam, principal, domain, tuple(steps), tol, seed, samples, fibers, initial)


def load_problem(path) -> Problem:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ProblemError(f"{path}: cannot read problem file ({exc.strerror})") from None
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ProblemError(f"{path}: {exc}") from None
    return parse_problem(data)
