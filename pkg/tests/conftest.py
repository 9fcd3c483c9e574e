import numpy as np
import pytest

from hjlab import expr as ex

_ACCEPTANCE = []

# smooth on the whole sampling box, so random points never hit a domain error
_UNARY = ("sin", "cos", "exp", "tanh", "atan")


def random_source(rng: np.random.Generator, names, depth: int = 3) -> str:
    """Source text of a random smooth expression over ``names``."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.7:
            return str(rng.choice(names))
        return f"{rng.integers(1, 5)}"
    kind = rng.integers(6)
    a = random_source(rng, names, depth - 1)
    if kind == 0:
        return f"{rng.choice(_UNARY)}({a})"
    if kind == 1:
        return f"({a})^{rng.integers(2, 4)}"
    if kind == 2:
        return f"({a})/(2 + ({random_source(rng, names, depth - 1)})^2)"
    op = ("+", "-", "*")[kind - 3]
    return f"({a}) {op} ({random_source(rng, names, depth - 1)})"


def random_expr(rng, names, depth=3) -> ex.Expr:
    return ex.parse(random_source(rng, names, depth))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance():
    """Record one acceptance verdict; all verdicts are echoed in the terminal summary."""
    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        print(line)
        _ACCEPTANCE.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
