import itertools

import numpy as np
import pytest

from hjlab import expr as ex
from hjlab import exterior as ext
from hjlab.exterior import Chart, KForm, ProjectorField, VectorField

from conftest import random_expr

CHART = Chart(("x1", "x2", "y1"))


def random_form(rng, chart, degree, depth=2):
    coeffs = {idx: random_expr(rng, chart.names, depth)
              for idx in itertools.combinations(range(chart.dim), degree)}
    return KForm(chart, degree, coeffs)


def d_oracle(form, point, h=1e-5):
    """Coefficients of d(form) from the coordinate-vector formula and central differences."""
    chart = form.chart
    out = {}
    for J in itertools.combinations(range(chart.dim), form.degree + 1):
        total = 0.0
        for s, j in enumerate(J):
            rest = [chart.basis(b) for b in J[:s] + J[s + 1:]]
            up, down = dict(point), dict(point)
            up[chart.names[j]] += h
            down[chart.names[j]] -= h
            slope = (ext.evaluate(form, up, rest) - ext.evaluate(form, down, rest)) / (2 * h)
            total += (-1) ** s * slope
        out[J] = total
    return out


def slot_sum(form, P, point, vectors):
    mat = P.at(point)
    total = 0.0
    for j in range(len(vectors)):
        vs = list(vectors)
        vs[j] = mat @ np.asarray(vectors[j])
        total += ext.evaluate(form, point, vs)
    return total


def dx(name, chart=CHART):
    return KForm.differential(chart, name)


# ---------------------------------------------------------------- wedge


def test_wedge_examples():
    chart = Chart(("x1", "x2"))
    assert ext.wedge(dx("x1", chart), dx("x1", chart)).coeffs == {}
    a = ext.wedge(dx("x1", chart), dx("x2", chart))
    b = ext.wedge(dx("x2", chart), dx("x1", chart))
    assert a.coeffs == {(0, 1): ex.ONE}
    assert ex.evaluate(b.coefficient(["x1", "x2"]), {}) == -1.0
    chart = Chart(("x1", "y1"))
    c = ext.wedge(KForm.differential(chart, "x1").scale(ex.var("y1")), KForm.differential(chart, "y1"))
    assert c.coeffs == {(0, 1): ex.var("y1")}


def test_wedge_chart_mismatch():
    with pytest.raises(ext.ChartMismatch):
        ext.wedge(dx("x1"), KForm.differential(Chart(("x1",)), "x1"))


def test_wedge_graded_commutativity(rng):
    a, b = random_form(rng, CHART, 1), random_form(rng, CHART, 2)
    point = {"x1": 0.2, "x2": -0.5, "y1": 0.9}
    ab, ba = ext.wedge(a, b), ext.wedge(b, a)
    assert ext.evaluate(ab, point, np.eye(3)) == pytest.approx(ext.evaluate(ba, point, np.eye(3)), abs=1e-14)
    aa = ext.wedge(a, a)
    assert ext.max_coefficient(aa, point) < 1e-14


# ---------------------------------------------------------------- exterior derivative


def test_ext_deriv_example():
    vol = ext.wedge(dx("x1"), dx("x2")).scale(ex.var("y1"))
    d = ext.ext_deriv(vol)
    assert d.degree == 3
    assert ext.coefficient_values(d, {"x1": 0.0, "x2": 0.0, "y1": 0.0}) == {(0, 1, 2): 1.0}
    assert ext.evaluate(d, {"x1": 1, "x2": 2, "y1": 3}, [CHART.basis("y1"), CHART.basis("x1"),
                                                            CHART.basis("x2")]) == 1.0


def test_d_of_constant_is_zero():
    assert ext.ext_deriv(KForm.function(CHART, ex.const(3.0))).coeffs == {}


def test_dd_vanishes_on_example(rng):
    f = KForm.function(CHART, ex.parse("x1^2*sin(y1)"))
    dd = ext.ext_deriv(ext.ext_deriv(f))
    for p in ext.sample_points(CHART, 100, rng):
        assert ext.max_coefficient(dd, p) < 1e-10


@pytest.mark.parametrize("degree", [0, 1, 2])
def test_ext_deriv_matches_difference_oracle(rng, degree):
    for _ in range(3):
        form = random_form(rng, CHART, degree)
        d = ext.ext_deriv(form)
        for p in ext.sample_points(CHART, 5, rng):
            exact = ext.coefficient_values(d, p)
            for J, approx in d_oracle(form, p).items():
                assert exact.get(J, 0.0) == pytest.approx(approx, abs=1e-6 * (1 + abs(approx)))


# ---------------------------------------------------------------- evaluation


def test_evaluate_basis_pairing_and_swap():
    chart = Chart(("x1", "x2"))
    vol = ext.wedge(dx("x1", chart), dx("x2", chart))
    e1, e2 = chart.basis(0), chart.basis(1)
    assert ext.evaluate(vol, {}, [e1, e2]) == 1.0
    assert ext.evaluate(vol, {}, [e2, e1]) == -1.0


def test_evaluate_dimension_checks():
    vol = ext.wedge(dx("x1"), dx("x2"))
    with pytest.raises(ValueError):
        ext.evaluate(vol, {}, [CHART.basis(0)])
    with pytest.raises(ValueError):
        ext.evaluate(vol, {}, [np.ones(2), np.ones(2)])


def test_evaluate_is_exactly_alternating(rng):
    form = random_form(rng, CHART, 3)
    p = ext.sample_points(CHART, 1, rng)[0]
    vecs = list(rng.normal(size=(3, 3)))
    ref = ext.evaluate(form, p, vecs)
    for perm in itertools.permutations(range(3)):
        sign = np.linalg.det(np.eye(3)[list(perm)])
        assert ext.evaluate(form, p, [vecs[k] for k in perm]) == sign * ref
    assert ext.evaluate(form, p, [vecs[0], vecs[1], vecs[0]]) == 0.0


# ---------------------------------------------------------------- interior products


def test_contraction_examples(rng):
    chart = Chart(("x1", "x2"))
    vol = ext.wedge(dx("x1", chart), dx("x2", chart))
    assert ext.interior_vector(vol, VectorField.coordinate(chart, "x1")).coeffs == {(1,): ex.ONE}
    base_vol = ext.wedge(dx("x1"), dx("x2"))
    assert ext.interior_vector(base_vol, VectorField.coordinate(CHART, "y1")).coeffs == {}
    X = VectorField(CHART, tuple(random_expr(rng, CHART.names) for _ in range(3)))
    twice = ext.interior_vector(ext.interior_vector(random_form(rng, CHART, 2), X), X)
    for p in ext.sample_points(CHART, 20, rng):
        assert ext.max_coefficient(twice, p) < 1e-12


def test_contraction_fills_first_slot(rng):
    form = random_form(rng, CHART, 2)
    X = VectorField(CHART, tuple(random_expr(rng, CHART.names) for _ in range(3)))
    for p in ext.sample_points(CHART, 10, rng):
        v = rng.normal(size=3)
        lhs = ext.evaluate(ext.interior_vector(form, X), p, [v])
        assert lhs == pytest.approx(ext.evaluate(form, p, [X.at(p), v]), abs=1e-12)


def test_projector_identity_scales_by_degree(rng):
    ident = ProjectorField.identity(CHART)
    for k in (1, 2, 3):
        form = random_form(rng, CHART, k)
        out = ext.insert_projector(form, ident)
        for p in ext.sample_points(CHART, 10, rng):
            a, b = ext.coefficient_values(out, p), ext.coefficient_values(form, p)
            for J in b:
                assert a[J] == pytest.approx(k * b[J], abs=1e-12)


def test_projector_zero_gives_zero(rng):
    zero = ProjectorField(CHART, ((0,) * 3,) * 3)
    assert ext.insert_projector(random_form(rng, CHART, 2), zero).coeffs == {}


def test_projector_matches_slot_sum(rng):
    for k in (1, 2, 3):
        form = random_form(rng, CHART, k)
        P = ProjectorField(CHART, tuple(tuple(random_expr(rng, CHART.names, 1) for _ in range(3))
                                        for _ in range(3)))
        out = ext.insert_projector(form, P)
        for p in ext.sample_points(CHART, 10, rng):
            vecs = list(rng.normal(size=(k, 3)))
            assert ext.evaluate(out, p, vecs) == pytest.approx(slot_sum(form, P, p, vecs), abs=1e-11)


def test_projector_chart_mismatch():
    with pytest.raises(ext.ChartMismatch):
        ext.insert_projector(dx("x1"), ProjectorField.identity(Chart(("x1", "x2"))))


# ---------------------------------------------------------------- pullback


def test_pullback_commutes_with_d(rng):
    source = Chart(("u", "v"))
    comps = {"x1": ex.parse("u*v"), "x2": ex.parse("sin(u) + v^2"), "y1": ex.parse("exp(v) - u")}
    form = random_form(rng, CHART, 1)
    a = ext.ext_deriv(ext.pullback(form, source, comps))
    b = ext.pullback(ext.ext_deriv(form), source, comps)
    for p in ext.sample_points(source, 20, rng):
        assert ext.coefficient_values(a, p)[(0, 1)] == pytest.approx(ext.coefficient_values(b, p)[(0, 1)],
                                                                     abs=1e-12)


def test_pullback_of_volume_is_jacobian():
    source = Chart(("r", "s"))
    comps = {"x1": ex.parse("r*cos(s)"), "x2": ex.parse("r*sin(s)")}
    vol = ext.wedge(KForm.differential(Chart(("x1", "x2")), "x1"), KForm.differential(Chart(("x1", "x2")), "x2"))
    pulled = ext.pullback(vol, source, comps)
    assert ext.coefficient_values(pulled, {"r": 2.0, "s": 0.3})[(0, 1)] == pytest.approx(2.0, abs=1e-15)


def test_pullback_needs_every_component():
    with pytest.raises(ext.ChartMismatch):
        ext.pullback(dx("x1"), Chart(("u",)), {"x1": ex.var("u")})


def test_kform_validation():
    with pytest.raises(ValueError):
        KForm(CHART, 4)
    with pytest.raises(ValueError):
        KForm(CHART, 2, {(1, 0): ex.ONE})
    with pytest.raises(ValueError):
        Chart(("x1", "x1"))
