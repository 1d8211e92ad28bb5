import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blenderlab.cpoly import (BivariatePolynomial, Polynomial, classify_multiplier, cycle_multiplier,
                              parse_bivariate, parse_polynomial, periodic_points, postcritical_points,
                              postcritical_test, roots)
from blenderlab.errors import DegreeCapExceeded, ParseError, PreconditionError

coef = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


def _match(a, b):
    """Greedy nearest matching distance between two root multisets."""
    b = list(b)
    worst = 0.0
    for x in a:
        k = int(np.argmin([abs(x - y) for y in b]))
        worst = max(worst, abs(x - b.pop(k)))
    return worst


# ------------------------------------------------------------------ roots

def test_roots_simple_cases():
    assert np.allclose(sorted(roots(Polynomial([-1, 0, 1])).real), [-1, 1])
    r = roots(Polynomial([-1, 0, 0, 1]))
    assert _match(r, np.exp(2j * np.pi * np.arange(3) / 3)) < 1e-12


def test_roots_cluster_is_repeated():
    p = Polynomial([-0.5, 1]) * Polynomial([-0.5, 1]) * Polynomial([2, 1])
    r = roots(p)
    assert r.size == 3
    assert _match(r, [0.5, 0.5, -2]) < 1e-7
    assert np.sum(np.abs(r - 0.5) < 1e-7) == 2


def test_roots_zero_roots_and_linear():
    r = roots(Polynomial([0, 0, 3, 1]))
    assert _match(r, [0, 0, -3]) < 1e-12
    assert roots(Polynomial([2, 4]))[0] == pytest.approx(-0.5)


def test_roots_rejects_constant():
    with pytest.raises(PreconditionError):
        roots(Polynomial([1.0]))


@given(st.lists(coef, min_size=2, max_size=9), coef.filter(lambda c: abs(c) > 0.1))
def test_roots_residuals_and_count(low, lead):
    p = Polynomial(np.array(low + [lead]))
    r = roots(p)
    assert r.size == p.degree
    assert np.all(np.abs(p(r)) < 1e-8 * max(1.0, p.norm()) * np.maximum(1, np.abs(r)) ** p.degree)


@given(st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
                min_size=1, max_size=7))
def test_roots_recover_product_form(zs):
    # oracle: separated roots must be recovered by the companion-matrix solver too
    zs = np.array(zs)
    gaps = np.abs(zs[:, None] - zs[None, :]) + np.eye(zs.size) * 9
    if gaps.min() < 1e-2:
        return
    p = Polynomial([1.0])
    for z in zs:
        p = p * Polynomial([-z, 1])
    ours = roots(p)
    ref = np.roots(p.coeffs[::-1])
    assert _match(ours, ref) < 1e-6
    assert _match(ours, zs) < 1e-6


def test_roots_deterministic_for_seed():
    p = Polynomial(np.arange(1, 30) * (1 + 0.5j))
    assert np.array_equal(roots(p), roots(p))


# --------------------------------------------------------- periodic points

def test_fixed_points_of_w2():
    orbits = periodic_points(Polynomial.monomial(2), 1)
    assert [o.classification for o in orbits] == ["attracting", "repelling"]
    assert orbits[0].points[0] == pytest.approx(0)
    assert orbits[1].multiplier == pytest.approx(2)


def test_fixed_points_of_w7():
    orbits = periodic_points(Polynomial.monomial(7), 1)
    assert len(orbits) == 7
    unit = [o for o in orbits if abs(abs(o.points[0]) - 1) < 1e-12]
    assert len(unit) == 6
    for o in unit:
        assert abs(o.multiplier - 7) < 1e-10
        assert o.classification == "repelling"
    pts = np.array([o.points[0] for o in unit])
    sixth = np.exp(2j * np.pi * np.arange(6) / 6)
    assert _match(pts, sixth) < 1e-12


def test_two_cycle_of_w2():
    orbits = periodic_points(Polynomial.monomial(2), 2)
    cyc = [o for o in orbits if o.period == 2]
    assert len(cyc) == 1
    assert _match(cyc[0].points, np.exp(2j * np.pi * np.array([1, 2]) / 3)) < 1e-12
    assert cyc[0].multiplier == pytest.approx(4)


@pytest.mark.parametrize("c,m", [(-1.0, 3), (0.3 + 0.5j, 4), (-0.75 + 0.1j, 2)])
def test_periodic_census_counts(c, m):
    # every solution of q^m(w) = w is counted once: sum of periods = 2^m
    q = Polynomial([c, 0, 1])
    orbits = periodic_points(q, m)
    assert sum(o.period for o in orbits) == 2 ** m
    for o in orbits:
        for a, b in zip(o.points, o.points[1:] + o.points[:1]):
            assert abs(q(a) - b) < 1e-8
        # chain-rule multiplier against a direct derivative of q^period
        _, der = q.iterate_eval(o.points[0], o.period, derivative=True)
        assert abs(der - o.multiplier) < 1e-7 * max(1, abs(der))


def test_parabolic_fixed_point_is_one_orbit():
    # c = 1/4 + i/2 fixes i/2 with multiplier i, a 5-fold root of q^4(w) - w
    q = Polynomial([0.25 + 0.5j, 0, 1])
    orbits = periodic_points(q, 4)
    par = [o for o in orbits if abs(o.points[0] - 0.5j) < 1e-6]
    assert len(par) == 1 and par[0].period == 1
    assert abs(par[0].multiplier - 1j) < 1e-8
    assert par[0].classification == "indifferent"
    # 16 = 5 (parabolic) + 1 + 2 + 4 + 4
    assert sum(o.period for o in orbits) == 12


@pytest.mark.parametrize("c,m,expected", [
    (-2.0, 11, 2 ** 11),           # Chebyshev: neighbours near +-2 are ~5e-9 apart
    (1j, 10, 2 ** 10),
    (0.25, 12, 2 ** 12 - 1),       # multiplier-1 fixed point is a double root for every m
    (-0.75, 8, 2 ** 8 - 2),        # multiplier -1: triple root of q^m - w for even m
    (0.25 + 0.5j, 12, 2 ** 12 - 4),
    (-1.75, 12, 2 ** 12 - 3),      # parabolic 3-cycle, each point a double root
])
def test_periodic_census_high_degree(c, m, expected):
    q = Polynomial([c, 0, 1])
    orbits = periodic_points(q, m)
    assert sum(o.period for o in orbits) == expected
    assert all(m % o.period == 0 for o in orbits)
    pts = np.concatenate([o.points for o in orbits])
    assert np.unique(np.round(pts, 12)).size == pts.size
    par = [o for o in orbits if o.classification != "repelling"]
    if expected < 2 ** m:
        assert any(o.classification == "indifferent" for o in par)


def test_high_multiplicity_root():
    r = roots(Polynomial([-0.5, 1]) ** 7 * Polynomial([1, 1]))
    assert np.sum(np.abs(r - 0.5) < 1e-9) == 7


def test_degree_cap():
    with pytest.raises(DegreeCapExceeded):
        periodic_points(Polynomial.monomial(2), 13)
    with pytest.raises(DegreeCapExceeded):
        Polynomial.monomial(3).iterate(9)


def test_periodic_preconditions():
    with pytest.raises(PreconditionError):
        periodic_points(Polynomial([0, 1]), 1)
    with pytest.raises(PreconditionError):
        periodic_points(Polynomial.monomial(2), 0)


def test_classify_multiplier():
    assert classify_multiplier(0.5) == "attracting"
    assert classify_multiplier(2) == "repelling"
    assert classify_multiplier(np.exp(1j)) == "indifferent"


def test_cycle_multiplier_chain_rule():
    q = Polynomial.monomial(2)
    cyc = list(np.exp(2j * np.pi * np.array([1, 2]) / 3))
    assert cycle_multiplier(q, cyc) == pytest.approx(4)


# ------------------------------------------------------- postcritical set

def test_postcritical_examples():
    assert not postcritical_test(Polynomial.monomial(2), 1, 20)
    basilica = Polynomial([-1, 0, 1])
    assert postcritical_test(basilica, -1, 1)
    assert postcritical_test(basilica, 0, 2)
    assert not postcritical_test(basilica, 0, 1)
    with pytest.raises(PreconditionError):
        postcritical_test(basilica, 0, 0)


def test_postcritical_escape_is_not_a_hit():
    q = Polynomial([3, 0, 1])
    pts = postcritical_points(q, 50)
    assert pts.size < 50
    assert not postcritical_test(q, 1e20, 50)


# ------------------------------------------------------ algebra and parsing

@given(st.lists(coef, min_size=1, max_size=5), st.lists(coef, min_size=1, max_size=5), coef)
def test_compose_and_iterate_eval(a, b, w):
    p, r = Polynomial(a), Polynomial(b)
    assert abs(p.compose(r)(w) - p(r(w))) < 1e-7 * max(1, abs(p(r(w))))


def test_iterate_matches_pointwise():
    q = Polynomial([0.3j, 0, 1])
    w = np.linspace(-1, 1, 7) + 0.2j
    assert np.allclose(q.iterate(4)(w), q.iterate_eval(w, 4))
    val, der = q.iterate_eval(w, 3, derivative=True)
    h = 1e-6
    fd = (q.iterate_eval(w + h, 3) - q.iterate_eval(w - h, 3)) / (2 * h)
    assert np.allclose(der, fd, rtol=1e-6)


def test_bivariate_partials_match_finite_differences():
    P = parse_bivariate("z^2 w + (1+2i) z w^3 - 4 w + 0.5")
    z, w, h = 0.3 - 0.2j, -0.7 + 0.4j, 1e-6
    assert P.dz()(z, w) == pytest.approx((P(z + h, w) - P(z - h, w)) / (2 * h), rel=1e-7)
    assert P.dw()(z, w) == pytest.approx((P(z, w + h) - P(z, w - h)) / (2 * h), rel=1e-7)
    assert P.total_degree == 4


def test_bivariate_from_terms_and_json():
    P = BivariatePolynomial.from_terms({(1, 0): 2.0, (0, 3): 1j})
    assert P(1.5, 2.0) == pytest.approx(3 + 8j)
    Q = BivariatePolynomial.from_json(P.to_json())
    assert np.array_equal(P.coeffs, Q.coeffs)


def test_parse_grammar():
    p = parse_polynomial("w^7")
    assert p.degree == 7 and p.coeffs[-1] == 1
    p = parse_polynomial("2.5i w^2 - (1 - i) w + 3")
    assert np.allclose(p.coeffs, [3, -(1 - 1j), 2.5j])
    p = parse_polynomial("z^2 + 0.25", var="z")
    assert np.allclose(p.coeffs, [0.25, 0, 1])
    assert parse_polynomial("[[0,0],[0,0],[1,0]]").degree == 2


@pytest.mark.parametrize("bad", ["w^^2", "w^-1", "w^1.5", "(w + 1", "", "w + z", "x^2", "w 3 )"])
def test_parse_errors(bad):
    with pytest.raises(ParseError):
        parse_polynomial(bad)


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=6))
def test_parse_roundtrip_integer_coefficients(cs):
    text = " + ".join(f"({c}) w^{k}" for k, c in enumerate(cs))
    p = parse_polynomial(text)
    assert np.allclose(Polynomial(np.array(cs, dtype=complex)).coeffs, p.coeffs)


def test_polynomial_json_roundtrip():
    p = Polynomial([1 + 2j, 0, -3.5])
    assert np.array_equal(Polynomial.from_json(p.to_json()).coeffs, p.coeffs)
    with pytest.raises(ParseError):
        Polynomial.from_json("[[1]]")
