import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blenderlab.blender import (SkewMap, VerticalGraphSample, blender_intersect, build_vertical_neighborhoods,
                                certify_repelling_blender, certify_saddle_blender, graph_nodes, graph_transform,
                                inverse_branch, model_map, postcritical_curve_check, slope_of)
from blenderlab.cpoly import BivariatePolynomial, Polynomial, make_orbit
from blenderlab.errors import NoAdmissibleBlock, PreconditionError
from blenderlab.planar import Disc

CUBE_ROOTS = np.exp(2j * np.pi * np.arange(3) / 3)


def _cover_oracle(cc):
    # farthest point of the unit disc from the centres eps0 c_j is -1 (midway between two of them)
    e = cc.epsilon0
    return 1 - cc.alpha0 - math.sqrt(1 - e + e * e)


# ------------------------------------------------------- neighborhoods


def test_neighborhood_shape(q4_nb):
    nb = q4_nb
    assert nb.n_blocks == 3 and nb.l == 2 and nb.m1 == 1
    for j in range(3):
        assert nb.regions[j].contains(CUBE_ROOTS[j])
        for k in range(3):
            if k != j:
                assert not nb.regions[j].contains(CUBE_ROOTS[k])


@pytest.mark.parametrize("i,j", [(0, 0), (0, 2), (1, 0), (2, 1)])
def test_inverse_branch_lands_in_source_and_inverts(q4_nb, i, j):
    nb = q4_nb
    t = nb.sample(j, 3, 8, 32)
    u = inverse_branch(nb, i, j, t)
    assert np.allclose(nb.Q(u), t, atol=1e-10)
    assert np.all(np.asarray(nb.regions[i].margin(u)) > -1e-9)
    assert inverse_branch(nb, i, j, nb.base_points[j]) == pytest.approx(nb.anchor(i, j))


@given(st.integers(0, 2), st.integers(0, 2), st.floats(0, 1), st.floats(0, 2 * math.pi))
def test_inverse_branch_property(q4_nb, i, j, r, t):
    nb = q4_nb
    w = nb.branch(j, np.array([CUBE_ROOTS[j] * (1 + 0.3 * r * np.exp(1j * t))]))
    if not np.all(np.asarray(nb.regions[j].margin(w)) > 0):
        return
    u = inverse_branch(nb, i, j, w)
    assert abs(nb.Q(u)[0] - w[0]) < 1e-9


def test_graph_nodes_lie_on_boundary(q4_nb):
    w = graph_nodes(q4_nb, 1, 64)
    assert w.size == 64
    assert np.max(np.abs(np.asarray(q4_nb.regions[1].margin(w)))) < 1e-6


# ------------------------------------------------------ graphs


def test_slope_of_linear_graph():
    w = np.exp(2j * np.pi * np.arange(16) / 16)
    assert slope_of(w, 0.05 * w + 2) == pytest.approx(0.05)
    assert slope_of(w, np.zeros(16)) == 0


def test_graph_transform_of_constant_graph(model_repelling, cube_cc, q4_nb):
    # h is rho z + eps0 c_i on V_i, so a constant graph z0 over V_i becomes rho z0 + eps0 c_i
    g, _ = model_repelling
    rho = 1 + cube_cc.alpha0
    for i, j in [(0, 1), (2, 0), (1, 1)]:
        s = VerticalGraphSample.constant(q4_nb, i, 0.2 - 0.1j, 65)
        t = graph_transform(g, q4_nb, s, i, j)
        assert t.label == j
        assert np.allclose(t.values, rho * (0.2 - 0.1j) + cube_cc.epsilon0 * CUBE_ROOTS[i], atol=1e-14)
        assert t.slope_bound < 1e-12


def test_graph_transform_label_mismatch(model_repelling, q4_nb):
    g, _ = model_repelling
    s = VerticalGraphSample.constant(q4_nb, 0, 0j, 17)
    with pytest.raises(PreconditionError):
        graph_transform(g, q4_nb, s, 1, 0)


def test_graph_needs_evaluator(q4_nb):
    s = VerticalGraphSample.constant(q4_nb, 0, 0j, 17)
    bare = VerticalGraphSample(s.domain, s.nodes, s.values, s.slope_bound, 0)
    with pytest.raises(PreconditionError):
        bare(0.9)
    assert s.to_csv().splitlines()[0] == "w_re,w_im,sigma_re,sigma_im"


# -------------------------------------------------------- skew maps


def test_skew_map_operations():
    h = BivariatePolynomial.from_terms({(2, 0): 1.0, (0, 1): 0.5})
    g = SkewMap(h, Polynomial.monomial(2), 1)
    z, w = 0.3 + 0.1j, 0.5j
    z2, w2 = g.iterate(2)(z, w)
    a, b = g(*g(z, w))
    assert z2 == pytest.approx(a) and w2 == pytest.approx(b)
    P = BivariatePolynomial.from_terms({(0, 0): 1j})
    assert g.perturbed(P)(z, w)[0] == pytest.approx(g(z, w)[0] + 1j)
    assert g.rescaled(0.25)(z, w)[0] == pytest.approx(g(0.25 * z, w)[0] / 0.25)
    h_, hz, hw, Qw, dQ = g.jacobian(z, w)
    assert (hz, hw, dQ) == pytest.approx((2 * z, 0.5, 2 * w))


# ------------------------------------------------------- certificates


def test_model_repelling_certificate_matches_oracle(model_repelling, cube_cc, q4_nb):
    _, bc = model_repelling
    cc = cube_cc
    m = {c.check_name: c.worst_margin for c in bc.checks}
    assert bc.passed
    assert m["proximity"] == pytest.approx(0.1, abs=1e-15)
    assert m["expansion"] == pytest.approx(cc.alpha0, abs=1e-12)
    assert m["covering"] == pytest.approx(_cover_oracle(cc) + 2 * cc.alpha0, abs=1e-9)
    rho = 1 + cc.alpha0
    wmin = min(np.abs(q4_nb.sample(j, 5, 12, 96)).min() for j in range(3))
    assert m["cone"] == pytest.approx(0.1 * (1 - rho / (16 * wmin ** 15)), rel=1e-9)
    assert bc.worst_margin == pytest.approx(0.009375, abs=1e-12)


def test_model_saddle_certificate_matches_oracle(cube_cc, q4, q4_nb):
    rho = 1 - cube_cc.alpha0
    g = model_map(rho, cube_cc.epsilon0, cube_cc.c, q4, 2, q4_nb)
    bc = certify_saddle_blender(g, cube_cc, q4_nb, rho)
    m = {c.check_name: c.worst_margin for c in bc.checks}
    assert bc.passed
    assert m["contraction"] == pytest.approx(cube_cc.alpha0, abs=1e-12)
    assert m["covering"] == pytest.approx(_cover_oracle(cube_cc), abs=1e-9)


def test_regime_mismatch_is_rejected(model_repelling, cube_cc, q4_nb):
    g, _ = model_repelling
    with pytest.raises(PreconditionError):
        certify_saddle_blender(g, cube_cc, q4_nb, 1 + cube_cc.alpha0)
    with pytest.raises(PreconditionError):
        certify_repelling_blender(g, cube_cc, q4_nb, 1 - cube_cc.alpha0)


def test_far_off_map_fails_proximity(cube_cc, q4, q4_nb):
    rho = 1 + cube_cc.alpha0
    g = model_map(rho, cube_cc.epsilon0, cube_cc.c, q4, 2, q4_nb)
    bad = g.perturbed(BivariatePolynomial.from_terms({(0, 0): 0.3}))
    bc = certify_repelling_blender(bad, cube_cc, q4_nb, rho)
    assert not bc.passed
    assert "proximity" in bc.certificate().failing()


def test_certificate_serializes(model_repelling):
    _, bc = model_repelling
    c = bc.certificate(seed=7)
    d = c.to_json()
    assert d["seed"] == 7 and d["params"]["kind"] == "repelling"
    assert {s["check_name"] for s in d["sub_certificates"]} == {"proximity", "cone", "expansion", "covering"}


# --------------------------------------------------------- witnesses


def test_witness_for_constant_graph(model_repelling, q4_nb):
    g, bc = model_repelling
    s = VerticalGraphSample.constant(q4_nb, 0, 0.1j)
    wit = blender_intersect(g, q4_nb, bc.blocks, s, 30)
    assert len(wit.itinerary) == 31 and wit.orbit.shape == (31, 2)
    assert wit.min_margin >= 0
    assert wit.verify(g, bc.blocks)
    assert wit.z == pytest.approx(0.1j)
    # a forced itinerary is followed exactly
    forced = blender_intersect(g, q4_nb, bc.blocks, s, 3, itinerary=[2, 2, 2])
    assert forced.itinerary == [0, 2, 2, 2]


def test_witness_tampering_is_detected(model_repelling, q4_nb):
    g, bc = model_repelling
    wit = blender_intersect(g, q4_nb, bc.blocks, VerticalGraphSample.constant(q4_nb, 1, 0j), 10)
    wit.orbit[5, 0] += 1e-4
    assert not wit.verify(g, bc.blocks)


def test_no_admissible_block(model_repelling, q4_nb):
    g, bc = model_repelling
    with pytest.raises(NoAdmissibleBlock) as e:
        blender_intersect(g, q4_nb, bc.blocks, VerticalGraphSample.constant(q4_nb, 0, 5.0), 5)
    assert e.value.step == 0
    # a graph that starts inside but whose images must leave: push it towards the edge
    edge = VerticalGraphSample.constant(q4_nb, 0, 0.999)
    with pytest.raises(NoAdmissibleBlock):
        blender_intersect(g, q4_nb, bc.blocks, edge, 60, itinerary=[0] * 60)


def test_postcritical_curve_check_on_model(model_repelling, q4_nb):
    g, bc = model_repelling
    cert = postcritical_curve_check(g, 0j, q4_nb, bc.blocks, n_steps=1, witness_steps=8)
    assert cert.passed
    assert cert.params["slope_bound"] < 1e-12
    assert cert.params["witness"]["min_margin"] >= 0


def test_neighborhoods_need_orbits(q4):
    with pytest.raises(PreconditionError):
        build_vertical_neighborhoods(q4, [make_orbit(q4, 1.0, 1)], 0)
