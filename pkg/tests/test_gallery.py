import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blenderlab.cpoly import Polynomial
from blenderlab.errors import IndeterminacyDetected, IndeterminacyHit, PreconditionError
from blenderlab.gallery.attractor import attractor_build, base_map_critical_check, psi, psi_inv
from blenderlab.gallery.double import DoubleParams, double_map, switch_factor
from blenderlab.gallery.henon import (HenonParams, henon_build, henon_repelling_cycles, trapping_certify,
                                      v_plus_margin)
from blenderlab.gallery.projective import (HomogeneousMap, ProjectiveMap, TrappingRegion, linear_map, normalize,
                                           sphere_samples)
from blenderlab.gallery.render import (View, band_width, ppm_bytes, read_ppm, render_invariant_set, to_rgb,
                                       write_ppm)
from blenderlab.planar import Disc

CUBE_ROOTS = np.exp(2j * np.pi * np.arange(3) / 3)


# ------------------------------------------------------ double blender


def test_switch_factor_is_exact_on_the_two_triples():
    assert np.max(np.abs(switch_factor(CUBE_ROOTS) - 1)) < 1e-14
    assert np.max(np.abs(switch_factor(-CUBE_ROOTS))) < 1e-14


def test_double_params_validation(cube_cc):
    p = DoubleParams.from_covering(cube_cc, 3)
    assert p.alpha1 - p.alpha2 == pytest.approx(cube_cc.alpha0)
    assert p.epsilon1 - p.epsilon2 == pytest.approx(cube_cc.epsilon0)
    assert 4 * p.epsilon2 == pytest.approx(cube_cc.epsilon0)
    for a1, a2 in [(0.2, 0.01), (0.01, 0.02), (0.05, 0.0)]:
        with pytest.raises(PreconditionError):
            DoubleParams(a1, 0.1, a2, 0.01, 1)
    with pytest.raises(PreconditionError):
        DoubleParams(0.05, 0.1, 0.01, 0.01, 0)


def test_double_map_local_forms(cube_cc):
    p = DoubleParams.from_covering(cube_cc, 1)
    g = double_map(p)
    z = 0.3 - 0.2j
    for r in CUBE_ROOTS:
        h = g.h(z, r)
        assert h == pytest.approx((1 + p.alpha1 - p.alpha2) * z + (p.epsilon1 - p.epsilon2) * r, abs=1e-14)
        assert g.h(z, -r) == pytest.approx((1 - p.alpha2) * z + p.epsilon2 * r, abs=1e-14)


def test_double_shipped_params_match_covering(cube_cc):
    s = DoubleParams.shipped()
    d = DoubleParams.from_covering(cube_cc, s.l)
    assert (s.alpha1, s.epsilon1, s.alpha2, s.epsilon2) == pytest.approx(
        (d.alpha1, d.epsilon1, d.alpha2, d.epsilon2))


# ----------------------------------------------------------- attractor


@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_psi_inverse(w):
    if abs(w + 1j) < 1e-3:
        return
    assert abs(psi_inv(psi(w)) - w) < 1e-8 * max(1, abs(w)) ** 2


def test_psi_moves_the_cube_roots_into_the_annulus():
    pre = np.abs(psi_inv(CUBE_ROOTS))
    assert np.all((pre > 0.2) & (pre < 5))
    assert psi(0) == pytest.approx(-1j) and psi(1) == pytest.approx(1)


@pytest.mark.parametrize("a,b", [(1, 1), (2, 3), (2, 6), (2, 160), (5, 9)])
def test_base_map_critical_orbits_land_on_one(a, b):
    c = base_map_critical_check(a, b)
    assert c.passed
    assert c.params["max_residual"] < 1e-9
    assert all(t is not None for t in c.params["landing_times"].values())


def test_base_map_check_rejects_zero_exponents():
    with pytest.raises(PreconditionError):
        base_map_critical_check(0, 3)


def test_attractor_eta_zero_is_indeterminate():
    with pytest.raises(IndeterminacyHit):
        attractor_build(eta=0)
    with pytest.raises(PreconditionError):
        attractor_build(lambda_tilde=0.9)
    with pytest.raises(PreconditionError):
        attractor_build(R=1.01)


def test_attractor_map_is_an_endomorphism(attractor_system):
    s = attractor_system
    assert s.f.degree == 4 ** (s.params.l * s.params.N + s.params.l_tilde)
    s.f.check_endomorphism()
    # the cone U_rho is mapped into itself on sampled points
    P = np.array([0.5 * np.exp(1j * np.arange(5)), np.exp(2j * np.arange(5)), np.ones(5)])
    assert np.all(s.U.margin(s.f(P)) > 0)


# --------------------------------------------------------- projective


def test_homogeneous_map_rejects_mixed_degrees():
    with pytest.raises(PreconditionError):
        HomogeneousMap((((1.0, (1, 0, 0)),), ((1.0, (0, 2, 0)),), ((1.0, (0, 0, 1)),)))


def test_linear_indeterminacy():
    assert linear_map(np.eye(3)).indeterminacy_points() == []
    sing = linear_map(np.diag([1.0, 1.0, 0.0]))
    pts = sing.indeterminacy_points()
    assert len(pts) == 1 and abs(pts[0].coords[2]) == pytest.approx(1)


def test_henon_with_zero_correction_is_indeterminate():
    p = Polynomial([0, 0, 1.0])
    with pytest.raises(IndeterminacyDetected):
        henon_build(p, p, 0.5, 0.05, 0.0)
    with pytest.raises(PreconditionError):
        henon_build(p, p, 1.5, 0.05, 1e-4)
    henon_build(p, p, 0.5, 0.05, 1e-4).check_endomorphism()


def test_henon_affine_formula():
    prm = HenonParams.shipped()
    f = prm.build()
    z, w = 0.3 + 0.1j, -0.2 + 0.4j
    a, c, e = prm.a_eps, prm.c, prm.epsilon
    z1, w1 = w + a * z ** 2, (c + e) * z + w ** 2
    z2, w2 = w1 + a * z1 ** 2, z1 / c + w1 ** 2
    assert f.affine(z, w) == pytest.approx((z2, w2))
    _, _, J = f.affine_jacobian(z, w)
    h = 1e-6
    fd = (np.array(f.affine(z + h, w)) - np.array(f.affine(z - h, w))) / (2 * h)
    assert J[:, 0] == pytest.approx(fd, rel=1e-6)


def test_linear_contraction_is_trapping():
    f = ProjectiveMap(((linear_map(np.diag([0.5, 1.0, 1.0])), 1),))
    U = TrappingRegion("cone", {"rho": 1.0})
    c = trapping_certify(f, U, 32)
    assert c.passed and c.worst_margin == pytest.approx(0.5)
    g = ProjectiveMap(((linear_map(np.diag([2.0, 1.0, 1.0])), 1),))
    assert not trapping_certify(g, U, 32).passed


def test_trapping_region_with_balls():
    U = TrappingRegion("cone", {"rho": 1.0}).minus_balls([(0j, 0j)], [0.1])
    P = np.array([[0.0, 0.5], [0.0, 0.0], [1.0, 1.0]], dtype=complex)
    m = U.margin(P)
    assert m[0] == pytest.approx(-1.0) and m[1] > 0
    S = sphere_samples(0j, 0j, 0.1, 8)
    assert np.allclose(np.abs(S[0]) ** 2 + np.abs(S[1]) ** 2, 0.01)
    assert U.to_json()["kind"] == "custom"


def test_cycle_search_on_diagonal_linear_map():
    f = ProjectiveMap(((linear_map(np.diag([2.0, 3.0, 1.0])), 1),))
    cyc = henon_repelling_cycles(f, (Disc(0j, 1.0), Disc(0j, 1.0)), max_period=2, grid=4)
    assert len(cyc) == 1
    c = cyc[0]
    assert c.period == 1 and c.classification == "repelling"
    assert np.allclose(c.points[0], 0, atol=1e-12)
    assert sorted(np.abs(c.eigenvalues)) == pytest.approx([2, 3])
    with pytest.raises(PreconditionError):
        henon_repelling_cycles(f, (Disc(0j, 1.0), Disc(0j, 1.0)), max_period=5)


def test_v_plus_margin_scale_invariant():
    P = np.array([[0.5], [1.0], [0.1]], dtype=complex)
    assert v_plus_margin(P, 5.0) == pytest.approx(v_plus_margin(3j * P, 5.0))


# -------------------------------------------------------------- render


def _escape_oracle(c, n):
    """Number of k in 1..n with |c^(2^k)| < 2, by plain iteration."""
    out = np.zeros(c.shape, dtype=np.int64)
    z = c.copy()
    alive = np.ones(c.shape, dtype=bool)
    for _ in range(n):
        z = np.where(alive, z * z, z)
        alive &= np.abs(z) < 2
        out += alive
    return out


def test_escape_time_matches_plain_iteration():
    v = View((-2.0, 2.0), (-2.0, 2.0))
    t = render_invariant_set(lambda s: s * s, Disc(0j, 2.0), 12, 40, "escape_time", v)
    c = v.centres(40).reshape(40, 40)
    expect = np.where(np.abs(c) < 2, _escape_oracle(c, 12), 0)
    assert np.array_equal(t, expect)
    assert np.array_equal(t, t[::-1, :]) and np.array_equal(t, t[:, ::-1])


def test_forward_render_of_rotation_hits_the_circle():
    v = View((-1.5, 1.5), (-1.5, 1.5))
    rot = np.exp(2j * np.pi * 0.1234)
    h = render_invariant_set(lambda s: rot * s / np.abs(s), None, 10, 64, view=v)
    lit = v.centres(64).reshape(64, 64)[h > 0]
    assert lit.size > 0
    assert np.all(np.abs(np.abs(lit) - 1) < 3 * 3.0 / 64)


def test_render_is_deterministic():
    def f(s):
        with np.errstate(all="ignore"):
            return s * s + 0.25j
    a = render_invariant_set(f, Disc(0j, 2.0), 20, 48)
    b = render_invariant_set(f, Disc(0j, 2.0), 20, 48)
    assert np.array_equal(a, b)
    assert ppm_bytes(to_rgb(a)) == ppm_bytes(to_rgb(b))


@pytest.mark.parametrize("res", [0, -3, 5000, 2.5])
def test_render_resolution_bounds(res):
    with pytest.raises(PreconditionError):
        render_invariant_set(lambda s: s, None, 1, res)


def test_render_mode_and_iteration_errors():
    with pytest.raises(PreconditionError):
        render_invariant_set(lambda s: s, None, 1, 8, mode="backwards")
    with pytest.raises(PreconditionError):
        render_invariant_set(lambda s: s, None, -1, 8)
    with pytest.raises(PreconditionError):
        render_invariant_set(lambda s: s, None, 1, 8, mode="escape_time")


def test_ppm_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    rgb = rng.integers(0, 256, size=(7, 11, 3), dtype=np.uint8)
    rgb[0, 0] = (10, 32, 9)          # whitespace-valued bytes right after the header
    path = write_ppm(tmp_path / "x.ppm", rgb)
    assert np.array_equal(read_ppm(path), rgb)
    assert path.read_bytes().startswith(b"P6\n11 7\n255\n")
    (tmp_path / "bad.ppm").write_bytes(b"P3\n1 1\n255\n0 0 0")
    with pytest.raises(PreconditionError):
        read_ppm(tmp_path / "bad.ppm")
    with pytest.raises(PreconditionError):
        ppm_bytes(np.zeros((3, 3)))


def test_to_rgb_keeps_hits_visible():
    c = np.array([[0, 1], [10 ** 6, 5]])
    g = to_rgb(c)
    assert g.shape == (2, 2, 3) and g[0, 0, 0] == 0
    assert np.all(g[c > 0][:, 0] > 0) and g[1, 0, 0] == 255


def test_band_width_examples():
    c = np.zeros((9, 5), dtype=int)
    assert band_width(c) == 0
    c[3:6] = 1
    assert band_width(c) == 3
    c[4, 2] = 0
    assert band_width(c) == 0
    c[4, 2] = 1
    c[6, :4] = 1                     # a partially lit row does not count
    assert band_width(c) == 3
    assert band_width(c, row=0) == 0
    even = np.zeros((8, 4), dtype=int)
    even[3] = 1                      # the row just above the middle line
    assert band_width(even) == 1
