"""An endomorphism of P^2 with an attractor of non-empty interior.

f = F o Psi o G^N where
  G(z, w) = (lam z + alpha w + eta z^D, w^D),        D = 4^l
  Psi[z:w:t] = [z : i w + t : i t + w]               (acts by psi on X = {z = 0})
  F(z, w) = (lam_t z + eta z^E, w^E),                E = 4^l_tilde
and the trapping region is U_rho = {|z| < rho max(|w|, |t|)}.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from ..blender import VerticalNeighborhoods, build_vertical_neighborhoods, inverse_branch
from ..certificate import DEFAULT_MARGIN_FLOOR, Certificate
from ..cpoly import Polynomial, make_orbit
from ..errors import IndeterminacyHit, PreconditionError
from ..planar import CoveringConstants, Disc, Polygon, triangle_cover
from .projective import HomogeneousMap, ProjectiveMap, TrappingRegion, linear_map

Q4 = Polynomial.monomial(4)
CUBE_ROOTS = np.exp(2j * np.pi * np.arange(3) / 3)


def psi(w):
    w = np.asarray(w, dtype=complex)
    return (1j * w + 1) / (w + 1j)


def psi_inv(v):
    v = np.asarray(v, dtype=complex)
    return (1 - 1j * v) / (v - 1j)


# ---- P^1 arithmetic on [w : t] pairs, used to follow critical orbits through infinity

def _p1_norm(w, t):
    m = max(abs(w), abs(t))
    return w / m, t / m


def _p1_q(w, t, n):
    for _ in range(n):
        w, t = _p1_norm(w ** 4, t ** 4)
    return w, t


def _p1_psi(w, t):
    return _p1_norm(1j * w + t, w + 1j * t)


def _chordal(a, b):
    (w1, t1), (w2, t2) = a, b
    num = abs(w1 * t2 - w2 * t1)
    return num / (math.hypot(abs(w1), abs(t1)) * math.hypot(abs(w2), abs(t2)))


def base_map_critical_check(a: int, b: int, enumerate_cap: int = 6,
                            floor: float = DEFAULT_MARGIN_FLOOR) -> Certificate:
    """Every critical orbit of M = q^a o psi o q^b (q = w^4) lands on the fixed point 1.

    Critical points are 0, infinity and the q^b-preimages of psi^{-1}{0, inf} = {i, -i}.
    All preimages of one value share the same forward orbit after one step, so for
    b > enumerate_cap the preimage classes are followed by their common value.
    """
    if a < 1 or b < 1:
        raise PreconditionError("a, b >= 1")
    max_steps = a + b + 4
    one = (1 + 0j, 1 + 0j)

    def M(p):
        return _p1_q(*_p1_psi(*_p1_q(*p, b)), a)

    def land(p):
        for k in range(max_steps + 1):
            if _chordal(p, one) < 1e-12:
                return k, _chordal(p, one)
            p = M(p)
        return None, _chordal(p, one)

    classes = {"0": (0j, 1 + 0j), "inf": (1 + 0j, 0j)}
    crit_values_after_qb = {"i": (1j, 1 + 0j), "-i": (-1j, 1 + 0j)}
    times, residuals, labels = [], [], []
    for name, p in classes.items():
        k, r = land(p)
        times.append(k), residuals.append(r), labels.append(name)
    if b <= enumerate_cap:
        n = 4 ** b
        for name, val in crit_values_after_qb.items():
            base = np.exp(1j * np.angle(val[0]) / n)
            pts = base * np.exp(2j * np.pi * np.arange(n) / n)
            res = np.abs(Q4.iterate_eval(pts, b) - val[0]).max()
            # orbit: M(c) = q^a(psi(q^b(c))); follow the exact value class, then check numerically
            after = _p1_q(*_p1_psi(*val), a)
            k, r = land(after)
            times.append(None if k is None else k + 1)
            residuals.append(max(r, float(res)))
            labels.append(f"q^-{b}({name}) [{n} points]")
    else:
        for name, val in crit_values_after_qb.items():
            after = _p1_q(*_p1_psi(*val), a)
            k, r = land(after)
            times.append(None if k is None else k + 1)
            residuals.append(r)
            labels.append(f"q^-{b}({name}) [class]")
    ok = all(t is not None for t in times) and max(residuals) < 1e-9
    margin = 1e-9 - max(residuals) if ok else -1.0
    return Certificate("base_map_critical_check", bool(ok), float(margin) if ok else -1.0, [],
                       len(times), {"a": a, "b": b, "landing_times": dict(zip(labels, times)),
                                    "max_residual": max(residuals), "margin_floor": 0.0})


@dataclass
class AttractorParams:
    R: float = 5.0
    l: int = 4
    l_tilde: int = 2
    lambda_tilde: float = 1.25
    alpha: float = 1e-4
    eta: float = 1e-6
    N: int = 40
    rho: float = 1.0
    l1: int = 2
    disc_radius: float = 0.3

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "AttractorParams":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    @classmethod
    def shipped(cls) -> "AttractorParams":
        text = resources.files("blenderlab").joinpath("data/attractor.json").read_text()
        return cls.from_json(json.loads(text))


@dataclass(eq=False)
class AttractorSystem:
    params: AttractorParams
    cc: CoveringConstants
    lam: float
    nb: VerticalNeighborhoods
    G: HomogeneousMap
    Psi: HomogeneousMap
    F: HomogeneousMap
    f: ProjectiveMap
    U: TrappingRegion

    @property
    def a(self) -> float:
        """Radius alpha / epsilon0 of the horizontal disc of the blocks."""
        return abs(self.params.alpha) / self.cc.epsilon0

    @property
    def D(self) -> int:
        return 4 ** self.params.l

    @property
    def E(self) -> int:
        return 4 ** self.params.l_tilde


def g_map(lam: float, alpha: complex, eta: complex, D: int) -> HomogeneousMap:
    return HomogeneousMap((((lam, (1, 0, D - 1)), (alpha, (0, 1, D - 1)), (eta, (D, 0, 0))),
                           ((1.0, (0, D, 0)),), ((1.0, (0, 0, D)),)), "G")


def f_map(lam_t: float, eta: complex, E: int) -> HomogeneousMap:
    return HomogeneousMap((((lam_t, (1, 0, E - 1)), (eta, (E, 0, 0))),
                           ((1.0, (0, E, 0)),), ((1.0, (0, 0, E)),)), "F")


PSI = linear_map(np.array([[1, 0, 0], [0, 1j, 1], [0, 1, 1j]]), "Psi")


def attractor_build(R: float = 5.0, l: int = 4, l_tilde: int = 2, lambda_tilde: float = 1.25,
                    alpha: complex = 1e-4, eta: complex = 1e-6, N: int = 40, rho: float = 1.0,
                    l1: int = 2, disc_radius: float = 0.3, cc: CoveringConstants | None = None
                    ) -> AttractorSystem:
    """Assemble f = F o Psi o G^N and U_rho; inclusions are checked by attractor_certify."""
    if eta == 0:
        raise IndeterminacyHit("eta = 0: G is not an endomorphism of P^2")
    if alpha == 0 or lambda_tilde <= 1 or N < 1 or rho <= 0:
        raise PreconditionError("need alpha != 0, lambda_tilde > 1, N >= 1, rho > 0")
    pre = np.abs(psi_inv(CUBE_ROOTS))
    if not np.all((pre > 1 / R) & (pre < R)):
        raise PreconditionError(f"psi^-1(r_i) has moduli {pre}; not inside the annulus for R = {R}")
    if cc is None:
        cc = triangle_cover(*CUBE_ROOTS)
    lam = 1.0 - cc.alpha0
    orbs = [make_orbit(Q4, r, 1) for r in CUBE_ROOTS]
    T = tuple(Disc(complex(r), disc_radius) for r in CUBE_ROOTS)
    nb = build_vertical_neighborhoods(Q4, orbs, l, base_regions=T, level_offset=l1)
    G = g_map(lam, alpha, eta, 4 ** l)
    F = f_map(lambda_tilde, eta, 4 ** l_tilde)
    f = ProjectiveMap(((F, 1), (PSI, 1), (G, N)), "F o Psi o G^N")
    f.check_endomorphism()
    U = TrappingRegion("cone", {"rho": rho})
    params = AttractorParams(R, l, l_tilde, lambda_tilde, alpha, eta, N, rho, l1, disc_radius)
    return AttractorSystem(params, cc, lam, nb, G, PSI, F, f, U)


# ------------------------------------------------------------ certification


def _annulus_margin(w, R):
    r = np.abs(w)
    return np.minimum(r - 1 / R, R - r)


def _annulus_samples(R: float, n_r: int = 12, n_t: int = 96) -> np.ndarray:
    rr = np.geomspace(1 / R, R, n_r)
    th = 2 * np.pi * np.arange(n_t) / n_t
    return (rr[:, None] * np.exp(1j * th[None, :])).ravel()


def _unit_disc(n: int) -> np.ndarray:
    xs = np.linspace(-1, 1, n)
    g = (xs[None, :] + 1j * xs[:, None]).ravel()
    g = g[np.abs(g) <= 1]
    return np.concatenate([g, np.exp(2j * np.pi * np.arange(4 * n) / (4 * n))])


def _solve_poly_z(lin: float, eta: complex, deg: int, target: np.ndarray) -> np.ndarray:
    """Solve lin z + eta z^deg = target by Newton from target / lin."""
    z = target / lin
    for _ in range(30):
        zd1 = z ** (deg - 1)
        step = (lin * z + eta * zd1 * z - target) / (lin + deg * eta * zd1)
        z = z - step
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1e-300, np.abs(z))):
            break
    return z


def g_preimage(sys: AttractorSystem, z0: np.ndarray, w0: np.ndarray):
    """Best preimage of (z0, w0) under G with w in some U_i and |z| < a.

    Returns (z1, w1, normalized margin) where the margin is the smaller of
    (a - |z1|)/a and the depth of w1 in U_i scaled by |(q^l)'(w1)|.
    """
    a = sys.a
    p = sys.params
    z0, w0 = np.broadcast_arrays(np.asarray(z0, dtype=complex), np.asarray(w0, dtype=complex))
    best = np.full(z0.shape, -np.inf)
    bz = np.zeros(z0.shape, dtype=complex)
    bw = np.zeros(z0.shape, dtype=complex)
    uw, inv = np.unique(w0.ravel(), return_inverse=True)
    # which U_j each target lies near decides the cheap anchored continuation
    for i in range(3):
        w1u = np.empty(uw.shape, dtype=complex)
        near_j = np.argmin(np.abs(uw[:, None] - CUBE_ROOTS[None, :]), axis=1)
        for j in range(3):
            sel = near_j == j
            if sel.any():
                w1u[sel] = inverse_branch(sys.nb, i, j, uw[sel])
        _, du = sys.nb.Q(w1u, derivative=True)
        mwu = np.asarray(Polygon(sys.nb.boundary(i)).margin(w1u)) * np.abs(du)
        w1 = w1u[inv].reshape(z0.shape)
        mw = mwu[inv].reshape(z0.shape)
        z1 = _solve_poly_z(sys.lam, p.eta, sys.D, z0 - p.alpha * w1)
        mz = (a - np.abs(z1)) / a
        m = np.minimum(mz, mw)
        upd = m > best
        best = np.where(upd, m, best)
        bz = np.where(upd, z1, bz)
        bw = np.where(upd, w1, bw)
    return bz, bw, best


def fpsi_preimage(sys: AttractorSystem, z0: np.ndarray, w0: np.ndarray, w_inf: np.ndarray | None = None):
    """Best preimage of (z0, w0) under F o Psi (affine) with |z| < a and w in the annulus.

    w_inf marks targets at w = infinity (on X only)."""
    p = sys.params
    E, a, R = sys.E, sys.a, p.R
    z0 = np.asarray(z0, dtype=complex)
    w0 = np.asarray(w0, dtype=complex)
    best = np.full(z0.shape, -np.inf)
    bz = np.zeros(z0.shape, dtype=complex)
    bw = np.zeros(z0.shape, dtype=complex)
    zeta = _solve_poly_z(p.lambda_tilde, p.eta, E, z0)
    mod = np.abs(w0) ** (1.0 / E)
    arg = np.angle(w0)
    for k in range(E):
        v = mod * np.exp(1j * (arg + 2 * np.pi * k) / E)
        w1 = psi_inv(v)
        if w_inf is not None:
            w1 = np.where(w_inf, -1j, w1)
        z1 = zeta * (w1 + 1j)
        m = np.minimum((a - np.abs(z1)) / a, _annulus_margin(w1, R) / R)
        upd = m > best
        best = np.where(upd, m, best)
        bz = np.where(upd, z1, bz)
        bw = np.where(upd, w1, bw)
    return bz, bw, best


def _x_targets(n: int = 48):
    """Samples of X = {z = 0} as w-values on P^1, including 0 and infinity."""
    d = _unit_disc(n)
    w = np.concatenate([d, 1 / d[np.abs(d) > 0.05], [0j]])
    w_inf = np.zeros(w.size + 1, dtype=bool)
    w_inf[-1] = True
    return np.concatenate([w, [0j]]), w_inf


def _z_alpha_targets(sys: AttractorSystem, n_z: int = 16, n_w: int = 64):
    zs = sys.a * _unit_disc(n_z)
    ws = np.concatenate([sys.nb.boundary(i)[:: max(1, sys.nb.boundary(i).size // n_w)] for i in range(3)]
                        + [CUBE_ROOTS])
    Z, W = np.meshgrid(zs, ws, indexing="ij")
    return Z.ravel(), W.ravel()


def attractor_certify(sys: AttractorSystem, floor: float = DEFAULT_MARGIN_FLOOR,
                      n_boundary: int = 64) -> Certificate:
    p = sys.params
    a = sys.a
    subs = []
    # (i) closure(aD x annulus) inside G(aD x U): preimage solving
    zt = a * _unit_disc(24)
    wt = _annulus_samples(p.R, 10, 64)
    Z, W = np.meshgrid(zt, wt, indexing="ij")
    _, _, m1 = g_preimage(sys, Z.ravel(), W.ravel())
    pts = np.stack([Z.ravel(), W.ravel()], axis=-1)
    subs.append(Certificate.from_margins("g_covers_annulus", m1, pts, floor,
                                         {"a": a, "lambda": sys.lam, "epsilon0": sys.cc.epsilon0}))
    # (ii) X and closure(aD x U) inside F o Psi(aD x annulus)
    xw, xinf = _x_targets()
    _, _, mx = fpsi_preimage(sys, np.zeros(xw.shape, dtype=complex), xw, xinf)
    zz, ww = _z_alpha_targets(sys)
    _, _, mz = fpsi_preimage(sys, zz, ww)
    subs.append(Certificate.combine("fpsi_covers", [
        Certificate.from_margins("fpsi_covers_x", mx, np.stack([0 * xw, xw], -1), floor, {}),
        Certificate.from_margins("fpsi_covers_z_alpha", mz, np.stack([zz, ww], -1), floor, {})]))
    # (iii) trapping on the boundary of U_rho
    B = sys.U.boundary_samples(n_boundary)
    img = sys.f(B)
    mt = sys.U.margin(img)
    subs.append(Certificate.from_margins("trapping", mt, np.stack([B[0], B[1]], -1),
                                         floor, {"rho": p.rho}))
    # (iv) X u Z_alpha inside f(Z_alpha): F o Psi preimage then N G-preimages
    # |z| / max(|w|, 1) <= a on Z_alpha
    contain = p.rho - a
    chain = []
    for label, (z0, w0, winf) in {"x": (np.zeros(xw.shape, dtype=complex), xw, xinf),
                                  "z_alpha": (zz, ww, None)}.items():
        z1, w1, m = fpsi_preimage(sys, z0, w0, winf)
        worst = m.copy()
        for _ in range(p.N):
            z1, w1, mg = g_preimage(sys, z1, w1)
            worst = np.minimum(worst, mg)
        chain.append(Certificate.from_margins(f"chain_{label}", worst, np.stack([z0, w0], -1), floor,
                                              {"N": p.N}))
    chain.append(Certificate.from_margins("z_alpha_in_u_rho", np.array([contain]), np.array([[0j, 1 + 0j]]),
                                          floor, {"rho": p.rho, "a": a}))
    subs.append(Certificate.combine("x_and_z_alpha_in_image", chain))
    subs.append(base_map_critical_check(p.l_tilde, p.l * p.N))
    return Certificate.combine("attractor", subs, {"params": p.to_json(), "degree": str(sys.f.degree),
                                                   "degree_log4": p.l * p.N + p.l_tilde})
