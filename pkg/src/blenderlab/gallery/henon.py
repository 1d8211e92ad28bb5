"""Perturbed compositions of Henon maps as endomorphisms of P^2.

h+(z, w) = (w + a z^d, (c + eps) z + p+(w)),  h-(z, w) = (w + a z^d, z / c + p-(w)),
f = h- o h+. With a = 0 both factors are Henon maps, indeterminate at [1:0:0];
a != 0 removes the indeterminacy and eps > 0 makes f volume increasing.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from ..certificate import DEFAULT_MARGIN_FLOOR, Certificate
from ..cpoly import Polynomial
from ..errors import BallsOverlap, PreconditionError
from ..planar import Disc, ProductBlock
from .projective import HomogeneousMap, ProjectiveMap, TrappingRegion, normalize, sphere_samples


def henon_factor(p: Polynomial, c: complex, a: complex, name: str = "") -> HomogeneousMap:
    """[w t^(d-1) + a z^d : c z t^(d-1) + P(w, t) : t^d] with P the homogenized p."""
    d = p.degree
    if d < 2:
        raise PreconditionError("Henon factor needs deg p >= 2")
    first = [(1.0, (0, 1, d - 1))]
    if a != 0:
        first.append((complex(a), (d, 0, 0)))
    second = [(complex(c), (1, 0, d - 1))]
    for k, pk in enumerate(np.asarray(p.coeffs)):
        if pk != 0:
            second.append((complex(pk), (0, k, d - k)))
    third = [(1.0, (0, 0, d))]
    return HomogeneousMap((tuple(first), tuple(second), tuple(third)), name)


def escape_radius(p_plus: Polynomial, p_minus: Polynomial, c: float, epsilon: float = 0.0) -> float:
    """max(1, (1 + 2 c_max + sum_{k<d} |p_k|) / |p_d|) over both polynomials."""
    cmax = max(abs(c + epsilon), abs(1 / c))
    out = 1.0
    for p in (p_plus, p_minus):
        co = np.asarray(p.coeffs)
        out = max(out, (1 + 2 * cmax + float(np.abs(co[:-1]).sum())) / abs(co[-1]))
    return out


def henon_build(p_plus: Polynomial, p_minus: Polynomial, c: float, epsilon: float,
                a_eps: complex) -> ProjectiveMap:
    if not 0 < c < 1:
        raise PreconditionError("need 0 < c < 1")
    if p_plus.degree != p_minus.degree or p_plus.degree < 2:
        raise PreconditionError("p+ and p- need a common degree d >= 2")
    hp = henon_factor(p_plus, c + epsilon, a_eps, "h+")
    hm = henon_factor(p_minus, 1 / c, a_eps, "h-")
    f = ProjectiveMap(((hm, 1), (hp, 1)), "h- o h+")
    f.check_endomorphism()
    return f


@dataclass(frozen=True)
class HenonParams:
    p_plus: tuple = (0.0, 0.0, 1.0)
    p_minus: tuple = (0.0, 0.0, 1.0)
    c: float = 0.5
    epsilon: float = 0.05
    a_eps: float = 1e-4
    R: float = 5.0
    V_radius: float = 2.0
    max_period: int = 2
    grid: int = 32

    def build(self) -> ProjectiveMap:
        return henon_build(Polynomial(np.array(self.p_plus, dtype=complex)),
                           Polynomial(np.array(self.p_minus, dtype=complex)), self.c, self.epsilon, self.a_eps)

    @property
    def V(self) -> tuple:
        return (Disc(0j, self.V_radius), Disc(0j, self.V_radius))

    def to_json(self) -> dict:
        d = asdict(self)
        d["p_plus"], d["p_minus"] = list(self.p_plus), list(self.p_minus)
        return d

    @classmethod
    def shipped(cls) -> "HenonParams":
        d = json.loads(resources.files("blenderlab").joinpath("data/henon.json").read_text())
        d["p_plus"], d["p_minus"] = tuple(d["p_plus"]), tuple(d["p_minus"])
        return cls(**d)


# --------------------------------------------------------------- trapping


def v_plus_margin(P, R: float) -> np.ndarray:
    """Margin of {|w| > max(|z|, R |t|)}, scale invariant."""
    P = normalize(P)
    return np.abs(P[1]) - np.maximum(np.abs(P[0]), R * np.abs(P[2]))


def v_plus_samples(R: float, n: int = 24) -> np.ndarray:
    """Homogeneous samples of closure(V+): w = 1, |z| <= 1, |t| <= 1/R (t = 0 is the line at infinity)."""
    th = np.exp(2j * np.pi * np.arange(n) / n)
    rad = np.linspace(0, 1, max(3, n // 3))
    disc = np.concatenate([[0j], (rad[1:, None] * th[None, :]).ravel()])
    Z, T = np.meshgrid(disc, disc / R, indexing="ij")
    return np.array([Z.ravel(), np.ones(Z.size), T.ravel()])


def trapping_certify(f, U: TrappingRegion, n_boundary: int = 64, floor: float = DEFAULT_MARGIN_FLOOR,
                     name: str = "trapping") -> Certificate:
    """f(boundary samples of U) inside U with margin."""
    B = U.boundary_samples(n_boundary)
    m = U.margin(f(B))
    return Certificate.from_margins(name, m, np.stack([B[0], B[1], B[2]], -1), floor, U.to_json())


def henon_trapping_certify(f: ProjectiveMap, R: float, n_boundary: int = 64,
                           floor: float = DEFAULT_MARGIN_FLOOR) -> Certificate:
    """U = P^2 minus closure(W-) is trapping for f, and each factor maps V+ into V+."""
    U = TrappingRegion("complement_w", {"R": float(R)})
    subs = [trapping_certify(f, U, n_boundary, floor)]
    S = v_plus_samples(R)
    for h, _ in f.factors:
        m = v_plus_margin(h(S), R)
        subs.append(Certificate.from_margins(f"v_plus_{h.name}", m, np.stack([S[0], S[1], S[2]], -1),
                                             floor, {"R": R}))
    return Certificate.combine("henon_trapping", subs, {"R": R, "degree": f.degree})


# ----------------------------------------------------------------- cycles


@dataclass
class HenonCycle:
    points: np.ndarray          # shape (n, 2)
    period: int
    eigenvalues: np.ndarray
    classification: str
    jacobian: np.ndarray = field(default=None, repr=False)

    @property
    def moduli(self) -> np.ndarray:
        return np.sort(np.abs(self.eigenvalues))

    def residual(self, f) -> float:
        z, w = self.points[0]
        for _ in range(self.period):
            z, w = f.affine(z, w)
        return float(max(abs(z - self.points[0, 0]), abs(w - self.points[0, 1])))

    def to_json(self) -> dict:
        return {"points": [[[p.real, p.imag] for p in row] for row in self.points],
                "period": self.period,
                "eigenvalues": [[e.real, e.imag] for e in self.eigenvalues],
                "moduli": self.moduli.tolist(), "classification": self.classification}


def _iterate_jac(f, z, w, n):
    J = None
    for _ in range(n):
        z, w, Jk = f.affine_jacobian(z, w)
        J = Jk if J is None else np.einsum("ij...,jk...->ik...", Jk, J)
    return z, w, J


def _bidisc(V) -> tuple:
    if isinstance(V, ProductBlock):
        return V.horizontal, V.vertical
    if isinstance(V, (tuple, list)) and len(V) == 2:
        return V[0], V[1]
    raise PreconditionError("V must be a ProductBlock or a pair of regions")


def _region_grid(D, n: int) -> np.ndarray:
    if isinstance(D, Disc):
        xs = np.linspace(-1, 1, n)
        g = D.center + D.radius * (xs[None, :] + 1j * xs[:, None]).ravel()
        return g[np.asarray(D.margin(g)) >= 0]
    return D.sample(n)


def henon_repelling_cycles(f, V, max_period: int = 2, grid: int = 32, dedup: float = 1e-6,
                           iters: int = 60, tol: float = 1e-8) -> list:
    """Multistart Newton on f^n - id over a grid x grid sample of each coordinate of V."""
    if not 1 <= max_period <= 4:
        raise PreconditionError("max_period must be in 1..4")
    Dz, Dw = _bidisc(V)
    gz, gw = _region_grid(Dz, grid), _region_grid(Dw, grid)
    Z0, W0 = np.meshgrid(gz, gw, indexing="ij")
    Z0, W0 = Z0.ravel(), W0.ravel()
    found = []
    for n in range(1, max_period + 1):
        z, w = Z0.copy(), W0.copy()
        with np.errstate(all="ignore"):
            for _ in range(iters):
                fz, fw, J = _iterate_jac(f, z, w, n)
                a, b = J[0, 0] - 1, J[0, 1]
                c, d = J[1, 0], J[1, 1] - 1
                det = a * d - b * c
                rz, rw = fz - z, fw - w
                dz = (d * rz - b * rw) / det
                dw = (-c * rz + a * rw) / det
                z, w = z - dz, w - dw
                alive = np.isfinite(z) & np.isfinite(w) & (np.abs(z) < 1e6) & (np.abs(w) < 1e6)
                z, w = z[alive], w[alive]
                if z.size == 0 or np.all(np.abs(dz[alive]) + np.abs(dw[alive]) < 1e-14):
                    break
            fz, fw, _ = _iterate_jac(f, z, w, n)
            ok = (np.abs(fz - z) < tol) & (np.abs(fw - w) < tol)
            ok &= (np.asarray(Dz.margin(z)) >= 0) & (np.asarray(Dw.margin(w)) >= 0)
        z, w = z[ok], w[ok]
        # cluster and keep one representative per root
        order = np.lexsort((w.imag, w.real, z.imag, z.real))
        reps = []
        for k in order:
            p = np.array([z[k], w[k]])
            if all(np.max(np.abs(p - q)) > dedup for q in reps):
                reps.append(p)
        for p in reps:
            pts = [p]
            for _ in range(n - 1):
                pts.append(np.array(f.affine(*pts[-1])))
            pts = np.array(pts)
            # least period must be n
            if any(np.max(np.abs(pts[k] - pts[0])) < 1e3 * tol for k in range(1, n)):
                continue
            if any(c.period == n and np.min(np.max(np.abs(c.points - pts[0]), axis=1)) < dedup for c in found):
                continue
            _, _, J = _iterate_jac(f, pts[0, 0], pts[0, 1], n)
            ev = np.linalg.eigvals(J)
            cls_ = "repelling" if np.all(np.abs(ev) > 1 + 1e-8) else (
                "attracting" if np.all(np.abs(ev) < 1 - 1e-8) else "saddle_or_neutral")
            found.append(HenonCycle(pts, n, ev, cls_, J))
    return found


def jacobian_determinant_scan(f, V, n: int = 16) -> tuple:
    """(min, max) of |det Df| over a grid in V."""
    Dz, Dw = _bidisc(V)
    Z, W = np.meshgrid(_region_grid(Dz, n), _region_grid(Dw, n), indexing="ij")
    _, _, J = f.affine_jacobian(Z.ravel(), W.ravel())
    det = np.abs(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    return float(det.min()), float(det.max())


# ------------------------------------------------------- nested trapping


BALL_BACKOFF = 0.8


def adapted_metric(J: np.ndarray) -> np.ndarray:
    """M = P^-1 for the unit eigenvector matrix P of J: in M-coordinates J is diagonal,
    so the M-ball is expanded by the smallest eigenvalue modulus."""
    _, P = np.linalg.eig(J)
    return np.linalg.inv(P)


def _iterate_affine(f, z, w, n):
    for _ in range(n):
        z, w = f.affine(z, w)
    return z, w


def ball_condition(f, x0, period: int, M: np.ndarray, r: float, n: int = 16) -> tuple:
    """closure(B) in f^period(B) for B = {|M (x - x0)| < r}: every boundary sample has a
    preimage inside B. Returns (normalized worst margin, boundary samples)."""
    S = sphere_samples(x0[0], x0[1], r, n, M)
    yz, yw = S[0], S[1]
    _, _, J = _iterate_jac(f, np.array([x0[0]]), np.array([x0[1]]), period)
    Ji = np.linalg.inv(J[:, :, 0])
    dz, dw = yz - x0[0], yw - x0[1]
    z = x0[0] + Ji[0, 0] * dz + Ji[0, 1] * dw
    w = x0[1] + Ji[1, 0] * dz + Ji[1, 1] * dw
    with np.errstate(all="ignore"):
        for _ in range(40):
            fz, fw, Jk = _iterate_jac(f, z, w, period)
            a, b, c, d = Jk[0, 0], Jk[0, 1], Jk[1, 0], Jk[1, 1]
            det = a * d - b * c
            rz, rw = fz - yz, fw - yw
            sz = (d * rz - b * rw) / det
            sw = (-c * rz + a * rw) / det
            z, w = z - sz, w - sw
            if np.all(np.abs(sz) + np.abs(sw) < 1e-15 * (1 + np.abs(z) + np.abs(w))):
                break
        fz, fw = _iterate_affine(f, z, w, period)
        ok = np.abs(fz - yz) + np.abs(fw - yw) < 1e-10 * (1 + np.abs(yz) + np.abs(yw))
        ez, ew = z - x0[0], w - x0[1]
        dist = np.sqrt(np.abs(M[0, 0] * ez + M[0, 1] * ew) ** 2 + np.abs(M[1, 0] * ez + M[1, 1] * ew) ** 2)
    m = np.where(ok & np.isfinite(dist), (r - dist) / r, -np.inf)
    return m, S


def sphere_escape(f, x0, M, r, S) -> np.ndarray:
    """|M (f(y) - x0)| - r over sphere samples y (positive: f pushes the sphere off the ball)."""
    fz, fw = f.affine(S[0], S[1])
    ez, ew = fz - x0[0], fw - x0[1]
    return np.sqrt(np.abs(M[0, 0] * ez + M[0, 1] * ew) ** 2 + np.abs(M[1, 0] * ez + M[1, 1] * ew) ** 2) - r


def _ball_radius(f, x0, period, M, cap, n, floor, bisect=40):
    """Largest radius (bisection below cap) at which the ball condition holds with margin floor."""
    def good(r):
        m, S = ball_condition(f, x0, period, M, r, n)
        if float(m.min()) < floor:
            return False
        # the sphere must also be pushed off the ball, or U minus the ball is not trapping
        return float(sphere_escape(f, x0, M, r, S).min()) / r >= floor
    if good(cap):
        return cap
    lo, hi = cap * 1e-6, cap
    if not good(lo):
        return None
    for _ in range(bisect):
        mid = np.sqrt(lo * hi)
        if good(mid):
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-3:
            break
    return lo


def nested_trapping(f, U: TrappingRegion, cycles, n_boundary: int = 48, n_sphere: int = 32,
                    floor: float = DEFAULT_MARGIN_FLOOR, radius_cap: float = 0.5,
                    return_regions: bool = False):
    """U_0 = U, U_{k+1} = U_k minus an adapted ball around the k-th cycle; each U_{k+1} certified trapping."""
    cycles = [c for c in cycles]
    if any(c.classification != "repelling" for c in cycles):
        raise PreconditionError("nested_trapping needs repelling cycles")
    pts = [c.points[0] for c in cycles]
    metrics = [adapted_metric(c.jacobian) for c in cycles]
    stretch = [float(np.linalg.norm(np.linalg.inv(M), 2)) for M in metrics]
    radii = []
    for k, (c, M) in enumerate(zip(cycles, metrics)):
        others = [np.linalg.norm(pts[k] - q) for j, q in enumerate(pts) if j != k]
        others += [np.linalg.norm(pts[k] - q) for q in c.points[1:]]
        D = min(others) if others else np.inf
        cap_e = min(D / 3, radius_cap)
        # stay inside U as well
        P = np.array([[pts[k][0]], [pts[k][1]], [1.0]])
        cap_e = min(cap_e, 0.5 * float(U.margin(P)[0]))
        r = _ball_radius(f, pts[k], c.period, M, cap_e / stretch[k], n_sphere, floor)
        # back off from the threshold so both ball margins are comfortably positive
        radii.append(None if r is None else BALL_BACKOFF * r)
    ext = [None if r is None else r * s for r, s in zip(radii, stretch)]
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if ext[a] is not None and ext[b] is not None and ext[a] + ext[b] >= np.linalg.norm(pts[a] - pts[b]):
                raise BallsOverlap(f"balls {a} and {b} overlap")
    regions = [U]
    subs = []
    for k, c in enumerate(cycles):
        if radii[k] is None:
            subs.append(Certificate.from_margins(f"ball_{k}", np.array([-np.inf]),
                                                 np.array([pts[k]]), floor, {"radius": None}))
            break
        mb, S = ball_condition(f, pts[k], c.period, metrics[k], radii[k], n_sphere)
        subs.append(Certificate.from_margins(f"ball_{k}", mb, np.stack([S[0], S[1]], -1), floor,
                                             {"center": pts[k], "radius": radii[k],
                                              "euclidean_extent": ext[k], "period": c.period,
                                              "moduli": c.moduli.tolist()}))
        nxt = regions[-1].minus_balls([tuple(pts[k])], [radii[k]], [metrics[k]])
        subs.append(trapping_certify(f, nxt, n_boundary, floor, name=f"trapping_U{k + 1}"))
        P = np.array([[pts[k][0]], [pts[k][1]], [1.0]])
        inside_prev = float(regions[-1].margin(P)[0])
        inside_next = float(nxt.margin(P)[0])
        # the removed cycle lies in U_k but not in U_{k+1}
        subs.append(Certificate.from_margins(f"strict_U{k + 1}", np.array([min(inside_prev, -inside_next)]),
                                             np.array([pts[k]]), floor,
                                             {"margin_in_previous": inside_prev, "margin_in_next": inside_next}))
        regions.append(nxt)
    cert = Certificate.combine("nested_trapping", subs, {"cycles": len(cycles), "levels": len(regions) - 1})
    return (cert, regions) if return_regions else cert


def henon_pipeline(params: HenonParams | None = None, floor: float = DEFAULT_MARGIN_FLOOR) -> dict:
    """Build, certify trapping, search cycles in V and nest balls around the repelling ones."""
    params = params or HenonParams.shipped()
    f = params.build()
    trap = henon_trapping_certify(f, params.R, floor=floor)
    cycles = henon_repelling_cycles(f, params.V, params.max_period, params.grid)
    rep = [c for c in cycles if c.classification == "repelling"]
    det = jacobian_determinant_scan(f, params.V)
    U = TrappingRegion("complement_w", {"R": float(params.R)})
    nested, regions = nested_trapping(f, U, rep, floor=floor, return_regions=True)
    summary = Certificate.combine("henon", [trap, nested], {
        "params": params.to_json(), "cycles_found": len(cycles), "repelling_cycles": len(rep),
        "jacobian_det_range": list(det),
        "cycles": [c.to_json() for c in cycles]})
    return {"map": f, "trapping": trap, "cycles": cycles, "repelling": rep, "nested": nested,
            "regions": regions, "certificate": summary}
