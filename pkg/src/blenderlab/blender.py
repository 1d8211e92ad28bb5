"""Skew products, vertical neighborhoods, graph transform and blender certificates.

A skew product is g(z, w) = (h(z, w), Q(w)) where Q = q^n is an iterate of a
one-variable polynomial. Vertical neighborhoods V_i are pullbacks of a base
region T_i by the branch of Q^{-1} fixing a repelling periodic point; every
branch is evaluated by Newton continuation along a path inside T_i.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .certificate import DEFAULT_MARGIN_FLOOR, Certificate, point_coords, worker_count
from .cpoly import BivariatePolynomial, PeriodicOrbit, Polynomial, postcritical_points, postcritical_test
from .errors import (BranchJump, ExpansionTooWeak, NoAdmissibleBlock, PostcriticalObstruction,
                     PreconditionError)
from .planar import (AnnularSector, CoveringConstants, Disc, Polygon, ProductBlock, Region, Scaled)

DELTA0_CAP = 0.1
GRAPH_NODES = 257
MIN_STEP = 1e-6
CRITICAL_GUARD = 1e-4


# ------------------------------------------------------------------ maps


class IteratedH:
    """First coordinate of the n-th iterate of a skew product, with exact derivatives."""

    def __init__(self, base: "SkewMap", n: int):
        if n < 1:
            raise PreconditionError("iterate count must be >= 1")
        self.base = base
        self.n = n

    def jac(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        z, w = np.broadcast_arrays(z, w)
        zz = z.astype(complex)
        ww = w.astype(complex)
        dzz = np.ones(zz.shape, dtype=complex)
        dzw = np.zeros(zz.shape, dtype=complex)
        dww = np.ones(zz.shape, dtype=complex)
        for _ in range(self.n):
            h, hz, hw, Qw, dQ = self.base.jacobian(zz, ww)
            dzw = hz * dzw + hw * dww
            dzz = hz * dzz
            dww = dQ * dww
            zz, ww = h, Qw
        return zz, dzz, dzw

    def __call__(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        z, w = np.broadcast_arrays(z, w)
        zz, ww = z.astype(complex), w.astype(complex)
        for _ in range(self.n):
            zz, ww = self.base(zz, ww)
        return zz


class SumH:
    """h + P for a bivariate perturbation P."""

    def __init__(self, h, P: BivariatePolynomial):
        self.h = h
        self.P = P
        self.Pz = P.dz()
        self.Pw = P.dw()

    def jac(self, z, w):
        v, vz, vw = _h_jac(self.h, z, w)
        return v + self.P(z, w), vz + self.Pz(z, w), vw + self.Pw(z, w)

    def __call__(self, z, w):
        return _h_eval(self.h, z, w) + self.P(z, w)


class ConjugatedH:
    """h~(z, w) = h(s z, w) / s, the first coordinate after conjugating by (z, w) -> (s z, w)."""

    def __init__(self, h, s: complex):
        self.h = h
        self.s = complex(s)

    def jac(self, z, w):
        v, vz, vw = _h_jac(self.h, self.s * np.asarray(z, dtype=complex), w)
        return v / self.s, vz, vw / self.s

    def __call__(self, z, w):
        return _h_eval(self.h, self.s * np.asarray(z, dtype=complex), w) / self.s


class CallableH:
    """Wrap plain callables h, dh/dz, dh/dw."""

    def __init__(self, f: Callable, fz: Callable, fw: Callable):
        self.f, self.fz, self.fw = f, fz, fw

    def jac(self, z, w):
        return self.f(z, w), self.fz(z, w), self.fw(z, w)

    def __call__(self, z, w):
        return self.f(z, w)


_DERIV_CACHE: dict = {}


def _h_jac(h, z, w):
    if isinstance(h, BivariatePolynomial):
        key = id(h)
        if key not in _DERIV_CACHE or _DERIV_CACHE[key][0] is not h:
            _DERIV_CACHE[key] = (h, h.dz(), h.dw())
        _, hz, hw = _DERIV_CACHE[key]
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        shape = np.broadcast_shapes(z.shape, w.shape)
        return (np.broadcast_to(h(z, w), shape), np.broadcast_to(hz(z, w), shape),
                np.broadcast_to(hw(z, w), shape))
    return h.jac(z, w)


def _h_eval(h, z, w):
    return h(z, w)


@dataclass(frozen=True, eq=False)
class SkewMap:
    """g(z, w) = (h(z, w), q^vertical_power(w))."""

    h: object
    q: Polynomial
    vertical_power: int = 1
    description: str = ""

    def Q(self, w, derivative: bool = False):
        return self.q.iterate_eval(w, self.vertical_power, derivative)

    def __call__(self, z, w):
        return _h_eval(self.h, z, w), self.Q(w)

    def jacobian(self, z, w):
        """(h, dh/dz, dh/dw, Q(w), Q'(w))."""
        h, hz, hw = _h_jac(self.h, z, w)
        Qw, dQ = self.Q(w, derivative=True)
        return h, hz, hw, Qw, dQ

    def iterate(self, n: int) -> "SkewMap":
        return SkewMap(IteratedH(self, n), self.q, self.vertical_power * n,
                       f"({self.description})^{n}")

    def perturbed(self, P: BivariatePolynomial) -> "SkewMap":
        return SkewMap(SumH(self.h, P), self.q, self.vertical_power, f"{self.description} + P")

    def rescaled(self, s: complex) -> "SkewMap":
        """Conjugate by (z, w) -> (s z, w), so blocks s*D become D."""
        return SkewMap(ConjugatedH(self.h, s), self.q, self.vertical_power,
                       f"{self.description} rescaled by {s}")


def model_map(rho: complex, eps0: float, c: Sequence[complex], q: Polynomial, vertical_power: int,
              nb: "VerticalNeighborhoods") -> SkewMap:
    """h(z, w) = rho z + eps0 c_j for w nearest to r_j (locally constant in w, hence holomorphic on each V_j)."""
    pts = np.asarray(nb.base_points, dtype=complex)
    shifts = eps0 * np.asarray(c, dtype=complex)
    rho = complex(rho)

    def f(z, w):
        z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
        j = np.argmin(np.abs(w[..., None] - pts), axis=-1)
        return rho * z + shifts[j]

    def fz(z, w):
        z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
        return np.full(z.shape, rho)

    def fw(z, w):
        z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
        return np.zeros(z.shape, dtype=complex)

    return SkewMap(CallableH(f, fz, fw), q, vertical_power, "model map")


# --------------------------------------------------- vertical neighborhoods


def _path(T: Region, a: complex, b: np.ndarray, K: int) -> np.ndarray:
    if isinstance(T, AnnularSector):
        return T.path(a, b, K)
    s = np.linspace(0.0, 1.0, K + 1).reshape((-1,) + (1,) * np.ndim(b))
    return a + s * (np.asarray(b) - a)


def _newton_track(F, u, t_from, t_to, depth=0):
    """Follow the solution of F(u) = t from t_from to t_to; halve on failure."""
    u_new = u.copy()
    ok = np.zeros(u.shape, dtype=bool)
    Fu, dF = F(u)
    for _ in range(30):
        with np.errstate(all="ignore"):
            step = (Fu - t_to) / dF
        step[~np.isfinite(step)] = np.inf
        u_new = u_new - np.where(ok, 0, step)
        Fu, dF = F(u_new)
        res = np.abs(Fu - t_to)
        ok = res <= 1e-12 * np.maximum(1.0, np.abs(t_to))
        if ok.all():
            break
    # jump guard: the branch moves by about |dt| / |F'|
    _, dF0 = F(u)
    with np.errstate(all="ignore"):
        expected = np.abs(t_to - t_from) / np.abs(dF0)
    moved = np.abs(u_new - u)
    ok &= moved <= 4.0 * expected + 1e-14 * np.maximum(1.0, np.abs(u))
    if ok.all():
        return u_new
    if depth > 20 or np.max(np.abs(t_to - t_from)[~ok]) < MIN_STEP:
        raise BranchJump("continuation failed to converge (step below minimum)")
    bad = ~ok
    t_mid = 0.5 * (t_from + t_to)
    u_mid = _newton_track(F, u[bad], t_from[bad], t_mid[bad], depth + 1)
    u_new[bad] = _newton_track(F, u_mid, t_mid[bad], t_to[bad], depth + 1)
    return u_new


def continue_branch(q: Polynomial, n_iter: int, u0: complex, T: Region, targets,
                    K: int = 48, critical_values: np.ndarray | None = None) -> np.ndarray:
    """Evaluate the branch of (q^n_iter)^{-1} on T sending q^n_iter(u0) to u0."""
    targets = np.asarray(targets, dtype=complex)
    shape = targets.shape
    tg = targets.ravel()
    if n_iter == 0:
        return targets.copy()
    t0 = complex(q.iterate_eval(u0, n_iter))
    pts = _path(T, t0, tg, K)
    if critical_values is not None and critical_values.size:
        flat = pts.reshape(-1)
        dist = min(np.abs(flat[a:a + 65536, None] - critical_values[None, :]).min()
                   for a in range(0, flat.size, 65536))
        if dist < CRITICAL_GUARD:
            raise BranchJump("continuation path passes a critical value")

    def F(u):
        return q.iterate_eval(u, n_iter, derivative=True)

    u = np.full(tg.shape, u0, dtype=complex)
    for k in range(1, K + 1):
        u = _newton_track(F, u, pts[k - 1], pts[k])
    return u.reshape(shape)


def _auto_base_region(points: np.ndarray, pc: np.ndarray) -> AnnularSector:
    """Annular sector around the postcritical cluster containing all base points."""
    center = complex(pc.mean()) if pc.size else 0j
    if pc.size and np.abs(pc - center).max() > 1e-9:
        raise PostcriticalObstruction("postcritical set is not a single point; supply base regions")
    rel = points - center
    if np.any(np.abs(rel) < 1e-12):
        raise PostcriticalObstruction("a base point is postcritical")
    ang = np.sort(np.mod(np.angle(rel), 2 * np.pi))
    gaps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
    k = int(np.argmax(gaps))
    gap = gaps[k]
    pad = min(gap / 4, math.pi / 8)
    lo = ang[(k + 1) % ang.size]
    span = 2 * math.pi - gap
    direction = lo + span / 2
    half = span / 2 + pad
    rmin, rmax = np.abs(rel).min(), np.abs(rel).max()
    return AnnularSector(center, 0.6 * rmin, rmax / 0.6, float(direction), float(half))


@dataclass(eq=False)
class VerticalNeighborhoods:
    """Neighborhoods V_i of the base points with q^{l m1}(V_i) = q^{L0 m1}(T_i)."""

    q: Polynomial
    m1: int
    l: int
    base_points: tuple
    orbits: tuple
    base_regions: tuple
    level_offset: int
    regions: tuple
    boundaries: dict
    diameters: np.ndarray
    fit: tuple
    expansion_A: float
    chi: tuple
    covering_margin: float
    critical_values: np.ndarray
    K: int = 48
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_blocks(self) -> int:
        return len(self.base_points)

    def Q(self, w, derivative=False):
        return self.q.iterate_eval(w, self.l * self.m1, derivative)

    def branch(self, i: int, t, level: int | None = None) -> np.ndarray:
        """psi_i at the given level applied to t in T_i (level counts Q-steps)."""
        k = (self.l if level is None else level) - self.level_offset
        return continue_branch(self.q, k * self.m1, self.base_points[i], self.base_regions[i], t,
                               self.K, self.critical_values)

    def anchor(self, i: int, j: int) -> complex:
        key = ("anchor", i, j)
        if key not in self._cache:
            if self.level_offset:
                u = _offset_preimage(self, i, np.array([self.base_points[j]]))[0]
            else:
                u = complex(self.branch(i, np.array([self.base_points[j]]))[0])
            self._cache[key] = u
        return self._cache[key]

    def sample(self, i: int, n_r: int = 8, n_t: int = 24, n_b: int = 256) -> np.ndarray:
        """Interior and boundary samples of V_i (pullbacks of a grid in T_i)."""
        key = ("sample", i, n_r, n_t, n_b)
        if key not in self._cache:
            T = self.base_regions[i]
            if isinstance(T, AnnularSector):
                rr = np.geomspace(max(T.r_in, 1e-3 * T.r_out), T.r_out, n_r + 2)[1:-1]
                th = np.linspace(-T.half_angle, T.half_angle, n_t + 2)[1:-1]
                grid = (T.center + rr[:, None] * np.exp(1j * (th[None, :] + T.direction))).ravel()
            else:
                grid = T.sample(n_t)[: n_r * n_t]
            pts = np.concatenate([grid, T.boundary(n_b), [complex(self.q.iterate_eval(
                self.base_points[i], self.level_offset * self.m1))]])
            self._cache[key] = self.branch(i, pts)
        return self._cache[key]

    def boundary(self, i: int) -> np.ndarray:
        return self.boundaries[(i, self.l)]

    def subset(self, idx: Sequence[int]) -> "VerticalNeighborhoods":
        """A view restricted to some base points (re-indexed from 0)."""
        idx = list(idx)
        bnd = {(k, lev): v for (i, lev), v in self.boundaries.items() for k, j in enumerate(idx) if i == j}
        return VerticalNeighborhoods(self.q, self.m1, self.l, tuple(self.base_points[j] for j in idx),
                                     tuple(self.orbits[j] for j in idx),
                                     tuple(self.base_regions[j] for j in idx), self.level_offset,
                                     tuple(self.regions[j] for j in idx), bnd, self.diameters[idx],
                                     self.fit, self.expansion_A, tuple(self.chi[j] for j in idx),
                                     self.covering_margin, self.critical_values, self.K)

    def to_json(self) -> dict:
        return {
            "m1": self.m1, "l": self.l, "level_offset": self.level_offset,
            "base_points": [[z.real, z.imag] for z in self.base_points],
            "base_regions": [T.to_json() for T in self.base_regions],
            "diameters": self.diameters.tolist(), "fit": list(self.fit),
            "expansion_A": self.expansion_A, "chi": list(self.chi),
            "covering_margin": self.covering_margin,
        }


def _offset_preimage(nb: VerticalNeighborhoods, i: int, targets: np.ndarray) -> np.ndarray:
    """For level_offset > 0: a point of V_i mapped onto each target by q^{l m1}."""
    T = nb.base_regions[i]
    L0 = nb.level_offset * nb.m1
    key = ("seedgrid", i)
    if key not in nb._cache:
        seeds = T.sample(160)
        nb._cache[key] = (seeds, nb.q.iterate_eval(seeds, L0))
    seeds, imgs = nb._cache[key]
    t = np.atleast_1d(np.asarray(targets, dtype=complex)).ravel()
    # several sheets of q^L0 can land near a target; polish a few seeds and keep the deepest root in T
    k = min(6, seeds.size)
    cand = np.empty((t.size, k), dtype=complex)
    for a in range(0, t.size, 256):
        blk = t[a:a + 256]
        idx = np.argpartition(np.abs(imgs[None, :] - blk[:, None]), k - 1, axis=1)[:, :k]
        cand[a:a + 256] = seeds[idx]
    tt = np.broadcast_to(t[:, None], cand.shape)
    for _ in range(80):
        v, d = nb.q.iterate_eval(cand, L0, derivative=True)
        step = (v - tt) / d
        cand = cand - step
        if np.all(np.abs(step) < 1e-15 * np.maximum(1, np.abs(cand))):
            break
    res = np.abs(nb.q.iterate_eval(cand, L0) - tt)
    score = np.where(res <= 1e-9 * np.maximum(1.0, np.abs(tt)), np.asarray(T.margin(cand)), -np.inf)
    u = cand[np.arange(t.size), np.argmax(score, axis=1)]
    return nb.branch(i, u).reshape(np.shape(targets))


def build_vertical_neighborhoods(q: Polynomial, orbits: Sequence[PeriodicOrbit], l: int,
                                 base_regions: Sequence[Region] | None = None,
                                 level_offset: int = 0, n_boundary: int = 1024,
                                 pc_steps: int = 64, K: int = 48) -> VerticalNeighborhoods:
    """Pull back base regions T_i along the branches fixing r_i = orbits[i].points[0]."""
    if l < level_offset or l < 1:
        raise PreconditionError("need l >= max(1, level_offset)")
    periods = {o.period for o in orbits}
    if len(periods) != 1:
        raise PreconditionError("orbits must share one period")
    m1 = periods.pop()
    for o in orbits:
        if o.classification != "repelling":
            raise PreconditionError("base orbits must be repelling")
    pts = np.array([o.points[0] for o in orbits], dtype=complex)
    pc = postcritical_points(q, pc_steps)
    for o in orbits:
        if postcritical_test(q, o.points[0], pc_steps, 1e-9):
            raise PostcriticalObstruction(f"base point {o.points[0]} is postcritical")
    if base_regions is None:
        T = _auto_base_region(pts, pc)
        base_regions = tuple(T for _ in orbits)
    base_regions = tuple(base_regions)
    for i, T in enumerate(base_regions):
        if np.any(np.asarray(T.margin(pc)) > -CRITICAL_GUARD) if pc.size else False:
            raise PostcriticalObstruction(f"base region {i} meets the postcritical set")
        start = complex(q.iterate_eval(pts[i], level_offset * m1))
        if T.margin(start) <= 0:
            raise PreconditionError(f"base region {i} misses its base point")
    crit = postcritical_points(q, max(pc_steps, l * m1))
    crit = np.unique(np.round(crit, 12)) if crit.size else crit
    nb = VerticalNeighborhoods(q, m1, l, tuple(complex(p) for p in pts), tuple(orbits),
                               base_regions, level_offset, (), {}, np.zeros(0), (0.0, 0.0), 0.0,
                               tuple(o.chi for o in orbits), 0.0, crit, K)
    boundaries = {}
    levels = list(range(max(level_offset, 1), l + 1))
    diam = np.zeros((len(orbits), len(levels)))
    for i, T in enumerate(base_regions):
        tb = T.boundary(n_boundary)
        for a, lev in enumerate(levels):
            b = nb.branch(i, tb, level=lev)
            boundaries[(i, lev)] = b
            diam[i, a] = Polygon(b).diameter()
        # pullback relation between consecutive levels
        for lev in levels[:-1]:
            err = np.abs(q.iterate_eval(boundaries[(i, lev + 1)], m1) - boundaries[(i, lev)]).max()
            if err > 1e-6:
                raise BranchJump(f"pullback relation broken at level {lev} (error {err:.2e})")
    regions = tuple(Polygon(boundaries[(i, l)]) for i in range(len(orbits)))
    # least-squares fit diam ~ a1 * a2^level
    if len(levels) >= 2:
        A = np.vstack([np.ones(len(levels)), np.array(levels, dtype=float)]).T
        coef, *_ = np.linalg.lstsq(A, np.log(diam.max(axis=0)), rcond=None)
        fit = (float(np.exp(coef[0])), float(np.exp(coef[1])))
    else:
        fit = (float(diam.max()), float("nan"))
    nb.regions = regions
    nb.boundaries = boundaries
    nb.diameters = diam
    nb.fit = fit
    # expansion |(q^{l m1})'| >= A chi^l > 1 on V_i
    A_vals = []
    for i in range(len(orbits)):
        s = nb.sample(i)
        _, d = nb.Q(s, derivative=True)
        mn = float(np.abs(d).min())
        if mn <= 1.0 and level_offset == 0:
            raise ExpansionTooWeak(f"|(q^(l m1))'| = {mn:.4g} <= 1 on V_{i}")
        A_vals.append(mn / nb.chi[i] ** (l - level_offset))
    nb.expansion_A = float(min(A_vals))
    # mutual covering: closure of the union of the V_j inside each q^{l m1}(V_i)
    cov = np.inf
    for i, T in enumerate(base_regions):
        img = T if level_offset == 0 else Polygon(q.iterate_eval(
            T.boundary(max(n_boundary, 64 * q.degree ** (level_offset * m1))), level_offset * m1))
        for j in range(len(orbits)):
            cov = min(cov, float(np.min(img.margin(boundaries[(j, l)]))))
    if cov <= 0:
        raise ExpansionTooWeak(f"neighborhoods do not satisfy the mutual covering yet (margin {cov:.3g})")
    nb.covering_margin = cov
    return nb


def inverse_branch(nb: VerticalNeighborhoods, i: int, j: int, target) -> np.ndarray:
    """psi_ij: the point of W_ij in V_i mapped onto target (in V_j) by q^{l m1}."""
    t = np.asarray(target, dtype=complex)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    rj = nb.base_points[j]
    T = nb.base_regions[i]
    if not nb.level_offset and np.any(np.asarray(T.margin(t)) <= 0):
        raise PreconditionError("target outside the domain of the inverse branch")
    near = np.abs(t - rj) <= 2.0 * nb.diameters[j, -1]
    out = np.empty(t.shape, dtype=complex)
    if near.any():
        # short continuation from the anchor psi_ij(r_j)
        a = nb.anchor(i, j)
        F = lambda u: nb.Q(u, derivative=True)
        u = np.full(int(near.sum()), a, dtype=complex)
        tn = t[near]
        steps = 6
        prev = np.full(tn.shape, rj, dtype=complex)
        for k in range(1, steps + 1):
            cur = rj + (tn - rj) * k / steps
            u = _newton_track(F, u, prev, cur)
            prev = cur
        out[near] = u
    if (~near).any():
        far = t[~near]
        out[~near] = _offset_preimage(nb, i, far) if nb.level_offset else nb.branch(i, far)
    res = np.abs(nb.Q(out) - t)
    if np.any(res > 1e-9 * np.maximum(1.0, np.abs(t))):
        raise BranchJump(f"inverse branch residual {res.max():.2e}")
    return complex(out[0]) if scalar else out


# ---------------------------------------------------------- vertical graphs


def graph_nodes(nb: VerticalNeighborhoods, j: int, n: int = GRAPH_NODES) -> np.ndarray:
    """n Chebyshev-spaced nodes along the boundary of V_j (pulled back from the boundary of T_j)."""
    key = ("nodes", j, n)
    if key not in nb._cache:
        T = nb.base_regions[j]
        b = T.boundary(4096)
        closed = np.append(b, b[0])
        s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(closed)))])
        s /= s[-1]
        k = np.arange(n)
        par = 0.5 * (1.0 - np.cos(np.pi * (k + 0.5) / n))
        pts = np.interp(par, s, closed.real) + 1j * np.interp(par, s, closed.imag)
        nb._cache[key] = nb.branch(j, pts)
    return nb._cache[key]


def slope_of(nodes_w: np.ndarray, nodes_s: np.ndarray) -> float:
    dw = np.roll(nodes_w, -1) - nodes_w
    ds = np.roll(nodes_s, -1) - nodes_s
    ok = np.abs(dw) > 0
    return float(np.max(np.abs(ds[ok] / dw[ok]))) if ok.any() else 0.0


@dataclass(eq=False)
class VerticalGraphSample:
    """A holomorphic graph w -> sigma(w) over V_label, sampled at boundary nodes."""

    domain: Region
    nodes: np.ndarray
    values: np.ndarray
    slope_bound: float
    label: int
    evaluator: Callable | None = None

    def __call__(self, w):
        if self.evaluator is None:
            raise PreconditionError("graph has no evaluator for off-node points")
        return self.evaluator(w)

    @classmethod
    def from_function(cls, nb: VerticalNeighborhoods, j: int, f: Callable,
                      n: int = GRAPH_NODES) -> "VerticalGraphSample":
        w = graph_nodes(nb, j, n)
        s = np.asarray(f(w), dtype=complex) * np.ones(w.shape)
        return cls(nb.regions[j], w, s, slope_of(w, s), j, f)

    @classmethod
    def constant(cls, nb: VerticalNeighborhoods, j: int, z0: complex,
                 n: int = GRAPH_NODES) -> "VerticalGraphSample":
        z0 = complex(z0)
        return cls.from_function(nb, j, lambda w: np.full(np.shape(w), z0, dtype=complex), n)

    def to_csv(self) -> str:
        lines = ["w_re,w_im,sigma_re,sigma_im"]
        for w, s in zip(self.nodes, self.values):
            lines.append(",".join(repr(float(x)) for x in (w.real, w.imag, s.real, s.imag)))
        return "\n".join(lines) + "\n"


def graph_transform(g: SkewMap, nb: VerticalNeighborhoods, sigma: VerticalGraphSample,
                    i: int, j: int) -> VerticalGraphSample:
    """sigma_1(w) = h(sigma(psi_ij(w)), psi_ij(w)) over V_j."""
    if sigma.label != i:
        raise PreconditionError(f"graph lives over V_{sigma.label}, not V_{i}")

    def ev(w, _s=sigma, _i=i, _j=j):
        u = inverse_branch(nb, _i, _j, w)
        return _h_eval(g.h, _s(u), u)

    w = graph_nodes(nb, j, len(sigma.nodes))
    vals = np.asarray(ev(w), dtype=complex)
    return VerticalGraphSample(nb.regions[j], w, vals, slope_of(w, vals), j, ev)


@dataclass
class IntersectionWitness:
    """A point (sigma(w*), w*) of the graph together with its certified pseudo-orbit."""

    z: complex
    w: complex
    itinerary: list
    orbit: np.ndarray
    margins: np.ndarray
    residuals: np.ndarray
    step_margins: list

    @property
    def min_margin(self) -> float:
        return float(self.margins.min())

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0

    def verify(self, g: SkewMap, blocks: Sequence[ProductBlock], tol: float = 1e-8) -> bool:
        """Re-check with plain map evaluation only: orbit consistency and block membership."""
        z, w = self.orbit[:, 0], self.orbit[:, 1]
        hz, Qw = g(z[:-1], w[:-1])
        res = np.maximum(np.abs(hz - z[1:]), np.abs(Qw - w[1:]) / np.maximum(1, np.abs(w[1:])))
        by_label = {b.label: b for b in blocks}
        mg = np.array([float(by_label[k].margin(z[n], w[n])) for n, k in enumerate(self.itinerary)])
        return bool(res.max(initial=0.0) < tol and mg.min() >= 0)

    def to_json(self) -> dict:
        return {
            "z": [self.z.real, self.z.imag], "w": [self.w.real, self.w.imag],
            "itinerary": [int(k) for k in self.itinerary],
            "orbit": [[[p.real, p.imag] for p in row] for row in self.orbit],
            "margins": self.margins.tolist(), "residuals": self.residuals.tolist(),
            "min_margin": self.min_margin, "max_residual": self.max_residual,
        }


def _block_margin_nodes(block: ProductBlock, values: np.ndarray) -> float:
    return float(np.min(block.horizontal.margin(values)))


def blender_intersect(g: SkewMap, nb: VerticalNeighborhoods, blocks: Sequence[ProductBlock],
                      sigma: VerticalGraphSample, n_steps: int = 50,
                      itinerary: Sequence[int] | None = None) -> IntersectionWitness:
    """Follow the max-margin itinerary of graph transforms and locate the nested limit point."""
    by_label = {b.label: b for b in blocks}
    i0 = sigma.label
    if i0 not in by_label:
        raise NoAdmissibleBlock(f"no block over V_{i0}", step=0)
    m0 = _block_margin_nodes(by_label[i0], sigma.values)
    if m0 <= 0:
        raise NoAdmissibleBlock("initial graph is not valued in its horizontal block", step=0,
                                margins=[m0])
    labels = sorted(by_label)
    path = [i0]
    graphs = [sigma]
    step_margins = [m0]
    for n in range(n_steps):
        cur = graphs[-1]
        if itinerary is not None:
            cands = [int(itinerary[n])]
        else:
            cands = labels
        best = None
        margins = {}
        for j in cands:
            nxt = graph_transform(g, nb, cur, path[-1], j)
            mj = _block_margin_nodes(by_label[j], nxt.values)
            margins[j] = mj
            if best is None or mj > best[0]:
                best = (mj, j, nxt)
        if best[0] <= 0:
            raise NoAdmissibleBlock(f"no admissible block at step {n + 1}", step=n + 1,
                                    margins=margins)
        path.append(best[1])
        graphs.append(best[2])
        step_margins.append(best[0])
    # nested limit: w* = psi_{i0 i1} o ... o psi_{i_{n-1} i_n}(r_{i_n})
    u = [None] * (n_steps + 1)
    u[n_steps] = complex(nb.base_points[path[-1]]) if not nb.level_offset else complex(
        graph_nodes(nb, path[-1], 1)[0])
    for k in range(n_steps - 1, -1, -1):
        u[k] = complex(inverse_branch(nb, path[k], path[k + 1], u[k + 1]))
    z = [complex(sigma(np.array([u[0]]))[0])]
    for k in range(n_steps):
        z.append(complex(_h_eval(g.h, np.array([z[-1]]), np.array([u[k]]))[0]))
    orbit = np.array([[z[k], u[k]] for k in range(n_steps + 1)], dtype=complex)
    hz, Qw = g(orbit[:-1, 0], orbit[:-1, 1])
    residuals = np.maximum(np.abs(hz - orbit[1:, 0]),
                           np.abs(Qw - orbit[1:, 1]) / np.maximum(1, np.abs(orbit[1:, 1])))
    margins = np.array([float(by_label[k].margin(orbit[n, 0], orbit[n, 1])) for n, k in enumerate(path)])
    return IntersectionWitness(z[0], u[0], path, orbit, margins, residuals, step_margins)


# ------------------------------------------------------------ certificates


@dataclass
class BlenderCertificate:
    kind: str
    map: SkewMap
    blocks: list
    third_blocks: list
    delta0: float
    checks: list
    params: dict = field(default_factory=dict)
    witness: IntersectionWitness | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst_margin(self) -> float:
        return min(c.worst_margin for c in self.checks)

    def certificate(self, seed: int | None = None) -> Certificate:
        p = dict(self.params)
        p["kind"] = self.kind
        p["delta0"] = self.delta0
        if self.witness is not None:
            p["witness"] = {"itinerary": [int(k) for k in self.witness.itinerary],
                            "z": self.witness.z, "w": self.witness.w,
                            "min_margin": self.witness.min_margin,
                            "max_residual": self.witness.max_residual}
        cert = Certificate.combine(f"{self.kind}_blender", self.checks, p)
        if seed is not None:
            cert.seed = seed
        return cert


def _disc_samples(radius: float, n_r: int, n_t: int, n_b: int) -> np.ndarray:
    rr = radius * np.arange(n_r + 1) / (n_r + 1)
    th = 2 * np.pi * (np.arange(n_t) + 0.5) / n_t
    inner = (rr[:, None] * np.exp(1j * th[None, :])).ravel()
    inner = np.concatenate([[0j], inner[np.abs(inner) > 0]])
    circ = radius * np.exp(2j * np.pi * np.arange(n_b) / n_b)
    return np.concatenate([inner, circ])


@dataclass(frozen=True)
class SampleSpec:
    """Sample densities for certification (z polar grid, V_j pulled-back grid)."""

    z_r: int = 6
    z_t: int = 32
    z_b: int = 96
    w_r: int = 5
    w_t: int = 12
    w_b: int = 96
    cover_grid: int = 40
    cover_w: int = 40

    def w_samples(self, nb: VerticalNeighborhoods, j: int) -> np.ndarray:
        return nb.sample(j, self.w_r, self.w_t, self.w_b)


def _product_eval(g: SkewMap, zs: np.ndarray, ws: np.ndarray):
    Z = zs[:, None]
    W = ws[None, :]
    return g.jacobian(Z, W)


def _proximity(g, cc, nb, rho, spec, j, delta0):
    zs = _disc_samples(2.0, spec.z_r, spec.z_t, spec.z_b)
    ws = spec.w_samples(nb, j)
    h = _h_eval(g.h, zs[:, None], ws[None, :])
    dev = np.abs(h - (rho * zs[:, None] + cc.epsilon0 * cc.c[j]))
    pts = np.stack(np.broadcast_arrays(zs[:, None], ws[None, :]), axis=-1).reshape(-1, 2)
    return dev.ravel(), pts


def _unit_block(g, nb, spec, j):
    zs = _disc_samples(1.0, spec.z_r, spec.z_t, spec.z_b)
    ws = spec.w_samples(nb, j)
    h, hz, hw, Qw, dQ = _product_eval(g, zs, ws)
    shape = (zs.size, ws.size)
    hz, hw, dQ = (np.broadcast_to(np.abs(a), shape).ravel() for a in (hz, hw, dQ))
    pts = np.stack(np.broadcast_arrays(zs[:, None], ws[None, :]), axis=-1).reshape(-1, 2)
    return hz, hw, dQ, pts


def _solve_z(g: SkewMap, z0: np.ndarray, w1: np.ndarray, zinit: np.ndarray, iters: int = 40):
    z = zinit.copy()
    for _ in range(iters):
        h, hz, _ = _h_jac(g.h, z, w1)
        with np.errstate(all="ignore"):
            step = (h - z0) / hz
        step[~np.isfinite(step)] = 0
        z = z - step
        if np.all(np.abs(step) < 1e-14 * np.maximum(1, np.abs(z))):
            break
    h, hz, _ = _h_jac(g.h, z, w1)
    ok = np.abs(h - z0) < 1e-10 * np.maximum(1, np.abs(z0))
    return z, np.abs(hz), ok


def _cover_targets(spec: SampleSpec, nb: VerticalNeighborhoods, k: int):
    n = spec.cover_grid
    xs = np.linspace(-1, 1, n)
    g = (xs[None, :] + 1j * xs[:, None]).ravel()
    g = g[np.abs(g) <= 1]
    zt = np.concatenate([g, np.exp(2j * np.pi * np.arange(4 * n) / (4 * n))])
    wb = nb.boundary(k)
    wt = np.concatenate([wb[:: max(1, wb.size // spec.cover_w)], [nb.base_points[k]]])
    return zt, wt


def covering_preimage_margins(g: SkewMap, cc: CoveringConstants, nb: VerticalNeighborhoods,
                              rho: complex, spec: SampleSpec, radius: float = 1.0):
    """For targets in closure(radius D x V_k): best margin of a preimage in radius D x V_j.

    Margins are measured in the image: (radius - |z1|) * |dh/dz(z1, w1)|.
    """
    all_m, all_p = [], []
    for k in range(3):
        zt, wt = _cover_targets(spec, nb, k)
        zt = radius * zt
        best = np.full((zt.size, wt.size), -np.inf)
        for j in range(3):
            w1 = inverse_branch(nb, j, k, wt)
            Z0 = np.broadcast_to(zt[:, None], best.shape)
            W1 = np.broadcast_to(w1[None, :], best.shape)
            zinit = (Z0 - radius * cc.epsilon0 * cc.c[j]) / rho
            z1, ahz, ok = _solve_z(g, Z0.ravel(), W1.ravel(), zinit.ravel())
            m = (radius - np.abs(z1)) * ahz
            m[~ok] = -np.inf
            best = np.maximum(best, m.reshape(best.shape))
        all_m.append(best.ravel())
        pts = np.stack(np.broadcast_arrays(zt[:, None], wt[None, :]), axis=-1).reshape(-1, 2)
        all_p.append(pts)
    return np.concatenate(all_m), np.concatenate(all_p)


def _blocks_for(cc: CoveringConstants, nb: VerticalNeighborhoods):
    blocks = [ProductBlock(cc.h_regions[j], nb.regions[j], j) for j in range(3)]
    third = [ProductBlock(Scaled(cc.h_regions[j], 1.0 / 3.0), nb.regions[j], j) for j in range(3)]
    return blocks, third


def _proof_budget(cc: CoveringConstants) -> float:
    """delta-scale below which the H-containment and Rouche steps are guaranteed."""
    return float(min(0.5 * cc.margins.get("h_image", 0.0), cc.margins.get("cover", 0.0)))


def certify_repelling_blender(g: SkewMap, cc: CoveringConstants, nb: VerticalNeighborhoods,
                              rho: complex, delta0: float | None = None,
                              floor: float = DEFAULT_MARGIN_FLOOR,
                              spec: SampleSpec = SampleSpec()) -> BlenderCertificate:
    """Sampled proximity, cone contraction, expansion and covering clauses."""
    if abs(abs(rho) - (1 + cc.alpha0)) > 1e-9:
        raise PreconditionError(f"|rho| = {abs(rho)} but the repelling regime needs 1 + alpha0")
    cc = cc.with_rho(rho)
    with ThreadPoolExecutor(worker_count()) as ex:
        prox = list(ex.map(lambda j: _proximity(g, cc, nb, rho, spec, j, delta0), range(3)))
        unit = list(ex.map(lambda j: _unit_block(g, nb, spec, j), range(3)))
    cov_m, cov_p = covering_preimage_margins(g, cc, nb, rho, spec)
    dev = np.concatenate([p[0] for p in prox])
    dev_pts = np.concatenate([p[1] for p in prox])
    ahz = np.concatenate([u[0] for u in unit])
    ahw = np.concatenate([u[1] for u in unit])
    adQ = np.concatenate([u[2] for u in unit])
    unit_pts = np.concatenate([u[3] for u in unit])

    def clauses(d0):
        return [
            Certificate.from_margins("proximity", d0 - dev, dev_pts, floor,
                                     {"sup_deviation": float(dev.max()), "delta0": d0}),
            Certificate.from_margins("cone", d0 - (ahz * d0 + ahw) / adQ, unit_pts, floor,
                                     {"sup_delta_prime": float(((ahz * d0 + ahw) / adQ).max()),
                                      "delta0": d0}),
            Certificate.from_margins("expansion", ahz - 1.0, unit_pts, floor,
                                     {"min_abs_dz_h": float(ahz.min())}),
            Certificate.from_margins("covering", cov_m, cov_p, floor, {}),
        ]

    # all delta0-dependent margins increase with delta0, so the cap is the best choice
    d0 = DELTA0_CAP if delta0 is None else float(delta0)
    checks = clauses(d0)
    blocks, third = _blocks_for(cc, nb)
    budget = _proof_budget(cc)
    params = {"rho": complex(rho), "l": nb.l, "m1": nb.m1, "epsilon0": cc.epsilon0,
              "alpha0": cc.alpha0, "eta": cc.eta, "sup_deviation": float(dev.max()),
              "proof_delta_bound": budget,
              "within_proof_budget": bool(dev.max() <= budget),
              "nested_blocks": "H_j x V_j and (1/3)H_j x V_j"}
    return BlenderCertificate("repelling", g, blocks, third, d0, checks, params)


def certify_saddle_blender(g: SkewMap, cc: CoveringConstants, nb: VerticalNeighborhoods,
                           rho: complex, delta0: float | None = None,
                           floor: float = DEFAULT_MARGIN_FLOOR,
                           spec: SampleSpec = SampleSpec()) -> BlenderCertificate:
    """Sampled proximity, covering closure(Z) in g(Z), and horizontal contraction."""
    if abs(abs(rho) - (1 - cc.alpha0)) > 1e-9:
        raise PreconditionError(f"|rho| = {abs(rho)} but the saddle regime needs 1 - alpha0")
    cc = cc.with_rho(rho)
    prox = [_proximity(g, cc, nb, rho, spec, j, delta0) for j in range(3)]
    unit = [_unit_block(g, nb, spec, j) for j in range(3)]
    cov_m, cov_p = covering_preimage_margins(g, cc, nb, rho, spec)
    dev = np.concatenate([p[0] for p in prox])
    dev_pts = np.concatenate([p[1] for p in prox])
    ahz = np.concatenate([u[0] for u in unit])
    unit_pts = np.concatenate([u[3] for u in unit])
    d0 = DELTA0_CAP if delta0 is None else float(delta0)
    checks = [
        Certificate.from_margins("proximity", d0 - dev, dev_pts, floor,
                                 {"sup_deviation": float(dev.max()), "delta0": d0}),
        Certificate.from_margins("covering", cov_m, cov_p, floor, {}),
        Certificate.from_margins("contraction", 1.0 - ahz, unit_pts, floor,
                                 {"max_abs_dz_h": float(ahz.max())}),
    ]
    blocks, third = _blocks_for(cc, nb)
    budget = _proof_budget(cc)
    params = {"rho": complex(rho), "l": nb.l, "m1": nb.m1, "epsilon0": cc.epsilon0,
              "alpha0": cc.alpha0, "eta": cc.eta, "sup_deviation": float(dev.max()),
              "proof_delta_bound": budget, "within_proof_budget": bool(dev.max() <= budget)}
    return BlenderCertificate("saddle", g, blocks, third, d0, checks, params)


# ------------------------------------------------ postcritical curve check


def _backward_tree(q: Polynomial, target: complex, depth: int, radius: float, cap: int = 1 << 18):
    level = np.array([target], dtype=complex)
    for _ in range(depth):
        nxt = []
        for a in level:
            from .cpoly import roots as _roots
            nxt.append(_roots(q - Polynomial([a])))
        level = np.concatenate(nxt)
        if level.size > cap:
            raise PreconditionError("backward tree too large; reduce n_steps")
    return level[np.abs(level) < radius]


def postcritical_curve_check(g: SkewMap, z1: complex, nb: VerticalNeighborhoods,
                             blocks: Sequence[ProductBlock], n_steps: int = 1,
                             radius: float = 2.0, delta0: float = DELTA0_CAP,
                             witness_steps: int = 10,
                             floor: float = DEFAULT_MARGIN_FLOOR) -> Certificate:
    """Look for an iterate of the vertical line {z1} x D_radius containing a cone-tangent
    sub-graph over some V_j valued in H_j; attach an intersection witness when found."""
    by_label = {b.label: b for b in blocks}
    best = None
    for k in range(1, n_steps + 1):
        gk = g.iterate(k) if k > 1 else g
        for j, blk in by_label.items():
            leaves = _backward_tree(g.q, nb.base_points[j], g.vertical_power * k, radius)
            if leaves.size == 0:
                continue
            z0 = np.full(leaves.shape, complex(z1))
            h, hz, hw = _h_jac(gk.h, z0, leaves)
            _, dQ = gk.Q(leaves, derivative=True)
            slope = np.abs(hw) / np.abs(dQ)
            hm = np.asarray(blk.horizontal.margin(h))
            score = np.minimum(hm, delta0 - slope)
            a = int(np.argmax(score))
            if best is None or score[a] > best[0]:
                best = (float(score[a]), k, j, complex(leaves[a]), gk)
    if best is None or best[0] <= 0:
        return Certificate("postcritical_curve", False, -np.inf if best is None else best[0], [], 0,
                           {"z1": complex(z1), "n_steps": n_steps})
    score, k, j, w0, gk = best
    rj = nb.base_points[j]

    def local_inverse(wt, _w0=w0, _gk=gk, _rj=rj):
        wt = np.atleast_1d(np.asarray(wt, dtype=complex))
        F = lambda u: _gk.Q(u, derivative=True)
        u = np.full(wt.shape, _w0, dtype=complex)
        prev = np.full(wt.shape, _rj, dtype=complex)
        for s in range(1, 9):
            cur = _rj + (wt - _rj) * s / 8
            u = _newton_track(F, u, prev, cur)
            prev = cur
        return u

    def sigma(wt, _gk=gk, _z1=complex(z1)):
        u = local_inverse(wt)
        return _h_eval(_gk.h, np.full(u.shape, _z1), u)

    graph = VerticalGraphSample.from_function(nb, j, sigma)
    hm = float(np.min(by_label[j].horizontal.margin(graph.values)))
    margin = min(hm, delta0 - graph.slope_bound)
    params = {"z1": complex(z1), "iterate": k, "block": j, "slope_bound": graph.slope_bound,
              "h_margin": hm}
    passed = margin >= floor
    if passed:
        try:
            wit = blender_intersect(g, nb, blocks, graph, witness_steps)
            params["witness"] = {"itinerary": wit.itinerary, "min_margin": wit.min_margin,
                                 "max_residual": wit.max_residual}
        except NoAdmissibleBlock as exc:
            params["witness_error"] = str(exc)
            passed = False
    return Certificate("postcritical_curve", passed, margin, point_coords([w0]),
                       graph.nodes.size, params)
