"""Planar regions with signed membership margins, covering checks and the
triangle covering constants used to build blender blocks.

Margins are signed distances to the region boundary: positive inside,
negative outside. Discs, annuli and sectors are exact; polygons use their
sampled boundary with the nonzero winding rule, so pushed-forward boundary
curves that wind several times still describe the image region.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .certificate import DEFAULT_MARGIN_FLOOR, Certificate
from .errors import Collinear, PreconditionError, SumNonzero

_CHUNK = 4096


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=complex)


def _seg_dist(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each x to the closest of the segments [a_k, b_k]."""
    out = np.empty(x.shape)
    ab = b - a
    L2 = np.abs(ab) ** 2
    L2 = np.where(L2 == 0, 1.0, L2)
    for s in range(0, x.size, _CHUNK):
        xs = x.ravel()[s:s + _CHUNK, None]
        t = np.clip(((xs - a[None, :]) * np.conj(ab[None, :])).real / L2[None, :], 0.0, 1.0)
        d = np.abs(xs - (a[None, :] + t * ab[None, :]))
        out.ravel()[s:s + _CHUNK] = d.min(axis=1)
    return out


def _winding(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Winding number of the closed polyline v around each point x."""
    a = v
    b = np.roll(v, -1)
    out = np.zeros(x.size, dtype=int)
    flat = x.ravel()
    for s in range(0, flat.size, _CHUNK):
        p = flat[s:s + _CHUNK, None]
        cross = (b.real - a.real)[None, :] * (p.imag - a.imag[None, :]) - \
                (p.real - a.real[None, :]) * (b.imag - a.imag)[None, :]
        up = (a.imag[None, :] <= p.imag) & (b.imag[None, :] > p.imag) & (cross > 0)
        down = (a.imag[None, :] > p.imag) & (b.imag[None, :] <= p.imag) & (cross < 0)
        out[s:s + _CHUNK] = up.sum(axis=1) - down.sum(axis=1)
    return out.reshape(x.shape)


class Region:
    """Base class: subclasses provide margin, boundary and bbox."""

    kind = "region"

    def margin(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        return self.margin(x) > 0

    def boundary(self, n: int = 1024) -> np.ndarray:
        raise NotImplementedError

    def bbox(self):
        b = self.boundary(512)
        return b.real.min(), b.real.max(), b.imag.min(), b.imag.max()

    def sample(self, grid_n: int = 64, n_boundary: int | None = None) -> np.ndarray:
        """Grid points of the closure plus boundary samples, in a fixed order."""
        x0, x1, y0, y1 = self.bbox()
        xs = np.linspace(x0, x1, grid_n)
        ys = np.linspace(y0, y1, grid_n)
        g = (xs[None, :] + 1j * ys[:, None]).ravel()
        g = g[self.margin(g) >= 0]
        nb = n_boundary if n_boundary is not None else 4 * grid_n
        return np.concatenate([g, self.boundary(nb)])

    def to_json(self) -> dict:
        raise NotImplementedError

    def scaled(self, factor) -> "Region":
        return Scaled(self, complex(factor))

    def translated(self, shift) -> "Region":
        return Translated(self, complex(shift))


@dataclass(frozen=True)
class Disc(Region):
    center: complex
    radius: float
    kind = "disc"

    def margin(self, x):
        return self.radius - np.abs(_arr(x) - self.center)

    def boundary(self, n=1024):
        t = 2 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * t)

    def bbox(self):
        c, r = complex(self.center), self.radius
        return c.real - r, c.real + r, c.imag - r, c.imag + r

    def to_json(self):
        c = complex(self.center)
        return {"kind": "disc", "center": [c.real, c.imag], "radius": self.radius}


@dataclass(frozen=True)
class Annulus(Region):
    center: complex
    r_in: float
    r_out: float
    kind = "annulus"

    def margin(self, x):
        r = np.abs(_arr(x) - self.center)
        return np.minimum(r - self.r_in, self.r_out - r)

    def boundary(self, n=1024):
        t = 2 * np.pi * np.arange(n // 2) / (n // 2)
        e = np.exp(1j * t)
        return np.concatenate([self.center + self.r_out * e, self.center + self.r_in * e])

    def bbox(self):
        c, r = complex(self.center), self.r_out
        return c.real - r, c.real + r, c.imag - r, c.imag + r

    def to_json(self):
        c = complex(self.center)
        return {"kind": "annulus", "center": [c.real, c.imag], "r_in": self.r_in, "r_out": self.r_out}


def _arc_dist(u, r, lo, hi):
    """Distance from u to the arc {r e^{it}, lo <= t <= hi} (angles relative, |lo|,|hi| <= pi)."""
    ang = np.angle(u)
    inside = (ang >= lo) & (ang <= hi)
    d_arc = np.abs(np.abs(u) - r)
    e1 = np.abs(u - r * np.exp(1j * lo))
    e2 = np.abs(u - r * np.exp(1j * hi))
    return np.where(inside, d_arc, np.minimum(e1, e2))


def _ray_seg_dist(u, phi, r0, r1):
    d = np.exp(1j * phi)
    t = np.clip((u * np.conj(d)).real, r0, r1)
    return np.abs(u - t * d)


@dataclass(frozen=True)
class AnnularSector(Region):
    """{center + r e^{i(direction + t)} : r_in < r < r_out, |t| < half_angle}; r_in may be 0."""

    center: complex
    r_in: float
    r_out: float
    direction: float
    half_angle: float
    kind = "annular_sector"

    def _rel(self, x):
        return (_arr(x) - self.center) * np.exp(-1j * self.direction)

    def margin(self, x):
        u = self._rel(x)
        r = np.abs(u)
        ang = np.angle(u)
        h = self.half_angle
        inside = (r > self.r_in) & (r < self.r_out) & (np.abs(ang) < h)
        d = np.minimum(_arc_dist(u, self.r_out, -h, h), _ray_seg_dist(u, h, self.r_in, self.r_out))
        d = np.minimum(d, _ray_seg_dist(u, -h, self.r_in, self.r_out))
        if self.r_in > 0:
            d = np.minimum(d, _arc_dist(u, self.r_in, -h, h))
        return np.where(inside, d, -d)

    def boundary(self, n=1024):
        h = self.half_angle
        n_arc = max(8, int(n * 0.35))
        n_ray = max(4, (n - 2 * n_arc) // 2)
        # go around: outer arc (ccw), down the +h ray, inner arc (cw), up the -h ray
        outer = self.r_out * np.exp(1j * np.linspace(-h, h, n_arc, endpoint=False))
        ray1 = np.linspace(self.r_out, self.r_in, n_ray, endpoint=False) * np.exp(1j * h)
        inner = (self.r_in * np.exp(1j * np.linspace(h, -h, n_arc, endpoint=False))
                 if self.r_in > 0 else np.zeros(1, dtype=complex))
        ray2 = np.linspace(self.r_in, self.r_out, n_ray, endpoint=False) * np.exp(-1j * h)
        if self.r_in == 0:
            ray2 = ray2[1:]
        u = np.concatenate([outer, ray1, inner, ray2])
        return self.center + u * np.exp(1j * self.direction)

    def polar(self, x):
        """(log radius, angle relative to direction in (-pi, pi])."""
        u = self._rel(x)
        return np.log(np.abs(u)), np.angle(u)

    def path(self, a: complex, b, n: int) -> np.ndarray:
        """Points from a to each b, interpolated linearly in (log r, angle); stays inside.

        Returns an array of shape (n + 1,) + shape(b).
        """
        la, ta = self.polar(np.asarray(a))
        lb, tb = self.polar(np.asarray(b))
        s = np.linspace(0.0, 1.0, n + 1).reshape((-1,) + (1,) * np.ndim(lb))
        lr = la + s * (lb - la)
        th = ta + s * (tb - ta)
        return self.center + np.exp(lr + 1j * (th + self.direction))

    def to_json(self):
        c = complex(self.center)
        return {"kind": "annular_sector", "center": [c.real, c.imag], "r_in": self.r_in,
                "r_out": self.r_out, "direction": self.direction, "half_angle": self.half_angle}


def Sector(center, radius, direction, half_angle) -> AnnularSector:
    """Circular sector {|x - center| < radius, |arg((x - center) e^{-i direction})| < half_angle}."""
    return AnnularSector(complex(center), 0.0, float(radius), float(direction), float(half_angle))


@dataclass(frozen=True, eq=False)
class Polygon(Region):
    """Closed polyline (implicitly closed); membership by nonzero winding number."""

    vertices: np.ndarray
    kind = "polygon"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=complex).ravel()
        if v.size >= 2 and v[0] == v[-1]:
            v = v[:-1]
        if v.size < 3:
            raise PreconditionError("polygon needs at least 3 vertices")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def margin(self, x):
        x = _arr(x)
        shape = x.shape
        x = np.atleast_1d(x)
        v = self.vertices
        d = _seg_dist(x, v, np.roll(v, -1))
        inside = _winding(x, v) != 0
        out = np.where(inside, d, -d)
        return out.reshape(shape) if shape else float(out[0])

    def boundary(self, n=1024):
        v = self.vertices
        if n <= v.size:
            idx = np.linspace(0, v.size, n, endpoint=False).astype(int)
            return v[idx]
        # resample along arc length
        closed = np.append(v, v[0])
        seg = np.abs(np.diff(closed))
        s = np.concatenate([[0.0], np.cumsum(seg)])
        t = np.linspace(0, s[-1], n, endpoint=False)
        return np.interp(t, s, closed.real) + 1j * np.interp(t, s, closed.imag)

    def bbox(self):
        v = self.vertices
        return v.real.min(), v.real.max(), v.imag.min(), v.imag.max()

    def max_edge(self) -> float:
        v = self.vertices
        return float(np.abs(np.roll(v, -1) - v).max())

    def diameter(self) -> float:
        v = self.vertices
        if v.size > 2048:
            v = v[:: v.size // 1024]
        return float(np.abs(v[:, None] - v[None, :]).max())

    def push_forward(self, f: Callable) -> "Polygon":
        return Polygon(f(self.vertices))

    def to_json(self):
        return {"kind": "polygon", "vertices": [[z.real, z.imag] for z in self.vertices]}


@dataclass(frozen=True)
class Union(Region):
    regions: tuple
    kind = "union"

    def margin(self, x):
        ms = [r.margin(x) for r in self.regions]
        return np.max(np.stack([np.asarray(m, dtype=float) for m in ms]), axis=0)

    def boundary(self, n=1024):
        k = len(self.regions)
        pts = np.concatenate([r.boundary(max(8, n // k)) for r in self.regions])
        # drop pieces that lie strictly inside another member
        keep = np.ones(pts.size, dtype=bool)
        for r in self.regions:
            keep &= ~(np.asarray(r.margin(pts)) > 1e-12)
        return pts[keep]

    def bbox(self):
        boxes = np.array([r.bbox() for r in self.regions])
        return boxes[:, 0].min(), boxes[:, 1].max(), boxes[:, 2].min(), boxes[:, 3].max()

    def to_json(self):
        return {"kind": "union", "regions": [r.to_json() for r in self.regions]}


@dataclass(frozen=True)
class Scaled(Region):
    """The region multiplied by a (complex) factor about the origin."""

    base: Region
    factor: complex
    kind = "scaled"

    def margin(self, x):
        t = complex(self.factor)
        return abs(t) * np.asarray(self.base.margin(_arr(x) / t))

    def boundary(self, n=1024):
        return complex(self.factor) * self.base.boundary(n)

    def bbox(self):
        if complex(self.factor).imag == 0 and complex(self.factor).real > 0:
            x0, x1, y0, y1 = self.base.bbox()
            t = complex(self.factor).real
            return x0 * t, x1 * t, y0 * t, y1 * t
        return Region.bbox(self)

    def to_json(self):
        t = complex(self.factor)
        return {"kind": "scaled", "factor": [t.real, t.imag], "base": self.base.to_json()}


@dataclass(frozen=True)
class Translated(Region):
    base: Region
    shift: complex
    kind = "translated"

    def margin(self, x):
        return self.base.margin(_arr(x) - self.shift)

    def boundary(self, n=1024):
        return self.base.boundary(n) + self.shift

    def bbox(self):
        x0, x1, y0, y1 = self.base.bbox()
        s = complex(self.shift)
        return x0 + s.real, x1 + s.real, y0 + s.imag, y1 + s.imag

    def to_json(self):
        s = complex(self.shift)
        return {"kind": "translated", "shift": [s.real, s.imag], "base": self.base.to_json()}


@dataclass(frozen=True)
class ComplementInDisc(Region):
    """The disc with a region removed."""

    disc: Disc
    hole: Region
    kind = "complement_in_disc"

    def margin(self, x):
        return np.minimum(self.disc.margin(x), -np.asarray(self.hole.margin(x)))

    def boundary(self, n=1024):
        return np.concatenate([self.disc.boundary(n // 2), self.hole.boundary(n // 2)])

    def bbox(self):
        return self.disc.bbox()

    def to_json(self):
        return {"kind": "complement_in_disc", "disc": self.disc.to_json(), "hole": self.hole.to_json()}


def region_from_json(d: dict) -> Region:
    k = d["kind"]
    c = lambda p: complex(p[0], p[1])
    if k == "disc":
        return Disc(c(d["center"]), d["radius"])
    if k == "annulus":
        return Annulus(c(d["center"]), d["r_in"], d["r_out"])
    if k == "annular_sector":
        return AnnularSector(c(d["center"]), d["r_in"], d["r_out"], d["direction"], d["half_angle"])
    if k == "polygon":
        return Polygon(np.array([c(p) for p in d["vertices"]]))
    if k == "union":
        return Union(tuple(region_from_json(r) for r in d["regions"]))
    if k == "scaled":
        return Scaled(region_from_json(d["base"]), c(d["factor"]))
    if k == "translated":
        return Translated(region_from_json(d["base"]), c(d["shift"]))
    if k == "complement_in_disc":
        return ComplementInDisc(region_from_json(d["disc"]), region_from_json(d["hole"]))
    raise PreconditionError(f"unknown region kind {k!r}")


def membership_margin(r: Region, x):
    m = r.margin(x)
    return float(m) if np.ndim(m) == 0 else m


@dataclass(frozen=True)
class ProductBlock:
    horizontal: Region
    vertical: Region
    label: int

    def margin(self, z, w):
        return np.minimum(self.horizontal.margin(z), self.vertical.margin(w))


@dataclass(frozen=True)
class ConeParam:
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise PreconditionError("cone parameter must be positive")

    def contains(self, a, b):
        return np.abs(a) < self.delta * np.abs(b)


# --------------------------------------------------------- coverings


def covering_check(target: Region, images: Sequence[Region], grid_n: int = 256,
                   floor: float = DEFAULT_MARGIN_FLOOR, name: str = "covering") -> Certificate:
    """Every sample of the target's closure must lie in some image, margin >= floor."""
    if grid_n < 16:
        raise PreconditionError("grid_n must be >= 16")
    pts = target.sample(grid_n)
    m = np.max(np.stack([np.asarray(im.margin(pts), dtype=float) for im in images]), axis=0)
    return Certificate.from_margins(name, m, pts, floor, params={"grid_n": grid_n, "images": len(images)})


def h_region(c: complex, rho_arg: float, eta: float) -> Region:
    """(1/2)D together with {z in D : |arg(-z rho / c)| < pi/2 - eta} for arg(rho) = rho_arg."""
    direction = math.pi + math.atan2(c.imag, c.real) - rho_arg
    return Union((Disc(0j, 0.5), Sector(0j, 1.0, direction, math.pi / 2 - eta)))


@dataclass(frozen=True)
class CoveringConstants:
    """epsilon0, alpha0, eta and the sets H_j for one triple c and one arg(rho)."""

    epsilon0: float
    alpha0: float
    eta: float
    h_regions: tuple
    c: tuple
    rho_arg: float = 0.0
    margins: dict = field(default_factory=dict, compare=False)

    def phi(self, j: int, rho: complex, z):
        return rho * _arr(z) + self.epsilon0 * self.c[j]

    def image_discs(self, rho_modulus: float) -> list:
        return [Disc(self.epsilon0 * c, rho_modulus) for c in self.c]

    def third_regions(self) -> tuple:
        return tuple(Scaled(h, 1.0 / 3.0) for h in self.h_regions)

    def with_rho(self, rho: complex) -> "CoveringConstants":
        arg = math.atan2(complex(rho).imag, complex(rho).real)
        hs = tuple(h_region(c, arg, self.eta) for c in self.c)
        return CoveringConstants(self.epsilon0, self.alpha0, self.eta, hs, self.c, arg, dict(self.margins))

    def h_slack(self) -> float:
        """Half the gap between the images phi_j(H_j) and the unit circle (proof's delta budget)."""
        return 0.5 * self.margins.get("h_image", 0.0)

    def to_json(self) -> dict:
        return {
            "epsilon0": self.epsilon0, "alpha0": self.alpha0, "eta": self.eta,
            "c": [[x.real, x.imag] for x in self.c], "rho_arg": self.rho_arg,
            "h_regions": [h.to_json() for h in self.h_regions],
            "margins": dict(self.margins),
        }


def _disc_grid(n: int) -> np.ndarray:
    xs = np.linspace(-1.0, 1.0, n)
    g = (xs[None, :] + 1j * xs[:, None]).ravel()
    g = g[np.abs(g) <= 1.0]
    circ = np.exp(2j * np.pi * np.arange(4 * n) / (4 * n))
    return np.concatenate([g, circ])


def _h_boundary_local(c: complex, eta: float, n: int = 2048) -> np.ndarray:
    """Boundary of H~ = rotation-free version of H_j (rho = 1): samples of its closure boundary."""
    return h_region(c, 0.0, eta).boundary(n)


def _triangle_margins(c, eps0, alpha0, eta, grid):
    out = {}
    # (i) closed unit disc covered by the discs D(eps0 c_j, |rho|) for the smallest |rho|
    r = 1.0 - alpha0
    cov = np.max(np.stack([r - np.abs(grid - eps0 * cj) for cj in c]), axis=0)
    out["cover"] = float(cov.min())
    # (ii) images of H_j and of H_j / 3, for |rho| across the admissible band
    worst_h, worst_third, ineq = np.inf, np.inf, np.inf
    for cj in c:
        hb = _h_boundary_local(cj, eta)
        for mod in (1 - alpha0, 1.0, 1 + alpha0):
            worst_h = min(worst_h, 1.0 - np.abs(mod * hb + eps0 * cj).max())
            worst_third = min(worst_third, 1.0 / 3.0 - np.abs(mod * hb / 3.0 + eps0 * cj).max())
        a = eps0 * abs(cj)
        lhs = (1 + alpha0) ** 2 + a * a - 2 * a * (1 + alpha0) * math.cos(math.pi / 2 - eta)
        lhs3 = (1 + alpha0) ** 2 + 9 * a * a - 6 * a * (1 + alpha0) * math.cos(math.pi / 2 - eta)
        ineq = min(ineq, 1.0 - lhs, 1.0 - lhs3)
    out["h_image"] = float(worst_h)
    out["h_third_image"] = float(worst_third)
    out["inequality"] = float(ineq)
    # (iii) the H_j cover the open disc (checked strictly inside)
    inner = grid[np.abs(grid) <= 1.0 - 1e-3]
    hs = [h_region(cj, 0.0, eta) for cj in c]
    hm = np.max(np.stack([np.asarray(h.margin(inner)) for h in hs]), axis=0)
    out["h_cover"] = float(hm.min())
    return out


EPS_GRID = tuple([round(0.5 - 0.05 * k, 2) for k in range(10)] + [0.04, 0.03, 0.02, 0.01])


def triangle_cover(c1: complex, c2: complex, c3: complex, rho_arg: float = 0.0,
                   grid_n: int = 400, floor: float = DEFAULT_MARGIN_FLOOR) -> CoveringConstants:
    """Largest grid-certified epsilon0 (with compatible alpha0, eta) for the triple c.

    The search runs epsilon0 * max|c_j| over 0.5, 0.45, ..., 0.05, 0.04, ..., 0.01,
    alpha0 over epsilon0 * max|c_j| / {4, 8, 16} and eta over {pi/12, pi/24}.
    """
    c = tuple(complex(x) for x in (c1, c2, c3))
    scale = max(abs(x) for x in c)
    if scale == 0:
        raise Collinear("all three points vanish")
    if abs(sum(c)) > 1e-10 * max(1.0, scale):
        raise SumNonzero(f"c1 + c2 + c3 = {sum(c)} is not zero")
    area = 0.5 * abs(((c[1] - c[0]) * np.conj(c[2] - c[0])).imag)
    if area / scale ** 2 < 1e-6:
        raise Collinear("the three points are aligned")
    grid = _disc_grid(grid_n)
    for e in EPS_GRID:
        eps0 = e / scale
        for div in (4, 8, 16):
            alpha0 = e / div
            for eta in (math.pi / 12, math.pi / 24):
                m = _triangle_margins(c, eps0, alpha0, eta, grid)
                if (m["cover"] >= floor and m["h_image"] > 0 and m["h_third_image"] > 0
                        and m["inequality"] > 0 and m["h_cover"] > 0):
                    hs = tuple(h_region(cj, rho_arg, eta) for cj in c)
                    m["grid_n"] = grid_n
                    return CoveringConstants(eps0, alpha0, eta, hs, c, rho_arg, m)
    raise PreconditionError("no grid point of the search certifies a covering")


def triangle_certificate(cc: CoveringConstants, rho_modulus: float, grid_n: int = 400,
                         floor: float = DEFAULT_MARGIN_FLOOR) -> Certificate:
    """Covering of the closed unit disc by the three images phi_j(D) for |rho| = rho_modulus."""
    return covering_check(Disc(0j, 1.0), cc.image_discs(rho_modulus), grid_n, floor,
                          name=f"triangle_cover|rho|={rho_modulus:.6g}")
