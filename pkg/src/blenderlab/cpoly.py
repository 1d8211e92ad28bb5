"""One- and two-variable complex polynomials.

Covers evaluation, composition, symbolic iteration (bounded by a degree cap),
all-roots solving by Aberth-Ehrlich simultaneous iteration, periodic cycles
with multipliers, a finite-orbit postcritical test, JSON round trips and a
small text grammar for hand-written polynomials.

Polynomial grammar (whitespace ignored)::

    expr    = [ "+" | "-" ] term { ( "+" | "-" ) term } ;
    term    = power { [ "*" ] power } ;
    power   = primary [ "^" integer ] ;
    primary = number [ "i" ] | "i" | "z" | "w" | "(" expr ")" ;
    number  = digits [ "." digits ] [ ( "e" | "E" ) [ "+" | "-" ] digits ] ;

so ``"w^7"``, ``"0.5*z + z^2"`` and ``"(1+2i) z w^2 - 3i w"`` are all valid.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegreeCapExceeded, NonConvergence, ParseError, PreconditionError

DEFAULT_SEED = 0xB1E2DE5
DEFAULT_DEGREE_CAP = 4096
ROOT_MAX_ITER = 500
ROOT_TOL = 1e-12
CLUSTER_RADIUS = 1e-7
INDIFFERENCE_BAND = 1e-8

_EPS = np.finfo(float).eps


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    nz = np.flatnonzero(c != 0)
    if nz.size == 0:
        return np.zeros(1, dtype=complex)
    return c[: nz[-1] + 1].copy()


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Complex polynomial, coefficients in ascending degree."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _trim(self.coeffs)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction helpers
    @classmethod
    def monomial(cls, d: int, coeff: complex = 1.0) -> "Polynomial":
        c = np.zeros(d + 1, dtype=complex)
        c[d] = coeff
        return cls(c)

    @classmethod
    def identity(cls) -> "Polynomial":
        return cls([0.0, 1.0])

    @classmethod
    def constant(cls, a: complex) -> "Polynomial":
        return cls([a])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return self.degree == 0 and self.coeffs[0] == 0

    def norm(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        acc = np.full(w.shape, self.coeffs[-1], dtype=complex)
        for a in self.coeffs[-2::-1]:
            acc = acc * w + a
        return acc if acc.ndim else complex(acc)

    def abs_eval(self, w):
        """Evaluate sum |a_k| |w|^k, the natural scale for residuals."""
        r = np.abs(np.asarray(w, dtype=complex))
        acc = np.full(r.shape, abs(self.coeffs[-1]))
        for a in self.coeffs[-2::-1]:
            acc = acc * r + abs(a)
        return acc

    def derivative(self) -> "Polynomial":
        if self.degree == 0:
            return Polynomial([0.0])
        k = np.arange(1, len(self.coeffs))
        return Polynomial(self.coeffs[1:] * k)

    def __add__(self, other):
        other = _as_poly(other)
        n = max(len(self.coeffs), len(other.coeffs))
        c = np.zeros(n, dtype=complex)
        c[: len(self.coeffs)] += self.coeffs
        c[: len(other.coeffs)] += other.coeffs
        return Polynomial(c)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self.coeffs)

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __mul__(self, other):
        other = _as_poly(other)
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = Polynomial([1.0])
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def compose(self, inner: "Polynomial") -> "Polynomial":
        """Return self(inner(w))."""
        acc = Polynomial([self.coeffs[-1]])
        for a in self.coeffs[-2::-1]:
            acc = acc * inner + a
        return acc

    def iterate(self, n: int, degree_cap: int = DEFAULT_DEGREE_CAP) -> "Polynomial":
        """Symbolic n-th iterate; refused when the degree would exceed the cap."""
        if n < 0:
            raise PreconditionError("iterate count must be >= 0")
        if self.degree ** n > degree_cap:
            raise DegreeCapExceeded(f"degree {self.degree}^{n} exceeds cap {degree_cap}")
        out = Polynomial.identity()
        for _ in range(n):
            out = self.compose(out)
        return out

    def iterate_eval(self, w, n: int, derivative: bool = False):
        """Pointwise n-th iterate (and its derivative by the chain rule)."""
        w = np.asarray(w, dtype=complex)
        dp = self.derivative() if derivative else None
        der = np.ones(w.shape, dtype=complex)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(n):
                if derivative:
                    der = der * dp(w)
                w = self(w)
        if derivative:
            return w, der
        return w

    def critical_points(self) -> np.ndarray:
        if self.degree < 2:
            return np.zeros(0, dtype=complex)
        return roots(self.derivative())

    def to_json(self) -> list:
        return [[float(a.real), float(a.imag)] for a in self.coeffs]

    @classmethod
    def from_json(cls, data) -> "Polynomial":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            return cls([complex(float(re_), float(im_)) for re_, im_ in data])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad polynomial JSON: {exc}") from exc

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()})"


def _as_poly(x) -> Polynomial:
    if isinstance(x, Polynomial):
        return x
    if isinstance(x, BivariatePolynomial):
        raise TypeError("mixing univariate and bivariate polynomials")
    return Polynomial([x])


# ---------------------------------------------------------------- roots


def _hull_radii(c: np.ndarray):
    """Upper convex hull of (k, log|a_k|): radii and root counts per circle."""
    n = len(c) - 1
    idx = [k for k in range(n + 1) if c[k] != 0]
    pts = [(k, math.log(abs(c[k]))) for k in idx]
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    out = []
    for (k0, y0), (k1, y1) in zip(hull[:-1], hull[1:]):
        out.append((math.exp((y0 - y1) / (k1 - k0)), k1 - k0))
    return out


def _newton_ratio(c: np.ndarray, z: np.ndarray):
    """p(z)/p'(z) and a residual scale, evaluated stably inside and outside the unit disc."""
    n = len(c) - 1
    ratio = np.empty(z.shape, dtype=complex)
    resid = np.empty(z.shape)
    scale = np.empty(z.shape)
    inner = np.abs(z) <= 1.0
    if inner.any():
        x = z[inner]
        p = np.full(x.shape, c[-1], dtype=complex)
        dp = np.zeros(x.shape, dtype=complex)
        s = np.full(x.shape, abs(c[-1]))
        ax = np.abs(x)
        for a in c[-2::-1]:
            dp = dp * x + p
            p = p * x + a
            s = s * ax + abs(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio[inner] = p / dp
        resid[inner] = np.abs(p)
        scale[inner] = s
    outer = ~inner
    if outer.any():
        x = z[outer]
        y = 1.0 / x
        rc = c[::-1]
        P = np.full(x.shape, rc[-1], dtype=complex)
        dP = np.zeros(x.shape, dtype=complex)
        s = np.full(x.shape, abs(rc[-1]))
        ay = np.abs(y)
        for a in rc[-2::-1]:
            dP = dP * y + P
            P = P * y + a
            s = s * ay + abs(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio[outer] = x * P / (n * P - y * dP)
        # residuals relative to |x|^n, which cancels in the relative test
        resid[outer] = np.abs(P)
        scale[outer] = s
    return ratio, resid, scale


def _aberth_sums(z: np.ndarray, active: np.ndarray, chunk: int = 512) -> np.ndarray:
    out = np.zeros(active.size, dtype=complex)
    for start in range(0, active.size, chunk):
        rows = active[start:start + chunk]
        diff = z[rows, None] - z[None, :]
        diff[np.arange(rows.size), rows] = 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / diff
        inv[np.arange(rows.size), rows] = 0.0
        inv[~np.isfinite(inv)] = 0.0
        out[start:start + chunk] = inv.sum(axis=1)
    return out


def _cluster_labels(points: np.ndarray, radius: float):
    if points.size == 0:
        return np.zeros(0, dtype=int), 0
    xy = np.column_stack([points.real, points.imag])
    pairs = np.array(sorted(cKDTree(xy).query_pairs(radius)), dtype=int).reshape(-1, 2)
    n = points.size
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    k, labels = connected_components(adj, directed=False)
    return labels, k


def _merge_multiple(c: np.ndarray, z: np.ndarray, ratio, resid, scale) -> np.ndarray:
    """Replace numerically inseparable groups (a k-fold root spreads to ~eps^(1/k)) by their mean.

    Each root gets the Newton inclusion radius n |p / p'| with |p| floored at the
    rounding level; overlapping discs form a candidate group, which is merged only
    if p at the group mean is itself at rounding level.
    """
    n = len(c) - 1
    noise = 2 * n * _EPS * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        rad = n * np.abs(ratio) * np.maximum(1.0, noise / resid)
    rad[~np.isfinite(rad)] = 0.0
    xy = np.column_stack([z.real, z.imag])
    pairs = np.array(sorted(cKDTree(xy).query_pairs(2 * float(rad.max()))), dtype=int).reshape(-1, 2)
    if pairs.size:
        keep = np.abs(z[pairs[:, 0]] - z[pairs[:, 1]]) < rad[pairs[:, 0]] + rad[pairs[:, 1]]
        pairs = pairs[keep]
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    k, labels = connected_components(adj, directed=False)
    out = z.copy()
    for g in range(k):
        idx = np.flatnonzero(labels == g)
        if idx.size < 2:
            continue
        m = np.array([z[idx].mean()])
        _, r_m, s_m = _newton_ratio(c, m)
        if r_m[0] <= 100 * 2 * n * _EPS * s_m[0]:
            # a k-fold root of p is a simple root of p^(k-1)
            dk = Polynomial(c)
            for _ in range(idx.size - 1):
                dk = dk.derivative()
            ddk = dk.derivative()
            x = complex(m[0])
            for _ in range(8):
                dd = complex(ddk(x))
                if dd == 0:
                    break
                step = complex(dk(x)) / dd
                if not abs(step) < 10 * rad[idx].max():
                    break
                x -= step
            out[idx] = x
    return out


def roots(p: Polynomial, seed: int = DEFAULT_SEED, max_iter: int = ROOT_MAX_ITER,
          tol: float = ROOT_TOL, cluster_radius: float = CLUSTER_RADIUS) -> np.ndarray:
    """All roots of p with multiplicity, by Aberth-Ehrlich iteration.

    Starting points sit on the Newton-polygon circles (each clamped by the
    Cauchy bound) with a deterministic angular jitter drawn from ``seed``.
    Roots closer than ``cluster_radius`` are merged to their mean and repeated.
    """
    if not isinstance(p, Polynomial):
        p = Polynomial(p)
    if p.degree < 1:
        raise PreconditionError("roots() needs degree >= 1")
    c = p.coeffs
    nzero = int(np.flatnonzero(c != 0)[0])
    c = c[nzero:]
    n = len(c) - 1
    found = [np.zeros(nzero, dtype=complex)]
    if n == 1:
        found.append(np.array([-c[0] / c[1]]))
    elif n > 1:
        c = c / c[-1]
        cauchy = 1.0 + float(np.max(np.abs(c[:-1])))
        rng = np.random.default_rng(seed)
        starts = []
        offset = 0.0
        for radius, count in _hull_radii(c):
            radius = min(radius, cauchy)
            ang = 2 * np.pi * np.arange(count) / count + offset
            ang = ang + rng.uniform(-0.1, 0.1, count) * (2 * np.pi / count)
            starts.append(radius * np.exp(1j * ang))
            offset += 0.7
        z = np.concatenate(starts)
        done = np.zeros(n, dtype=bool)
        for _ in range(max_iter):
            active = np.flatnonzero(~done)
            if active.size == 0:
                break
            ratio, resid, scale = _newton_ratio(c, z[active])
            small = resid <= 4 * _EPS * scale
            s = _aberth_sums(z, active)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = ratio / (1.0 - ratio * s)
            step[~np.isfinite(step)] = 0.0
            step[small] = 0.0
            z[active] = z[active] - step
            conv = small | (np.abs(step) <= tol * np.maximum(1.0, np.abs(z[active])))
            done[active[conv]] = True
        ratio, resid, scale = _newton_ratio(c, z)
        if not np.all(resid <= 1e-8 * np.maximum(1.0, scale)):
            raise NonConvergence(f"Aberth iteration did not converge in {max_iter} steps")
        found.append(_merge_multiple(c, z, ratio, resid, scale))
    z = np.concatenate(found)
    labels, k = _cluster_labels(z, cluster_radius)
    if k < z.size:
        means = np.array([z[labels == g].mean() for g in range(k)])
        z = means[labels]
    order = np.lexsort((np.round(z.imag, 12), np.round(z.real, 12)))
    return z[order]


# ------------------------------------------------------ periodic points


@dataclass(frozen=True)
class PeriodicOrbit:
    """A cycle of q listed in dynamical order, points[k+1] = q(points[k])."""

    points: tuple
    period: int
    multiplier: complex
    classification: str

    @property
    def chi(self) -> float:
        return abs(self.multiplier)

    def to_json(self) -> dict:
        return {
            "points": [[z.real, z.imag] for z in self.points],
            "period": self.period,
            "multiplier": [self.multiplier.real, self.multiplier.imag],
            "classification": self.classification,
        }


def classify_multiplier(mult: complex, band: float = INDIFFERENCE_BAND) -> str:
    a = abs(mult)
    if a < 1 - band:
        return "attracting"
    if a > 1 + band:
        return "repelling"
    return "indifferent"


def cycle_multiplier(q: Polynomial, points: Sequence[complex]) -> complex:
    dq = q.derivative()
    out = 1.0 + 0j
    for z in points:
        out *= complex(dq(z))
    return out


def make_orbit(q: Polynomial, point: complex, period: int) -> PeriodicOrbit:
    pts = [complex(point)]
    for _ in range(period - 1):
        pts.append(complex(q(pts[-1])))
    mult = cycle_multiplier(q, pts)
    return PeriodicOrbit(tuple(pts), period, mult, classify_multiplier(mult))


def _point_key(z: complex):
    ang = math.atan2(z.imag, z.real) % (2 * math.pi)
    if abs(z) < 1e-12 or ang > 2 * math.pi - 1e-9:
        ang = 0.0
    return (round(ang, 9), round(abs(z), 9))


def _divisors(m: int):
    return [k for k in range(1, m + 1) if m % k == 0]


COEFFICIENT_ROUTE_MAX = 16
MERGE_MULTIPLICITY_MAX = 16
MERGE_RADIUS_CAP = 1e-2


def _escape_bound(q: Polynomial) -> float:
    """Radius outside which |q(w)| > |w| (so every periodic point lies inside)."""
    c = np.abs(q.coeffs)
    return 1.0 + max(1.0, float(c[:-1].sum()) / c[-1]) ** (1.0 / max(1, q.degree - 1))


def _iterate_newton_ratio(q: Polynomial, w: np.ndarray, m: int, big: float = 1e100) -> np.ndarray:
    """(q^m(w) - w) / ((q^m)'(w) - 1), finite also where the orbit escapes to overflow."""
    dq = q.derivative()
    d = q.degree
    x = w.copy()
    D = np.ones(w.shape, dtype=complex)
    ratio = np.empty(w.shape, dtype=complex)
    alive = np.ones(w.shape, dtype=bool)
    with np.errstate(all="ignore"):
        for k in range(m):
            esc = alive & (np.abs(x) > big)
            if esc.any():
                # past this point q^j(x) ~ a x^(d^j), so q^m / (q^m)' ~ x / (D d^(m-k))
                ratio[esc] = x[esc] / (D[esc] * float(d) ** (m - k))
                alive &= ~esc
            D = np.where(alive, D * dq(x), D)
            x = np.where(alive, q(x), x)
        ratio[alive] = (x[alive] - w[alive]) / (D[alive] - 1.0)
    return ratio


def _preimage_tree(q: Polynomial, w0: complex, m: int) -> np.ndarray:
    """All d^m solutions of q^m(z) = w0, one level at a time (batched companion eigenvalues)."""
    c = q.coeffs / q.coeffs[-1]
    d = q.degree
    comp = np.zeros((d, d), dtype=complex)
    comp[1:, :-1] = np.eye(d - 1)
    comp[:, -1] = -c[:-1]
    level = np.array([w0], dtype=complex)
    for _ in range(m):
        C = np.repeat(comp[None], level.size, axis=0)
        C[:, 0, -1] += level
        level = np.linalg.eigvals(C).ravel()
    return level


def _pointwise_aberth(q: Polynomial, m: int, seed: int, max_iter: int = 200, tol: float = 1e-13) -> np.ndarray:
    n = q.degree ** m
    R = 2.0 * _escape_bound(q)
    rng = np.random.default_rng(seed)
    # preimages of a far point sit on an equipotential hugging the Julia set,
    # spread like the periodic points themselves
    z = _preimage_tree(q, R * np.exp(2j * np.pi * rng.uniform()), m)
    done = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        ratio = _iterate_newton_ratio(q, z[active], m)
        s = _aberth_sums(z, active)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = ratio / (1.0 - ratio * s)
        step[~np.isfinite(step)] = 0.0
        z[active] = z[active] - step
        done[active[np.abs(step) <= tol * np.maximum(1.0, np.abs(z[active]))]] = True
    return z


def _inclusion_groups(q: Polynomial, pts: np.ndarray, m: int) -> np.ndarray:
    """Merge points whose Newton inclusion discs n |ratio| overlap; keep the group means.

    Simple roots have tiny discs even when neighbours are far closer than any
    fixed clustering radius; a k-fold root (k <= MERGE_MULTIPLICITY_MAX) leaves
    k points with wide discs.
    """
    n = q.degree ** m
    ratio = np.abs(_iterate_newton_ratio(q, pts, m))
    ratio[np.isnan(ratio)] = 0.0         # exact root (0/0), e.g. repeated copies from roots()
    # q^m(w) - w is only known to about eps |(q^m)'| |w|; where (q^m)' ~ 1 that
    # noise over |(q^m)' - 1| is the real Newton uncertainty
    with np.errstate(all="ignore"):
        _, der = q.iterate_eval(pts, m, derivative=True)
        noise = 4 * m * np.finfo(float).eps * (1.0 + np.abs(der)) * np.maximum(1.0, np.abs(pts))
        ratio = np.maximum(ratio, noise / np.abs(der - 1.0))
    scale = np.maximum(1.0, np.abs(pts))
    ratio[~np.isfinite(ratio)] = np.inf
    # near a k-fold root the ratio is ~ |w - r| / k, so k |ratio| reaches the root
    rad = np.maximum(min(n, MERGE_MULTIPLICITY_MAX) * ratio, 1e-13 * scale)
    rad = np.minimum(rad, MERGE_RADIUS_CAP * scale)
    xy = np.column_stack([pts.real, pts.imag])
    tree = cKDTree(xy)
    rows, cols = [], []
    for i, nbrs in enumerate(tree.query_ball_point(xy, 2 * rad)):
        for j in nbrs:
            if j > i and abs(pts[i] - pts[j]) < rad[i] + rad[j]:
                rows.append(i)
                cols.append(j)
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(pts.size, pts.size))
    k, labels = connected_components(adj, directed=False)
    return np.array([pts[labels == g].mean() for g in range(k)])


def _polish_cycle(q: Polynomial, pts: np.ndarray, steps: int = 4) -> np.ndarray:
    """Newton on q^p(w) - w at the cycle's own period p.

    A merged group mean is only good to ~eps^(1/k); at period p the root is
    usually simple again. Steps are kept only while the residual drops.
    """
    p = pts.size
    res = np.abs(np.asarray(q.iterate_eval(pts, p)) - pts)
    for _ in range(steps):
        val, der = q.iterate_eval(pts, p, derivative=True)
        with np.errstate(all="ignore"):
            new = pts - (val - pts) / (der - 1.0)
            new_res = np.abs(np.asarray(q.iterate_eval(new, p)) - new)
        ok = np.isfinite(new) & (new_res < res) & (np.abs(new - pts) < MERGE_RADIUS_CAP)
        if not ok.any():
            break
        pts = np.where(ok, new, pts)
        res = np.where(ok, new_res, res)
    return pts


def _successor_cycles(q: Polynomial, pts: np.ndarray, m: int) -> list:
    """Cycles of the permutation w -> (found point nearest q(w))."""
    img = np.asarray(q(pts))
    succ = np.argmin(np.abs(pts[None, :] - img[:, None]), axis=1) if pts.size <= 2048 else \
        cKDTree(np.column_stack([pts.real, pts.imag])).query(np.column_stack([img.real, img.imag]))[1]
    if np.bincount(succ, minlength=pts.size).max() != 1:
        raise NonConvergence("periodic points are not permuted by q; root accuracy is insufficient")
    seen = np.zeros(pts.size, dtype=bool)
    out = []
    for i in range(pts.size):
        if seen[i]:
            continue
        cyc = [i]
        seen[i] = True
        j = int(succ[i])
        while j != i:
            cyc.append(j)
            seen[j] = True
            j = int(succ[j])
        if m % len(cyc):
            raise NonConvergence(f"found a cycle of length {len(cyc)}, which does not divide {m}")
        out.append(cyc)
    return out


def periodic_points(q: Polynomial, m: int, degree_cap: int = DEFAULT_DEGREE_CAP,
                    seed: int = DEFAULT_SEED, refine_tol: float = 1e-10) -> list:
    """All cycles of q whose minimal period divides m.

    Small degrees expand q^m(w) - w and use roots() (which also merges multiple
    roots); larger ones run Aberth on the pointwise iterate, avoiding the huge
    expanded coefficients. Orbits are read off from how q permutes the points.
    """
    if q.degree < 2:
        raise PreconditionError("periodic_points needs deg(q) >= 2")
    if m < 1:
        raise PreconditionError("period must be >= 1")
    if q.degree ** m > degree_cap:
        raise DegreeCapExceeded(f"d^m = {q.degree}^{m} exceeds degree cap {degree_cap}")
    if q.degree ** m <= COEFFICIENT_ROUTE_MAX:
        pts = roots(q.iterate(m, degree_cap) - Polynomial.identity(), seed=seed)
    else:
        pts = _pointwise_aberth(q, m, seed)
    # Newton polish on the pointwise iterate (multiple roots are left alone)
    for _ in range(3):
        val, der = q.iterate_eval(pts, m, derivative=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = (val - pts) / (der - 1.0)
        step[~np.isfinite(step)] = 0.0
        step[np.abs(step) > 1e-6 * np.maximum(1, np.abs(pts))] = 0.0
        pts = pts - step
    uniq = _inclusion_groups(q, pts, m)
    orbits = []
    for cyc in _successor_cycles(q, uniq, m):
        uniq[cyc] = _polish_cycle(q, uniq[cyc])
        start = min(range(len(cyc)), key=lambda t: _point_key(uniq[cyc[t]]))
        pts_c = [complex(uniq[cyc[(start + t) % len(cyc)]]) for t in range(len(cyc))]
        mult = cycle_multiplier(q, pts_c)
        orbits.append(PeriodicOrbit(tuple(pts_c), len(cyc), mult, classify_multiplier(mult)))
    orbits.sort(key=lambda o: (o.period, _point_key(o.points[0])))
    return orbits


def postcritical_points(q: Polynomial, n_steps: int, bound: float = 1e12) -> np.ndarray:
    """Forward images q^k(c), 1 <= k <= n_steps, of the critical points (escaping orbits cut)."""
    out = []
    for c in q.critical_points():
        z = complex(c)
        for _ in range(n_steps):
            z = complex(q(z))
            if not np.isfinite(z) or abs(z) > bound:
                break
            out.append(z)
    return np.array(out, dtype=complex)


def postcritical_test(q: Polynomial, w: complex, n_steps: int, tol: float = 1e-9) -> bool:
    """True iff some q^k(c), 1 <= k <= n_steps, of a critical point c lies within tol of w."""
    if n_steps < 1:
        raise PreconditionError("n_steps must be >= 1")
    pc = postcritical_points(q, n_steps)
    return bool(pc.size and np.min(np.abs(pc - w)) < tol)


# --------------------------------------------------------- bivariate


@dataclass(frozen=True, eq=False)
class BivariatePolynomial:
    """Dense table a[m, n] of the coefficient of z^m w^n."""

    coeffs: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.coeffs, dtype=complex))
        rows = np.flatnonzero(np.any(a != 0, axis=1))
        cols = np.flatnonzero(np.any(a != 0, axis=0))
        if rows.size == 0:
            a = np.zeros((1, 1), dtype=complex)
        else:
            a = a[: rows[-1] + 1, : cols[-1] + 1].copy()
        a.setflags(write=False)
        object.__setattr__(self, "coeffs", a)

    @classmethod
    def from_terms(cls, terms: dict) -> "BivariatePolynomial":
        """Build from {(m, n): coefficient}."""
        if not terms:
            return cls(np.zeros((1, 1)))
        dz = max(k[0] for k in terms) + 1
        dw = max(k[1] for k in terms) + 1
        a = np.zeros((dz, dw), dtype=complex)
        for (m, n), v in terms.items():
            a[m, n] += v
        return cls(a)

    @classmethod
    def in_w(cls, p: Polynomial) -> "BivariatePolynomial":
        return cls(np.asarray(p.coeffs)[None, :])

    @classmethod
    def in_z(cls, p: Polynomial) -> "BivariatePolynomial":
        return cls(np.asarray(p.coeffs)[:, None])

    @property
    def degrees(self):
        return (self.coeffs.shape[0] - 1, self.coeffs.shape[1] - 1)

    @property
    def total_degree(self) -> int:
        m, n = np.nonzero(self.coeffs)
        return int((m + n).max()) if m.size else 0

    def __call__(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        shape = np.broadcast_shapes(z.shape, w.shape)
        acc = np.zeros(shape, dtype=complex)
        for row in self.coeffs[::-1]:
            inner = np.full(w.shape, row[-1], dtype=complex)
            for a in row[-2::-1]:
                inner = inner * w + a
            acc = acc * z + inner
        return acc if acc.ndim else complex(acc)

    def dz(self) -> "BivariatePolynomial":
        a = self.coeffs
        if a.shape[0] == 1:
            return BivariatePolynomial(np.zeros((1, 1)))
        return BivariatePolynomial(a[1:] * np.arange(1, a.shape[0])[:, None])

    def dw(self) -> "BivariatePolynomial":
        a = self.coeffs
        if a.shape[1] == 1:
            return BivariatePolynomial(np.zeros((1, 1)))
        return BivariatePolynomial(a[:, 1:] * np.arange(1, a.shape[1])[None, :])

    def __add__(self, other):
        other = _as_bivariate(other)
        s = (max(self.coeffs.shape[0], other.coeffs.shape[0]),
             max(self.coeffs.shape[1], other.coeffs.shape[1]))
        a = np.zeros(s, dtype=complex)
        a[: self.coeffs.shape[0], : self.coeffs.shape[1]] += self.coeffs
        a[: other.coeffs.shape[0], : other.coeffs.shape[1]] += other.coeffs
        return BivariatePolynomial(a)

    __radd__ = __add__

    def __neg__(self):
        return BivariatePolynomial(-self.coeffs)

    def __sub__(self, other):
        return self + (-_as_bivariate(other))

    def __rsub__(self, other):
        return _as_bivariate(other) - self

    def __mul__(self, other):
        other = _as_bivariate(other)
        a, b = self.coeffs, other.coeffs
        out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1), dtype=complex)
        for m in range(a.shape[0]):
            for n in range(a.shape[1]):
                if a[m, n] != 0:
                    out[m:m + b.shape[0], n:n + b.shape[1]] += a[m, n] * b
        return BivariatePolynomial(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = BivariatePolynomial(np.ones((1, 1)))
        for _ in range(k):
            out = out * self
        return out

    def univariate_in_w(self) -> Polynomial | None:
        if self.coeffs.shape[0] == 1:
            return Polynomial(self.coeffs[0])
        return None

    def univariate_in_z(self) -> Polynomial | None:
        if self.coeffs.shape[1] == 1:
            return Polynomial(self.coeffs[:, 0])
        return None

    def to_json(self) -> list:
        return [[[float(v.real), float(v.imag)] for v in row] for row in self.coeffs]

    @classmethod
    def from_json(cls, data) -> "BivariatePolynomial":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            return cls(np.array([[complex(a, b) for a, b in row] for row in data]))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad bivariate JSON: {exc}") from exc

    def __repr__(self):
        return f"BivariatePolynomial(degrees={self.degrees})"


def _as_bivariate(x) -> BivariatePolynomial:
    if isinstance(x, BivariatePolynomial):
        return x
    if isinstance(x, Polynomial):
        return BivariatePolynomial.in_w(x)
    return BivariatePolynomial(np.array([[x]], dtype=complex))


# ------------------------------------------------------------ grammar

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|(.))")


def _tokenize(text: str):
    toks = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        num, ch = m.group(1), m.group(2)
        if num is not None:
            toks.append(("num", float(num)))
        elif ch is not None and not ch.isspace():
            toks.append(("sym", ch))
        pos = m.end()
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0
        if not self.toks:
            raise ParseError("empty polynomial expression")

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else (None, None)

    def take(self):
        t = self.peek()
        self.pos += 1
        return t

    def expr(self) -> BivariatePolynomial:
        sign = 1
        kind, val = self.peek()
        if kind == "sym" and val in "+-":
            self.take()
            sign = -1 if val == "-" else 1
        acc = self.term() * sign
        while True:
            kind, val = self.peek()
            if kind == "sym" and val in "+-":
                self.take()
                t = self.term()
                acc = acc + t if val == "+" else acc - t
            else:
                return acc

    def term(self) -> BivariatePolynomial:
        acc = self.power()
        while True:
            kind, val = self.peek()
            if kind == "sym" and val == "*":
                self.take()
                acc = acc * self.power()
            elif kind == "num" or (kind == "sym" and val in "zwi("):
                acc = acc * self.power()
            else:
                return acc

    def power(self) -> BivariatePolynomial:
        base = self.primary()
        kind, val = self.peek()
        if kind == "sym" and val == "^":
            self.take()
            k, e = self.take()
            if k != "num" or e != int(e) or e < 0:
                raise ParseError("exponent must be a non-negative integer")
            return base ** int(e)
        return base

    def primary(self) -> BivariatePolynomial:
        kind, val = self.take()
        if kind == "num":
            k2, v2 = self.peek()
            if k2 == "sym" and v2 == "i":
                self.take()
                return _as_bivariate(1j * val)
            return _as_bivariate(val)
        if kind == "sym":
            if val == "i":
                return _as_bivariate(1j)
            if val == "z":
                return BivariatePolynomial(np.array([[0.0], [1.0]]))
            if val == "w":
                return BivariatePolynomial(np.array([[0.0, 1.0]]))
            if val == "(":
                inner = self.expr()
                k2, v2 = self.take()
                if k2 != "sym" or v2 != ")":
                    raise ParseError("unbalanced parenthesis")
                return inner
        raise ParseError(f"unexpected token {val!r}")


def parse_bivariate(text: str) -> BivariatePolynomial:
    p = _Parser(text)
    out = p.expr()
    if p.pos != len(p.toks):
        raise ParseError(f"trailing input at token {p.pos}")
    return out


def parse_polynomial(text: str, var: str = "w") -> Polynomial:
    """Parse a univariate polynomial given as grammar text or JSON pairs."""
    text = text.strip()
    if text.startswith("["):
        return Polynomial.from_json(text)
    b = parse_bivariate(text)
    other = b.univariate_in_z() if var == "z" else b.univariate_in_w()
    if other is None:
        # accept either variable name for a one-variable input
        alt = b.univariate_in_w() if var == "z" else b.univariate_in_z()
        if alt is None:
            raise ParseError("expected a polynomial in a single variable")
        return alt
    return other
