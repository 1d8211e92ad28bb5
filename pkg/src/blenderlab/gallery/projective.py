"""Homogeneous evaluation on P^2 and trapping regions given by homogeneous inequalities."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..cpoly import BivariatePolynomial, Polynomial, roots
from ..errors import IndeterminacyDetected, PreconditionError


def normalize(P: np.ndarray) -> np.ndarray:
    """Scale homogeneous triples (axis 0) so the largest modulus coordinate is 1."""
    P = np.asarray(P, dtype=complex)
    m = np.max(np.abs(P), axis=0)
    if np.any(m == 0):
        raise PreconditionError("the zero vector is not a point of P^2")
    return P / m


@dataclass(frozen=True)
class ProjectivePoint:
    z: complex
    w: complex
    t: complex

    def __post_init__(self):
        v = normalize(np.array([self.z, self.w, self.t], dtype=complex)[:, None])[:, 0]
        # fix the phase too: the max-modulus coordinate (first one on ties) becomes exactly 1
        k = int(np.argmax(np.abs(v) >= 1 - 1e-15))
        v = v / v[k]
        object.__setattr__(self, "z", complex(v[0]))
        object.__setattr__(self, "w", complex(v[1]))
        object.__setattr__(self, "t", complex(v[2]))

    @property
    def coords(self) -> np.ndarray:
        return np.array([self.z, self.w, self.t])

    def affine(self):
        if self.t == 0:
            return None
        return self.z / self.t, self.w / self.t

    @classmethod
    def from_affine(cls, z, w) -> "ProjectivePoint":
        return cls(z, w, 1.0)


@dataclass(frozen=True, eq=False)
class HomogeneousMap:
    """Three homogeneous components, each a tuple of (coeff, (i, j, k)) monomials z^i w^j t^k."""

    components: tuple
    name: str = ""

    def __post_init__(self):
        degs = {sum(e) for comp in self.components for _, e in comp}
        if len(degs) != 1:
            raise PreconditionError(f"components are not homogeneous of one degree: {sorted(degs)}")
        object.__setattr__(self, "_degree", degs.pop())

    @property
    def degree(self) -> int:
        return self._degree

    def __call__(self, P: np.ndarray) -> np.ndarray:
        P = normalize(P)
        z, w, t = P[0], P[1], P[2]
        out = []
        for comp in self.components:
            acc = np.zeros(z.shape, dtype=complex)
            for c, (i, j, k) in comp:
                term = np.full(z.shape, complex(c))
                if i:
                    term = term * z ** i
                if j:
                    term = term * w ** j
                if k:
                    term = term * t ** k
                acc = acc + term
            out.append(acc)
        return normalize(np.array(out))

    def affine_jacobian(self, z, w):
        """Affine chart t = 1: values (F1, F2) and the 2x2 Jacobian, shape (2, 2, ...)."""
        z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
        vals, dz, dw = [], [], []
        for comp in self.components:
            v = np.zeros(z.shape, dtype=complex)
            a = np.zeros(z.shape, dtype=complex)
            b = np.zeros(z.shape, dtype=complex)
            for c, (i, j, _) in comp:
                zi = z ** i if i else 1.0
                wj = w ** j if j else 1.0
                v = v + c * zi * wj
                if i:
                    a = a + c * i * z ** (i - 1) * wj
                if j:
                    b = b + c * j * zi * w ** (j - 1)
            vals.append(v)
            dz.append(a)
            dw.append(b)
        with np.errstate(all="ignore"):
            t, tz, tw = vals[2], dz[2], dw[2]
            F = [vals[k] / t for k in range(2)]
            J = np.array([[(dz[k] * t - vals[k] * tz) / t ** 2, (dw[k] * t - vals[k] * tw) / t ** 2]
                          for k in range(2)])
        return F[0], F[1], J

    def is_linear(self) -> bool:
        return self.degree == 1

    def indeterminacy_points(self) -> list:
        """Common zeros of the components.

        Linear maps: zero iff the matrix is singular. Otherwise the third
        component must be c t^d, so common zeros lie on {t = 0}, where the
        components are binary forms in (z, w) whose common roots are tested.
        """
        if self.is_linear():
            M = np.zeros((3, 3), dtype=complex)
            for r, comp in enumerate(self.components):
                for c, e in comp:
                    M[r, int(np.argmax(e))] += c
            if abs(np.linalg.det(M)) < 1e-12:
                _, _, vh = np.linalg.svd(M)
                return [ProjectivePoint(*np.conj(vh[-1]))]
            return []
        third = self.components[2]
        if not (len(third) == 1 and third[0][1] == (0, 0, self.degree) and third[0][0] != 0):
            raise PreconditionError("indeterminacy test needs a third component c t^d")
        d = self.degree
        forms = []
        for comp in self.components[:2]:
            a = np.zeros(d + 1, dtype=complex)
            for c, (i, j, k) in comp:
                if k == 0:
                    a[i] += c   # coefficient of z^i w^(d-i)
            forms.append(a)
        pts = []
        # candidate w = 0, i.e. [1:0:0]
        if all(abs(a[d]) < 1e-14 for a in forms):
            pts.append(ProjectivePoint(1, 0, 0))
        # candidates with w = 1: common roots of the dehomogenized forms in z
        polys = [Polynomial(a) for a in forms]
        nonzero = [p for p in polys if not p.is_zero]
        if not nonzero:
            return [ProjectivePoint(1, 0, 0), ProjectivePoint(0, 1, 0)]
        base = min(nonzero, key=lambda p: p.degree)
        cands = roots(base) if base.degree > 0 else np.array([])
        for zc in cands:
            if all(abs(p(zc)) < 1e-9 * max(1.0, p.norm()) for p in polys):
                pts.append(ProjectivePoint(zc, 1, 0))
        return pts

    @classmethod
    def from_affine(cls, P1: BivariatePolynomial, P2: BivariatePolynomial, degree: int | None = None,
                    name: str = "") -> "HomogeneousMap":
        """[t^d P1(z/t, w/t) : t^d P2(z/t, w/t) : t^d]."""
        d = degree if degree is not None else max(P1.total_degree, P2.total_degree)
        comps = []
        for P in (P1, P2):
            terms = []
            for (i, j), c in np.ndenumerate(P.a):
                if c != 0:
                    if i + j > d:
                        raise PreconditionError("degree below the total degree of a component")
                    terms.append((complex(c), (i, j, d - i - j)))
            comps.append(tuple(terms) or ((0j, (0, 0, d)),))
        comps.append(((1.0, (0, 0, d)),))
        return cls(tuple(comps), name)


def linear_map(M: np.ndarray, name: str = "") -> HomogeneousMap:
    M = np.asarray(M, dtype=complex)
    comps = []
    for r in range(3):
        comps.append(tuple((M[r, c], tuple(int(c == k) for k in range(3))) for c in range(3) if M[r, c] != 0))
    return HomogeneousMap(tuple(comps), name)


@dataclass(frozen=True, eq=False)
class ProjectiveMap:
    """A composition of homogeneous maps, applied right to left, each with a repeat count."""

    factors: tuple
    name: str = ""

    @property
    def degree(self) -> int:
        d = 1
        for f, n in self.factors:
            d *= f.degree ** n
        return d

    def __call__(self, P: np.ndarray) -> np.ndarray:
        P = normalize(P)
        for f, n in reversed(self.factors):
            for _ in range(n):
                P = f(P)
        return P

    def affine(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        z, w = np.broadcast_arrays(z, w)
        P = self(np.array([z, w, np.ones(z.shape)]))
        with np.errstate(all="ignore"):
            return P[0] / P[2], P[1] / P[2]

    def affine_jacobian(self, z, w):
        """Values and 2x2 Jacobian (shape (2, 2, ...)) in the chart t = 1, by the chain rule."""
        z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
        J = np.zeros((2, 2) + z.shape, dtype=complex)
        J[0, 0] = 1
        J[1, 1] = 1
        for f, n in reversed(self.factors):
            for _ in range(n):
                z, w, Jf = f.affine_jacobian(z, w)
                J = np.einsum("ij...,jk...->ik...", Jf, J)
        return z, w, J

    def check_endomorphism(self):
        for f, _ in self.factors:
            bad = f.indeterminacy_points()
            if bad:
                raise IndeterminacyDetected(f"factor {f.name or '?'} has indeterminacy at {bad[0]}")

    def then(self, other: "ProjectiveMap") -> "ProjectiveMap":
        """other o self."""
        return ProjectiveMap(tuple(other.factors) + tuple(self.factors), f"{other.name} o {self.name}")


def hom_map(*factors) -> ProjectiveMap:
    """Compose factors given as HomogeneousMap or (HomogeneousMap, repeat); leftmost applied last."""
    fs = tuple(f if isinstance(f, tuple) else (f, 1) for f in factors)
    return ProjectiveMap(fs, " o ".join(f[0].name for f in fs))


@dataclass(frozen=True)
class TrappingRegion:
    """Open subsets of P^2 described by homogeneous inequalities.

    kinds:
      cone          {|z| < rho max(|w|, |t|)}
      complement_w  {|z| < 2 max(R |t|, |w|)}  (complement of the closed W-)
      custom        base region minus affine balls (centers, radii, optional metrics);
                    the ball part of the margin is relative to the radius
    """

    kind: str
    params: dict = field(default_factory=dict)
    base: "TrappingRegion | None" = None

    def margin(self, P) -> np.ndarray:
        """Scale-invariant signed margin (positive inside)."""
        P = normalize(P)
        z, w, t = np.abs(P[0]), np.abs(P[1]), np.abs(P[2])
        if self.kind == "cone":
            rho = self.params["rho"]
            return rho * np.maximum(w, t) - z
        if self.kind == "complement_w":
            R = self.params["R"]
            return (2 * np.maximum(R * t, w) - z) / np.maximum(1.0, R * t)
        if self.kind == "custom":
            m = self.base.margin(P)
            with np.errstate(all="ignore"):
                za, wa = P[0] / P[2], P[1] / P[2]
            metrics = self.params.get("metrics") or [None] * len(self.params["radii"])
            for (cz, cw), r, M in zip(self.params["centers"], self.params["radii"], metrics):
                with np.errstate(all="ignore"):
                    dz, dw = za - cz, wa - cw
                    if M is not None:
                        M = np.asarray(M, dtype=complex)
                        dz, dw = M[0, 0] * dz + M[0, 1] * dw, M[1, 0] * dz + M[1, 1] * dw
                    # measured in units of the ball radius so that tiny balls get a usable margin
                    d = (np.sqrt(np.abs(dz) ** 2 + np.abs(dw) ** 2) - r) / r
                d = np.where(np.isfinite(d), d, np.inf)
                m = np.minimum(m, d)
            return m
        raise PreconditionError(f"unknown trapping region kind {self.kind}")

    def contains(self, P) -> np.ndarray:
        return self.margin(P) > 0

    def boundary_samples(self, n: int = 64) -> np.ndarray:
        """Homogeneous samples of the boundary (both affine and near-infinity parts)."""
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        ring = np.exp(1j * th)
        rad = np.linspace(0.0, 1.0, max(4, n // 4))
        disc = (rad[:, None] * ring[None, :]).ravel()
        if self.kind == "cone":
            rho = self.params["rho"]
            # max(|w|, |t|) = 1: t = 1 with |w| <= 1, or w = 1 with |t| <= 1
            Z = rho * ring
            A = [np.broadcast_to(Z[:, None], (n, disc.size)), np.broadcast_to(disc[None, :], (n, disc.size)),
                 np.ones((n, disc.size))]
            B = [np.broadcast_to(Z[:, None], (n, disc.size)), np.ones((n, disc.size)),
                 np.broadcast_to(disc[None, :], (n, disc.size))]
            return np.concatenate([np.array(A).reshape(3, -1), np.array(B).reshape(3, -1)], axis=1)
        if self.kind == "complement_w":
            R = self.params["R"]
            Z = 2 * ring
            A = [np.broadcast_to(Z[:, None], (n, disc.size)), np.broadcast_to(disc[None, :], (n, disc.size)),
                 np.full((n, disc.size), 1.0 / R)]
            B = [np.broadcast_to(Z[:, None], (n, disc.size)), np.ones((n, disc.size)),
                 np.broadcast_to(disc[None, :] / R, (n, disc.size))]
            return np.concatenate([np.array(A).reshape(3, -1), np.array(B).reshape(3, -1)], axis=1)
        if self.kind == "custom":
            parts = [self.base.boundary_samples(n)]
            metrics = self.params.get("metrics") or [None] * len(self.params["radii"])
            for (cz, cw), r, M in zip(self.params["centers"], self.params["radii"], metrics):
                parts.append(sphere_samples(cz, cw, r, min(n, 32), M))
            return np.concatenate(parts, axis=1)
        raise PreconditionError(f"unknown trapping region kind {self.kind}")

    def minus_balls(self, centers: Sequence, radii: Sequence[float],
                    metrics: Sequence | None = None) -> "TrappingRegion":
        """Remove closed balls; a metric M makes the ball {|M (x - c)| <= r}."""
        metrics = list(metrics) if metrics is not None else [None] * len(radii)
        if self.kind == "custom":
            old = self.params.get("metrics") or [None] * len(self.params["radii"])
            return TrappingRegion("custom", {"centers": list(self.params["centers"]) + list(centers),
                                             "radii": list(self.params["radii"]) + list(radii),
                                             "metrics": old + metrics}, self.base)
        return TrappingRegion("custom", {"centers": list(centers), "radii": list(radii), "metrics": metrics},
                              self)

    def to_json(self) -> dict:
        params = dict(self.params)
        if "metrics" in params:
            params["metrics"] = [None if M is None else [[[complex(x).real, complex(x).imag] for x in row]
                                                         for row in np.asarray(M)] for M in params["metrics"]]
        if "centers" in params:
            params["centers"] = [[[complex(x).real, complex(x).imag] for x in c] for c in params["centers"]]
        d = {"kind": self.kind, "params": params}
        if self.base is not None:
            d["base"] = self.base.to_json()
        return d


def sphere_samples(cz: complex, cw: complex, r: float, n: int = 64, metric=None) -> np.ndarray:
    """Homogeneous samples of the 3-sphere {|M (x - c)| = r} (M = identity by default)."""
    m = max(3, n // 4)
    th = np.pi / 2 * np.arange(m + 1) / m
    a = np.exp(2j * np.pi * np.arange(n) / n)
    # Hopf-style parameterization: (cos th e^{i a}, sin th e^{i b})
    T, A, B = np.meshgrid(th, a, a, indexing="ij")
    u = (r * np.cos(T) * A).ravel()
    v = (r * np.sin(T) * B).ravel()
    if metric is not None:
        Mi = np.linalg.inv(np.asarray(metric, dtype=complex))
        u, v = Mi[0, 0] * u + Mi[0, 1] * v, Mi[1, 0] * u + Mi[1, 1] * v
    z, w = cz + u, cw + v
    return np.array([z, w, np.ones(z.shape)])
