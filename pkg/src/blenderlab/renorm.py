"""Renormalization calculus near a parabolic periodic point.

A family p_lambda keeps 0 periodic of period m0 with multiplier rho(lambda);
at lambda0 the multiplier is a primitive t0-th root of unity and m1 = m0 t0.
Perturbing by (p_lambda(z) + eps s w, q(w)) and zooming by (z, w) -> (s z, w)
gives an iterate whose first coordinate is, to first order in s,

    rho^{t0 l} z + eps * sum_i b_i sum_k rho^{t0 k} q^{i + (l-1-k) m1}(w).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .blender import ConjugatedH, IteratedH, SkewMap, VerticalNeighborhoods
from .cpoly import (DEFAULT_DEGREE_CAP, BivariatePolynomial, PeriodicOrbit, Polynomial, make_orbit,
                    periodic_points, postcritical_test)
from .errors import NoneFound, OrbitBroken, PreconditionError, WrongRegime
from .planar import CoveringConstants

PERSIST_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ParabolicFamily:
    """p_lambda(z) = sum_k a_k(lambda) z^k with each a_k a polynomial in lambda."""

    coeffs: tuple
    m0: int
    t0: int
    lambda0: complex
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(Polynomial(np.atleast_1d(a.coeffs if isinstance(a, Polynomial) else a))
                                                 for a in self.coeffs))
        if self.m0 < 1 or self.t0 < 1:
            raise PreconditionError("m0 and t0 must be positive")
        rho = multiplier_of_family(self, self.lambda0)
        if abs(abs(rho) - 1) > 1e-10:
            raise PreconditionError(f"|rho(lambda0)| = {abs(rho)} is not 1")
        if abs(rho ** self.t0 - 1) > 1e-10:
            raise PreconditionError("rho(lambda0)^t0 != 1")
        for s in range(1, self.t0):
            if abs(rho ** s - 1) < 1e-8:
                raise PreconditionError(f"rho(lambda0) is not a primitive {self.t0}-th root of unity")

    @property
    def m1(self) -> int:
        return self.m0 * self.t0

    def p(self, lam: complex) -> Polynomial:
        return Polynomial([complex(a(lam)) for a in self.coeffs])

    @classmethod
    def quadratic(cls, t0: int = 3) -> "ParabolicFamily":
        """p_lambda(z) = lambda z + z^2 with lambda0 = exp(2 pi i / t0)."""
        return cls((Polynomial([0.0]), Polynomial([0.0, 1.0]), Polynomial([1.0])), 1, t0,
                   complex(np.exp(2j * np.pi / t0)), "lambda z + z^2")

    def to_json(self) -> dict:
        return {"coeffs": [a.to_json() for a in self.coeffs], "m0": self.m0, "t0": self.t0,
                "lambda0": [self.lambda0.real, self.lambda0.imag], "name": self.name}


def marked_orbit(fam: ParabolicFamily, lam: complex) -> np.ndarray:
    """0, p(0), ..., p^{m0-1}(0); raises OrbitBroken if 0 is not m0-periodic at lam."""
    p = fam.p(lam)
    pts = [0j]
    for _ in range(fam.m0):
        pts.append(complex(p(pts[-1])))
    scale = max(1.0, max(abs(x) for x in pts))
    if abs(pts[-1]) > PERSIST_TOL * scale:
        raise OrbitBroken(f"p^m0(0) = {pts[-1]} at lambda = {lam}")
    return np.array(pts[:-1])


def multiplier_of_family(fam: ParabolicFamily, lam: complex) -> complex:
    p = fam.p(lam)
    dp = p.derivative()
    return complex(np.prod(dp(marked_orbit(fam, lam))))


def b_coeffs(fam: ParabolicFamily, lam: complex, i_range: tuple | None = None) -> dict:
    """b_i = (p^{m1-i-1})'(p^{i+1}(0)) on 0..m1-1, extended by b_i = rho b_{i+m0}."""
    m1, m0 = fam.m1, fam.m0
    lo, hi = i_range if i_range is not None else (0, m1 - 1)
    if lo < -m1 or hi > 2 * m1:
        raise PreconditionError("i_range must lie within [-m1, 2 m1]")
    orb = marked_orbit(fam, lam)
    dp = fam.p(lam).derivative()
    ders = np.array([complex(dp(orb[k % m0])) for k in range(m1)])
    b = {}
    for i in range(m1):
        b[i] = complex(np.prod(ders[i + 1:m1]))
    rho = complex(np.prod(ders[:m0]))
    for i in range(-1, lo - 1, -1):
        b[i] = rho * b[i + m0]
    for i in range(m1, hi + 1):
        b[i] = b[i - m0] / rho
    return {i: b[i] for i in range(lo, hi + 1)}


def _q_orbit(q: Polynomial, w, n: int) -> list:
    out = [np.asarray(w, dtype=complex)]
    for _ in range(n):
        out.append(q(out[-1]))
    return out


def c_function(fam: ParabolicFamily, q: Polynomial, lam: complex | None = None):
    """The scalar function c(w) = sum_i b_i q^i(w)."""
    lam = fam.lambda0 if lam is None else lam
    b = b_coeffs(fam, lam)
    bs = np.array([b[i] for i in range(fam.m1)])

    def c(w):
        orb = _q_orbit(q, w, fam.m1 - 1)
        return sum(bs[i] * orb[i] for i in range(fam.m1))

    return c


def c_values(fam: ParabolicFamily, q: Polynomial, r: Sequence[complex], lam: complex | None = None,
             check: bool = True) -> np.ndarray:
    r = np.asarray(r, dtype=complex)
    if check:
        res = np.abs(q.iterate_eval(r, fam.m1) - r)
        if np.any(res > 1e-8 * np.maximum(1, np.abs(r))):
            raise PreconditionError("inputs are not period-m1 points of q")
    return np.asarray(c_function(fam, q, lam)(r))


def renorm_recursion(fam: ParabolicFamily, lam: complex, q: Polynomial, epsilon: complex, k: int):
    """(g_{k,0}, g_{k,1}): order-0 and order-1 coefficients in s."""
    if k < 0:
        raise PreconditionError("k must be >= 0")
    p = fam.p(lam)
    dp = p.derivative()
    g0 = [0j]
    for _ in range(k):
        g0.append(complex(p(g0[-1])))
    ders = [complex(dp(x)) for x in g0[:-1]]

    def g1(z, w):
        z = np.asarray(z, dtype=complex)
        ww = np.asarray(w, dtype=complex)
        acc = z * np.ones(np.broadcast_shapes(z.shape, ww.shape))
        for j in range(k):
            acc = acc * ders[j] + epsilon * ww
            ww = q(ww)
        return acc

    return g0[-1], g1


def closed_form_iterate(fam: ParabolicFamily, lam: complex, q: Polynomial, epsilon: complex, l: int):
    """w -> rho^{t0 l} z + eps sum_i b_i sum_k rho^{t0 k} q^{i + (l-1-k) m1}(w)."""
    if l < 1:
        raise PreconditionError("l must be >= 1")
    m1, t0 = fam.m1, fam.t0
    b = b_coeffs(fam, lam)
    R = multiplier_of_family(fam, lam) ** t0

    def f(z, w):
        z = np.asarray(z, dtype=complex)
        orb = _q_orbit(q, w, m1 * l - 1)
        tot = 0j
        for i in range(m1):
            inner = 0j
            for k in range(l):
                inner = inner + R ** k * orb[i + (l - 1 - k) * m1]
            tot = tot + b[i] * inner
        return R ** l * z + epsilon * tot

    return f


def base_map(fam: ParabolicFamily, lam: complex, q: Polynomial, coupling: complex) -> SkewMap:
    """f(z, w) = (p_lambda(z) + coupling * w, q(w))."""
    terms = {(k, 0): a for k, a in enumerate(fam.p(lam).coeffs)}
    terms[(0, 1)] = terms.get((0, 1), 0) + coupling
    return SkewMap(BivariatePolynomial.from_terms(terms), q, 1, f"p_lambda(z) + {coupling:.3g} w")


def direct_first_coordinate(fam, lam, q, epsilon, s, k: int, z, w):
    """First coordinate of f^k(s z, w) with f = (p(z) + eps s w, q(w)), by plain iteration."""
    p = fam.p(lam)
    zz = s * np.asarray(z, dtype=complex)
    ww = np.asarray(w, dtype=complex)
    zz, ww = np.broadcast_arrays(zz, ww)
    zz = zz.astype(complex)
    ww = ww.astype(complex)
    for _ in range(k):
        zz, ww = p(zz) + epsilon * s * ww, q(ww)
    return zz


def finite_difference_g1(fam, lam, q, epsilon, k, z, w, h: float = 1e-6, richardson: bool = False):
    def D(step):
        return (direct_first_coordinate(fam, lam, q, epsilon, step, k, z, w)
                - direct_first_coordinate(fam, lam, q, epsilon, -step, k, z, w)) / (2 * step)
    if richardson:
        return (4 * D(h / 2) - D(h)) / 3
    return D(h)


def renormalized_map(fam: ParabolicFamily, lam: complex, q: Polynomial, epsilon: complex, s: float,
                     l: int) -> SkewMap:
    """The (m1 l)-th iterate of f = (p(z) + eps s w, q(w)) conjugated by (z, w) -> (s z, w)."""
    f = base_map(fam, lam, q, epsilon * s)
    n = fam.m1 * l
    return SkewMap(ConjugatedH(IteratedH(f, n), s), q, n, f"renormalized iterate n={n}, s={s:.3g}")


@dataclass
class RenormPlan:
    l_n: int
    epsilon_n: complex
    beta_n: complex
    rho_n: complex
    s_cap: float
    C_n_bound: float
    lambda_n: complex = 0j
    regime: str = "repelling"
    delta_plan: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    C: float = 1.0
    R_n: float | None = None
    residual_at_cap: float = 0.0

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, complex):
                d[k] = [v.real, v.imag]
        return d


def choose_l(R: complex, target: float, l_min: int = 1, l_max: int = 10 ** 6) -> int:
    """Integer l minimizing | |R|^l - target |."""
    aR = abs(R)
    if aR == 1:
        raise PreconditionError("|rho^t0| = 1: no l reaches the target modulus")
    x = math.log(target) / math.log(aR)
    cands = {max(l_min, min(l_max, int(math.floor(x)) + d)) for d in (-1, 0, 1, 2)}
    return min(sorted(cands), key=lambda l: abs(aR ** l - target))


def _c_const(fam, lam, q, nb: VerticalNeighborhoods, l: int, a1: float, a2: float) -> float:
    """Smallest C >= 1 with |q^{i+(l-1-k)m1}(w) - q^i(r_j)| <= C a1 a2^{k+1} and sum |b_i| <= C."""
    m1 = fam.m1
    b = b_coeffs(fam, lam)
    C = max(1.0, sum(abs(b[i]) for i in range(m1)))
    for j in range(nb.n_blocks):
        ws = nb.sample(j, 3, 8, 64)
        orb = _q_orbit(q, ws, m1 * l - 1)
        rorb = _q_orbit(q, nb.base_points[j], m1 - 1)
        for i in range(m1):
            for k in range(l):
                d = np.abs(orb[i + (l - 1 - k) * m1] - rorb[i]).max()
                C = max(C, float(d / (a1 * a2 ** (k + 1))))
    return C


def _block_samples(nb: VerticalNeighborhoods, n_z: int = 48):
    th = 2 * np.pi * np.arange(n_z) / n_z
    zs = np.concatenate([[0j], 1.0 * np.exp(1j * th), 2.0 * np.exp(1j * th)])
    ws = np.concatenate([nb.sample(j, 3, 8, 48) for j in range(nb.n_blocks)])
    return zs[:, None], ws[None, :]


def perturbation_plan(fam: ParabolicFamily, lambda_n: complex, cc: CoveringConstants, regime: str,
                      q: Polynomial | None = None, nb: VerticalNeighborhoods | None = None,
                      delta_plan: float | None = None, l_min: int = 1) -> RenormPlan:
    """Constants l_n, eps_n, rho_n, C_n, s_cap and beta_n = eps_n s_cap.

    When q and the neighborhoods are supplied, s_cap is the largest s in (0, 1)
    with sampled |s E| <= delta_plan / 2 (bisection in log s).
    """
    rho = multiplier_of_family(fam, lambda_n)
    if regime not in ("repelling", "saddle"):
        raise PreconditionError("regime must be repelling or saddle")
    if abs(abs(rho) - 1) < 1e-12:
        raise WrongRegime("|rho(lambda_n)| = 1: the parabolic parameter itself is in neither regime")
    if (regime == "repelling") != (abs(rho) > 1):
        raise WrongRegime(f"|rho(lambda_n)| = {abs(rho):.6g} contradicts regime {regime}")
    R = rho ** fam.t0
    if abs(R - 1) < 1e-15:
        raise PreconditionError("rho(lambda_n)^t0 = 1")
    target = 1 + cc.alpha0 if regime == "repelling" else 1 - cc.alpha0
    l = choose_l(R, target, l_min)
    Rl = R ** l
    eps = cc.epsilon0 * (R - 1) / (Rl - 1)
    rho_n = target * Rl / abs(Rl)
    plan = RenormPlan(l, complex(eps), 0j, complex(rho_n), 0.0, float("nan"), complex(lambda_n), regime,
                      cc.alpha0 if delta_plan is None else delta_plan)
    if nb is None or q is None:
        return plan
    a1, a2 = nb.fit
    C = _c_const(fam, lambda_n, q, nb, l, a1, a2)
    x = a2 * abs(R)
    geom = l if abs(x - 1) < 1e-15 else (x ** l - 1) / (x - 1)
    plan.a1, plan.a2, plan.C = a1, a2, C
    plan.C_n_bound = float(C * C * a1 * a2 * abs(eps) * geom)
    Z, W = _block_samples(nb)
    closed = closed_form_iterate(fam, lambda_n, q, eps, l)(Z, W)

    def resid(s):
        d = direct_first_coordinate(fam, lambda_n, q, eps, s, fam.m1 * l, Z, W) / s
        return float(np.nanmax(np.abs(d - closed))) if np.all(np.isfinite(d)) else np.inf

    budget = plan.delta_plan / 2
    lo, hi = -12.0, 0.0
    if resid(1.0) <= budget:
        lo = 0.0
    else:
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            if resid(10 ** mid) <= budget:
                lo = mid
            else:
                hi = mid
    plan.s_cap = float(10 ** lo)
    plan.residual_at_cap = resid(plan.s_cap)
    plan.beta_n = complex(eps * plan.s_cap)
    return plan


def assembled_map(fam: ParabolicFamily, plan: RenormPlan, q: Polynomial, alpha: float = 0.5):
    """f_{n,alpha} = (p_{lambda_n}(z) + alpha beta_n w, q(w)) and its renormalized (m1 l_n)-th iterate."""
    f = base_map(fam, plan.lambda_n, q, alpha * plan.beta_n)
    s = alpha * plan.s_cap
    g = renormalized_map(fam, plan.lambda_n, q, plan.epsilon_n, s, plan.l_n)
    return f, g, s


def good_triple_search(q: Polynomial, fam: ParabolicFamily, strict: bool = True,
                       c_floor_rel: float = 1e-3, degree_cap: int = DEFAULT_DEGREE_CAP,
                       pc_steps: int = 64):
    """Three points r, q^{m0}(r), q^{2 m0}(r) of a repelling period-m1 cycle with c-values
    forming a non-degenerate equilateral triangle centered at 0."""
    if fam.t0 != 3:
        raise PreconditionError("good triples need t0 = 3")
    if strict and fam.m0 < 2:
        raise PreconditionError("good triples need m0 >= 2 (pass strict=False to allow m0 = 1)")
    m1, m0 = fam.m1, fam.m0
    orbits = [o for o in periodic_points(q, m1, degree_cap) if o.period == m1]
    census = {"candidates": 0, "non_repelling": 0, "postcritical": 0, "c_small": 0}
    cands = []
    for o in orbits:
        for pt in o.points:
            census["candidates"] += 1
            if o.classification != "repelling":
                census["non_repelling"] += 1
                continue
            if postcritical_test(q, pt, pc_steps):
                census["postcritical"] += 1
                continue
            cands.append(complex(pt))
    if not cands:
        raise NoneFound("no repelling non-postcritical period-m1 point", census)
    cvals = np.abs(c_values(fam, q, cands))
    floor = c_floor_rel * cvals.max()
    ok = cvals > floor
    census["c_small"] = int((~ok).sum())
    if not ok.any():
        raise NoneFound("every candidate has c(r) ~ 0", census)
    best = int(np.argmax(np.where(ok, cvals, -np.inf)))
    r = cands[best]
    pts = [r]
    for _ in range(2):
        pts.append(complex(q.iterate_eval(pts[-1], m0)))
    trio = tuple(make_orbit(q, x, m1) for x in pts)
    c = c_values(fam, q, pts)
    scale = max(1.0, float(np.abs(c).max()))
    if abs(c.sum()) > 1e-8 * scale or np.ptp(np.abs(c)) > 1e-8 * scale:
        raise NoneFound("c-values do not form an equilateral triangle", census)
    return trio, tuple(complex(x) for x in c)
