"""A skew product over w -> w^7 carrying both a repelling and a saddle blender.

F_l(z, w) = (z + (a1 z + e1 w)(w^3 + 1)/2 - a2 z - e2 w, w^(7^l)).

The factor (w^3 + 1)/2 is 1 at the cube roots of unity r_i and 0 at s_i = -r_i,
so near r_i the first coordinate is about (1 + a1 - a2) z + (e1 - e2) r_i
(repelling, expansion 1 + alpha0) and near s_i, after the rescaling z = u/4,
it is about (1 - a2) u + 4 e2 r_i (contracting, a saddle blender).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from ..blender import (BlenderCertificate, SampleSpec, SkewMap, VerticalGraphSample,
                       VerticalNeighborhoods, _h_eval, blender_intersect, build_vertical_neighborhoods,
                       certify_repelling_blender, certify_saddle_blender, graph_nodes, graph_transform,
                       inverse_branch, slope_of)
from ..certificate import DEFAULT_MARGIN_FLOOR, Certificate
from ..cpoly import BivariatePolynomial, Polynomial, make_orbit
from ..errors import (BlenderLabError, NoAdmissibleBlock, PreconditionError, SearchFailed)
from ..planar import CoveringConstants, Disc, ProductBlock, triangle_cover

Q7 = Polynomial.monomial(7)
CUBE_ROOTS = np.exp(2j * np.pi * np.arange(3) / 3)
SADDLE_SCALE = 0.25


def switch_factor(w):
    """(w^3 + 1)/2: one at the cube roots of unity, zero at their negatives."""
    w = np.asarray(w, dtype=complex)
    return (w ** 3 + 1) / 2


@dataclass(frozen=True)
class DoubleParams:
    alpha1: float
    epsilon1: float
    alpha2: float
    epsilon2: float
    l: int

    def __post_init__(self):
        if not (0.1 > self.alpha1 > self.alpha2 > 0):
            raise PreconditionError(f"need 1/10 > alpha1 > alpha2 > 0, got {self.alpha1}, {self.alpha2}")
        if self.l < 1:
            raise PreconditionError("l must be >= 1")

    @classmethod
    def from_covering(cls, cc: CoveringConstants, l: int) -> "DoubleParams":
        # repelling part: a1 - a2 = alpha0, e1 - e2 = eps0; saddle part after z = u/4: a2 = alpha0, 4 e2 = eps0
        a2 = cc.alpha0
        e2 = cc.epsilon0 * SADDLE_SCALE
        return cls(a2 + cc.alpha0, e2 + cc.epsilon0, a2, e2, l)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def shipped(cls) -> "DoubleParams":
        d = json.loads(resources.files("blenderlab").joinpath("data/double.json").read_text())
        return cls(d["alpha1"], d["epsilon1"], d["alpha2"], d["epsilon2"], d["l"])


def double_map(p: DoubleParams) -> SkewMap:
    a1, e1, a2, e2 = p.alpha1, p.epsilon1, p.alpha2, p.epsilon2
    h = BivariatePolynomial.from_terms({
        (1, 0): 1 - a2 + a1 / 2, (1, 3): a1 / 2,
        (0, 1): e1 / 2 - e2, (0, 4): e1 / 2,
    })
    return SkewMap(h, Q7, p.l, f"F_{p.l}")


@dataclass
class DoubleBlender:
    map: SkewMap
    params: DoubleParams
    cc: CoveringConstants
    nb: VerticalNeighborhoods          # six blocks: r_0..r_2 then s_0..s_2
    repelling: BlenderCertificate
    saddle: BlenderCertificate

    @property
    def nb_repelling(self) -> VerticalNeighborhoods:
        return self.nb.subset([0, 1, 2])

    @property
    def nb_saddle(self) -> VerticalNeighborhoods:
        return self.nb.subset([3, 4, 5])

    @property
    def saddle_map(self) -> SkewMap:
        return self.map.rescaled(SADDLE_SCALE)

    def census(self) -> dict:
        return {"repelling": self.repelling.certificate().failing(),
                "saddle": self.saddle.certificate().failing()}

    def certificate(self) -> Certificate:
        return Certificate.combine("double_blender", [self.repelling.certificate(), self.saddle.certificate()],
                                   {"params": self.params.to_json(), "cc": self.cc.to_json()})


def _six_orbits():
    pts = np.concatenate([CUBE_ROOTS, -CUBE_ROOTS])
    return [make_orbit(Q7, p, 1) for p in pts]


def double_blender_attempt(l: int, cc: CoveringConstants | None = None, params: DoubleParams | None = None,
                           floor: float = DEFAULT_MARGIN_FLOOR, spec: SampleSpec = SampleSpec()) -> DoubleBlender:
    """Build F_l and run both certificates at one l (no search)."""
    cc = cc or triangle_cover(*CUBE_ROOTS)
    p = params or DoubleParams.from_covering(cc, l)
    g = double_map(p)
    nb = build_vertical_neighborhoods(Q7, _six_orbits(), l)
    rep = certify_repelling_blender(g, cc, nb.subset([0, 1, 2]), 1 + p.alpha1 - p.alpha2, floor=floor, spec=spec)
    sad = certify_saddle_blender(g.rescaled(SADDLE_SCALE), cc, nb.subset([3, 4, 5]), 1 - p.alpha2,
                                 floor=floor, spec=spec)
    return DoubleBlender(g, p, cc, nb, rep, sad)


def double_blender_build(l: int | None = None, l_range=(1, 12), cc: CoveringConstants | None = None,
                         alpha1: float | None = None, alpha2: float | None = None,
                         floor: float = DEFAULT_MARGIN_FLOOR) -> DoubleBlender:
    """Smallest l in l_range (or exactly l) at which both certificates pass.

    Explicit alpha1/alpha2 are validated against 1/10 > alpha1 > alpha2 > 0
    before any work is done; the certified values come from the covering
    constants of the cube roots.
    """
    if alpha1 is not None or alpha2 is not None:
        a1 = alpha1 if alpha1 is not None else 0.05
        a2 = alpha2 if alpha2 is not None else 0.0
        if not (0.1 > a1 > a2 > 0):
            raise PreconditionError(f"need 1/10 > alpha1 > alpha2 > 0, got {a1}, {a2}")
    cc = cc or triangle_cover(*CUBE_ROOTS)
    base = DoubleParams.from_covering(cc, 1)
    if alpha1 is not None or alpha2 is not None:
        if abs((alpha1 or base.alpha1) - base.alpha1) > 1e-12 or abs((alpha2 or base.alpha2) - base.alpha2) > 1e-12:
            raise PreconditionError("alpha1 - alpha2 and alpha2 must both equal the covering alpha0")
    ls = [l] if l is not None else list(range(l_range[0], l_range[1] + 1))
    census = {}
    for k in ls:
        try:
            db = double_blender_attempt(k, cc, floor=floor)
        except BlenderLabError as e:
            census[k] = f"{type(e).__name__}: {e}"
            continue
        if db.repelling.passed and db.saddle.passed:
            return db
        census[k] = db.census()
    raise SearchFailed(f"no l in {ls[0]}..{ls[-1]} certifies both blenders", census)


# ---------------------------------------------------------------- cycle check


def saddle_unstable_graph(db: DoubleBlender, start: int = 0, n_relax: int = 30) -> VerticalGraphSample:
    """A local unstable graph (rescaled coordinates) over some U_i.

    Forward graph transforms contract in z inside the saddle blocks, so pushing
    a constant graph along the max-margin itinerary converges to the unstable
    set of a point whose backward orbit stays in the blocks.
    """
    nbs = db.nb_saddle
    gs = db.saddle_map
    unit = Disc(0j, 1.0)
    sigma = VerticalGraphSample.constant(nbs, start, 0j)
    lab = start
    rho = 1 - db.params.alpha2
    shifts = db.cc.epsilon0 * np.asarray(db.cc.c)
    for n in range(n_relax):
        best = None
        for j in range(3):
            nxt = graph_transform(gs, nbs, sigma, lab, j)
            # the shift is set by the source block, so score j by where its own next step lands
            m = min(float(np.min(unit.margin(nxt.values))),
                    float(np.min(unit.margin(rho * nxt.values + shifts[j]))))
            if best is None or m > best[0]:
                best = (m, j, nxt)
        if best[0] <= 0:
            raise NoAdmissibleBlock("saddle relaxation left the blocks", step=n + 1)
        lab, sigma = best[1], best[2]
    return sigma


def push_to_repelling(db: DoubleBlender, sigma_s: VerticalGraphSample):
    """Push a rescaled saddle graph over U_i once into each V_j; keep the best admissible image."""
    i_full = 3 + sigma_s.label
    g = db.map
    nb = db.nb
    nbr = db.nb_repelling
    cc = db.cc.with_rho(1 + db.params.alpha1 - db.params.alpha2)
    best = None
    report = {}
    for j in range(3):
        def ev(w, _j=j):
            u = inverse_branch(nb, i_full, _j, w)
            return _h_eval(g.h, SADDLE_SCALE * sigma_s(u), u)
        w = graph_nodes(nbr, j, len(sigma_s.nodes))
        vals = np.asarray(ev(w), dtype=complex)
        sig = VerticalGraphSample(nbr.regions[j], w, vals, slope_of(w, vals), j, ev)
        m_h = float(np.min(cc.h_regions[j].margin(vals)))
        m_slope = DELTA_CONE - sig.slope_bound
        m = min(m_h, m_slope)
        report[j] = {"h_margin": m_h, "slope": sig.slope_bound}
        if best is None or m > best[0]:
            best = (m, sig)
    if best[0] <= 0:
        raise NoAdmissibleBlock("pushed unstable graph fits no repelling block", step=1, margins=report)
    return best[1], best[0], report


DELTA_CONE = 0.1


def cycle_check(db: DoubleBlender, n_steps: int = 50, n_relax: int = 30,
                floor: float = DEFAULT_MARGIN_FLOOR) -> tuple:
    """Unstable graph of the saddle blender meets the repelling blender: (Certificate, witness)."""
    sigma_s = saddle_unstable_graph(db, 0, n_relax)
    sig, m_push, report = push_to_repelling(db, sigma_s)
    blocks = db.repelling.blocks
    wit = blender_intersect(db.map, db.nb_repelling, blocks, sig, n_steps)
    ok = wit.verify(db.map, blocks)
    subs = [
        Certificate.from_margins("pushed_graph_admissible", np.array([m_push]),
                                 np.array([[sig.values[0], sig.nodes[0]]]), floor,
                                 {"slope_bound": sig.slope_bound, "delta": DELTA_CONE, "per_block": report,
                                  "from_saddle_block": sigma_s.label, "to_repelling_block": sig.label}),
        Certificate.from_margins("witness", np.array([wit.min_margin if ok else -1.0]),
                                 np.array([[wit.z, wit.w]]), 0.0,
                                 {"steps": n_steps, "max_residual": wit.max_residual, "verified": ok}),
    ]
    return Certificate.combine("cycle_check", subs, {"params": db.params.to_json()}), wit
