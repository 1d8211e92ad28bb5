"""Command-line entry points.

Exit codes: 0 pass, 1 failed certificate, 2 usage or parse error, 3 degree cap,
4 search exhausted or wrong regime, 5 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .blender import (VerticalGraphSample, blender_intersect, build_vertical_neighborhoods,
                      certify_repelling_blender, certify_saddle_blender, model_map)
from .certificate import DEFAULT_MARGIN_FLOOR, RunConfig, dumps, validate, write_atomic
from .cpoly import (DEFAULT_DEGREE_CAP, DEFAULT_SEED, parse_polynomial, periodic_points,
                    postcritical_test)
from .errors import BlenderLabError, PreconditionError, SearchFailed, WrongRegime
from .planar import triangle_cover

log = logging.getLogger("blenderlab")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_CAP, EXIT_SEARCH, EXIT_IO = 0, 1, 2, 3, 4, 5
CUBE_ROOTS = np.exp(2j * np.pi * np.arange(3) / 3)


class Stage(Exception):
    """Wraps a library error with the pipeline stage it came from."""

    def __init__(self, stage: str, err: BlenderLabError):
        super().__init__(f"[{stage}] {type(err).__name__}: {err}")
        self.stage = stage
        self.err = err
        self.exit_code = getattr(err, "exit_code", EXIT_FAIL)


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except BlenderLabError as e:
        raise Stage(name, e) from e


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError as e:
        raise PreconditionError(f"not a complex number: {text!r}") from e


def _l_range(text: str) -> tuple:
    try:
        a, _, b = text.partition(":")
        lo, hi = int(a), int(b or a)
    except ValueError as e:
        raise PreconditionError(f"--l-range wants LO:HI, got {text!r}") from e
    if not 1 <= lo <= hi:
        raise PreconditionError("--l-range needs 1 <= LO <= HI")
    return lo, hi


def _config(args) -> RunConfig:
    return RunConfig(margin_floor=args.margin, grid_n=args.grid, seed=args.seed,
                     degree_cap=getattr(args, "degree_cap", DEFAULT_DEGREE_CAP), out_dir=args.out)


def _write_cert(out: Path, name: str, cert, seed: int) -> dict:
    cert.seed = seed
    for s in _walk(cert):
        s.seed = seed
    data = cert.to_json()
    validate(data)
    write_atomic(out / name, dumps(data))
    return data


def _walk(cert):
    for s in cert.sub_certificates:
        yield s
        yield from _walk(s)


def _write_json(out: Path, name: str, obj):
    write_atomic(out / name, dumps(obj))


# ------------------------------------------------------------------ periodic


def cmd_periodic(args) -> int:
    q = parse_polynomial(args.q)
    orbits = periodic_points(q, args.m, args.degree_cap, args.seed)
    rows = []
    print(f"{'point':>44}  period  {'|multiplier|':>14}  class")
    for o in orbits:
        for k, z in enumerate(o.points):
            if k:
                continue
            print(f"{z.real:+.15f} {z.imag:+.15f}i  {o.period:6d}  {abs(o.multiplier):14.10g}  {o.classification}")
        rows.append(o.to_json())
    print(f"{len(orbits)} orbits")
    _write_json(Path(args.out), "periodic.json", {"q": args.q, "m": args.m, "orbits": rows})
    return EXIT_PASS


# ------------------------------------------------------------------ blender


def _model_blender(args, cfg) -> int:
    out = Path(args.out)
    q = parse_polynomial(args.q)
    orbits = [o for o in _stage("periodic", periodic_points, q, 1, cfg.degree_cap, cfg.seed)
              if o.classification == "repelling" and not postcritical_test(q, o.points[0], 64)]
    if len(orbits) < 3:
        raise Stage("periodic", SearchFailed("fewer than three repelling non-postcritical fixed points"))
    orbits = orbits[:3]
    cc = _stage("triangle_cover", triangle_cover, *CUBE_ROOTS)
    rho = complex(args.rho) if args.rho is not None else (
        1 + cc.alpha0 if args.regime == "repelling" else 1 - cc.alpha0)
    if (args.regime == "repelling") != (abs(rho) > 1):
        raise Stage("regime", WrongRegime(f"|rho| = {abs(rho):.6g} contradicts regime {args.regime}"))
    lo, hi = _l_range(args.l_range)
    census = {}
    for l in range(lo, hi + 1):
        try:
            nb = build_vertical_neighborhoods(q, orbits, l)
        except BlenderLabError as e:
            census[l] = f"{type(e).__name__}: {e}"
            continue
        g = model_map(rho, cc.epsilon0, cc.c, q, l, nb)
        certify = certify_repelling_blender if args.regime == "repelling" else certify_saddle_blender
        bc = _stage("certify", certify, g, cc, nb, rho, floor=cfg.margin_floor)
        if not bc.passed:
            census[l] = bc.certificate().failing()
            continue
        cert = bc.certificate(cfg.seed)
        cert.params["l"] = l
        _write_cert(out, "certificate.json", cert, cfg.seed)
        sigma = VerticalGraphSample.constant(nb, 0, 0j)
        write_atomic(out / "graph.csv", sigma.to_csv())
        if args.regime == "repelling":
            wit = _stage("blender_intersect", blender_intersect, g, nb, bc.blocks, sigma, 50)
            _write_json(out, "witness.json", wit.to_json() | {"verified": wit.verify(g, bc.blocks)})
        print(cert.summary())
        print(f"certified at l = {l}")
        return EXIT_PASS
    raise Stage("search", SearchFailed(f"no l in {lo}..{hi} certifies", census))


def _gallery_cycle(args, cfg) -> int:
    from .gallery.double import cycle_check, double_blender_build
    out = Path(args.out)
    lo, hi = _l_range(args.l_range)
    db = _stage("double_blender_build", double_blender_build, None, (lo, hi), floor=cfg.margin_floor)
    cert, wit = _stage("cycle_check", cycle_check, db, floor=cfg.margin_floor)
    _write_cert(out, "double_blender.json", db.certificate(), cfg.seed)
    _write_cert(out, "cycle_check.json", cert, cfg.seed)
    _write_json(out, "witness.json", wit.to_json() | {"verified": wit.verify(db.map, db.repelling.blocks)})
    print(db.certificate().summary())
    print(cert.summary())
    return EXIT_PASS if db.repelling.passed and db.saddle.passed and cert.passed else EXIT_FAIL


def _gallery_attractor(args, cfg) -> int:
    from dataclasses import asdict

    from .gallery.attractor import AttractorParams, attractor_build, attractor_certify
    p = AttractorParams.shipped()
    sys_ = _stage("attractor_build", attractor_build, **asdict(p))
    cert = _stage("attractor_certify", attractor_certify, sys_, cfg.margin_floor)
    _write_cert(Path(args.out), "attractor.json", cert, cfg.seed)
    print(cert.summary())
    return EXIT_PASS if cert.passed else EXIT_FAIL


def _gallery_henon(args, cfg) -> int:
    from .gallery.henon import henon_pipeline
    res = _stage("henon", henon_pipeline, None, cfg.margin_floor)
    cert = res["certificate"]
    _write_cert(Path(args.out), "henon.json", cert, cfg.seed)
    print(cert.summary())
    print(f"repelling cycles found: {len(res['repelling'])} of {len(res['cycles'])}")
    return EXIT_PASS if cert.passed else EXIT_FAIL


def cmd_blender(args) -> int:
    cfg = _config(args)
    if args.gallery == "cycle":
        return _gallery_cycle(args, cfg)
    if args.gallery == "attractor":
        return _gallery_attractor(args, cfg)
    if args.gallery == "henon":
        return _gallery_henon(args, cfg)
    if args.model:
        return _model_blender(args, cfg)
    raise PreconditionError("blender needs --model or --gallery")


# ---------------------------------------------------------------- theorem41


def cmd_theorem41(args) -> int:
    from .renorm import ParabolicFamily, assembled_map, good_triple_search, perturbation_plan
    cfg = _config(args)
    out = Path(args.out)
    if args.family != "quadratic":
        raise PreconditionError(f"unknown family {args.family!r} (known: quadratic)")
    fam = ParabolicFamily.quadratic()
    q = parse_polynomial(args.q)
    lam = _complex(args.lambda_n) if args.lambda_n else (
        (1 + 1e-3 if args.regime == "repelling" else 1 - 1e-3) * fam.lambda0)
    trio, c = _stage("good_triple_search", good_triple_search, q, fam, strict=False,
                     degree_cap=cfg.degree_cap)
    cc = _stage("triangle_cover", triangle_cover, *c)
    p0 = _stage("perturbation_plan", perturbation_plan, fam, lam, cc, args.regime)
    nb = _stage("build_vertical_neighborhoods", build_vertical_neighborhoods, q, trio, p0.l_n)
    plan = _stage("perturbation_plan", perturbation_plan, fam, lam, cc, args.regime, q, nb)
    _, g, s = _stage("assembled_map", assembled_map, fam, plan, q)
    certify = certify_repelling_blender if args.regime == "repelling" else certify_saddle_blender
    bc = _stage("certify", certify, g, cc, nb, plan.rho_n, floor=cfg.margin_floor)
    cert = bc.certificate(cfg.seed)
    cert.params.update({"s": s, "family": fam.to_json()})
    subs = [cert]
    if args.regime == "repelling" and bc.passed:
        sigma = VerticalGraphSample.constant(nb, 0, 0j)
        wit = _stage("blender_intersect", blender_intersect, g, nb, bc.blocks, sigma, 50)
        ok = wit.verify(g, bc.blocks)
        _write_json(out, "witness.json", wit.to_json() | {"verified": ok})
        write_atomic(out / "graph.csv", sigma.to_csv())
        from .certificate import Certificate
        subs.append(Certificate.from_margins("witness", np.array([wit.min_margin if ok else -1.0]),
                                             np.array([[wit.z, wit.w]]), 0.0,
                                             {"steps": 50, "max_residual": wit.max_residual}))
    from .certificate import Certificate
    top = Certificate.combine("theorem41", subs, {"regime": args.regime})
    _write_json(out, "plan.json", plan.to_json())
    _write_cert(out, "certificate.json", top, cfg.seed)
    print(top.summary())
    return EXIT_PASS if top.passed else EXIT_FAIL


# ------------------------------------------------------------------- render


def cmd_render(args) -> int:
    from .gallery.render import MAX_RESOLUTION, View, pencil_view, render_invariant_set, to_rgb, write_ppm
    from .planar import Disc
    if not 1 <= args.resolution <= MAX_RESOLUTION:
        raise PreconditionError(f"--resolution must be in 1..{MAX_RESOLUTION}")
    if args.gallery == "attractor":
        from dataclasses import asdict

        from .gallery.attractor import AttractorParams, attractor_build
        sys_ = attractor_build(**asdict(AttractorParams.shipped()))
        counts = render_invariant_set(sys_.f, sys_.U, args.iterations, args.resolution, "attracting_forward",
                                      pencil_view(args.y_half))
    elif args.gallery == "henon":
        from .gallery.henon import HenonParams
        from .gallery.projective import TrappingRegion
        hp = HenonParams.shipped()
        f = hp.build()
        U = TrappingRegion("complement_w", {"R": hp.R})
        v = View((-3.0, 3.0), (-3.0, 3.0),
                 lambda c: np.array([c, np.zeros(c.shape, dtype=complex), np.ones(c.shape, dtype=complex)]),
                 _affine_z, "henon z-slice")
        counts = render_invariant_set(f, U, args.iterations, args.resolution, args.mode, v)
    else:
        q = parse_polynomial(args.q)
        counts = render_invariant_set(q, Disc(0j, 2.0), args.iterations, args.resolution, args.mode,
                                      View((-2.0, 2.0), (-2.0, 2.0)), escape_region=Disc(0j, 2.0))
    path = Path(args.out)
    if path.suffix != ".ppm":
        path = path / "render.ppm"
    write_ppm(path, to_rgb(counts))
    print(f"wrote {path} ({args.resolution}x{args.resolution}, {int((counts > 0).sum())} lit pixels)")
    return EXIT_PASS


def _affine_z(P):
    with np.errstate(all="ignore"):
        return P[0] / P[2]


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blenderlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"blenderlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default="out"):
        p.add_argument("--margin", type=float, default=DEFAULT_MARGIN_FLOOR, help="certificate margin floor")
        p.add_argument("--grid", type=int, default=256)
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--degree-cap", type=int, default=DEFAULT_DEGREE_CAP)
        p.add_argument("--out", default=out_default)
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("periodic", help="periodic points of a polynomial")
    p.add_argument("--q", required=True)
    p.add_argument("--m", type=int, default=1)
    common(p)
    p.set_defaults(fn=cmd_periodic)

    p = sub.add_parser("blender", help="certify a blender (model self-test or a gallery system)")
    p.add_argument("--q", default="w^4")
    p.add_argument("--model", action="store_true")
    p.add_argument("--gallery", choices=["attractor", "cycle", "henon"])
    p.add_argument("--regime", choices=["repelling", "saddle"], default="repelling")
    p.add_argument("--rho", type=_complex, default=None, help="override the model multiplier")
    p.add_argument("--l-range", default="1:12")
    common(p)
    p.set_defaults(fn=cmd_blender)

    p = sub.add_parser("theorem41", help="renormalization pipeline for a parabolic family")
    p.add_argument("--family", default="quadratic")
    p.add_argument("--q", default="w^2")
    p.add_argument("--lambda", dest="lambda_n", default=None, help="perturbed parameter, e.g. '-0.5+0.866i'")
    p.add_argument("--regime", choices=["repelling", "saddle"], default="repelling")
    common(p)
    p.set_defaults(fn=cmd_theorem41)

    p = sub.add_parser("render", help="raster of an invariant set (binary PPM)")
    p.add_argument("--q", default="w^4")
    p.add_argument("--gallery", choices=["attractor", "henon"])
    p.add_argument("--mode", choices=["attracting_forward", "escape_time"], default="escape_time")
    p.add_argument("--resolution", type=int, default=512)
    p.add_argument("--iterations", type=int, default=32)
    p.add_argument("--y-half", type=float, default=0.004, help="half height of the attractor view")
    common(p, "out/render.ppm")
    p.set_defaults(fn=cmd_render)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except Stage as e:
        log.error(str(e))
        if getattr(e.err, "census", None):
            log.error("census: %s", json.dumps(e.err.census, default=str))
        return e.exit_code
    except BlenderLabError as e:
        log.error("%s: %s", type(e).__name__, e)
        return getattr(e, "exit_code", EXIT_FAIL)
    except ValueError as e:
        log.error("usage: %s", e)
        return EXIT_USAGE
    except OSError as e:
        log.error("I/O failure: %s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
