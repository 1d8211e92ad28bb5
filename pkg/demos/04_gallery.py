"""Tour of the gallery systems: the double blender, the attractor and the Henon map.

Each build takes around half a minute. Pass a subset of names to run fewer:
    python3 demos/04_gallery.py double henon
"""
import sys
from dataclasses import asdict

from blenderlab.gallery.attractor import AttractorParams, attractor_build, attractor_certify
from blenderlab.gallery.double import cycle_check, double_blender_build
from blenderlab.gallery.henon import henon_pipeline

which = set(sys.argv[1:]) or {"double", "attractor", "henon"}

if "double" in which:
    # a repelling and a saddle blender in one skew product, joined by a cycle
    db = double_blender_build()
    cert, wit = cycle_check(db)
    print(db.certificate().summary())
    print(cert.summary())
    print(f"heteroclinic witness itinerary: {wit.itinerary[:12]}...\n")

if "attractor" in which:
    s = attractor_build(**asdict(AttractorParams.shipped()))
    print(f"degree of f: 4^{s.params.l * s.params.N + s.params.l_tilde}")
    print(attractor_certify(s).summary(), "\n")

if "henon" in which:
    res = henon_pipeline()
    print(res["certificate"].summary())
    print(f"repelling cycles found: {len(res['repelling'])} of {len(res['cycles'])}")
