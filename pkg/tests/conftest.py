import contextlib
import time

import numpy as np
import pytest
from hypothesis import settings

from blenderlab.blender import build_vertical_neighborhoods, certify_repelling_blender, model_map
from blenderlab.cpoly import Polynomial, make_orbit
from blenderlab.planar import triangle_cover

settings.register_profile("blenderlab", max_examples=60, deadline=None)
settings.load_profile("blenderlab")

CUBE_ROOTS = np.exp(2j * np.pi * np.arange(3) / 3)


@pytest.fixture(scope="session")
def cube_cc():
    return triangle_cover(*CUBE_ROOTS)


@pytest.fixture(scope="session")
def q4():
    return Polynomial.monomial(4)


@pytest.fixture(scope="session")
def q4_nb(q4):
    """Vertical neighborhoods of the cube roots for w^4 at l = 2."""
    return build_vertical_neighborhoods(q4, [make_orbit(q4, r, 1) for r in CUBE_ROOTS], 2)


@pytest.fixture(scope="session")
def model_repelling(cube_cc, q4, q4_nb):
    rho = 1 + cube_cc.alpha0
    g = model_map(rho, cube_cc.epsilon0, cube_cc.c, q4, 2, q4_nb)
    return g, certify_repelling_blender(g, cube_cc, q4_nb, rho)


@pytest.fixture(scope="session")
def attractor_system():
    from dataclasses import asdict

    from blenderlab.gallery.attractor import AttractorParams, attractor_build
    return attractor_build(**asdict(AttractorParams.shipped()))


# ------------------------------------------------------ acceptance report

_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """Context manager recording one acceptance clause; a raised exception marks it FAIL."""
    @contextlib.contextmanager
    def rec(n: int, label: str):
        t = time.perf_counter()
        ok = False
        try:
            yield
            ok = True
        finally:
            line = f"criterion {n:2d} [{label}]: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - t:.1f} s)"
            _CRITERIA.setdefault(n, []).append((ok, line))
            print(line)
    return rec


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        for _, line in _CRITERIA[n]:
            terminalreporter.write_line(line)
    for n in sorted(_CRITERIA):
        ok = all(o for o, _ in _CRITERIA[n])
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}")
