"""Rasters of invariant sets: forward pushes of a seed grid, or escape times."""
from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..certificate import worker_count, write_atomic
from ..errors import PreconditionError

MAX_RESOLUTION = 4096
MODES = ("attracting_forward", "escape_time")


@dataclass(frozen=True)
class View:
    """Pixel plane [x0, x1] x [y0, y1] and its link to the map's state space.

    lift(c) turns complex pixel centres c = x + iy into states, project(state)
    returns the complex plane coordinate of a state.
    """

    x_range: tuple
    y_range: tuple
    lift: Callable = staticmethod(lambda c: c)
    project: Callable = staticmethod(lambda s: s)
    name: str = "plane"

    def centres(self, res: int) -> np.ndarray:
        xs = self.x_range[0] + (np.arange(res) + 0.5) * (self.x_range[1] - self.x_range[0]) / res
        # row 0 is the top of the image
        ys = self.y_range[1] - (np.arange(res) + 0.5) * (self.y_range[1] - self.y_range[0]) / res
        return (xs[None, :] + 1j * ys[:, None]).ravel()

    def pixel_of(self, c: np.ndarray, res: int):
        """(row, col, valid) of plane points."""
        with np.errstate(all="ignore"):
            col = np.floor((c.real - self.x_range[0]) / (self.x_range[1] - self.x_range[0]) * res)
            row = np.floor((self.y_range[1] - c.imag) / (self.y_range[1] - self.y_range[0]) * res)
        ok = np.isfinite(col) & np.isfinite(row) & (col >= 0) & (col < res) & (row >= 0) & (row < res)
        return np.where(ok, row, 0).astype(np.int64), np.where(ok, col, 0).astype(np.int64), ok


def pencil_view(y_half: float = 0.004) -> View:
    """P^2 near the line X = {z = 0}: x = arg(w / t), y = Re(z / max(|w|, |t|)).

    Seeds are [y : e^{ix} : 1]."""
    def lift(c):
        return np.array([c.imag.astype(complex), np.exp(1j * c.real), np.ones(c.shape, dtype=complex)])

    def project(P):
        P = np.asarray(P)
        m = np.maximum(np.abs(P[1]), np.abs(P[2]))
        with np.errstate(all="ignore"):
            y = (P[0] / m).real
        return np.angle(P[1] * np.conj(P[2])) + 1j * y

    return View((-np.pi, np.pi), (-y_half, y_half), lift, project, "pencil")


def _take(state, idx):
    s = np.asarray(state)
    return s[..., idx] if s.ndim > 1 else s[idx]


def _chunks(n: int, k: int):
    step = max(1, -(-n // k))
    return [(a, min(n, a + step)) for a in range(0, n, step)]


def render_invariant_set(f, region, iterations: int, resolution: int, mode: str = "attracting_forward",
                         view: View | None = None, burn_in: int | None = None,
                         escape_region=None) -> np.ndarray:
    """Hit counts (attracting_forward) or escape times (escape_time), shape (res, res), int64.

    region: seeds are the pixel centres inside it (anything with a margin method, or None).
    escape_time counts the iterates spent inside escape_region (default: region).
    """
    if mode not in MODES:
        raise PreconditionError(f"unknown render mode {mode!r}")
    if not isinstance(resolution, (int, np.integer)) or not 1 <= resolution <= MAX_RESOLUTION:
        raise PreconditionError(f"resolution must be in 1..{MAX_RESOLUTION}")
    if iterations < 0:
        raise PreconditionError("iterations must be >= 0")
    view = view or View((-2.0, 2.0), (-2.0, 2.0))
    res = int(resolution)
    c = view.centres(res)
    seeds = view.lift(c)
    inside = np.ones(c.shape, dtype=bool) if region is None else np.asarray(region.margin(seeds)) > 0
    idx = np.flatnonzero(inside)
    parts = _chunks(idx.size, worker_count() * 4)

    if mode == "attracting_forward":
        start = iterations // 2 if burn_in is None else burn_in

        def work(ab):
            a, b = ab
            s = _take(seeds, idx[a:b])
            hits = np.zeros(res * res, dtype=np.int64)
            for k in range(1, iterations + 1):
                s = f(s)
                if k >= start:
                    r, col, ok = view.pixel_of(view.project(s), res)
                    np.add.at(hits, (r * res + col)[ok], 1)
            return hits

        with ThreadPoolExecutor(worker_count()) as ex:
            out = sum(ex.map(work, parts), np.zeros(res * res, dtype=np.int64))
        return out.reshape(res, res)

    bound = escape_region if escape_region is not None else region
    if bound is None:
        raise PreconditionError("escape_time needs a bounding region")

    def work_e(ab):
        a, b = ab
        s = _take(seeds, idx[a:b])
        t = np.zeros(b - a, dtype=np.int64)
        alive = np.ones(b - a, dtype=bool)
        for _ in range(iterations):
            with np.errstate(all="ignore"):
                s = f(s)
            alive &= np.asarray(bound.margin(s)) > 0
            t += alive
        return t

    out = np.zeros(res * res, dtype=np.int64)
    with ThreadPoolExecutor(worker_count()) as ex:
        for (a, b), t in zip(parts, ex.map(work_e, parts)):
            out[idx[a:b]] = t
    return out.reshape(res, res)


def to_rgb(counts: np.ndarray, log: bool = True) -> np.ndarray:
    """Grey-scale RGB bytes; zero stays black."""
    v = counts.astype(float)
    if log:
        v = np.log1p(v)
    top = v.max()
    g = np.zeros(v.shape, dtype=np.uint8) if top <= 0 else np.round(255 * v / top).astype(np.uint8)
    g[(counts > 0) & (g == 0)] = 1
    return np.repeat(g[:, :, None], 3, axis=2)


def ppm_bytes(rgb: np.ndarray) -> bytes:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise PreconditionError("PPM needs an (h, w, 3) array")
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def write_ppm(path, rgb: np.ndarray):
    return write_atomic(path, ppm_bytes(rgb))


def read_ppm(path) -> np.ndarray:
    data = open(path, "rb").read()
    # exactly one whitespace byte follows maxval; pixel bytes may themselves look like whitespace
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+255\s", data)
    if m is None:
        raise PreconditionError("not a binary 8-bit PPM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=m.end()).reshape(h, w, 3)


def band_width(counts: np.ndarray, row: int | None = None) -> int:
    """Width of the solid band of lit rows around `row` (default: middle) lit in every column."""
    h = counts.shape[0]
    lit = np.all(counts > 0, axis=1)
    # with an even height the middle line runs between rows h/2 - 1 and h/2
    cands = [row] if row is not None else ([h // 2] if h % 2 else [h // 2 - 1, h // 2])
    hits = [r for r in cands if lit[r]]
    if not hits:
        return 0
    c = hits[0]
    lo = c
    while lo > 0 and lit[lo - 1]:
        lo -= 1
    hi = c
    while hi < h - 1 and lit[hi + 1]:
        hi += 1
    return hi - lo + 1
