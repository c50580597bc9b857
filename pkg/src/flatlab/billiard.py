"""Billiards in rational polygons, close returns and the recurrence bound.

A billiard state is a point of the table together with a *sheet*: the
element ``g`` of the reflection group with the current velocity equal to
``g`` applied to the initial unit direction. Reflecting in edge ``e``
replaces ``g`` by ``R_e g``, looked up in a precomputed table, so speeds stay
exactly those of the normalized per-sheet directions.

The unfolded surface ``unfold(P)`` has one copy ``g P`` per group element;
the billiard on sheet ``h`` is the straight-line flow in copy ``h^-1 P``
folded back. :func:`unfolded_flow` runs that straight-line flow directly
as an independent check of :func:`flow`.

Distances between states on different sheets are infinite unless
``ignore_sheets`` is set.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .flows import Holonomy, Mat2
from .saddles import gh_matrix, lattice_model, lattice_systole, systole
from .surface import PolygonSpec, Surface, _key, reflection_group, unfold

__all__ = [
    "BilliardState",
    "RecurrenceRecord",
    "Witness",
    "CorollaryReport",
    "SingularTrajectoryError",
    "Table",
    "flow",
    "unfolded_flow",
    "recurrence_stat",
    "certify_direction",
    "corollary_check",
    "records_csv",
]

CORNER_TOL = 1e-12


class SingularTrajectoryError(RuntimeError):
    def __init__(self, time: float, corner: tuple[float, float], partial=None):
        super().__init__(f"trajectory hits corner {corner} at t={time:.15g}")
        self.time = time
        self.corner = corner
        self.partial = partial or []


@dataclass(frozen=True)
class BilliardState:
    position: tuple[float, float]
    sheet: int = 0
    time: float = 0.0


class Table:
    """A polygon with its reflection group, direction table and sheet transitions."""

    _cache: dict = {}

    def __init__(self, P: PolygonSpec):
        self.P = P
        self.vertices = P.vertices
        self.n = len(P.vertices)
        self.elems, self.refl = reflection_group(P)
        index = {_key(g): k for k, g in enumerate(self.elems)}
        self.index = index
        # after bouncing off edge e, sheet g becomes R_e g
        self.after = [[index[_key(R @ g)] for g in self.elems] for R in self.refl]
        self.inverse = [index[_key(g.inverse())] for g in self.elems]
        self.diameter = P.diameter
        self.edges = [
            (self.vertices[e], self.vertices[(e + 1) % self.n]) for e in range(self.n)
        ]

    @classmethod
    def of(cls, P: PolygonSpec) -> Table:
        key = (P.vertices, P.angles)
        if key not in cls._cache:
            cls._cache[key] = cls(P)
        return cls._cache[key]

    @property
    def order(self) -> int:
        return len(self.elems)

    def directions(self, theta: float) -> list[tuple[float, float]]:
        u = (math.cos(theta), math.sin(theta))
        out = []
        for g in self.elems:
            x, y = g.apply(*u)
            nrm = math.hypot(x, y)
            out.append((x / nrm, y / nrm))
        return out

    def contains(self, p) -> bool:
        # winding-free test for simple polygons: ray casting
        x, y = p
        inside = False
        for (x1, y1), (x2, y2) in self.edges:
            if (y1 > y) != (y2 > y):
                xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                if xc > x:
                    inside = not inside
        return inside


def _exit(edges, p, v, skip: int, scale: float):
    """First edge hit by p + tau v, tau > 0: (tau, edge, point); flags corner hits."""
    best = None
    for e, (a, b) in enumerate(edges):
        if e == skip:
            continue
        ex, ey = b[0] - a[0], b[1] - a[1]
        den = v[0] * ey - v[1] * ex
        if den == 0:
            continue
        wx, wy = a[0] - p[0], a[1] - p[1]
        tau = (wx * ey - wy * ex) / den
        lam = (wx * v[1] - wy * v[0]) / den
        if tau <= 1e-15 * scale or lam < -1e-12 or lam > 1 + 1e-12:
            continue
        if best is None or tau < best[0]:
            best = (tau, e, lam)
    if best is None:
        raise RuntimeError(f"no exit found from {p} along {v}")
    tau, e, lam = best
    a, b = edges[e]
    hit = (p[0] + tau * v[0], p[1] + tau * v[1])
    for corner in (a, b):
        if math.hypot(hit[0] - corner[0], hit[1] - corner[1]) <= CORNER_TOL * max(1.0, scale):
            return tau, e, hit, corner
    return tau, e, hit, None


def _segments(P: PolygonSpec, state: BilliardState, theta: float, T: float):
    """Yield (t_start, point, direction, sheet, duration, edge_hit) along the billiard path."""
    tab = Table.of(P)
    dirs = tab.directions(theta)
    p, g, t = state.position, state.sheet, state.time
    end = state.time + T
    skip = -1
    scale = tab.diameter
    while t < end:
        v = dirs[g]
        tau, e, hit, corner = _exit(tab.edges, p, v, skip, scale)
        if t + tau >= end:
            yield t, p, v, g, end - t, None
            return
        if corner is not None:
            raise SingularTrajectoryError(t + tau, corner)
        yield t, p, v, g, tau, e
        t += tau
        p = hit
        g = tab.after[e][g]
        skip = e


def flow(P: PolygonSpec, state: BilliardState, theta: float, T: float) -> list[BilliardState]:
    """Billiard trajectory from ``state``: the states after each reflection, then the state at time T.

    The velocity on sheet g is g (cos theta, sin theta).
    """
    if not T > 0:
        raise ValueError("T must be positive")
    tab = Table.of(P)
    if not 0 <= state.sheet < tab.order:
        raise ValueError(f"sheet {state.sheet} outside 0..{tab.order - 1}")
    out = [state]
    try:
        for t, p, v, g, dur, e in _segments(P, state, theta, T):
            q = (p[0] + dur * v[0], p[1] + dur * v[1])
            if e is None:
                out.append(BilliardState(q, g, t + dur))
            else:
                out.append(BilliardState(q, tab.after[e][g], t + dur))
    except SingularTrajectoryError as err:
        err.partial = out
        raise
    return out


def unfolded_flow(P: PolygonSpec, start: tuple[float, float], theta: float, T: float) -> list[BilliardState]:
    """Straight-line flow on unfold(P), folded back to the table at every edge crossing.

    Starts in the identity copy. Returns folded states at the crossing times.
    """
    surf = unfold(P)
    tab = Table.of(P)
    polys = surf.base.polygons
    gluing = surf.base.gluing
    u = (math.cos(theta), math.sin(theta))
    copy_index = [tab.index[_key(g)] for g in surf.copies]
    c, x, t = 0, start, 0.0
    skip = -1
    out = [BilliardState(start, 0, 0.0)]
    scale = tab.diameter
    while True:
        poly = polys[c]
        n = len(poly)
        edges = [(poly[k], poly[(k + 1) % n]) for k in range(n)]
        tau, e, hit, corner = _exit(edges, x, u, skip, scale)
        g = surf.copies[c]
        if t + tau >= T:
            y = (x[0] + (T - t) * u[0], x[1] + (T - t) * u[1])
            out.append(BilliardState(g.inverse().apply(*y), tab.inverse[copy_index[c]], T))
            return out
        if corner is not None:
            raise SingularTrajectoryError(t + tau, corner, out)
        t += tau
        d, l = gluing[(c, e)]
        a, _ = edges[e]
        dpoly = polys[d]
        b2 = dpoly[(l + 1) % len(dpoly)]
        x = (hit[0] + b2[0] - a[0], hit[1] + b2[1] - a[1])
        c, skip = d, l
        gd = surf.copies[c]
        out.append(BilliardState(gd.inverse().apply(*x), tab.inverse[copy_index[c]], t))


# -- recurrence ------------------------------------------------------------------


@dataclass
class RecurrenceRecord:
    theta: float
    start: BilliardState
    T: float
    samples: list[tuple[float, float]] = field(default_factory=list)  # (t, d) at close returns
    min_t_times_d: float = math.inf
    argmin: tuple[float, float] | None = None  # (t, d) attaining the minimum
    argmin_offset: tuple[float, float] | None = None  # b_t p - p at the minimum
    singular: bool = False
    singular_time: float | None = None


def _segment_min(t_a: float, w, u, dur: float, t_min: float):
    """min over tau in [0, dur], t_a + tau >= t_min, of (t_a + tau) |w + tau u|."""
    lo = max(0.0, t_min - t_a)
    if lo > dur:
        return None
    b = w[0] * u[0] + w[1] * u[1]
    ww = w[0] * w[0] + w[1] * w[1]
    cands = [lo, dur]
    # d/dtau log of the product vanishes where 2 tau^2 + (3b + t_a) tau + (|w|^2 + b t_a) = 0
    A, B, C = 2.0, 3 * b + t_a, ww + b * t_a
    disc = B * B - 4 * A * C
    if disc >= 0:
        r = math.sqrt(disc)
        for tau in ((-B - r) / (2 * A), (-B + r) / (2 * A)):
            if lo < tau < dur:
                cands.append(tau)
    # the distance itself is smallest at tau = -b
    if lo < -b < dur:
        cands.append(-b)
    best = None
    for tau in cands:
        d = math.hypot(w[0] + tau * u[0], w[1] + tau * u[1])
        val = (t_a + tau) * d
        if best is None or val < best[0]:
            best = (val, t_a + tau, d, (w[0] + tau * u[0], w[1] + tau * u[1]))
    return best


def recurrence_stat(
    P: PolygonSpec, p: BilliardState, theta: float, T: float, ignore_sheets: bool = False, window: float | None = None
) -> RecurrenceRecord:
    """min over t in [1, T] of t d(p, b_t p), with close-return samples.

    Per straight segment the minimum of t |x(t) - p| is found in closed form.
    A sample (t, d) is kept at each segment minimum with d below ``window``
    (default half the diameter).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    tab = Table.of(P)
    window = 0.5 * tab.diameter if window is None else window
    rec = RecurrenceRecord(theta, p, T)
    p0 = p.position
    try:
        for t_a, a, u, g, dur, _ in _segments(P, p, theta, T):
            if not ignore_sheets and g != p.sheet:
                continue
            w = (a[0] - p0[0], a[1] - p0[1])
            best = _segment_min(t_a - p.time, w, u, dur, 1.0)
            if best is None:
                continue
            val, t, d, off = best
            if d < window:
                rec.samples.append((t, d))
            if val < rec.min_t_times_d:
                rec.min_t_times_d, rec.argmin, rec.argmin_offset = val, (t, d), off
    except SingularTrajectoryError as err:
        rec.singular, rec.singular_time = True, err.time
    return rec


# -- the recurrence bound -----------------------------------------------------------


@dataclass
class Witness:
    """A saddle connection (or closed-curve holonomy) short at time t0."""

    t: float
    d: float
    t0: float
    holonomy: Holonomy  # in the unfolded surface
    length_at_t0: float  # max-norm length of g_t0 r holonomy
    kind: str  # "saddle_connection", "closed_curve" or "cross_sheet"
    systole_at_t0: float
    systole_witness: Holonomy


@dataclass
class CorollaryReport:
    theta: float
    rotation_angle: float
    eps: float
    c: float
    T: float
    certified: bool
    cert_min_systole: float
    cert_time: float
    cert_vector: Holonomy | None
    records: list[RecurrenceRecord] = field(default_factory=list)
    violations: list[Witness] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.certified and not self.violations


def _rot_entries(angle, dps: int):
    with mpmath.workdps(dps):
        a = mpmath.mpf(angle)
        c, s = mpmath.cos(a), mpmath.sin(a)
        return (c, -s, s, c)


def _systole_at(q: Surface, t: float, rot, dps: int = 40):
    """(value, witness) for systole(q, g_t r)."""
    if lattice_model(q) is not None:
        with mpmath.workdps(dps):
            g = gh_matrix(t, 0, dps)
            A = (g[0] * rot[0], g[0] * rot[1], g[3] * rot[2], g[3] * rot[3])
            val, wit = lattice_systole(q, A, dps)
        return float(val), wit
    A = Mat2(math.exp(t / 2), 0, 0, math.exp(-t / 2)) @ Mat2(*(float(v) for v in rot))
    s = systole(q, A)
    return s.value, s.witness


def certify_direction(q: Surface, rotation_angle: float, horizon: float, dt: float = 0.05):
    """min over the grid t = j dt covering [0, horizon] of systole(q, g_t r), with its time and witness.

    The grid is anchored at 0, so a longer horizon only adds points.
    """
    rot = _rot_entries(rotation_angle, 40)
    n = max(1, math.ceil(horizon / dt - 1e-9))
    best = (math.inf, 0.0, None)
    for j in range(n + 1):
        t = j * dt
        val, wit = _systole_at(q, t, rot)
        if val < best[0]:
            best = (val, t, wit)
    return best


def _length_under(t0: float, rot, v: Holonomy) -> float:
    with mpmath.workdps(40):
        x = rot[0] * v.x + rot[1] * v.y
        y = rot[2] * v.x + rot[3] * v.y
        e = mpmath.exp(mpmath.mpf(t0) / 2)
        return float(max(abs(e * x), abs(y / e)))


def _primitive_part(q: Surface, v: tuple[float, float]):
    """Reduce a lattice vector to its primitive part when q is a once-marked torus."""
    model = lattice_model(q)
    if model is None or model.kind != "primitive":
        return Holonomy(*v), "closed_curve"
    a, b = model.basis.inverse().apply(*v)
    ia, ib = round(a), round(b)
    if abs(a - ia) > 1e-6 or abs(b - ib) > 1e-6 or (ia, ib) == (0, 0):
        return Holonomy(*v), "closed_curve"
    g = math.gcd(ia, ib)
    return Holonomy(*model.basis.apply(ia // g, ib // g)), "saddle_connection"


def _random_starts(P: PolygonSpec, trials: int, seed: int) -> list[BilliardState]:
    tab = Table.of(P)
    rng = np.random.default_rng(seed)
    xs = [v[0] for v in P.vertices]
    ys = [v[1] for v in P.vertices]
    out = []
    while len(out) < trials:
        p = (float(rng.uniform(min(xs), max(xs))), float(rng.uniform(min(ys), max(ys))))
        if tab.contains(p):
            out.append(BilliardState(p, 0, 0.0))
    return out


def corollary_check(
    P: PolygonSpec,
    theta: float,
    eps: float | None,
    T: float,
    trials: int,
    seed: int = 0,
    c: float | None = None,
    ignore_sheets: bool = False,
    threads: int = 1,
    dt: float = 0.05,
) -> CorollaryReport:
    """Check min_{1<=t<=T} t d(p, b_t p) >= c = eps^2 / 2 for random starts p.

    ``theta`` is the billiard direction; the vertical flow of r q with
    r = rotation(pi/2 - theta) is the straight-line flow in that direction.
    First the orbit g_t r q, 0 <= t <= 2 ln T - ln c, is certified to stay in
    K_eps (``eps=None`` takes eps as the observed minimum, capped at 1). ``c``
    may be overridden (0 < c < 1) to stress the checker; each start with t d < c yields a
    witness: the holonomy of the closed curve (flow segment plus the short
    return) and its length under g_t0 r at t0 = 2 ln t - ln c.
    """
    q = unfold(P)
    ang = math.pi / 2 - theta
    rot = _rot_entries(ang, 40)
    if eps is None:
        # the minimum only drops as the horizon grows; iterate to a fixed point
        horizon = 2 * math.log(T) + 2.0
        for _ in range(50):
            m, _, _ = certify_direction(q, ang, horizon, dt)
            need = 2 * math.log(T) - math.log(min(m, 1.0) ** 2 / 2)
            if need <= horizon:
                break
            horizon = need
        # K_m is inside K_1 for m >= 1, and the argument needs c = eps^2 / 2 < 1
        eps = min(m, 1.0)
    c_cert = eps * eps / 2
    if c_cert >= 1 or (c is not None and not 0 < c < 1):
        raise ValueError("need 0 < c < 1 (c = eps^2 / 2 by default)")
    horizon = max(0.0, 2 * math.log(T) - math.log(c_cert))
    m, t_min, wit = certify_direction(q, ang, horizon, dt)
    certified = m >= eps * (1 - 1e-12)
    c_use = c_cert if c is None else c
    report = CorollaryReport(theta, ang, eps, c_use, T, certified, m, t_min, wit)
    if not certified:
        return report
    starts = _random_starts(P, trials, seed)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        report.records = list(
            pool.map(lambda p: recurrence_stat(P, p, theta, T, ignore_sheets=ignore_sheets), starts)
        )
    u = (math.cos(theta), math.sin(theta))
    tab = Table.of(P)
    for rec in report.records:
        if rec.min_t_times_d >= c_use or rec.argmin is None:
            continue
        t, d = rec.argmin
        t0 = 2 * math.log(t) - math.log(c_use)
        sys_val, sys_wit = _systole_at(q, t0, rot)
        if ignore_sheets:
            report.violations.append(
                Witness(t, d, t0, sys_wit, sys_val, "cross_sheet", sys_val, sys_wit)
            )
            continue
        # same sheet h: the unfolded displacement is t u while the folded
        # offset b_t p - p lives in the copy h^-1 P, so t u - h^-1 offset is
        # the holonomy of a closed curve through p
        off = rec.argmin_offset
        hinv = tab.elems[tab.inverse[rec.start.sheet]]
        ox, oy = hinv.apply(*off)
        prim, kind = _primitive_part(q, (t * u[0] - ox, t * u[1] - oy))
        report.violations.append(
            Witness(t, d, t0, prim, _length_under(t0, rot, prim), kind, sys_val, sys_wit)
        )
    return report


def records_csv(records: list[RecurrenceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "t", "d", "t_times_d", "sheet"])
    for i, rec in enumerate(records):
        for t, d in rec.samples:
            w.writerow([i, repr(t), repr(d), repr(t * d), rec.start.sheet])
    return buf.getvalue()
