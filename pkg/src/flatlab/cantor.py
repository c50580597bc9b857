"""Iterated N-fold subdivision of a direction interval.

Start from ``J = [0, r)``. At level ``m`` every surviving interval of width
``r N^-m`` is cut into ``N`` children, and a child ``J_i`` survives when

    systole(q0, geodesic((m+1) t1) @ horocycle(s)) >= eps0   for all s in J_i.

``e^{t1} = N`` is an integer, so on lattice surfaces with an integer period
basis (the torus, square-tiled surfaces) the test is done in exact rational
arithmetic: with ``e^{k t1} = N^k`` every comparison squares to a rational one.
Other surfaces fall back to the floating interval bound in
:mod:`flatlab.saddles`.

Full trees have ``N^depth`` potential leaves. When a level holds more than
``max_parents`` intervals a seeded uniform sample of that many parents is
subdivided and the level count is extrapolated from the observed survival
fraction; the tree records which levels are exact.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .flows import Mat2, factor_rotation, geodesic
from .numbers import Real, to_mpf
from .saddles import (
    gh_matrix,
    holonomy_array,
    lattice_candidates,
    lattice_model,
    lattice_systole,
    systole,
    systole_lower_bound_on_interval,
)
from .surface import Surface

__all__ = [
    "CantorParams",
    "CantorLevel",
    "CantorTree",
    "PreconditionError",
    "ExtinctionError",
    "derive_params",
    "params_from_eps0",
    "reverify",
    "verify_claim1",
    "survivors",
    "construct",
    "dim_estimate",
    "bounded_direction_check",
    "exit_level",
    "tree_to_json",
    "direction_panel",
    "panel_agreement",
]


class PreconditionError(ValueError):
    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class ExtinctionError(RuntimeError):
    def __init__(self, level: int, tree: CantorTree):
        super().__init__(f"no interval survives at level {level}; try a smaller eps")
        self.level = level
        self.tree = tree


def _exact(x) -> Fraction:
    """Decimal-faithful rational: 0.05 -> 1/20."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class CantorParams:
    r: Fraction
    eps: Fraction
    eps0: Fraction
    rho0: Fraction
    eta: float
    t1: float
    N: int
    depth: int = 6
    t1_raw: float = float("nan")

    def __post_init__(self):
        if not 0 < self.r <= 1:
            raise ValueError("r must lie in (0, 1]")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    def width(self, m: int) -> Fraction:
        return self.r / Fraction(self.N) ** m

    def to_json(self) -> dict:
        return {
            "r": str(self.r),
            "eps": str(self.eps),
            "eps0": str(self.eps0),
            "rho0": str(self.rho0),
            "eta": self.eta,
            "t1": self.t1,
            "t1_raw": self.t1_raw,
            "N": self.N,
            "depth": self.depth,
        }


def params_from_eps0(
    eps0: Real, eta: float, r: Real, rho0: Real = Fraction(1, 10), depth: int = 6, eps: Real | None = None
) -> CantorParams:
    """Parameters from eps0 directly; eps defaults to eps0 (1 + r)."""
    eps0, r, rho0 = _exact(eps0), _exact(r), _exact(rho0)
    eps = eps0 * (1 + r) if eps is None else _exact(eps)
    raw = (2 * rho0 / (eps0 * r)) ** 2
    N = max(2, math.ceil(raw))
    return CantorParams(r, eps, eps0, rho0, float(eta), math.log(N), N, depth, math.log(raw))


def derive_params(
    q0: Surface, eps: Real, eta: float, r: Real, rho0: Real = Fraction(1, 10), depth: int = 6
) -> CantorParams:
    """eps0 = eps/(1+r); t1 = 2 ln(2 rho0/(eps0 r)), enlarged so N = e^t1 is an integer."""
    eps, r, rho0 = _exact(eps), _exact(r), _exact(rho0)
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    sys0 = systole(q0)
    if sys0.value < float(eps):
        raise PreconditionError(
            f"systole {sys0.value:.6g} < eps={float(eps)}: witness ({sys0.witness.x}, {sys0.witness.y})",
            sys0.witness,
        )
    return params_from_eps0(eps / (1 + r), eta, r, rho0, depth, eps)


def verify_claim1(q: Surface, t1: float, r: Real, rho0: Real, eps0: Real) -> bool:
    """True iff sup_{0<=s<=r} |x(g_t1 h_s v)| >= rho0 for every saddle connection v.

    |x| is affine in s, so the sup is max(|x|, |x + r y|) e^{t1/2}. A failing
    vector has |x| < rho0 e^{-t1/2} and |y| < 2 rho0 e^{-t1/2} / r, which
    bounds the candidates.
    """
    r, rho0, eps0 = float(r), float(rho0), float(eps0)
    sys0 = systole(q)
    if sys0.value < eps0:
        raise PreconditionError(
            f"surface has a saddle connection ({sys0.witness.x}, {sys0.witness.y}) shorter than eps0={eps0}",
            sys0.witness,
        )
    a = math.exp(t1 / 2)
    bound = max(rho0 / a, 2 * rho0 / (a * r))
    arr = holonomy_array(q, bound * (1 + 1e-12))
    if len(arr) == 0:
        return True
    x, y = arr[:, 0], arr[:, 1]
    sup = a * np.maximum(np.abs(x), np.abs(x + r * y))
    return bool(sup.min() >= rho0)


# -- one subdivision step ------------------------------------------------------


def _integer_basis(q0: Surface):
    model = lattice_model(q0)
    if model is None:
        return None
    B = model.basis.to_json()
    if all(float(v).is_integer() for v in B):
        return model, tuple(int(v) for v in B)
    return None


def _kills_exact(q0, basis, lo: Fraction, m: int, P: CantorParams) -> set[int]:
    """Indices i of children of [lo, lo + r N^-m) killed at time (m+1) t1."""
    model, B = basis
    N, k = P.N, m + 1
    Nk = N**k
    w = P.width(m)
    h = w / N
    c = lo + w / 2
    e2 = P.eps0 * P.eps0
    # coordinates U = N^k (x + c y), V = y; a killer lies in
    # |U| < N^{k/2} eps0 (1 + r N / 2), |V| < N^{k/2} eps0
    root = math.sqrt(Nk) * (1 + 1e-9)
    bx = Fraction(root * float(P.eps0) * (1 + float(P.r) * N / 2)).limit_denominator(10**6) * 2
    by = Fraction(root * float(P.eps0)).limit_denominator(10**6) * 2
    M0 = (Nk, Nk * c, 0, 1)
    M = (
        M0[0] * B[0] + M0[1] * B[2],
        M0[0] * B[1] + M0[1] * B[3],
        M0[2] * B[0] + M0[3] * B[2],
        M0[2] * B[1] + M0[3] * B[3],
    )
    killed: set[int] = set()
    for a, b in lattice_candidates(M, bx, by):
        if not model.member(a, b):
            continue
        x = B[0] * a + B[1] * b
        y = B[2] * a + B[3] * b
        if y == 0:
            if Nk * x * x < e2:
                return set(range(N))
            continue
        if y * y >= e2 * Nk:
            continue
        z = Fraction(-x, y)
        lim = e2 / (Nk * y * y)  # squared distance bound from z to a child

        def hit(i: int) -> bool:
            a_i, b_i = lo + i * h, lo + (i + 1) * h
            d = 0 if a_i <= z <= b_i else min(abs(z - a_i), abs(z - b_i))
            return d * d < lim

        rad = math.sqrt(float(lim))
        i0 = max(0, math.floor(float((z - lo) / h - rad / h)) - 1)
        i1 = min(N - 1, math.floor(float((z - lo) / h + rad / h)) + 1)
        for i in range(i0, i1 + 1):
            if i in killed:
                continue
            if i0 + 2 < i < i1 - 2 or hit(i):
                killed.add(i)
    return killed


def _kills_float(q0, lo: Fraction, m: int, P: CantorParams) -> set[int]:
    h = P.width(m) / P.N
    t = (m + 1) * P.t1
    out = set()
    for i in range(P.N):
        a = float(lo + i * h)
        b = float(lo + (i + 1) * h)
        if systole_lower_bound_on_interval(q0, t, a, b) < float(P.eps0):
            out.add(i)
    return out


def _surviving_children(q0, basis, lo: Fraction, m: int, P: CantorParams) -> list[Fraction]:
    killed = _kills_exact(q0, basis, lo, m, P) if basis else _kills_float(q0, lo, m, P)
    h = P.width(m) / P.N
    return [lo + i * h for i in range(P.N) if i not in killed]


def survivors(q0: Surface, interval, m: int, params: CantorParams) -> list[tuple[Fraction, Fraction]]:
    """Children of ``interval`` (width r N^-m) that stay in K_eps0 at time (m+1) t1."""
    lo, hi = _exact(interval[0]), _exact(interval[1])
    if hi - lo != params.width(m):
        raise ValueError(f"interval width {hi - lo} != r N^-{m} = {params.width(m)}")
    h = params.width(m + 1)
    return [(a, a + h) for a in _surviving_children(q0, _integer_basis(q0), lo, m, params)]


# -- the tree ------------------------------------------------------------------


@dataclass
class CantorLevel:
    m: int
    count: float  # M_m; exact integer while no level was sampled
    exact: bool
    lows: list[Fraction]  # explored surviving intervals [lo, lo + width)
    parents_processed: int = 0  # at level m - 1
    children_survived: int = 0


@dataclass
class CantorTree:
    params: CantorParams
    levels: list[CantorLevel]
    seed: int = 0
    max_parents: int = 512
    sample_points: list[Fraction] = field(default_factory=list)

    @property
    def counts(self) -> list[float]:
        return [lv.count for lv in self.levels]

    def intervals(self, m: int) -> list[tuple[Fraction, Fraction]]:
        w = self.params.width(m)
        return [(a, a + w) for a in self.levels[m].lows]


def construct(
    q0: Surface,
    params: CantorParams,
    max_parents: int = 512,
    seed: int = 0,
    threads: int = 1,
) -> CantorTree:
    """Run the subdivision to ``params.depth``; raises ExtinctionError if a level dies out."""
    sys0 = systole(q0)
    if sys0.value < float(params.eps):
        raise PreconditionError(f"q0 is not in K_eps: witness ({sys0.witness.x}, {sys0.witness.y})", sys0.witness)
    basis = _integer_basis(q0)
    rng = np.random.default_rng(seed)
    tree = CantorTree(params, [CantorLevel(0, 1, True, [Fraction(0)])], seed, max_parents)
    N = params.N
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for m in range(params.depth):
            cur = tree.levels[m]
            parents = cur.lows
            exact = cur.exact
            if len(parents) > max_parents:
                pick = np.sort(rng.choice(len(parents), size=max_parents, replace=False))
                parents = [parents[i] for i in pick]
                exact = False
            kids = list(pool.map(lambda lo: _surviving_children(q0, basis, lo, m, params), parents))
            lows = [a for group in kids for a in group]
            frac = len(lows) / (N * len(parents))
            count = len(lows) if exact else cur.count * N * frac
            tree.levels.append(CantorLevel(m + 1, count, exact, lows, len(parents), len(lows)))
            if not lows:
                raise ExtinctionError(m + 1, tree)
    w = params.width(params.depth)
    tree.sample_points = [a + w / 2 for a in tree.levels[-1].lows]
    return tree


def dim_estimate(tree: CantorTree) -> tuple[float, float]:
    """(McMullen-type lower bound from the worst level, least-squares box dimension)."""
    counts = tree.counts
    if len(counts) < 2 or any(c <= 0 for c in counts):
        raise ValueError("need at least two levels, none extinct")
    N = tree.params.N
    fracs = [counts[m + 1] / (N * counts[m]) for m in range(len(counts) - 1)]
    eta_obs = 1 - min(fracs)
    mcmullen = 1 + math.log(1 - eta_obs) / math.log(N) if eta_obs < 1 else -math.inf
    xs = np.array([m * math.log(N) for m in range(len(counts))])
    ys = np.array([math.log(c) for c in counts])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return mcmullen, slope


def exit_level(q0: Surface, s: Real, params: CantorParams, max_level: int = 64) -> int | None:
    """First level k whose interval containing s is killed (None if s survives to max_level)."""
    s = _exact(s) if not isinstance(s, Fraction) else s
    if not 0 <= s < params.r:
        raise ValueError("s must lie in [0, r)")
    basis = _integer_basis(q0)
    lo = Fraction(0)
    for m in range(max_level):
        h = params.width(m + 1)
        i = math.floor((s - lo) / h)
        alive = _surviving_children(q0, basis, lo, m, params)
        child = lo + i * h
        if child not in set(alive):
            return m + 1
        lo = child
    return None


def reverify(
    q0: Surface,
    tree: CantorTree,
    points: int = 11,
    max_intervals: int = 2000,
    seed: int = 0,
    dps: int = 40,
) -> tuple[int, list[tuple[int, Fraction, int, float]]]:
    """Re-check surviving intervals on a grid ``points`` per interval.

    For each level m a seeded sample of at most ``max_intervals`` surviving
    intervals is taken; at each grid point s the systole of g_{k t1} h_s q0 is
    recomputed for every k <= m by direct lattice reduction. Returns the number
    of evaluations and the violations (m, s, k, value) below eps0 - 1e-9.
    """
    from .cf_oracle import Basis2, shortest_vector

    model = lattice_model(q0)
    P = tree.params
    rng = np.random.default_rng(seed)
    bad, n_eval = [], 0
    thr = float(P.eps0) - 1e-9
    with mpmath.workdps(dps):
        Bm = tuple(mpmath.mpf(v) for v in model.basis.to_json()) if model else None
        for lv in tree.levels[1:]:
            lows = lv.lows
            if len(lows) > max_intervals:
                lows = [lows[i] for i in np.sort(rng.choice(len(lows), size=max_intervals, replace=False))]
            w = P.width(lv.m)
            for lo in lows:
                for j in range(points):
                    s = lo + w * Fraction(j, points - 1)
                    s_mp = mpmath.mpf(s.numerator) / s.denominator
                    for k in range(1, lv.m + 1):
                        a = mpmath.sqrt(mpmath.mpf(P.N)) ** k
                        A = (a, a * s_mp, mpmath.mpf(0), 1 / a)
                        if model is not None and model.kind == "primitive":
                            v1 = (A[0] * Bm[0] + A[1] * Bm[2], A[3] * Bm[2])
                            v2 = (A[0] * Bm[1] + A[1] * Bm[3], A[3] * Bm[3])
                            val = float(shortest_vector(Basis2(v1, v2))[1])
                        elif model is not None:
                            val = float(lattice_systole(q0, A, dps)[0])
                        else:
                            val = systole(q0, Mat2(*(float(x) for x in A))).value
                        n_eval += 1
                        if val < thr:
                            bad.append((lv.m, s, k, val))
    return n_eval, bad


# -- bounded directions ----------------------------------------------------------


def _to_mp(x: Real, dps: int):
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        with mpmath.workdps(dps):
            return mpmath.mpf(x)
    return to_mpf(x, dps)


def _min_along(q0: Surface, X, T: float, dt: float, dps: int) -> tuple[float, float]:
    """min over a t-grid of systole(q0, g_t X); X is a row-major 4-tuple of mpf."""
    n = max(1, math.ceil(T / dt))
    use_lattice = lattice_model(q0) is not None
    best, t_best = math.inf, 0.0
    for j in range(n + 1):
        t = T * j / n
        if use_lattice:
            with mpmath.workdps(dps):
                g = gh_matrix(t, 0, dps)
                A = (g[0] * X[0], g[0] * X[1], g[3] * X[2], g[3] * X[3])
                val = float(lattice_systole(q0, A, dps)[0])
        else:
            A = geodesic(t) @ Mat2(*(float(v) for v in X))
            val = systole(q0, A).value
        if val < best:
            best, t_best = val, t
    return best, t_best


def bounded_direction_check(
    q0: Surface,
    s: Real,
    T: float,
    eps: float,
    mode: str = "horocycle",
    dt: float = 0.05,
    dps: int = 40,
) -> tuple[bool, float]:
    """Grid check of min_{0<=t<=T} systole(q0, g_t X) >= eps.

    ``mode`` selects X: ``horocycle`` (h_s), ``rotation`` (r_theta with
    theta = s) or ``rotation_via_factorization``. The last writes
    r_theta = f h_{s'} with s' = -tan(theta) and f lower triangular; then
    g_t r_theta = b_t g_t h_{s'} with b_t = g_t f g_-t, and
    |b_t v| >= |v| / |b_t^-1| in the max-norm, so the returned value is the
    horocycle minimum at s' divided by sup_t |b_t^-1|_inf, a certified lower
    bound for the rotation minimum.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    with mpmath.workdps(dps):
        if mode == "horocycle":
            X = (mpmath.mpf(1), _to_mp(s, dps), mpmath.mpf(0), mpmath.mpf(1))
            val, _ = _min_along(q0, X, T, dt, dps)
        elif mode == "rotation":
            th = _to_mp(s, dps)
            c, sn = mpmath.cos(th), mpmath.sin(th)
            val, _ = _min_along(q0, (c, -sn, sn, c), T, dt, dps)
        elif mode == "rotation_via_factorization":
            theta = float(s)
            f, s2 = factor_rotation(theta)
            th = _to_mp(s, dps)
            s_mp = -mpmath.tan(th)
            hval, _ = _min_along(q0, (mpmath.mpf(1), s_mp, mpmath.mpf(0), mpmath.mpf(1)), T, dt, dps)
            val = hval / factorization_condition(theta)
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return val >= eps, float(val)


def factorization_condition(theta: float) -> float:
    """sup over t >= 0 of the max-norm operator norm of (g_t f g_-t)^-1, f = f(theta).

    (g_t f g_-t)^-1 = [[1/cos, 0], [-sin e^-t, cos]]; row sums are maximal at t = 0.
    """
    c, s = math.cos(theta), math.sin(theta)
    if abs(c) < 1e-9:
        raise ValueError("factorization degenerates near cos(theta) = 0")
    return max(1 / abs(c), abs(s) + abs(c))


def factorization_norm(theta: float) -> float:
    """sup over t >= 0 of the max-norm operator norm of g_t f g_-t."""
    c, s = math.cos(theta), math.sin(theta)
    return max(abs(c), abs(s) + 1 / abs(c))


def direction_panel(bound: int = 20, seed: int = 0) -> list:
    """200 directions: 100 quadratic irrationals, 60 rationals, 40 unbounded-quotient numbers."""
    from .numbers import CFNumber, QuadraticIrrational

    rng = np.random.default_rng(seed)
    items = []
    while len(items) < 100:
        d = int(rng.integers(2, 60))
        if math.isqrt(d) ** 2 == d:
            continue
        p, q, r = int(rng.integers(-5, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 8))
        x = QuadraticIrrational(p, q, d, r)
        frac = float(x) - math.floor(float(x))
        items.append(QuadraticIrrational(p - r * math.floor(float(x)), q, d, r) if frac else x)
    while len(items) < 160:
        den = int(rng.integers(1, 1001))
        items.append(Fraction(int(rng.integers(0, den + 1)), den))
    while len(items) < 200:
        base = int(rng.integers(5 * bound, 50 * bound))
        k = int(rng.integers(0, 3))
        # a few small quotients, then one quotient far above the bound, repeating
        items.append(
            CFNumber(0, lambda n, b=base, k=k: b if n % 4 == k + 1 else 1 + (n % 3), label=f"spiky {base}/{k}")
        )
    return items


def panel_agreement(bound: int = 20, T: float = 25.0, seed: int = 0, threads: int = 1):
    """Compare bounded_direction_check on the torus with the continued-fraction test.

    Returns (rows, agreement fraction, eps) with rows (label, badly_approximable, bounded, min_systole).
    """
    from .cf_oracle import is_badly_approximable
    from .surface import make_torus

    torus = make_torus()
    # quotients <= bound keep the geodesic minimum >= 1/sqrt(bound + 2)
    eps = (1 - 1e-6) / math.sqrt(bound + 2)
    items = direction_panel(bound, seed)

    def one(x):
        ba = is_badly_approximable(x, bound, 40)
        ok, val = bounded_direction_check(torus, x, T, eps, "horocycle")
        return str(x), ba, ok, val

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(one, items))
    agree = sum(1 for _, ba, ok, _ in rows if ba == ok)
    return rows, agree / len(rows), eps


# -- serialization -----------------------------------------------------------------


def tree_to_json(tree: CantorTree, endpoint_depth: int = 4) -> dict:
    mc, box = dim_estimate(tree) if len(tree.levels) >= 2 else (None, None)
    levels = []
    for lv in tree.levels:
        item = {
            "m": lv.m,
            "count": lv.count,
            "exact": lv.exact,
            "explored": len(lv.lows),
            "parents_processed": lv.parents_processed,
            "children_survived": lv.children_survived,
        }
        if lv.m <= endpoint_depth:
            w = tree.params.width(lv.m)
            item["intervals"] = [[str(a), str(a + w)] for a in lv.lows]
        levels.append(item)
    return {
        "params": tree.params.to_json(),
        "seed": tree.seed,
        "max_parents": tree.max_parents,
        "levels": levels,
        "mcmullen_bound": mc,
        "box_dim_fit": box,
        "sample_points": [str(p) for p in tree.sample_points],
    }


def tree_json_dumps(tree: CantorTree, endpoint_depth: int = 4) -> str:
    return json.dumps(tree_to_json(tree, endpoint_depth), indent=1, sort_keys=True)
