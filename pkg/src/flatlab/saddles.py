"""Saddle-connection enumeration, systoles and certified interval bounds.

Lengths are the max-norm ``max(|x|, |y|)`` of the holonomy unless stated
otherwise. Three enumeration routes exist:

* torus: primitive integer vectors, generated from the Farey sequence;
* square-tiled: separatrices traced across squares with the permutations
  (exact integer arithmetic);
* any polygonal surface: visibility wedges swept through a triangulation.

Surfaces whose holonomies lie in a lattice (torus, square-tiled, genus-one
unfoldings) also get a reduction-based path that stays accurate at large
geodesic times, where ``e^{t/2}`` is far beyond what cutoff enumeration can
reach.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .flows import Holonomy, Mat2, geodesic, horocycle
from .surface import Surface

__all__ = [
    "SaddleSet",
    "Systole",
    "ResourceBudgetError",
    "DEFAULT_BUDGET",
    "enumerate_saddles",
    "enumerate_polygonal",
    "holonomy_array",
    "systole",
    "systole_lower_bound_on_interval",
    "interval_sup_x",
    "LatticeModel",
    "lattice_model",
    "lattice_systole",
    "lattice_candidates",
    "gh_matrix",
    "is_holonomy",
]

SQRT2 = math.sqrt(2.0)
DEFAULT_BUDGET = 5_000_000


class ResourceBudgetError(RuntimeError):
    def __init__(self, needed: float, budget: int):
        super().__init__(f"enumeration needs ~{needed:.3g} candidates, budget is {budget}")
        self.needed = needed
        self.budget = budget


@dataclass(frozen=True)
class SaddleSet:
    surface: Surface
    cutoff: float
    vectors: tuple[Holonomy, ...]
    multiplicity: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def support(self) -> set[tuple[float, float]]:
        return {(v.x, v.y) for v in self.vectors}

    def array(self) -> np.ndarray:
        return np.array([[v.x, v.y] for v in self.vectors], dtype=float).reshape(-1, 2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "multiplicity"])
        for v, m in zip(self.vectors, self.multiplicity):
            w.writerow([repr(v.x), repr(v.y), m])
        return buf.getvalue()


@dataclass(frozen=True)
class Systole:
    value: float
    witness: Holonomy


def _sort_key(item):
    (x, y), _ = item
    return (max(abs(x), abs(y)), x, y)


def _make_set(q: Surface, L: float, counts: Counter) -> SaddleSet:
    items = sorted(counts.items(), key=_sort_key)
    return SaddleSet(q, L, tuple(Holonomy(x, y) for (x, y), _ in items), tuple(m for _, m in items))


# -- torus --------------------------------------------------------------------


@lru_cache(maxsize=16)
def _farey_canonical(L: int) -> np.ndarray:
    """Canonical primitive integer vectors with max-norm <= L."""
    out = []
    a, b, c, d = 0, 1, 1, L
    pairs = [(0, 1)]
    while c <= L:
        k = (L + b) // d
        a, b, c, d = c, d, k * c - a, k * d - b
        pairs.append((a, b))
    # pairs: reduced a/b in [0, 1] with b <= L
    for a, b in pairs:
        out.append((a, b))
        if a > 0:
            out.append((-a, b))
            if a != b:
                out.append((b, a))
                out.append((-b, a))
    out.append((1, 0))
    arr = np.array(sorted(set(out)), dtype=np.int64)
    return arr


def _torus_vectors(L: float) -> np.ndarray:
    n = int(math.floor(L + 1e-12))
    if n < 1:
        return np.zeros((0, 2), dtype=np.int64)
    return _farey_canonical(n)


# -- square-tiled ---------------------------------------------------------------


def _crossing_word(p: int, q: int) -> list[str]:
    """Edge crossings of the segment (0,0)->(p,q) (p != 0, q > 0, primitive)."""
    ap = abs(p)
    word = []
    i, j = 1, 1
    while i < ap or j < q:
        # next vertical crossing at i/ap, horizontal at j/q
        if j >= q or (i < ap and i * q < j * ap):
            word.append("r" if p > 0 else "R")
            i += 1
        else:
            word.append("u")
            j += 1
    return word


class _SquareTracer:
    def __init__(self, q: Surface):
        self.n = q.n_squares
        self.r = list(q.perm_right)
        self.u = list(q.perm_up)
        self.R = [0] * self.n
        for i, v in enumerate(self.r):
            self.R[v] = i
        cls, _ = q.base.vertex_classes
        self.cls = cls
        self.marked = q.marked

    def _apply(self, squares: list[int], word) -> list[int]:
        for letter in word:
            perm = self.r if letter == "r" else self.R if letter == "R" else self.u
            squares = [perm[s] for s in squares]
        return squares

    def trace(self, p: int, q: int, kmax: int) -> Counter:
        """Hits k*(p, q), k <= kmax, of separatrices in the canonical primitive direction (p, q)."""
        n = self.n
        if q == 0:
            start_corner, end_corner, word, cont = 0, 1, [], ["r"]
        elif p == 0:
            start_corner, end_corner, word, cont = 0, 3, [], ["u"]
        elif p > 0:
            start_corner, end_corner, word, cont = 0, 2, _crossing_word(p, q), ["u", "r"]
        else:
            start_corner, end_corner, word, cont = 1, 3, _crossing_word(p, q), ["u", "R"]
        hits: Counter = Counter()
        active = [i for i in range(n) if self.cls[(i, start_corner)] in self.marked]
        for k in range(1, kmax + 1):
            if not active:
                break
            ends = self._apply(active, word)
            still = []
            for e in ends:
                if self.cls[(e, end_corner)] in self.marked:
                    hits[(k * p, k * q)] += 1
                else:
                    still.append(e)
            active = self._apply(still, cont)
        return hits


def _primitive_canonical_dirs(L: int):
    return _torus_vectors(L)


def _square_tiled_counts(q: Surface, L: float) -> Counter:
    tracer = q.base_cache.get("tracer")
    if tracer is None:
        tracer = q.base_cache["tracer"] = _SquareTracer(q)
    counts: Counter = Counter()
    n = int(math.floor(L + 1e-12))
    for p, qq in _primitive_canonical_dirs(n):
        p, qq = int(p), int(qq)
        kmax = n // max(abs(p), abs(qq))
        counts.update(tracer.trace(p, qq, kmax))
    return counts


def is_holonomy(q: Surface, x: int, y: int) -> int:
    """Number of saddle connections of a square-tiled surface (base frame) with holonomy +-(x, y)."""
    x, y = int(x), int(y)
    if y < 0 or (y == 0 and x < 0):
        x, y = -x, -y
    if x == 0 and y == 0:
        return 0
    g = math.gcd(x, y)
    p, qq = x // g, y // g
    if q.kind == "torus":
        return 1 if g == 1 else 0
    if q.kind != "square_tiled":
        raise ValueError("is_holonomy is defined for torus and square-tiled surfaces")
    memo = q.base_cache.setdefault("member", {})
    key = (p, qq)
    if key not in memo or memo[key][0] < g:
        tracer = q.base_cache.get("tracer") or q.base_cache.setdefault("tracer", _SquareTracer(q))
        memo[key] = (max(g, 8), tracer.trace(p, qq, max(g, 8)))
    return memo[key][1].get((g * p, g * qq), 0)


# -- polygonal (wedge sweep) ----------------------------------------------------


def _seg_dist(p0, p1) -> float:
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    den = dx * dx + dy * dy
    if den == 0:
        return math.hypot(*p0)
    u = -(p0[0] * dx + p0[1] * dy) / den
    u = min(1.0, max(0.0, u))
    return math.hypot(p0[0] + u * dx, p0[1] + u * dy)


def _cr(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def enumerate_polygonal(q: Surface, L: float, budget: int = DEFAULT_BUDGET) -> Counter:
    """Saddle connections of max-norm <= L by sweeping visibility wedges.

    Works on the framed polygonal presentation. Straight lines through
    unmarked regular vertices are continued; every direction at every marked
    point is covered once, and only canonical holonomies are kept, so each
    unoriented saddle connection is counted once.
    """
    tri = q.polygonal.triangulation
    pts, nb, ccls = tri.points, tri.neighbor, tri.corner_class
    marked = q.marked
    R = SQRT2 * L * (1 + 1e-9) + 1e-9
    counts: Counter = Counter()
    exact: dict = {}
    work = [0]

    def tick():
        work[0] += 1
        if work[0] > budget:
            raise ResourceBudgetError(work[0], budget)

    def sub(a, b):
        return (a[0] - b[0], a[1] - b[1])

    def add(a, b):
        return (a[0] + b[0], a[1] + b[1])

    def record(vec):
        x, y = vec
        scale = max(1.0, abs(x), abs(y))
        if abs(y) <= 1e-9 * scale:
            y = 0.0
            if x <= 0:
                return
        elif y < 0:
            return
        if max(abs(x), abs(y)) <= L * (1 + 1e-12) + 1e-12:
            key = (round(x, 9) + 0.0, round(y, 9) + 0.0)
            exact.setdefault(key, (x + 0.0, y))
            counts[key] += 1

    def hit(vec, corner):
        if ccls[corner] in marked:
            record(vec)
        else:
            continue_ray(vec, ccls[corner])

    def continue_ray(P, cls_id):
        # straight continuation through a regular unmarked vertex at developed position P
        d = P
        nd = math.hypot(*d)
        for t, c in tri.class_corners[cls_id]:
            tick()
            base = pts[t][c]
            A = sub(pts[t][(c + 1) % 3], base)
            B = sub(pts[t][(c + 2) % 3], base)
            nA, nB = math.hypot(*A), math.hypot(*B)
            ca = _cr(A, d)
            if abs(ca) <= 1e-9 * nA * nd and A[0] * d[0] + A[1] * d[1] > 0:
                end = add(P, A)
                if math.hypot(*end) <= R:
                    hit(end, (t, (c + 1) % 3))
                return
            if ca > 0 and _cr(d, B) > 1e-9 * nB * nd:
                trace_ray(d, t, (c + 1) % 3, add(P, A), add(P, B))
                return

    def trace_ray(d, t, e, P0, P1):
        nd = math.hypot(*d)
        while _seg_dist(P0, P1) <= R:
            tick()
            t2, e2 = nb[(t, e)]
            tp = pts[t2]
            W = add(P0, sub(tp[(e2 + 2) % 3], tp[(e2 + 1) % 3]))
            s = _cr(d, W)
            if abs(s) <= 1e-9 * nd * math.hypot(*W):
                if math.hypot(*W) <= R:
                    hit(W, (t2, (e2 + 2) % 3))
                return
            if s < 0:
                t, e, P0, P1 = t2, (e2 + 2) % 3, W, P1
            else:
                t, e, P0, P1 = t2, (e2 + 1) % 3, P0, W

    for t in range(len(pts)):
        for c in range(3):
            if ccls[(t, c)] not in marked:
                continue
            base = pts[t][c]
            A = sub(pts[t][(c + 1) % 3], base)
            B = sub(pts[t][(c + 2) % 3], base)
            if math.hypot(*A) <= R:
                hit(A, (t, (c + 1) % 3))
            stack = [(t, (c + 1) % 3, A, B, A, B)]
            while stack:
                tick()
                t1, e1, P0, P1, dr, dl = stack.pop()
                if _seg_dist(P0, P1) > R:
                    continue
                t2, e2 = nb[(t1, e1)]
                tp = pts[t2]
                W = add(P0, sub(tp[(e2 + 2) % 3], tp[(e2 + 1) % 3]))
                nW = math.hypot(*W)
                cr = _cr(dr, W)
                cl = _cr(W, dl)
                tol_r = 1e-9 * math.hypot(*dr) * nW
                tol_l = 1e-9 * math.hypot(*dl) * nW
                if cr > tol_r and cl > tol_l:
                    if nW <= R:
                        hit(W, (t2, (e2 + 2) % 3))
                    stack.append((t2, (e2 + 1) % 3, P0, W, dr, W))
                    stack.append((t2, (e2 + 2) % 3, W, P1, W, dl))
                elif cr <= tol_r:
                    stack.append((t2, (e2 + 2) % 3, W, P1, dr, dl))
                else:
                    stack.append((t2, (e2 + 1) % 3, P0, W, dr, dl))
    return Counter({exact[k]: m for k, m in counts.items()})


# -- public enumeration ---------------------------------------------------------


def _budget_check(q: Surface, L: float, budget: int):
    est = 4.0 * L * L * max(1, q.n_squares or 1) * max(1.0, q.area)
    if est > budget:
        raise ResourceBudgetError(est, budget)


def _base_counts(q: Surface, L: float, budget: int) -> Counter:
    """Canonical holonomies (base frame) with max-norm <= L."""
    if q.kind == "torus":
        _budget_check(q, L, budget)
        return Counter({(int(x), int(y)): 1 for x, y in _torus_vectors(L)})
    if q.kind == "square_tiled":
        _budget_check(q, L, budget)
        return _square_tiled_counts(q, L)
    raise AssertionError


def enumerate_saddles(q: Surface, L: float, budget: int = DEFAULT_BUDGET) -> SaddleSet:
    """All saddle connections of ``q`` with max-norm length <= L, with multiplicity."""
    if not L > 0:
        raise ValueError("cutoff L must be positive")
    if q.kind == "unfolded":
        return _make_set(q, L, enumerate_polygonal(q, L, budget))
    F = q.frame
    if F == Mat2.identity():
        return _make_set(q, L, _base_counts(q, L, budget))
    Lb = SQRT2 * F.inverse().opnorm() * L
    counts: Counter = Counter()
    for (x, y), m in _base_counts(q, Lb, budget).items():
        u, v = F.apply(x, y)
        if max(abs(u), abs(v)) <= L:
            h = Holonomy(u, v)
            counts[(h.x, h.y)] += m
    return _make_set(q, L, counts)


def holonomy_array(q: Surface, L: float, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """(k, 2) float array of the (framed) holonomies with max-norm <= L; cached per surface."""
    cache = q._cache
    hit = cache.get("arr")
    if hit is not None and hit[0] >= L:
        arr = hit[1]
        return arr[np.max(np.abs(arr), axis=1) <= L]
    if q.kind == "torus" and q.frame == Mat2.identity():
        _budget_check(q, L, budget)
        arr = _torus_vectors(L).astype(float)
    else:
        arr = enumerate_saddles(q, L, budget).array()
    cache["arr"] = (L, arr)
    return arr


# -- systole --------------------------------------------------------------------


def _apply_arr(A: Mat2, arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x, y = arr[:, 0], arr[:, 1]
    return A.a11 * x + A.a12 * y, A.a21 * x + A.a22 * y


def _initial_cutoff(q: Surface) -> float:
    L = math.sqrt(q.area) / 2
    while len(holonomy_array(q, L)) == 0:
        L *= 2
    return L


def systole(q: Surface, A: Mat2 | None = None, budget: int = DEFAULT_BUDGET) -> Systole:
    """min over saddle connections of max-norm length of A applied to the holonomy.

    Certified cutoff: once some witness gives the value M, every competitor
    has framed length <= sqrt(2) * |A^-1| * M, so enumerating that far is
    complete. The cutoff is grown geometrically until the certificate holds.
    """
    A = A or Mat2.identity()
    inv_norm = A.inverse().opnorm()
    L = q._cache.get("sys_L0") or _initial_cutoff(q)
    q._cache["sys_L0"] = L
    while True:
        arr = holonomy_array(q, L, budget)
        xs, ys = _apply_arr(A, arr)
        lengths = np.maximum(np.abs(xs), np.abs(ys))
        M = float(lengths.min())
        need = SQRT2 * inv_norm * M
        if need <= L:
            # ties in max-norm go to the Euclidean-shortest image
            tie = np.flatnonzero(lengths == M)
            k = int(tie[np.argmin(np.hypot(xs[tie], ys[tie]))])
            return Systole(M, Holonomy(float(arr[k, 0]), float(arr[k, 1])))
        L = min(need, 2 * L)


def interval_sup_x(x: float, y: float, s_lo: float, s_hi: float) -> float:
    """sup over s in [s_lo, s_hi] of |x + s y| (affine in s, so an endpoint)."""
    return max(abs(x + s_lo * y), abs(x + s_hi * y))


def systole_lower_bound_on_interval(
    q: Surface, t: float, s_lo: float, s_hi: float, budget: int = DEFAULT_BUDGET
) -> float:
    """inf over s in [s_lo, s_hi] of systole(q, geodesic(t) @ horocycle(s)).

    For each holonomy the x-component is affine in s, so its range over the
    interval is exact; the per-vector infimum of the length is
    max(min |x-range|, e^{-t/2} |y|). The minimum over a certified candidate
    set gives the infimum over the interval.
    """
    if s_lo > s_hi:
        raise ValueError("need s_lo <= s_hi")
    g = geodesic(t)
    A_lo, A_hi = g @ horocycle(s_lo), g @ horocycle(s_hi)
    mid = g @ horocycle(0.5 * (s_lo + s_hi))
    M = systole(q, mid, budget).value
    inv = max(A_lo.inverse().opnorm(), A_hi.inverse().opnorm())
    arr = holonomy_array(q, SQRT2 * inv * M, budget)
    if len(arr) == 0:
        return M
    x_lo, y_lo = _apply_arr(A_lo, arr)
    x_hi, _ = _apply_arr(A_hi, arr)
    straddle = np.sign(x_lo) * np.sign(x_hi) < 0
    xmin = np.where(straddle, 0.0, np.minimum(np.abs(x_lo), np.abs(x_hi)))
    lengths = np.maximum(xmin, np.abs(y_lo))
    return float(min(M, lengths.min()))


# -- lattice path ---------------------------------------------------------------


@dataclass
class LatticeModel:
    """Holonomies lie in the lattice spanned by the columns of ``basis``
    (framed coordinates); ``member(a, b)`` counts saddle connections with
    holonomy a*col1 + b*col2."""

    basis: Mat2
    kind: str
    surface: Surface

    def member(self, a: int, b: int) -> int:
        if self.kind == "primitive":
            return 1 if math.gcd(a, b) == 1 else 0
        return is_holonomy(self.surface, a, b)


def lattice_model(q: Surface) -> LatticeModel | None:
    if "lattice" in q._cache:
        return q._cache["lattice"]
    model = None
    if q.kind == "torus":
        model = LatticeModel(q.frame, "primitive", q)
    elif q.kind == "square_tiled":
        model = LatticeModel(q.frame, "traced", q)
    elif q.genus == 1 and len(q.marked) == 1:
        # once-marked torus: saddle connections are the primitive periods
        base = q.transform(q.frame.inverse()) if q.frame != Mat2.identity() else q
        vecs = enumerate_saddles(base, 2 * math.sqrt(q.area) + 1).vectors
        v1 = vecs[0]
        for v2 in vecs[1:]:
            det = v1.x * v2.y - v1.y * v2.x
            if abs(det) > 1e-9:
                if abs(abs(det) - q.area) < 1e-6:
                    B = Mat2(v1.x, v2.x, v1.y, v2.y)
                    model = LatticeModel(q.frame @ B, "primitive", q)
                break
    q._cache["lattice"] = model
    return model


def gh_matrix(t, s, dps: int = 50):
    """Entries of geodesic(t) @ horocycle(s) as mpf numbers."""
    with mpmath.workdps(dps):
        t = mpmath.mpf(t)
        s = mpmath.mpf(s)
        a = mpmath.exp(t / 2)
        return (a, a * s, mpmath.mpf(0), 1 / a)


def _mat_mul(P, Q):
    return (
        P[0] * Q[0] + P[1] * Q[2],
        P[0] * Q[1] + P[1] * Q[3],
        P[2] * Q[0] + P[3] * Q[2],
        P[2] * Q[1] + P[3] * Q[3],
    )


def _reduce_cols(M):
    """Gauss-reduce the column lattice of M; return reduced columns and the
    integer change of basis (columns of U give coefficient vectors)."""
    u = [M[0], M[2]]
    v = [M[1], M[3]]
    U = [[1, 0], [0, 1]]  # U[0] = coefficients of u, U[1] = of v

    def nrm(w):
        return w[0] * w[0] + w[1] * w[1]

    if nrm(u) > nrm(v):
        u, v = v, u
        U = [U[1], U[0]]
    while True:
        m = int(round((u[0] * v[0] + u[1] * v[1]) / nrm(u)))
        if m:
            v = [v[0] - m * u[0], v[1] - m * u[1]]
            U[1] = [U[1][0] - m * U[0][0], U[1][1] - m * U[0][1]]
        if nrm(v) >= nrm(u):
            return u, v, U
        u, v = v, u
        U = [U[1], U[0]]


def lattice_candidates(M, bx, by) -> list[tuple[int, int]]:
    """Integer (a, b) != 0, one per +- pair, with |(M (a,b))_x| <= bx and |(M (a,b))_y| <= by.

    ``M`` is a row-major 4-tuple (any numeric type supporting + and *).
    """
    # rescale the box to the unit square, reduce, then bound coefficients by Cramer
    S = (M[0] / bx, M[1] / bx, M[2] / by, M[3] / by)
    u, v, U = _reduce_cols(S)
    det = abs(float(u[0] * v[1] - u[1] * v[0]))
    r = SQRT2 * (1 + 1e-9)
    nu, nv = math.hypot(float(u[0]), float(u[1])), math.hypot(float(v[0]), float(v[1]))
    ka = int(nv * r / det) + 1
    kb = int(nu * r / det) + 1
    out = []
    for a in range(-ka, ka + 1):
        for b in range(0, kb + 1):
            if b == 0 and a <= 0:
                continue
            x = a * u[0] + b * v[0]
            y = a * u[1] + b * v[1]
            if abs(x) <= 1 and abs(y) <= 1:
                c0 = a * U[0][0] + b * U[1][0]
                c1 = a * U[0][1] + b * U[1][1]
                if c1 < 0 or (c1 == 0 and c0 < 0):
                    c0, c1 = -c0, -c1
                out.append((c0, c1))
    return out


def _frame_entries(model: LatticeModel, dps: int):
    B = model.basis
    with mpmath.workdps(dps):
        return tuple(mpmath.mpf(v) for v in B.to_json())


def lattice_systole(q: Surface, A, dps: int = 50):
    """Systole of q under the linear map with row-major entries ``A`` (mpf ok).

    Returns ``(value, (x, y))`` with the witness in base-lattice coordinates
    ``(a, b)`` mapped to framed holonomy floats.
    """
    model = lattice_model(q)
    if model is None:
        raise ValueError("surface has no lattice structure")
    with mpmath.workdps(dps):
        M = _mat_mul(tuple(A), _frame_entries(model, dps))
        u, v, _ = _reduce_cols(M)
        b = min(max(abs(w[0]), abs(w[1])) for w in (u, v))
        while True:
            best = None
            for a, c in lattice_candidates(M, b, b):
                m = model.member(a, c)
                if not m:
                    continue
                x = M[0] * a + M[1] * c
                y = M[2] * a + M[3] * c
                val = max(abs(x), abs(y))
                if best is None or val < best[0]:
                    best = (val, (a, c))
            if best is not None:
                a, c = best[1]
                B = model.basis
                return best[0], Holonomy(*B.apply(a, c))
            b *= 2
