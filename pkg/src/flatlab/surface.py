"""Concrete translation surfaces with enumerable saddle connections: the
once-marked torus, square-tiled surfaces and unfoldings of rational polygons.

All three are backed by a common polygonal presentation (plane polygons with
edges glued by translations). Cone angles are recorded as integer multiples of
pi ("prongs"), so Gauss-Bonnet is checked in exact integer arithmetic.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from typing import Sequence

from .flows import Mat2

__all__ = [
    "PolygonSpec",
    "Singularity",
    "PolygonalSurface",
    "Surface",
    "SurfaceError",
    "make_torus",
    "make_square_tiled",
    "unfold",
    "surface_from_json",
    "polygon_from_json",
]

ANGLE_TOL = 1e-9


class SurfaceError(ValueError):
    """Invalid surface or polygon data."""


def _cross(u, v) -> float:
    return u[0] * v[1] - u[1] * v[0]


def _signed_area(pts) -> float:
    n = len(pts)
    return 0.5 * sum(_cross(pts[i], pts[(i + 1) % n]) for i in range(n))


@dataclass(frozen=True)
class PolygonSpec:
    """A rational polygon: vertices (counter-clockwise) and interior angles p/q * pi."""

    vertices: tuple[tuple[float, float], ...]
    angles: tuple[tuple[int, int], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        for p, q in self.angles:
            if isinstance(p, bool) or isinstance(q, bool) or int(p) != p or int(q) != q:
                raise SurfaceError(f"angle {p}/{q} pi is not rational with integer data")
        angles = tuple((int(p), int(q)) for p, q in self.angles)
        n = len(verts)
        if n < 3 or len(angles) != n:
            raise SurfaceError("polygon needs >= 3 vertices and one angle per vertex")
        if _signed_area(verts) < 0:
            verts = tuple(reversed(verts))
            angles = tuple(reversed(angles))
        for p, q in angles:
            if q <= 0 or p <= 0:
                raise SurfaceError(f"angle {p}/{q} pi is not a positive rational multiple of pi")
            if math.gcd(p, q) != 1:
                raise SurfaceError(f"angle {p}/{q} is not in lowest terms")
            if not 0 < p / q < 2:
                raise SurfaceError(f"angle {p}/{q} pi outside (0, 2 pi)")
        if sum(Fraction(p, q) for p, q in angles) != n - 2:
            raise SurfaceError("interior angles do not sum to (n - 2) pi")
        for i in range(n):
            prev, cur, nxt = verts[i - 1], verts[i], verts[(i + 1) % n]
            a = (nxt[0] - cur[0], nxt[1] - cur[1])
            b = (prev[0] - cur[0], prev[1] - cur[1])
            ang = math.atan2(_cross(a, b), a[0] * b[0] + a[1] * b[1]) % (2 * math.pi)
            p, q = angles[i]
            if abs(ang - math.pi * p / q) > 1e-7:
                raise SurfaceError(
                    f"vertex {i}: geometric angle {ang:.9f} does not match declared {p}/{q} pi"
                )
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "angles", angles)

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @property
    def denominator(self) -> int:
        return reduce(lambda a, b: a * b // math.gcd(a, b), (q for _, q in self.angles))

    @property
    def diameter(self) -> float:
        v = self.vertices
        return max(math.dist(a, b) for a in v for b in v)

    def to_json(self) -> dict:
        return {"vertices": [list(v) for v in self.vertices], "angles": [list(a) for a in self.angles]}


def polygon_from_json(data: dict) -> PolygonSpec:
    return PolygonSpec(tuple(map(tuple, data["vertices"])), tuple(map(tuple, data["angles"])))


@dataclass(frozen=True)
class Singularity:
    """A vertex class of the surface: cone angle = prongs * pi."""

    prongs: int
    location: int
    marked: bool

    @property
    def cone_angle(self) -> float:
        return self.prongs * math.pi

    @property
    def is_regular(self) -> bool:
        return self.prongs == 2


class PolygonalSurface:
    """Plane polygons glued edge-to-edge by translations.

    ``polygons[i]`` lists vertices counter-clockwise; edge ``k`` runs from vertex
    ``k`` to vertex ``k+1``. ``gluing[(i, k)] = (j, l)`` means edge k of polygon i
    is glued to edge l of polygon j (the two edge vectors are opposite).
    """

    def __init__(self, polygons, gluing, angles_pi=None):
        self.polygons = [tuple((float(x), float(y)) for x, y in poly) for poly in polygons]
        self.gluing = dict(gluing)
        for (i, k), (j, l) in self.gluing.items():
            if self.gluing.get((j, l)) != (i, k):
                raise SurfaceError(f"gluing is not an involution at {(i, k)}")
            a, b = self.edge(i, k), self.edge(j, l)
            if abs(a[0] + b[0]) > 1e-9 or abs(a[1] + b[1]) > 1e-9:
                raise SurfaceError(f"edges {(i, k)} and {(j, l)} are not glued by a translation")
        # optional exact corner angles in units of pi, keyed by (polygon, vertex)
        self._angles_pi = angles_pi

    def edge(self, i: int, k: int):
        poly = self.polygons[i]
        a, b = poly[k], poly[(k + 1) % len(poly)]
        return b[0] - a[0], b[1] - a[1]

    def corner_angle_pi(self, i: int, k: int) -> Fraction:
        if self._angles_pi is not None:
            return self._angles_pi[(i, k)]
        poly = self.polygons[i]
        cur, nxt, prev = poly[k], poly[(k + 1) % len(poly)], poly[k - 1]
        a = (nxt[0] - cur[0], nxt[1] - cur[1])
        b = (prev[0] - cur[0], prev[1] - cur[1])
        ang = math.atan2(_cross(a, b), a[0] * b[0] + a[1] * b[1]) % (2 * math.pi)
        return Fraction(ang / math.pi).limit_denominator(1000)

    @cached_property
    def vertex_classes(self) -> tuple[dict, list[list]]:
        """Map corner -> class id, and the corners of each class in rotation order."""
        cls: dict[tuple[int, int], int] = {}
        members: list[list[tuple[int, int]]] = []
        for i, poly in enumerate(self.polygons):
            for k in range(len(poly)):
                if (i, k) in cls:
                    continue
                cid = len(members)
                cycle = []
                corner = (i, k)
                while corner not in cls:
                    cls[corner] = cid
                    cycle.append(corner)
                    j, l = self.gluing[corner]
                    corner = (j, (l + 1) % len(self.polygons[j]))
                members.append(cycle)
        return cls, members

    def cone_prongs(self) -> list[int]:
        """Cone angle of each vertex class as an integer multiple of pi."""
        _, members = self.vertex_classes
        out = []
        for cycle in members:
            total = sum(self.corner_angle_pi(i, k) for i, k in cycle)
            if total.denominator != 1:
                raise SurfaceError(f"cone angle {total} pi is not a multiple of pi")
            out.append(int(total))
        return out

    @property
    def area(self) -> float:
        return sum(_signed_area(p) for p in self.polygons)

    def transformed(self, A: Mat2) -> PolygonalSurface:
        if A.det <= 0:
            raise SurfaceError("frame must preserve orientation")
        polys = [[A.apply(x, y) for x, y in poly] for poly in self.polygons]
        return PolygonalSurface(polys, self.gluing, self._angles_pi)

    @cached_property
    def triangulation(self) -> Triangulation:
        return Triangulation.from_polygonal(self)


def _ear_clip(poly) -> list[tuple[int, int, int]]:
    idx = list(range(len(poly)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(poly) ** 2:
            raise SurfaceError("ear clipping failed (degenerate polygon)")
        m = len(idx)
        for t in range(m):
            a, b, c = idx[t - 1], idx[t], idx[(t + 1) % m]
            pa, pb, pc = poly[a], poly[b], poly[c]
            if _cross((pb[0] - pa[0], pb[1] - pa[1]), (pc[0] - pa[0], pc[1] - pa[1])) <= 1e-14:
                continue
            inside = False
            for d in idx:
                if d in (a, b, c):
                    continue
                pd = poly[d]
                if (
                    _cross((pb[0] - pa[0], pb[1] - pa[1]), (pd[0] - pa[0], pd[1] - pa[1])) >= 0
                    and _cross((pc[0] - pb[0], pc[1] - pb[1]), (pd[0] - pb[0], pd[1] - pb[1])) >= 0
                    and _cross((pa[0] - pc[0], pa[1] - pc[1]), (pd[0] - pc[0], pd[1] - pc[1])) >= 0
                ):
                    inside = True
                    break
            if not inside:
                tris.append((a, b, c))
                idx.pop(t)
                break
    tris.append(tuple(idx))
    return tris


@dataclass
class Triangulation:
    """Triangles with neighbour table; corner classes inherited from the polygons."""

    points: list[tuple[tuple[float, float], ...]]
    neighbor: dict[tuple[int, int], tuple[int, int]]
    corner_class: dict[tuple[int, int], int]
    class_corners: list[list[tuple[int, int]]] = field(default_factory=list)

    @classmethod
    def from_polygonal(cls, surf: PolygonalSurface) -> Triangulation:
        ccls, _ = surf.vertex_classes
        points, corner_class, neighbor = [], {}, {}
        owner: dict[tuple[int, int], tuple[int, int]] = {}
        for i, poly in enumerate(surf.polygons):
            n = len(poly)
            diagonals: dict[tuple[int, int], tuple[int, int]] = {}
            for tri in _ear_clip(poly):
                t = len(points)
                points.append(tuple(poly[v] for v in tri))
                for c, v in enumerate(tri):
                    corner_class[(t, c)] = ccls[(i, v)]
                for e in range(3):
                    a, b = tri[e], tri[(e + 1) % 3]
                    if (b - a) % n == 1:
                        owner[(i, a)] = (t, e)
                    elif (b, a) in diagonals:
                        u = diagonals.pop((b, a))
                        neighbor[(t, e)] = u
                        neighbor[u] = (t, e)
                    else:
                        diagonals[(a, b)] = (t, e)
            if diagonals:
                raise SurfaceError("triangulation left unmatched diagonals")
        for (i, k), (j, l) in surf.gluing.items():
            neighbor[owner[(i, k)]] = owner[(j, l)]
        class_corners: list[list] = [[] for _ in range(max(corner_class.values()) + 1)]
        for corner, c in sorted(corner_class.items()):
            class_corners[c].append(corner)
        return cls(points, neighbor, corner_class, class_corners)


class Surface:
    """A translation surface of one of three kinds, possibly viewed through a
    linear frame ``A`` (the surface ``A . q``).

    Treat instances as immutable; use :meth:`transform` to move them by SL(2,R).
    """

    def __init__(
        self,
        kind: str,
        polygonal: PolygonalSurface,
        *,
        n_squares: int | None = None,
        perm_right: tuple[int, ...] | None = None,
        perm_up: tuple[int, ...] | None = None,
        polygon: PolygonSpec | None = None,
        copies: list[Mat2] | None = None,
        frame: Mat2 | None = None,
    ):
        self.kind = kind
        self.base = polygonal
        self.n_squares = n_squares
        self.perm_right = perm_right
        self.perm_up = perm_up
        self.polygon = polygon
        self.copies = copies
        self.frame = frame or Mat2.identity()
        self._cache: dict = {}

        prongs = polygonal.cone_prongs()
        cone = [c for c, p in enumerate(prongs) if p > 2]
        if cone:
            marked = set(cone)
        else:
            # no cone points: mark one regular point so saddle connections exist
            cls, _ = polygonal.vertex_classes
            marked = {cls[(0, 0)]}
        self.singularities = [Singularity(p, c, c in marked) for c, p in enumerate(prongs)]
        self.marked = frozenset(marked)

    # -- derived data -----------------------------------------------------

    @property
    def is_torus_model(self) -> bool:
        return self.kind == "torus"

    @property
    def area(self) -> float:
        return self.base.area

    @property
    def genus(self) -> int:
        excess = sum(s.prongs - 2 for s in self.singularities)
        if excess % 4:
            raise SurfaceError(f"Gauss-Bonnet violated: total excess {excess} not divisible by 4")
        return excess // 4 + 1

    def stratum(self) -> list[int]:
        """Orders of the zeros (cone angle 2pi(k+1) has order k), marked points as 0."""
        return sorted(
            (s.prongs // 2 - 1 for s in self.singularities if s.marked), reverse=True
        )

    @cached_property
    def polygonal(self) -> PolygonalSurface:
        if self.frame == Mat2.identity():
            return self.base
        return self.base.transformed(self.frame)

    def transform(self, A: Mat2) -> Surface:
        """The surface A . q (holonomies of the result are A times those of q)."""
        new = Surface.__new__(Surface)
        new.__dict__.update(self.__dict__)
        new.__dict__.pop("polygonal", None)
        new.frame = A @ self.frame
        new._cache = {}
        if "_base_cache" in self.__dict__:
            new._base_cache = self._base_cache
        else:
            new._base_cache = self._base_cache = {}
        return new

    @property
    def base_cache(self) -> dict:
        """Cache shared by all frames of the same underlying surface."""
        if "_base_cache" not in self.__dict__:
            self._base_cache = {}
        return self._base_cache

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "area": self.area,
            "genus": self.genus,
            "stratum": self.stratum(),
            "singularities": [
                {"location": s.location, "prongs": s.prongs, "cone_angle_pi": s.prongs, "marked": s.marked}
                for s in self.singularities
            ],
            "frame": self.frame.to_json(),
        }

    def to_json(self) -> dict:
        if self.kind == "torus":
            data = {"kind": "torus"}
        elif self.kind == "square_tiled":
            data = {
                "kind": "square_tiled",
                "n": self.n_squares,
                "right": [p + 1 for p in self.perm_right],
                "up": [p + 1 for p in self.perm_up],
            }
        else:
            data = {"kind": "unfolded", "polygon": self.polygon.to_json()}
        if self.frame != Mat2.identity():
            data["frame"] = self.frame.to_json()
        return data

    def __repr__(self) -> str:
        return f"Surface({json.dumps(self.to_json())})"


# -- constructors -------------------------------------------------------------

_UNIT_SQUARE = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))


def _square_tiled_polygonal(right: Sequence[int], up: Sequence[int]) -> PolygonalSurface:
    n = len(right)
    polys = [_UNIT_SQUARE] * n
    gluing = {}
    for i in range(n):
        # edges: 0 bottom, 1 right, 2 top, 3 left
        gluing[(i, 1)] = (right[i], 3)
        gluing[(right[i], 3)] = (i, 1)
        gluing[(i, 2)] = (up[i], 0)
        gluing[(up[i], 0)] = (i, 2)
    angles = {(i, k): Fraction(1, 2) for i in range(n) for k in range(4)}
    return PolygonalSurface(polys, gluing, angles)


def make_torus() -> Surface:
    """Unit-square torus with one marked point at the corner."""
    return Surface("torus", _square_tiled_polygonal([0], [0]), n_squares=1, perm_right=(0,), perm_up=(0,))


def _is_transitive(right, up) -> bool:
    n = len(right)
    seen, todo = {0}, [0]
    inv_r = {v: k for k, v in enumerate(right)}
    inv_u = {v: k for k, v in enumerate(up)}
    while todo:
        i = todo.pop()
        for j in (right[i], up[i], inv_r[i], inv_u[i]):
            if j not in seen:
                seen.add(j)
                todo.append(j)
    return len(seen) == n


def make_square_tiled(perm_right: Sequence[int], perm_up: Sequence[int], one_based: bool = True) -> Surface:
    """Square-tiled surface: square i has square right[i] to its right and up[i] above."""
    off = 1 if one_based else 0
    right = tuple(int(v) - off for v in perm_right)
    up = tuple(int(v) - off for v in perm_up)
    n = len(right)
    if len(up) != n or n == 0:
        raise SurfaceError("permutations must have equal positive degree")
    for name, p in (("right", right), ("up", up)):
        if sorted(p) != list(range(n)):
            raise SurfaceError(f"perm_{name} is not a permutation of 1..{n}")
    if not _is_transitive(right, up):
        raise SurfaceError("permutations do not act transitively (disconnected surface)")
    return Surface(
        "square_tiled",
        _square_tiled_polygonal(right, up),
        n_squares=n,
        perm_right=right,
        perm_up=up,
    )


def _reflection(beta: float) -> Mat2:
    c, s = math.cos(2 * beta), math.sin(2 * beta)
    return Mat2(c, s, s, -c)


def _key(A: Mat2) -> tuple:
    return tuple(round(v, 7) + 0.0 for v in A.to_json())


def reflection_group(p: PolygonSpec) -> tuple[list[Mat2], list[Mat2]]:
    """Linear parts of the reflection group generated by the edges, and the
    edge reflections themselves."""
    verts = p.vertices
    n = len(verts)
    refl = []
    for e in range(n):
        a, b = verts[e], verts[(e + 1) % n]
        refl.append(_reflection(math.atan2(b[1] - a[1], b[0] - a[0])))
    order = 2 * p.denominator
    elems = [Mat2.identity()]
    index = {_key(elems[0]): 0}
    todo = deque([0])
    while todo:
        g = elems[todo.popleft()]
        for R in refl:
            h = g @ R
            k = _key(h)
            if k not in index:
                index[k] = len(elems)
                elems.append(h)
                todo.append(index[k])
                if len(elems) > order:
                    raise SurfaceError("reflection group is larger than 2N: angles inconsistent")
    if len(elems) != order:
        raise SurfaceError(f"reflection group has order {len(elems)}, expected {order}")
    return elems, refl


def unfold(p: PolygonSpec) -> Surface:
    """Unfolding of a rational polygon: 2N reflected copies, N = lcm of angle denominators."""
    if not isinstance(p, PolygonSpec):
        raise SurfaceError("unfold expects a PolygonSpec with rational angles")
    elems, refl = reflection_group(p)
    index = {_key(g): k for k, g in enumerate(elems)}
    n = len(p.vertices)
    polys, edge_map, angles = [], [], {}
    for c, g in enumerate(elems):
        img = [g.apply(x, y) for x, y in p.vertices]
        if g.det > 0:
            polys.append(img)
            emap = list(range(n))
            for v in range(n):
                angles[(c, v)] = Fraction(*p.angles[v])
        else:
            polys.append(list(reversed(img)))
            emap = [(n - 2 - e) % n for e in range(n)]
            for v in range(n):
                angles[(c, n - 1 - v)] = Fraction(*p.angles[v])
        edge_map.append(emap)
    gluing = {}
    for c, g in enumerate(elems):
        for e in range(n):
            d = index[_key(g @ refl[e])]
            gluing[(c, edge_map[c][e])] = (d, edge_map[d][e])
    surf = PolygonalSurface(polys, gluing, angles)
    return Surface("unfolded", surf, polygon=p, copies=elems)


def surface_from_json(data: dict) -> Surface:
    kind = data.get("kind")
    if kind == "torus":
        s = make_torus()
    elif kind == "square_tiled":
        s = make_square_tiled(data["right"], data["up"])
        if "n" in data and data["n"] != s.n_squares:
            raise SurfaceError(f"n={data['n']} disagrees with permutation degree {s.n_squares}")
    elif kind == "unfolded":
        s = unfold(polygon_from_json(data["polygon"]))
    elif "vertices" in data:
        s = unfold(polygon_from_json(data))
    else:
        raise SurfaceError(f"unknown surface kind {kind!r}")
    if "frame" in data:
        s = s.transform(Mat2.from_json(data["frame"]))
    return s
