"""Exact ground truth on the torus: continued fractions, badly approximable
numbers and shortest vectors of planar lattices.

Everything here is deliberately independent of :mod:`flatlab.saddles`; it is
the reference the torus computations are checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .numbers import CFNumber, QuadraticIrrational, Real

__all__ = [
    "CFExpansion",
    "Basis2",
    "DegenerateBasisError",
    "cf_expand",
    "is_badly_approximable",
    "shortest_vector",
    "gauss_reduce",
]


@dataclass
class CFExpansion:
    a0: int
    partial_quotients: list[int]
    exact: bool
    terminated: bool = False  # rational input ran out of quotients
    precision_exhausted: bool = False  # float input: further quotients are not determined
    period_start: int | None = None  # index into partial_quotients where the period begins
    period: list[int] = field(default_factory=list)

    def as_list(self) -> list[int]:
        return [self.a0, *self.partial_quotients]


def _cf_fraction(x: Fraction, depth: int) -> tuple[int, list[int], bool]:
    a0 = math.floor(x)
    rest = x - a0
    pq: list[int] = []
    while rest and len(pq) < depth:
        x = 1 / rest
        a = math.floor(x)
        pq.append(a)
        rest = x - a
    return a0, pq, rest == 0


def _cf_quadratic(x: QuadraticIrrational, depth: int) -> CFExpansion:
    P, D, Q = x.pqr_form()
    root = math.isqrt(D)
    seen: dict[tuple[int, int], int] = {}
    terms: list[int] = []
    period_span = None
    while len(terms) < depth + 1:
        if period_span is None:
            if (P, Q) in seen:
                period_span = (seen[(P, Q)], len(terms))
            else:
                seen[(P, Q)] = len(terms)
        a = (P + root) // Q if Q > 0 else (P + root + 1) // Q
        terms.append(a)
        P = a * Q - P
        Q = (D - P * P) // Q
    exp = CFExpansion(terms[0], terms[1:], exact=True)
    if period_span is not None:
        j, n = period_span
        exp.period = terms[j:n]
        exp.period_start = max(j - 1, 0) if j >= 1 else 0
    return exp


def cf_expand(x: Real, depth: int) -> CFExpansion:
    """Continued-fraction expansion to ``depth`` partial quotients beyond a0."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if isinstance(x, QuadraticIrrational):
        return _cf_quadratic(x, depth)
    if isinstance(x, CFNumber):
        return CFExpansion(x.a0, x.quotients(depth), exact=True)
    if isinstance(x, (int, Fraction)):
        a0, pq, done = _cf_fraction(Fraction(x), depth)
        return CFExpansion(a0, pq, exact=True, terminated=done)
    # floats (and mpf) are bracketed by neighbouring representable values;
    # quotients are kept only while both brackets agree
    xf = float(x)
    lo = Fraction(math.nextafter(xf, -math.inf))
    hi = Fraction(math.nextafter(xf, math.inf))
    a_lo, q_lo, _ = _cf_fraction(lo, depth)
    a_hi, q_hi, _ = _cf_fraction(hi, depth)
    if a_lo != a_hi:
        return CFExpansion(math.floor(xf), [], exact=False, precision_exhausted=True)
    agreed: list[int] = []
    for u, v in zip(q_lo, q_hi):
        if u != v:
            break
        agreed.append(u)
    exhausted = len(agreed) < depth
    return CFExpansion(a_lo, agreed, exact=False, precision_exhausted=exhausted)


def is_badly_approximable(x: Real, bound: int, depth: int) -> bool:
    """True iff every computed partial quotient (beyond a0) is <= bound."""
    if depth < 10:
        raise ValueError("depth must be >= 10")
    exp = cf_expand(x, depth)
    if exp.terminated:
        # rationals are never badly approximable
        return False
    return all(a <= bound for a in exp.partial_quotients)


@dataclass(frozen=True)
class Basis2:
    v1: tuple
    v2: tuple

    @property
    def det(self):
        return self.v1[0] * self.v2[1] - self.v1[1] * self.v2[0]


class DegenerateBasisError(ValueError):
    pass


def _dot(u, v):
    return u[0] * v[0] + u[1] * v[1]


def gauss_reduce(basis: Basis2) -> Basis2:
    """Lagrange-Gauss reduction: |v1| <= |v2| and |<v1,v2>| <= |v1|^2 / 2."""
    u, v = basis.v1, basis.v2
    if _dot(u, u) > _dot(v, v):
        u, v = v, u
    for _ in range(100_000):
        uu = _dot(u, u)
        if uu == 0:
            raise DegenerateBasisError("basis vectors are dependent")
        uv = _dot(u, v)
        # leave already reduced pairs alone so reduction is idempotent at ties
        m = round(uv / uu) if 2 * abs(uv) > uu * (1 + 1e-12) else 0
        if m:
            v = (v[0] - m * u[0], v[1] - m * u[1])
        if _dot(v, v) >= uu:
            return Basis2(u, v)
        u, v = v, u
    raise DegenerateBasisError("reduction did not terminate (nearly dependent basis)")


def _maxnorm(v):
    return max(abs(v[0]), abs(v[1]))


def shortest_vector(basis: Basis2):
    """Shortest nonzero vector of the lattice spanned by ``basis``.

    Returns ``(v, maxnorm, eucnorm)``: ``v`` is a Euclidean-shortest vector,
    ``eucnorm`` its Euclidean norm and ``maxnorm`` the minimum of
    max(|x|, |y|) over all nonzero lattice vectors.
    """
    if basis.det == 0:
        raise DegenerateBasisError("basis vectors are dependent")
    red = gauss_reduce(basis)
    b1, b2 = red.v1, red.v2
    # a reduced basis of a genuine lattice is nearly orthogonal: |det| >= (sqrt 3 / 2)|b1||b2|
    scale = math.sqrt(float(_dot(b1, b1)) * float(_dot(b2, b2)))
    if abs(float(red.det)) <= 1e-12 * scale:
        raise DegenerateBasisError("basis vectors are (nearly) dependent")
    best = min((b1, b2, (b1[0] + b2[0], b1[1] + b2[1]), (b1[0] - b2[0], b1[1] - b2[1])), key=_maxnorm)
    m = _maxnorm(best)
    # any vector with max-norm <= m has Euclidean norm <= sqrt(2) m;
    # Cramer's rule bounds its coordinates in the reduced basis
    radius = math.sqrt(2.0) * float(m)
    adet = abs(float(red.det))
    n1 = float(_dot(b1, b1)) ** 0.5
    n2 = float(_dot(b2, b2)) ** 0.5
    ka = int(n2 * radius / adet) + 1
    kb = int(n1 * radius / adet) + 1
    for a in range(-ka, ka + 1):
        for b in range(0, kb + 1):
            if b == 0 and a <= 0:
                continue
            w = (a * b1[0] + b * b2[0], a * b1[1] + b * b2[1])
            if _maxnorm(w) < m:
                m, best = _maxnorm(w), w
    return b1, m, _dot(b1, b1) ** 0.5
