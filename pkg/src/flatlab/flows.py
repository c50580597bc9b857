"""SL(2,R) elements, the one-parameter subgroups used throughout, and their
action on holonomy vectors.

Matrices are stored in full generality so that products such as
``geodesic(t1) @ horocycle(s) @ geodesic(t0)`` are ordinary values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "Mat2",
    "Holonomy",
    "canonical",
    "geodesic",
    "horocycle",
    "rotation",
    "lower",
    "act",
    "factor_rotation",
    "conj_orbit_bound",
]

DET_TOL = 1e-12


@dataclass(frozen=True)
class Mat2:
    a11: float
    a12: float
    a21: float
    a22: float

    @classmethod
    def identity(cls) -> Mat2:
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_json(cls, data) -> Mat2:
        a11, a12, a21, a22 = (float(v) for v in data)
        return cls(a11, a12, a21, a22)

    def to_json(self) -> list[float]:
        return [self.a11, self.a12, self.a21, self.a22]

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def __matmul__(self, other: Mat2) -> Mat2:
        return Mat2(
            self.a11 * other.a11 + self.a12 * other.a21,
            self.a11 * other.a12 + self.a12 * other.a22,
            self.a21 * other.a11 + self.a22 * other.a21,
            self.a21 * other.a12 + self.a22 * other.a22,
        )

    def __neg__(self) -> Mat2:
        return Mat2(-self.a11, -self.a12, -self.a21, -self.a22)

    def inverse(self) -> Mat2:
        d = self.det
        if d == 0:
            raise ZeroDivisionError("singular matrix")
        return Mat2(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d)

    def apply(self, x, y):
        """Raw matrix-vector product, no sign normalization."""
        return self.a11 * x + self.a12 * y, self.a21 * x + self.a22 * y

    def opnorm(self) -> float:
        """Euclidean operator norm (largest singular value)."""
        a, b, c, d = self.a11, self.a12, self.a21, self.a22
        s = a * a + b * b + c * c + d * d
        det = a * d - b * c
        disc = max(s * s - 4.0 * det * det, 0.0)
        return math.sqrt((s + math.sqrt(disc)) / 2.0)

    def maxabs(self) -> float:
        return max(abs(self.a11), abs(self.a12), abs(self.a21), abs(self.a22))

    def max_diff(self, other: Mat2) -> float:
        return max(
            abs(self.a11 - other.a11),
            abs(self.a12 - other.a12),
            abs(self.a21 - other.a21),
            abs(self.a22 - other.a22),
        )

    def is_lower(self, tol: float = DET_TOL) -> bool:
        return abs(self.a12) <= tol and abs(self.det - 1.0) <= tol


def canonical(x, y):
    """Representative of {v, -v} in the half-plane y > 0 or (y == 0, x > 0)."""
    if y < 0 or (y == 0 and x < 0):
        return -x, -y
    return x, y


@dataclass(frozen=True)
class Holonomy:
    """A plane vector identified with its negative, always stored canonically."""

    x: float
    y: float

    def __post_init__(self):
        x, y = canonical(self.x, self.y)
        # -0.0 would break equality/hashing of otherwise equal vectors
        object.__setattr__(self, "x", x + 0.0)
        object.__setattr__(self, "y", y + 0.0)

    @property
    def length(self) -> float:
        return max(abs(self.x), abs(self.y))

    @property
    def euclidean(self) -> float:
        return math.hypot(self.x, self.y)

    def to_json(self) -> list[float]:
        return [self.x, self.y]


def geodesic(t: float) -> Mat2:
    if not math.isfinite(t):
        raise ValueError(f"geodesic time must be finite, got {t}")
    return Mat2(math.exp(t / 2.0), 0.0, 0.0, math.exp(-t / 2.0))


def horocycle(s: float) -> Mat2:
    return Mat2(1.0, s, 0.0, 1.0)


def rotation(theta: float) -> Mat2:
    c, s = math.cos(theta), math.sin(theta)
    return Mat2(c, -s, s, c)


def lower(a: float, b: float) -> Mat2:
    """The element [[a, 0], [b, 1/a]] of the lower-triangular group."""
    if a == 0:
        raise ValueError("lower(a, b) requires a != 0")
    return Mat2(a, 0.0, b, 1.0 / a)


def act(A: Mat2, v: Holonomy) -> Holonomy:
    return Holonomy(*A.apply(v.x, v.y))


def factor_rotation(theta: float) -> tuple[Mat2, float]:
    """Write rotation(theta) = f @ horocycle(s) with f lower triangular.

    s = -tan(theta) and f = [[cos, 0], [sin, 1/cos]].
    """
    c, s = math.cos(theta), math.sin(theta)
    if abs(c) < 1e-9:
        raise ValueError(f"rotation factorization degenerates at theta={theta} (cos ~ 0)")
    return Mat2(c, 0.0, s, 1.0 / c), -s / c


def conj_orbit_bound(b: Mat2, t_max: float) -> float:
    """sup over t in [0, t_max] of the max-entry norm of g_t b g_{-t}.

    The conjugate of [[a, 0], [beta, 1/a]] is [[a, 0], [beta e^{-t}, 1/a]],
    so the supremum is attained at t = 0.
    """
    if not b.is_lower(1e-9):
        raise ValueError("conj_orbit_bound expects a lower-triangular determinant-one matrix")
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    return max(abs(b.a11), abs(b.a22), abs(b.a21))
