"""Exact real-number inputs: rationals, quadratic irrationals and numbers given
by a rule for their continued-fraction quotients.

Literal grammar accepted by :func:`parse_number`::

    17            integer
    -3/7          ratio
    0.125         decimal (read exactly as 125/1000)
    sqrt 2        square root of a non-square integer
    (1+sqrt 5)/2  general (p + q*sqrt d)/r, also "(3-2*sqrt 7)/5", "2*sqrt 3"
    [0; 1, 10, 100]   finite continued fraction (a rational)
    liouville 10  quotients 1, 10, 100, ... (unbounded, irrational)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Union

import mpmath

__all__ = [
    "QuadraticIrrational",
    "CFNumber",
    "Real",
    "parse_number",
    "to_mpf",
    "to_float",
]


@dataclass(frozen=True)
class QuadraticIrrational:
    """The number (p + q*sqrt(d)) / r with integers p, q, r and d > 1 square-free-or-not
    but not a perfect square."""

    p: int
    q: int
    d: int
    r: int

    def __post_init__(self):
        if self.r == 0:
            raise ValueError("denominator r must be nonzero")
        if self.d <= 1 or math.isqrt(self.d) ** 2 == self.d:
            raise ValueError(f"d={self.d} must be a positive non-square integer")
        if self.q == 0:
            raise ValueError("q must be nonzero (use a Fraction for rationals)")

    def __float__(self) -> float:
        return float(to_mpf(self, 30))

    def __str__(self) -> str:
        sign = "+" if self.q > 0 else "-"
        return f"({self.p}{sign}{abs(self.q)}*sqrt {self.d})/{self.r}"

    def pqr_form(self) -> tuple[int, int, int]:
        """(P, D, Q) with value (P + sqrt D)/Q and Q | D - P^2."""
        p, q, r = self.p, self.q, self.r
        if q < 0:
            p, q, r = -p, -q, -r
        P, D, Q = p, q * q * self.d, r
        if (D - P * P) % Q:
            P, D, Q = P * abs(Q), D * Q * Q, Q * abs(Q)
        return P, D, Q


@dataclass(frozen=True)
class CFNumber:
    """An irrational given by a0 and a rule n -> a_n (n >= 1) for its quotients."""

    a0: int
    rule: Callable[[int], int]
    label: str = "cf"

    def quotients(self, depth: int) -> list[int]:
        return [self.rule(n) for n in range(1, depth + 1)]

    def __float__(self) -> float:
        return float(to_mpf(self, 30))

    def __str__(self) -> str:
        return self.label


Real = Union[int, float, Fraction, QuadraticIrrational, CFNumber, "mpmath.mpf"]


def _liouville(base: int) -> CFNumber:
    return CFNumber(0, lambda n, b=base: b ** (n - 1), label=f"liouville {base}")


_QI = re.compile(
    r"^\(?\s*(?P<p>[+-]?\d+)?\s*(?P<sign>[+-])?\s*(?:(?P<q>\d+)\s*\*?\s*)?sqrt\s*\(?\s*(?P<d>\d+)\s*\)?\s*\)?"
    r"(?:\s*/\s*(?P<r>[+-]?\d+))?$"
)


def parse_number(text: str) -> Real:
    s = text.strip()
    if s.startswith("[") and s.endswith("]"):
        body = s[1:-1].replace(";", ",")
        parts = [int(v) for v in body.split(",") if v.strip()]
        value = Fraction(parts[-1])
        for a in reversed(parts[:-1]):
            value = a + 1 / value
        return value
    if s.startswith("liouville"):
        return _liouville(int(s.split()[1]))
    if "sqrt" in s:
        m = _QI.match(s)
        if not m:
            raise ValueError(f"cannot parse number literal {text!r}")
        p = int(m.group("p") or 0)
        q = int(m.group("q") or 1)
        if m.group("sign") == "-":
            q = -q
        elif m.group("sign") is None and m.group("p") is not None:
            # "2 sqrt 3" style: the leading integer is the coefficient
            p, q = 0, p
        r = int(m.group("r") or 1)
        return QuadraticIrrational(p, q, int(m.group("d")), r)
    try:
        return Fraction(s)
    except ValueError:
        raise ValueError(f"cannot parse number literal {text!r}") from None


def to_mpf(x: Real, dps: int = 50):
    with mpmath.workdps(dps + 10):
        if isinstance(x, QuadraticIrrational):
            v = (mpmath.mpf(x.p) + x.q * mpmath.sqrt(x.d)) / x.r
        elif isinstance(x, CFNumber):
            # convergents until the denominator squared passes 10^(dps+5)
            h0, h1, k0, k1 = 1, x.a0, 0, 1
            n = 1
            while k1 * k1 < 10 ** (dps + 5):
                a = x.rule(n)
                h0, h1 = h1, a * h1 + h0
                k0, k1 = k1, a * k1 + k0
                n += 1
            v = mpmath.mpf(h1) / k1
        elif isinstance(x, Fraction):
            v = mpmath.mpf(x.numerator) / x.denominator
        else:
            v = mpmath.mpf(x)
    with mpmath.workdps(dps):
        return +v


def to_float(x: Real) -> float:
    return float(x)
