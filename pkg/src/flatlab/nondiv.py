"""Bad-time measure on horocycle arcs and its decay in eps.

For a surface ``q``, an interval ``I`` of horocycle parameters and a push
time ``t`` the bad set is

    {s in I : systole(q, geodesic(t) @ horocycle(s)) < eps}.

With ``t = 0`` this is the plain horocycle arc ``h_s q``; a positive ``t``
is the same arc for the surface ``g_t q`` reparametrized by ``e^t``, which is
how long arcs are sampled without enumerating huge vector sets.

Every holonomy ``v = (x, y)`` has ``g_t h_s v = (e^{t/2}(x + s y), e^{-t/2} y)``,
affine in ``s``, so each candidate is short on one explicit open interval and
the bad set is a finite union of intervals.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .flows import geodesic, horocycle
from .saddles import DEFAULT_BUDGET, SQRT2, holonomy_array
from .surface import Surface

__all__ = [
    "NondivParams",
    "DecayFit",
    "DegenerateFitError",
    "check_hypothesis",
    "bad_intervals",
    "bad_measure",
    "fit_decay",
    "sweep_csv",
]


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class NondivParams:
    rho: float
    eps_list: tuple[float, ...]
    I: tuple[float, float] = (0.0, 1.0)
    rho0: float = 0.1
    sample_count: int = 10_000
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "eps_list", tuple(float(e) for e in self.eps_list))
        object.__setattr__(self, "I", (float(self.I[0]), float(self.I[1])))
        if not self.I[0] < self.I[1]:
            raise ValueError(f"interval {self.I} is empty")
        if not 0 < self.rho <= self.rho0:
            raise ValueError(f"need 0 < rho <= rho0, got rho={self.rho}, rho0={self.rho0}")
        if not self.eps_list:
            raise ValueError("eps sweep is empty")
        for e in self.eps_list:
            if not 0 < e <= self.rho:
                raise ValueError(f"eps={e} outside (0, rho={self.rho}]")
        if self.sample_count < 1000:
            raise ValueError("sample_count must be >= 1000")


@dataclass(frozen=True)
class DecayFit:
    alpha_hat: float
    C_hat: float
    residual: float
    eps: tuple[float, ...] = field(default=())
    measures: tuple[float, ...] = field(default=())

    def predict(self, eps: float, rho: float, length: float) -> float:
        return self.C_hat * (eps / rho) ** self.alpha_hat * length


def _push(t: float, s: float):
    return geodesic(t) @ horocycle(s)


def _candidates(q: Surface, I, bound: float, t: float, budget: int) -> np.ndarray:
    """Holonomies that can have length < bound somewhere on g_t h_I q."""
    inv = max(_push(t, I[0]).inverse().opnorm(), _push(t, I[1]).inverse().opnorm())
    return holonomy_array(q, SQRT2 * bound * inv, budget)


def check_hypothesis(q: Surface, I, rho: float, t: float = 0.0, budget: int = DEFAULT_BUDGET) -> bool:
    """Whether sup_{s in I} length(g_t h_s v) >= rho for every saddle connection v.

    The x-component is affine in s and the y-component constant, so the sup is
    attained at an endpoint. A vector can fail only if it is shorter than rho
    at the left endpoint, which bounds the candidates.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    lo, hi = float(I[0]), float(I[1])
    inv = _push(t, lo).inverse().opnorm()
    arr = holonomy_array(q, SQRT2 * rho * inv, budget)
    if len(arr) == 0:
        return True
    best = np.zeros(len(arr))
    for s in (lo, hi):
        A = _push(t, s)
        x = A.a11 * arr[:, 0] + A.a12 * arr[:, 1]
        y = A.a21 * arr[:, 0] + A.a22 * arr[:, 1]
        best = np.maximum(best, np.maximum(np.abs(x), np.abs(y)))
    return bool(best.min() >= rho)


def bad_intervals(q: Surface, I, eps: float, t: float = 0.0, budget: int = DEFAULT_BUDGET) -> list[tuple[float, float]]:
    """The bad set inside I as a sorted list of disjoint open intervals."""
    lo, hi = float(I[0]), float(I[1])
    arr = _candidates(q, (lo, hi), eps, t, budget)
    if len(arr) == 0:
        return []
    a, b = math.exp(t / 2), math.exp(-t / 2)
    x, y = arr[:, 0], arr[:, 1]
    short_y = b * np.abs(y) < eps
    spans = []
    flat = short_y & (y == 0)
    if np.any(flat & (a * np.abs(x) < eps)):
        return [(lo, hi)]
    sel = short_y & (y != 0)
    x, y = x[sel], y[sel]
    centre = -x / y
    half = eps / (a * np.abs(y))
    left = np.maximum(centre - half, lo)
    right = np.minimum(centre + half, hi)
    keep = left < right
    order = np.argsort(left[keep], kind="stable")
    for l, r in zip(left[keep][order], right[keep][order]):
        if spans and l <= spans[-1][1]:
            if r > spans[-1][1]:
                spans[-1] = (spans[-1][0], float(r))
        else:
            spans.append((float(l), float(r)))
    return spans


def _is_bad(arr: np.ndarray, t: float, s: np.ndarray, eps: float) -> np.ndarray:
    a, b = math.exp(t / 2), math.exp(-t / 2)
    out = np.zeros(len(s), dtype=bool)
    x, y = arr[:, 0], arr[:, 1]
    step = max(1, 2_000_000 // max(1, len(arr)))
    for k in range(0, len(s), step):
        ss = s[k : k + step, None]
        lx = np.abs(a * (x[None, :] + ss * y[None, :]))
        out[k : k + step] = np.any(np.maximum(lx, b * np.abs(y)[None, :]) < eps, axis=1)
    return out


def _grid_measure(q: Surface, I, eps: float, samples: int, t: float, budget: int) -> float:
    lo, hi = float(I[0]), float(I[1])
    arr = _candidates(q, (lo, hi), eps, t, budget)
    # keep vectors short somewhere on I: |y'| < eps and the x'-range reaches below eps
    a, b = math.exp(t / 2), math.exp(-t / 2)
    x_lo = a * (arr[:, 0] + lo * arr[:, 1])
    x_hi = a * (arr[:, 0] + hi * arr[:, 1])
    xmin = np.where(x_lo * x_hi < 0, 0.0, np.minimum(np.abs(x_lo), np.abs(x_hi)))
    arr = arr[(b * np.abs(arr[:, 1]) < eps) & (xmin < eps)]
    if len(arr) == 0:
        return 0.0
    h = (hi - lo) / samples
    tol = h / 64
    s = lo + h * (np.arange(samples) + 0.5)
    bad = _is_bad(arr, t, s, eps)
    total = 0.0
    # each cell contributes its bad length; cells whose ends disagree are bisected
    edges = lo + h * np.arange(samples + 1)
    ebad = _is_bad(arr, t, edges, eps)

    def crossing(u: float, v: float, bad_u: bool) -> float:
        while v - u > tol:
            m = 0.5 * (u + v)
            if _is_bad(arr, t, np.array([m]), eps)[0] == bad_u:
                u = m
            else:
                v = m
        return 0.5 * (u + v)

    for i in range(samples):
        l_bad, m_bad, r_bad = ebad[i], bad[i], ebad[i + 1]
        if l_bad == m_bad == r_bad:
            total += h if m_bad else 0.0
            continue
        u, m, v = edges[i], s[i], edges[i + 1]
        for (p0, b0), (p1, b1) in (((u, l_bad), (m, m_bad)), ((m, m_bad), (v, r_bad))):
            if b0 == b1:
                total += (p1 - p0) if b0 else 0.0
            else:
                c = crossing(p0, p1, b0)
                total += (c - p0) if b0 else (p1 - c)
    return float(total)


def bad_measure(
    q: Surface,
    I,
    eps: float,
    samples: int = 10_000,
    t: float = 0.0,
    method: str = "exact",
    budget: int = DEFAULT_BUDGET,
) -> float:
    """Lebesgue measure of {s in I : systole(q, g_t h_s) < eps}.

    ``method="exact"`` sums the union of the per-vector affine bad intervals.
    ``method="grid"`` evaluates a ``samples``-point grid and bisects cells
    that change state, to absolute accuracy about ``|I| / samples``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    if method == "exact":
        return float(sum(r - l for l, r in bad_intervals(q, I, eps, t, budget)))
    if method == "grid":
        return _grid_measure(q, I, eps, samples, t, budget)
    raise ValueError(f"unknown method {method!r}")


def fit_decay(q: Surface, params: NondivParams, method: str = "exact", budget: int = DEFAULT_BUDGET) -> DecayFit:
    """Least-squares fit of log measure = log C + alpha log(eps/rho) + log |I|."""
    if not check_hypothesis(q, params.I, params.rho, params.t, budget):
        raise ValueError(f"hypothesis fails on I={params.I} for rho={params.rho}")
    length = params.I[1] - params.I[0]
    measures = [bad_measure(q, params.I, e, params.sample_count, params.t, method, budget) for e in params.eps_list]
    pts = [(math.log(e / params.rho), math.log(m / length)) for e, m in zip(params.eps_list, measures) if m > 0]
    if len(pts) < 2:
        raise DegenerateFitError("fewer than two positive bad measures; the sweep lies below the systole range")
    X = np.array([[1.0, u] for u, _ in pts])
    Y = np.array([v for _, v in pts])
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - Y) ** 2)))
    return DecayFit(float(coef[1]), float(math.exp(coef[0])), resid, params.eps_list, tuple(measures))


def sweep_csv(fit: DecayFit, rho: float, length: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "bad_measure", "fitted"])
    for e, m in zip(fit.eps, fit.measures):
        w.writerow([repr(e), repr(m), repr(fit.predict(e, rho, length))])
    return buf.getvalue()
