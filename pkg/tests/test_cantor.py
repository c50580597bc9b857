import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flatlab.cantor import (
    CantorLevel,
    CantorParams,
    CantorTree,
    ExtinctionError,
    PreconditionError,
    bounded_direction_check,
    construct,
    derive_params,
    dim_estimate,
    exit_level,
    factorization_condition,
    factorization_norm,
    params_from_eps0,
    reverify,
    survivors,
    tree_to_json,
    verify_claim1,
)
from flatlab.cf_oracle import Basis2, shortest_vector
from flatlab.flows import conj_orbit_bound, factor_rotation, geodesic, horocycle
from flatlab.nondiv import NondivParams, fit_decay
from flatlab.numbers import QuadraticIrrational
from flatlab.saddles import systole
from flatlab.surface import make_square_tiled, make_torus

from conftest import primitive_vectors, random_sl2, torus_systole_grid

TORUS = make_torus()
F = Fraction


# -- parameters ---------------------------------------------------------------------


def test_param_examples():
    p = params_from_eps0(F(1, 20), 0.5, 1, F(1, 10))
    assert p.N == 16 and p.t1 == pytest.approx(math.log(16)) and p.t1_raw == pytest.approx(2 * math.log(4))
    assert params_from_eps0(F(1, 25), 0.5, 1, F(1, 10)).N == 25
    # derive_params takes eps and sets eps0 = eps / (1 + r)
    d = derive_params(TORUS, F(1, 10), 0.5, 1)
    assert d.eps0 == F(1, 20) and d.N == 16
    assert derive_params(TORUS, F(2, 25), 0.5, 1).N == 25


def test_param_r_scaling():
    ratio = params_from_eps0(F(1, 20), 0.5, F(1, 2)).N / params_from_eps0(F(1, 20), 0.5, 1).N
    assert 3.5 <= ratio <= 4.5
    # with eps fixed instead, eps0 = eps / (1 + r) also moves and the ratio is (1.5 / 2 * 2)^2
    fixed = derive_params(TORUS, F(1, 10), 0.5, F(1, 2)).N / derive_params(TORUS, F(1, 10), 0.5, 1).N
    assert fixed == pytest.approx(2.25)


@given(st.fractions(F(1, 1000), F(1, 5)), st.fractions(F(1, 10), F(1)))
def test_param_invariants(eps, r):
    p = derive_params(TORUS, eps, 0.5, r)
    assert p.eps0 == eps / (1 + r)
    raw = (2 * p.rho0 / (p.eps0 * p.r)) ** 2
    assert p.N == max(2, math.ceil(raw)) and p.N >= raw
    assert p.t1 == pytest.approx(math.log(p.N))


def test_param_errors():
    with pytest.raises(PreconditionError) as err:
        derive_params(TORUS.transform(geodesic(6.0)), F(1, 10), 0.5, 1)
    # the witness is the short holonomy of the given surface: (0, 1) pushed to (0, e^-3)
    assert (err.value.witness.x, err.value.witness.y) == pytest.approx((0.0, math.exp(-3.0)))
    with pytest.raises(ValueError):
        derive_params(TORUS, F(1, 10), 0.5, F(3, 2))


# -- claim 1 --------------------------------------------------------------------------


def claim1_oracle(A, t1, r, rho0):
    a = math.exp(t1 / 2)
    best = math.inf
    for x, y in primitive_vectors(60):
        u, v = A.apply(x, y)
        best = min(best, a * max(abs(u), abs(u + r * v)))
    return best >= rho0


def test_claim1_examples():
    p = derive_params(TORUS, F(1, 10), 0.5, 1)
    assert verify_claim1(TORUS, p.t1, p.r, p.rho0, p.eps0)
    q = TORUS.transform(geodesic(5.3))  # (0, 1) -> (0, 0.0707): nearly vertical and short
    assert systole(q).value >= float(p.eps0)
    assert not verify_claim1(q, 0.0, p.r, p.rho0, p.eps0)
    with pytest.raises(PreconditionError):
        verify_claim1(TORUS.transform(geodesic(7.0)), p.t1, p.r, p.rho0, p.eps0)


def test_claim1_against_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(60):
        A = random_sl2(rng, 2.5)
        q = TORUS.transform(A)
        eps0 = systole(q).value * 0.9
        r = float(rng.uniform(0.1, 1))
        t1 = float(rng.uniform(0, 4))
        rho0 = float(rng.uniform(0.05, 1.0))
        assert verify_claim1(q, t1, r, rho0, eps0) == claim1_oracle(A, t1, r, rho0)


@given(st.floats(0, 4), st.floats(0.1, 1), st.floats(0.02, 0.5), st.floats(-2, 2))
def test_claim1_scaling_invariance(t1, r, rho0, s):
    q = TORUS.transform(horocycle(s) @ geodesic(1.0))
    eps0 = systole(q).value * 0.5
    assert verify_claim1(q, t1, r, rho0, eps0) == verify_claim1(q, t1 + 2 * math.log(2), r, 2 * rho0, eps0)


# -- subdivision --------------------------------------------------------------------


def test_survivors_all_children_small_eps():
    p = derive_params(TORUS, F(1, 100), 0.5, F(3, 10), depth=1)
    kids = survivors(TORUS, (F(0), p.r), 0, p)
    assert len(kids) == p.N
    s = np.linspace(0, float(p.r), 200_001)
    assert torus_systole_grid(p.t1, s).min() >= float(p.eps0)


def test_survivors_structure_and_soundness():
    p = derive_params(TORUS, F(1, 10), 0.5, F(3, 10), depth=2)
    w = p.width(1)
    # level-1 parent at the rational direction 0: children near 0 are killed at time 2 t1
    kids = survivors(TORUS, (F(0), w), 1, p)
    assert 0 < len(kids) < p.N
    h = w / p.N
    for (a, b), (c, d) in zip(kids, kids[1:]):
        assert b - a == h and b <= c
    t = 2 * p.t1
    # children are certified for every s: dense samples stay above eps0
    for a, b in kids:
        s = np.linspace(float(a), float(b), 101)
        assert torus_systole_grid(t, s).min() >= float(p.eps0) - 1e-9
    # killed children contain an s below eps0
    kept = {a for a, _ in kids}
    for i in range(p.N):
        a = i * h
        if a not in kept:
            s = np.linspace(float(a), float(a + h), 2001)
            assert torus_systole_grid(t, s).min() < float(p.eps0) + 1e-6
    with pytest.raises(ValueError):
        survivors(TORUS, (F(0), F(1, 7)), 0, p)


def test_survival_fraction_vs_nondiv_envelope():
    fit = fit_decay(TORUS, NondivParams(0.1, (0.1, 0.05, 0.02, 0.01, 0.005), t=16.0))
    eta = 0.5
    p = derive_params(TORUS, F(1, 10), eta, F(3, 10), depth=3)
    assert fit.C_hat * (float(p.eps) / float(p.rho0)) ** fit.alpha_hat < eta
    tree = construct(TORUS, p, max_parents=64)
    rng = np.random.default_rng(0)
    for m, lv in enumerate(tree.levels[:-1]):
        w = p.width(m)
        for i in rng.choice(len(lv.lows), size=min(20, len(lv.lows)), replace=False):
            lo = lv.lows[i]
            assert len(survivors(TORUS, (lo, lo + w), m, p)) >= (1 - eta) * p.N


# -- construction ---------------------------------------------------------------------


def test_depth_zero():
    p = derive_params(TORUS, F(1, 10), 0.5, F(3, 10), depth=0)
    tree = construct(TORUS, p)
    assert tree.counts == [1] and tree.intervals(0) == [(F(0), p.r)]


@pytest.fixture(scope="module")
def tree4():
    p = derive_params(TORUS, F(1, 10), 0.5, F(3, 10), depth=4)
    return construct(TORUS, p, max_parents=256, seed=3)


def test_nesting_and_counts(tree4):
    p = tree4.params
    for m in range(len(tree4.levels) - 1):
        parents = sorted(tree4.levels[m].lows)
        w = p.width(m)
        import bisect

        for a in tree4.levels[m + 1].lows:
            i = bisect.bisect_right(parents, a) - 1
            assert i >= 0 and parents[i] <= a and a + p.width(m + 1) <= parents[i] + w
        assert tree4.levels[m + 1].count <= p.N * tree4.levels[m].count + 1e-9
    assert all(lv.lows == sorted(lv.lows) for lv in tree4.levels)


def test_reported_points_dense_reverification(tree4):
    p = tree4.params
    rng = np.random.default_rng(1)
    lows = tree4.levels[-1].lows
    pick = rng.choice(len(lows), size=min(400, len(lows)), replace=False)
    w = float(p.width(p.depth))
    s = np.concatenate([float(lows[i]) + w * np.linspace(0, 1, 21) for i in pick])
    for k in range(1, p.depth + 1):
        assert torus_systole_grid(k * p.t1, s).min() >= float(p.eps0) - 1e-9
    mids = np.array([float(x) for x in tree4.sample_points])
    for k in range(1, p.depth + 1):
        assert torus_systole_grid(k * p.t1, mids).min() >= float(p.eps0) - 1e-9


def test_reverify_small(tree4):
    n, bad = reverify(TORUS, tree4, points=11, max_intervals=50, seed=0)
    assert n > 0 and bad == []


def test_eps_monotone_same_N():
    r, N, depth = F(3, 10), 19, 3
    trees = []
    for eps0 in (F(1, 8), F(1, 7)):
        P = CantorParams(r, eps0 * (1 + r), eps0, F(1, 10), 0.5, math.log(N), N, depth)
        trees.append(construct(TORUS, P, max_parents=10**6))
    small, big = trees
    for a, b in zip(small.levels, big.levels):
        assert a.exact and b.exact
        assert set(b.lows) <= set(a.lows)


def test_extinction():
    p = params_from_eps0(F(9, 10), 0.5, F(3, 10), eps=F(9, 10))
    with pytest.raises(ExtinctionError) as err:
        construct(TORUS, p)
    assert err.value.level >= 1


def test_threads_deterministic():
    p = derive_params(TORUS, F(1, 5), 0.5, F(3, 10), depth=5)
    a = construct(TORUS, p, max_parents=128, seed=4, threads=1)
    b = construct(TORUS, p, max_parents=128, seed=4, threads=4)
    assert a.counts == b.counts and [lv.lows for lv in a.levels] == [lv.lows for lv in b.levels]
    assert tree_to_json(a) == tree_to_json(b)


def test_square_tiled_float_path_matches_exact():
    q = make_square_tiled([2, 3, 1], [2, 1, 3])
    p = derive_params(q, F(1, 5), 0.5, F(3, 10), depth=2)
    tree = construct(q, p, max_parents=16)
    assert tree.counts[1] > 0
    for a in tree.levels[1].lows:
        s = np.linspace(float(a), float(a + p.width(1)), 21)
        assert min(systole(q, geodesic(p.t1) @ horocycle(x)).value for x in s) >= float(p.eps0) - 1e-9


# -- torus ground truth -------------------------------------------------------------


def convergent_pairs(s: Fraction):
    """(q_n, a_{n+1}) along the continued fraction of s."""
    x = s - math.floor(s)
    qprev, q = 0, 1
    while x:
        x = 1 / x
        a = math.floor(x)
        x -= a
        yield q, a
        qprev, q = q, a * q + qprev


def test_depth8_midpoints_have_bounded_quotients():
    p = derive_params(TORUS, F(1, 5), 0.5, F(3, 10), depth=8)
    tree = construct(TORUS, p, max_parents=512, seed=0)
    N, e0 = p.N, float(p.eps0)
    # a convergent q_n inside the horizon is eps0-short at the first time
    # e^{t/2} > q_n / eps0 on the t1 grid unless a_{n+1} <= sqrt(N) / eps0^2
    horizon = e0 * N ** ((p.depth - 1) / 2)
    limit = math.sqrt(N) / e0**2
    checked = 0
    for s in tree.sample_points:
        for qn, a in convergent_pairs(s):
            if qn > horizon:
                break
            assert a <= limit
            checked += 1
    assert checked > 1000


@pytest.mark.parametrize("eps", [F(1, 5), F(1, 10)])
def test_rationals_exit(eps):
    p = derive_params(TORUS, eps, 0.5, F(3, 10), depth=8)
    e0 = float(p.eps0)
    for q in range(1, 40):
        for num in range(q):
            s = F(num, q)
            if s >= p.r or math.gcd(num, q) != 1:
                continue
            k = exit_level(TORUS, s, p)
            # the vector (-num, q) is eps0-short once e^{t/2} > q / eps0
            assert k is not None and k <= 2 * math.log(q / e0) / p.t1 + 2
    assert exit_level(TORUS, F(0), p) <= 2 * math.log(1 / float(eps)) / p.t1 + 2


# -- dimension ------------------------------------------------------------------------


def fake_tree(N, counts):
    p = CantorParams(F(1), F(1, 10), F(1, 20), F(1, 10), 0.5, math.log(N), N, len(counts) - 1)
    levels = [CantorLevel(m, c, True, []) for m, c in enumerate(counts)]
    return CantorTree(p, levels)


def test_dim_estimate_trivial():
    mc, box = dim_estimate(fake_tree(16, [16**m for m in range(6)]))
    assert abs(mc - 1) < 1e-9 and abs(box - 1) < 1e-9
    mc, box = dim_estimate(fake_tree(16, [8**m for m in range(6)]))
    assert box == pytest.approx(0.75, abs=1e-9) and mc == pytest.approx(0.75, abs=1e-9)
    with pytest.raises(ValueError):
        dim_estimate(fake_tree(16, [1, 3, 0]))


@given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=6), st.integers(2, 400))
def test_mcmullen_consistency(fracs, N):
    counts = [1.0]
    for f in fracs:
        counts.append(counts[-1] * N * f)
    mc, box = dim_estimate(fake_tree(N, counts))
    eta_obs = 1 - min(fracs)
    assert mc == pytest.approx(1 + math.log(1 - eta_obs) / math.log(N), abs=1e-12)
    for eta in (eta_obs, min(0.99, eta_obs + 0.1)):
        assert mc >= 1 + math.log(1 - eta) / math.log(N) - 1e-12
    assert box >= mc - 1e-9


# -- bounded directions -------------------------------------------------------------


def oracle_horocycle_min(s: float, T: float, dt: float = 0.05) -> float:
    n = math.ceil(T / dt)
    best = math.inf
    for j in range(n + 1):
        t = T * j / n
        a, b = math.exp(t / 2), math.exp(-t / 2)
        _, m, _ = shortest_vector(Basis2((a, 0.0), (a * s, b)))
        best = min(best, m)
    return best


def test_bounded_golden():
    s = QuadraticIrrational(-1, 1, 5, 2)  # (sqrt 5 - 1) / 2
    c0 = oracle_horocycle_min((math.sqrt(5) - 1) / 2, 30)
    ok, val = bounded_direction_check(TORUS, s, 30, c0 * 0.999)
    assert ok and val == pytest.approx(c0, rel=1e-9)
    assert val > 0.5


def test_rational_direction_diverges():
    eps = 0.05
    T = 2 * math.log(1 / eps) + 2 * math.log(7) + 1
    ok, val = bounded_direction_check(TORUS, F(3, 7), T, eps)
    assert not ok and val < eps
    # the short vector is (-3, 7): length e^{-t/2} * 7 at the end of the horizon
    assert val <= 7 * math.exp(-T / 2) * 1.06


def test_mode_agreement():
    rng = np.random.default_rng(12)
    T, eps = 8.0, 0.2
    for th in rng.uniform(-1.2, 1.2, 100):
        _, rot = bounded_direction_check(TORUS, th, T, eps, "rotation", dt=0.1)
        _, hor = bounded_direction_check(TORUS, -math.tan(th), T, eps, "horocycle", dt=0.1)
        _, via = bounded_direction_check(TORUS, th, T, eps, "rotation_via_factorization", dt=0.1)
        K_inv, K = factorization_condition(th), factorization_norm(th)
        f, _ = factor_rotation(th)
        assert K <= 2 * conj_orbit_bound(f, T) + 1e-12
        # g_t r = b_t g_t h with |b_t^-1| <= K_inv and |b_t| <= K in the max-norm
        assert via == pytest.approx(hor / K_inv)
        assert hor / K_inv - 1e-12 <= rot <= hor * K + 1e-12
        # verdicts agree once the threshold is adjusted by the condition factors
        if hor >= eps * K_inv:
            assert rot >= eps
        if hor * K < eps:
            assert rot < eps
