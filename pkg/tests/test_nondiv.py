import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flatlab.flows import geodesic, horocycle
from flatlab.nondiv import (
    DegenerateFitError,
    NondivParams,
    bad_intervals,
    bad_measure,
    check_hypothesis,
    fit_decay,
    sweep_csv,
)
from flatlab.saddles import systole
from flatlab.surface import make_square_tiled, make_torus

from conftest import primitive_vectors, torus_bad_fraction

TORUS = make_torus()
SQ3 = make_square_tiled([2, 3, 1], [2, 1, 3])
SWEEP = (0.1, 0.05, 0.02, 0.01, 0.005)


def test_check_hypothesis_examples():
    assert check_hypothesis(TORUS, (0, 1), 0.5)
    assert check_hypothesis(TORUS, (0, 1), 1e-9)
    assert check_hypothesis(SQ3, (0, 1), 1e-9)
    # g_T stretches x and shrinks y: (0, 1) becomes (0, e^{-T/2}) and h_s barely moves it
    q = TORUS.transform(geodesic(6.0))
    assert not check_hypothesis(q, (0, 1e-9), 0.5)
    # same through the push-time parameter
    assert not check_hypothesis(TORUS, (0, 1e-9), 0.5, t=-6.0)
    with pytest.raises(ValueError):
        check_hypothesis(TORUS, (0, 1), 0)


def test_check_hypothesis_brute_force():
    vecs = np.array(sorted(primitive_vectors(30)), dtype=float)
    for t in (0.0, 2.0, 5.0, 8.0):
        for I in ((0, 1), (0.2, 0.25), (-1, 0.5)):
            for rho in (0.05, 0.1, 0.3, 0.7):
                a, b = math.exp(t / 2), math.exp(-t / 2)
                best = np.zeros(len(vecs))
                for s in I:
                    best = np.maximum(best, np.maximum(np.abs(a * (vecs[:, 0] + s * vecs[:, 1])), b * np.abs(vecs[:, 1])))
                # vectors beyond the brute-force box have length >= rho at some endpoint here
                assert check_hypothesis(TORUS, I, rho, t) == bool(best.min() >= rho)


def test_bad_measure_trivial_limits():
    # at t = 0 the torus systole along h_s never drops below 1
    assert bad_measure(TORUS, (0, 1), 0.5) == 0.0
    assert bad_measure(TORUS, (0, 1), 0.5, method="grid") == 0.0
    # eps above every systole value: the whole interval is bad
    assert bad_measure(TORUS, (0, 1), 2.0) == pytest.approx(1.0)
    assert bad_measure(TORUS, (0.3, 0.8), 2.0, method="grid") == pytest.approx(0.5)
    with pytest.raises(ValueError):
        bad_measure(TORUS, (0, 1), 0.1, samples=10)


def test_pushed_base_point_against_dense_grid():
    q = TORUS.transform(geodesic(4.0))
    samples = 10_000
    # h_s g_4 = g_4 h_{s e^-4}: the reference is the Dirichlet grid on [0, e^-4] rescaled
    w = math.exp(-4.0)
    ref = torus_bad_fraction(4.0, 0.05, 0, w, 10**6) / w
    for method in ("exact", "grid"):
        assert abs(bad_measure(q, (0, 1), 0.05, samples=samples, method=method) - ref) <= 2 / samples


@pytest.mark.parametrize("t", [8.0, 10.0, 12.0])
@pytest.mark.parametrize("eps", [0.1, 0.05, 0.01])
def test_exact_against_dirichlet_oracle(t, eps):
    samples = 10_000
    ref = torus_bad_fraction(t, eps, 0, 1, 10**6)
    assert abs(bad_measure(TORUS, (0, 1), eps, samples=samples, t=t) - ref) <= 2 / samples


@pytest.mark.parametrize("t", [6.0, 8.0, 10.0])
def test_grid_against_exact_when_resolved(t):
    # intervals at these times are wider than a grid cell
    for eps in (0.1, 0.05):
        ex = bad_measure(TORUS, (0, 1), eps, t=t)
        gr = bad_measure(TORUS, (0, 1), eps, samples=10_000, t=t, method="grid")
        assert abs(ex - gr) <= 2 / 10_000


def test_bad_intervals_are_disjoint_and_short():
    spans = bad_intervals(TORUS, (0, 1), 0.05, t=10.0)
    assert spans
    for (l1, r1), (l2, r2) in zip(spans, spans[1:]):
        assert l1 < r1 < l2 < r2
    for l, r in spans:
        mid = 0.5 * (l + r)
        assert systole(TORUS, geodesic(10.0) @ horocycle(mid)).value < 0.05


def test_square_tiled_exact_vs_sampling():
    t, eps = 6.0, 0.1
    m = bad_measure(SQ3, (0, 1), eps, t=t)
    grid = (np.arange(4000) + 0.5) / 4000
    frac = np.mean([systole(SQ3, geodesic(t) @ horocycle(s)).value < eps for s in grid])
    assert abs(m - frac) < 5e-3


@pytest.mark.parametrize("t", [10.0, 16.0])
def test_monotone_in_eps(t):
    ms = [bad_measure(TORUS, (0, 1), e, t=t) for e in sorted(SWEEP)]
    assert all(a <= b for a, b in zip(ms, ms[1:]))
    assert ms[0] < ms[-1] / 100  # tends to zero with eps


@given(st.floats(-2, 2), st.floats(0.05, 0.1), st.floats(6, 11))
def test_cocycle_translation(s0, eps, t):
    I = (0.1, 0.6)
    moved = bad_measure(TORUS.transform(horocycle(s0)), I, eps, t=t)
    shifted = bad_measure(TORUS, (I[0] + s0, I[1] + s0), eps, t=t)
    assert abs(moved - shifted) <= 1e-9


def test_fit_decay_pushed():
    p = NondivParams(0.1, SWEEP, I=(0, 1), t=16.0)
    fit = fit_decay(TORUS, p)
    assert fit.alpha_hat > 0
    for e, m in zip(fit.eps, fit.measures):
        assert m <= fit.predict(e, 0.1, 1.0) * 1.1
    fit2 = fit_decay(TORUS, NondivParams(0.1, SWEEP, I=(0, 2), t=16.0))
    assert abs(fit2.alpha_hat - fit.alpha_hat) < 0.1
    rows = sweep_csv(fit, 0.1, 1.0).splitlines()
    assert rows[0] == "eps,bad_measure,fitted" and len(rows) == 1 + len(SWEEP)


def test_fit_decay_degenerate():
    # g_4 . torus on [0, 1] with no push time: nothing is ever short
    q = TORUS.transform(geodesic(4.0))
    with pytest.raises(DegenerateFitError):
        fit_decay(q, NondivParams(0.1, SWEEP))


def test_params_validation():
    with pytest.raises(ValueError):
        NondivParams(0.2, SWEEP)  # rho above rho0
    with pytest.raises(ValueError):
        NondivParams(0.1, (0.2,))
    with pytest.raises(ValueError):
        NondivParams(0.1, SWEEP, I=(1, 1))
    with pytest.raises(ValueError):
        NondivParams(0.1, SWEEP, sample_count=10)
    with pytest.raises(ValueError):
        fit_decay(TORUS.transform(geodesic(6.0)), NondivParams(0.1, SWEEP, I=(0, 1e-9)))
