import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ltmcascade.meanfield import (MeanFieldMaps, build_maps, concentration_constants, fixed_points,
                                  granovetter_limit, inflection_point, iterate, iterate_time_varying,
                                  local_indicators, varphi, varphi_derivative, varphi_second)
from ltmcascade.statistics import NetworkStatistics, ThresholdCDF

from oracles import binom_tail_exact, binom_tail_recurrence, central_difference

kr = st.integers(1, 60).flatmap(lambda k: st.tuples(st.just(k), st.integers(0, k)))


def test_varphi_closed_forms():
    for k in (1, 4, 9):
        for x in (0.0, 0.3, 1.0):
            assert varphi(k, 0, x) == 1.0
            assert varphi(k, k, x) == pytest.approx(x ** k, abs=1e-15)
            assert varphi(k, 1, x) == pytest.approx(1 - (1 - x) ** k, abs=1e-15)
    assert varphi(7, 3, 0.5) == pytest.approx(99 / 128, abs=1e-15)


@given(kr, st.fractions(0, 1, max_denominator=50))
@settings(max_examples=300, deadline=None)
def test_varphi_matches_exact_sum(kr_, x):
    k, r = kr_
    assert varphi(k, r, float(x)) == pytest.approx(float(binom_tail_exact(k, r, x)), abs=1e-13)


@given(st.integers(1, 1800).flatmap(lambda k: st.tuples(st.just(k), st.integers(0, k))), st.floats(0, 1))
@settings(max_examples=300, deadline=None)
def test_varphi_matches_recurrence_large_k(kr_, x):
    k, r = kr_
    assert varphi(k, r, x) == pytest.approx(binom_tail_recurrence(k, r, x), abs=1e-11)


def test_domain_errors():
    with pytest.raises(ValueError):
        varphi(3, 4, 0.5)
    with pytest.raises(ValueError):
        varphi(3, 1, 1.5)
    with pytest.raises(ValueError):
        varphi_derivative(3, -1, 0.5)


@given(kr, st.floats(0.001, 0.999))
@settings(max_examples=300, deadline=None)
def test_derivative_finite_difference(kr_, x):
    k, r = kr_
    f = lambda v: varphi(k, r, v)  # noqa: E731
    assert varphi_derivative(k, r, x) == pytest.approx(central_difference(f, x), abs=1e-6)
    g = lambda v: varphi_derivative(k, r, v)  # noqa: E731
    assert varphi_second(k, r, x) == pytest.approx(central_difference(g, x, 1e-5),
                                                   abs=1e-4 * max(1.0, k * k))


def test_derivative_closed_form():
    for k, r, x in [(7, 3, 0.2), (10, 1, 0.0), (5, 5, 1.0), (12, 6, 0.6)]:
        want = math.comb(k, r) * r * x ** (r - 1) * (1 - x) ** (k - r)
        assert varphi_derivative(k, r, x) == pytest.approx(want, abs=1e-12)
    assert varphi_derivative(6, 6, 1.0) == 6


def test_inflection_sign_change():
    x0 = inflection_point(8, 6)
    assert x0 == pytest.approx(5 / 7)
    assert varphi_second(8, 6, x0 - 1e-3) > 0 > varphi_second(8, 6, x0 + 1e-3)
    assert abs(varphi_second(8, 6, 5 / 7)) < 1e-12


def test_median_bounds_sample():
    for k in range(1, 40):
        for r in range(1, k + 1):
            assert varphi(k, r, r / k) >= 0.5 - 1e-12
            assert varphi(k, r, (r - 1) / k) <= 0.5 + 1e-12


def test_map_invariants():
    m = MeanFieldMaps.from_terms({(10, 0): 0.02, (8, 6): 0.64, (10, 1): 0.34})
    assert m.phi(0.0) == 0.02
    assert m.phi_prime(0.0) == pytest.approx(3.4, abs=1e-9)
    assert m.phi_prime(1.0) == pytest.approx(0.0, abs=1e-9)
    assert m.phi(1.0) == pytest.approx(1.0, abs=1e-15)
    xs = np.linspace(0, 1, 501)
    assert np.all(np.diff(m.phi(xs)) >= -1e-15)
    with pytest.raises(ValueError):
        MeanFieldMaps.from_terms({(3, 1): 0.5})


def test_homogeneous_maps_equal_varphi():
    st_ = NetworkStatistics({(5, 5, 2, 0): 0.7, (5, 5, 2, 1): 0.3})
    m = build_maps(st_)
    for x in (0.1, 0.5, 0.9):
        assert m.phi(x) == m.psi(x) == varphi(5, 2, x)


def test_q_weights_follow_in_degree():
    st_ = NetworkStatistics({(3, 2, 1, 0): 0.5, (1, 2, 2, 0): 0.5})
    m = build_maps(st_)
    assert dict(((k, r), w) for k, r, w in m.terms_phi) == {(2, 1): 0.75, (2, 2): 0.25}
    assert dict(((k, r), w) for k, r, w in m.terms_psi) == {(2, 1): 0.5, (2, 2): 0.5}


def test_seed_rescaling():
    base = MeanFieldMaps.single(6, 3)
    resc = base.seed_rescaled(0.2)
    for x in (0.0, 0.4, 1.0):
        assert resc.phi(x) == pytest.approx(0.2 + 0.8 * varphi(6, 3, x))
    li = local_indicators(MeanFieldMaps.from_terms({(4, 1): 0.5, (4, 2): 0.5}).seed_rescaled(0.3))
    assert li.gamma == pytest.approx(0.7 * 2.0)


def test_iterate_threshold_behaviour():
    m = MeanFieldMaps.single(7, 3)
    assert iterate(m, 0.246, 0.246).x_final < 1e-9
    assert iterate(m, 0.266, 0.266).x_final > 1 - 1e-9
    tr = iterate(MeanFieldMaps.single(1, 1), 0.37, 0.37, 10)
    assert np.all(tr.x == 0.37)
    tr = iterate(m, 0.3, 0.3, 5)
    assert len(tr.x) == 6 and tr.y[1] == pytest.approx(varphi(7, 3, 0.3))


def test_iterate_at_fixed_point_constant():
    prof = fixed_points(MeanFieldMaps.single(7, 3))
    x0 = prof.roots[1]
    tr = iterate(prof.maps, x0, x0, 20)
    assert np.all(np.abs(tr.x - x0) < 1e-9)


def test_fixed_points_homogeneous():
    prof = fixed_points(MeanFieldMaps.single(7, 3))
    assert len(prof.roots) == 3
    assert prof.roots[1] == pytest.approx(0.256, abs=0.002)
    assert [f.stability for f in prof.fixed_points] == ["stable", "unstable", "stable"]
    assert prof.fixed_points[1].slope > 1
    assert prof.discontinuities == [pytest.approx(prof.roots[1])]
    assert prof.limit_x(prof.roots[1]) == prof.roots[1]
    assert prof.limit(0.1) == (0.0, 0.0) and prof.limit(0.5) == (1.0, 1.0)


def test_fixed_points_mixture():
    prof = fixed_points(MeanFieldMaps.from_terms({(14, 3): 0.45, (11, 9): 0.55}))
    interior = prof.roots[1:-1]
    assert interior == pytest.approx([0.140, 0.451, 0.813], abs=0.002)


def test_constant_map_single_root():
    prof = fixed_points(MeanFieldMaps.single(4, 0))
    assert prof.roots.tolist() == [1.0]
    assert prof.limit_x(0.0) == 1.0


def test_identity_map():
    prof = fixed_points(MeanFieldMaps.from_terms({(2, 1): 0.5, (2, 2): 0.5}))
    assert prof.identity and prof.limit_x(0.3) == 0.3


def test_tangential_root_found():
    # 2x - x^2 crosses the diagonal at 0 with slope 2 and touches it at 1
    prof = fixed_points(MeanFieldMaps.single(2, 1))
    assert prof.roots.tolist() == [0.0, 1.0]
    assert prof.fixed_points[0].stability == "unstable"
    # 1/4 + x/2 + x^2/4 - x = (x - 1)^2 / 4: a double root at 1
    m = MeanFieldMaps.from_terms({(0, 0): 0.25, (1, 1): 0.5, (2, 2): 0.25})
    p = fixed_points(m)
    assert p.roots.tolist() == [1.0]
    assert p.fixed_points[0].stability == "marginal"


def _random_maps(rng):
    terms = {}
    for _ in range(rng.integers(1, 5)):
        k = int(rng.integers(1, 15))
        r = int(rng.integers(0, k + 1))
        terms[(k, r)] = terms.get((k, r), 0.0) + float(rng.random())
    tot = sum(terms.values())
    return MeanFieldMaps.from_terms({c: w / tot for c, w in terms.items()})


def test_limit_profile_agrees_with_iteration():
    rng = np.random.default_rng(7)
    for _ in range(100):
        m = _random_maps(rng)
        prof = fixed_points(m)
        for xi in rng.random(5):
            tr = iterate(m, float(xi), float(xi))
            want = prof.limit_x(float(xi))
            if tr.converged_at is not None:
                assert tr.x_final == pytest.approx(want, abs=1e-5)


def test_limit_monotone_in_xi():
    rng = np.random.default_rng(3)
    for _ in range(30):
        prof = fixed_points(_random_maps(rng))
        tab = prof.table(np.linspace(0, 1, 201))
        assert np.all(np.diff(tab.x_star) >= 0)
        assert np.all(np.diff(tab.y_star) >= -1e-15)


def test_homogeneous_trichotomy():
    for k in range(3, 12):
        for r in range(2, k):
            prof = fixed_points(MeanFieldMaps.single(k, r))
            assert len(prof.roots) == 3
            x0 = prof.roots[1]
            assert prof.limit_x(x0 - 1e-3) == 0.0 and prof.limit_x(x0 + 1e-3) == 1.0
            assert prof.fixed_points[1].slope > 1


def test_limit_table_csv_header():
    tab = fixed_points(MeanFieldMaps.single(7, 3)).table([0.1, 0.9])
    assert tab.to_csv().splitlines() == ["xi,x_star,y_star", "0.1,0.0,0.0", "0.9,1.0,1.0"]


def test_local_indicators():
    li = local_indicators(MeanFieldMaps.from_terms({(10, 0): 0.02, (8, 6): 0.64, (10, 1): 0.34}))
    assert li.gamma == pytest.approx(3.4) and li.vartheta == 0.0
    assert li.near_zero == "lifted" and li.near_one == "stays"
    li = local_indicators(MeanFieldMaps.single(6, 3))
    assert li.gamma == 0 and li.vartheta == 0
    assert li.near_zero == "dies"


def test_granovetter_limit():
    F = ThresholdCDF.step("1/2")
    rows = granovetter_limit(F, [4, 8, 16, 32, 64])
    sups = [r.sup_phi for r in rows]
    assert all(a > b for a, b in zip(sups, sups[1:]))
    single = granovetter_limit(ThresholdCDF.step("3/7"), [7], grid=[0.0])
    assert single[0].sup_phi == pytest.approx(varphi(7, 3, 0.0))


def test_concentration_constants():
    st_ = NetworkStatistics({(3, 3, 2, 0): 1.0})
    cb = concentration_constants(st_, 1, 0.1)
    assert cb.gamma_t == pytest.approx(3 * 3 ** 5 / 3)
    assert concentration_constants(st_, 0, 0.1).beta == pytest.approx(1 / 96)
    tails = [cb.tail(n) for n in (1e3, 1e5, 1e7, 1e9)]
    assert all(a >= b for a, b in zip(tails, tails[1:])) and tails[-1] < 1e-10
    huge = concentration_constants(d_max=1801, k_max=1801, mean_degree=6.7, t=60, epsilon=0.01)
    assert math.isinf(huge.gamma_t) and math.isfinite(huge.log_gamma_t)
    with pytest.raises(ValueError):
        concentration_constants(st_, 1, 0.0)


def test_time_varying_recursion():
    a = MeanFieldMaps.single(5, 5)
    b = MeanFieldMaps.single(5, 0)
    tr = iterate_time_varying([a, a, a, b], 0.5, 0.5, 6)
    assert tr.x[4] == 1.0 and tr.x[3] < 0.01
    c = MeanFieldMaps.single(3, 2)
    tr = iterate_time_varying(lambda t: c, 0.4, 0.4, 8)
    assert np.allclose(tr.x, iterate(c, 0.4, 0.4, 8, tol=-1).x)
    alt = iterate_time_varying(lambda t: a if t % 2 == 0 else c, 0.6, 0.6, 2)
    assert alt.x[2] == pytest.approx(varphi(3, 2, 0.6 ** 5))
