import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from coxballs.errors import ValidationError
from coxballs.laws import PowerWeight
from coxballs.measures import (BallFunctional1D, TestMeasure, alpha_norm_profile, ball_mass,
                               global_x_grid, mab_integral, signed_alpha_integrals)
from coxballs.rng import stream

UNIT = TestMeasure.interval(0.0, 1.0)
DIPOLE = TestMeasure.interval(0.0, 1.0) - TestMeasure.interval(2.0, 3.0)


def unit_profile_alpha2(r):
    # closed form of int |mu(B(x,r))|^2 dx for mu = 1_[0,1]
    if r < 0.5:
        return 4 * r * r - 8 * r**3 / 3
    return 2 * r - 1 / 3


def test_ball_mass_examples():
    assert ball_mass(UNIT, [0.5], 0.2) == pytest.approx(0.4)
    assert ball_mass(UNIT, [2.0], 0.5) == 0.0


def test_lens_area():
    disk = TestMeasure.ball([0.0, 0.0], 1.0)
    exact = 2 * math.acos(0.5) - math.sqrt(3) / 2
    assert ball_mass(disk, [1.0, 0.0], 1.0) == pytest.approx(exact, rel=1e-12)
    assert exact == pytest.approx(1.228370, abs=1e-6)


def test_lens_area_monte_carlo():
    rng = stream(21)
    n = 400_000
    pts = rng.uniform(-1, 1, size=(n, 2))
    inside = (np.sum(pts**2, axis=1) <= 1) & (np.sum((pts - [1, 0]) ** 2, axis=1) <= 1)
    p = inside.mean()
    assert abs(4 * p - ball_mass(TestMeasure.ball([0, 0], 1.0), [1.0, 0.0], 1.0)) <= 4 * 4 * math.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize("mu,x,r", [
    (TestMeasure.box([0, 0], [1, 2]), [0.3, 1.9], 0.7),
    (TestMeasure.box([0, 0], [1, 2]), [-0.2, 0.5], 0.5),
    (TestMeasure.ball([0, 0], 1.0), [0.4, -0.3], 2.0),
    (TestMeasure.box([0, 0, 0], [1, 1, 1]), [0.9, 0.1, 0.5], 0.6),
    (TestMeasure.box([0, 0, 0], [2, 1, 1]), [2.2, 0.5, -0.1], 0.8),
])
def test_ball_mass_against_monte_carlo(mu, x, r):
    # independent oracle: uniform points in the bounding cube of the ball
    rng = stream(22)
    d = len(x)
    n = 400_000
    u = np.asarray(x) + rng.uniform(-r, r, size=(n, d))
    in_ball = np.sum((u - x) ** 2, axis=1) <= r * r
    phi = mu.density(u)
    vals = (2 * r) ** d * phi * in_ball
    se = vals.std() / math.sqrt(n)
    assert abs(vals.mean() - ball_mass(mu, x, r)) <= 4 * se + 1e-12


def test_full_containment():
    sq = TestMeasure.box([0, 0], [1, 1])
    assert ball_mass(sq, [0.5, 0.5], 10.0) == pytest.approx(1.0)
    assert ball_mass(sq, [0.5, 0.5], 0.2) == pytest.approx(math.pi * 0.04)
    cube = TestMeasure.box([0, 0, 0], [1, 1, 1])
    assert ball_mass(cube, [0.5, 0.5, 0.5], 0.3) == pytest.approx(4 / 3 * math.pi * 0.027, rel=1e-10)


def test_dirac_is_rejected():
    with pytest.raises(ValidationError, match="Dirac"):
        TestMeasure.dirac([0.0])


def test_unsupported_forms():
    with pytest.raises(ValidationError):
        TestMeasure.ball([0, 0, 0, 0], 1.0)
    with pytest.raises(ValidationError):
        TestMeasure.interval(1.0, 0.0)
    with pytest.raises(ValidationError):
        UNIT + TestMeasure.box([0, 0], [1, 1])


def test_point_dimension_mismatch():
    with pytest.raises(ValidationError):
        ball_mass(UNIT, [0.0, 0.0], 1.0)


measures_1d = st.lists(
    st.tuples(st.floats(-3, 3), st.floats(0.05, 2), st.floats(-2, 2).filter(lambda w: abs(w) > 1e-3)),
    min_size=1, max_size=3,
).map(lambda ps: sum((TestMeasure.interval(a, a + L, w) for a, L, w in ps[1:]),
                     TestMeasure.interval(ps[0][0], ps[0][0] + ps[0][1], ps[0][2])))


@settings(max_examples=60, deadline=None)
@given(measures_1d, measures_1d, st.floats(-2, 2), st.floats(-2, 2), st.floats(-5, 5), st.floats(0.01, 5))
def test_ball_mass_linear(m1, m2, a, b, x, r):
    lhs = ball_mass(m1 * a + m2 * b, [x], r)
    rhs = a * ball_mass(m1, [x], r) + b * ball_mass(m2, [x], r)
    assert lhs == pytest.approx(rhs, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(measures_1d, st.floats(-5, 5), st.floats(0.01, 5))
def test_ball_mass_bound(mu, x, r):
    val = abs(ball_mass(mu, [x], r))
    assert val <= min(mu.total_variation, mu.phi_sup * 2 * r) + 1e-10


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.01, 3), st.floats(0.0, 1.0))
def test_ball_mass_monotone_for_nonnegative(x0, x1, r, dr):
    mu = TestMeasure.box([0, 0], [1, 2]) + TestMeasure.ball([2.5, 0.5], 0.7, 2.0)
    assert ball_mass(mu, [x0, x1], r + dr) >= ball_mass(mu, [x0, x1], r) - 1e-12


@pytest.mark.parametrize("r", [0.05, 0.3, 0.5, 0.8, 4.0, 25.0])
def test_alpha_norm_profile_closed_form(r):
    assert alpha_norm_profile(UNIT, 2.0, r).value == pytest.approx(unit_profile_alpha2(r), rel=1e-12)


def test_alpha_norm_profile_large_r():
    assert alpha_norm_profile(UNIT, 2.0, 1e4).value / 1e4 == pytest.approx(2.0, rel=1e-4)


def test_alpha_norm_profile_small_r():
    assert alpha_norm_profile(UNIT, 1.5, 1e-9).value < 1e-12
    assert alpha_norm_profile(UNIT, 1.5, 0.0).value == 0.0


@pytest.mark.parametrize("alpha", [1.3, 1.7])
def test_alpha_norm_profile_against_quad(alpha):
    mu = TestMeasure.interval(0, 1) + TestMeasure.interval(0.5, 2.0, -1.5)
    r = 0.4
    f = lambda x: abs(ball_mass(mu, [x], r)) ** alpha
    ref = integrate.quad(f, -1, 3, points=[-0.4, 0.1, 0.4, 0.6, 0.9, 1.1, 1.4, 1.6, 2.4], limit=400,
                         epsabs=1e-13)[0]
    assert alpha_norm_profile(mu, alpha, r).value == pytest.approx(ref, rel=1e-8)


def test_alpha_norm_profile_2d_against_qmc():
    mu = TestMeasure.box([0, 0], [1, 1])
    r = 0.5
    res = alpha_norm_profile(mu, 2.0, r, rel_tol=1e-6)
    from coxballs.quadrature import integrate_box
    mc = integrate_box(lambda x: ball_mass(mu, x, r) ** 2, ([-r, -r], [1 + r, 1 + r]), method="qmc",
                       qmc_points=2**14)
    assert abs(res.value - mc.value) <= mc.error_estimate + res.error_estimate + 1e-6


def test_envelope_bound():
    rs = np.geomspace(0.05, 20, 15)
    prof = np.array([alpha_norm_profile(UNIT, 2.0, r).value for r in rs])
    env = np.minimum(rs, rs**2)
    C = np.max(prof / env)
    assert np.isfinite(C) and C < 10
    assert np.all(prof <= C * env * (1 + 1e-12))
    # with the closed form the ratio stays below 4 at small r and tends to 2 at large r
    assert C <= 4


@pytest.mark.parametrize("mu", [TestMeasure.box([0, 0], [1, 1]), TestMeasure.ball([0, 0], 1.0)])
def test_envelope_bound_2d(mu):
    rs = [0.1, 1.0, 10.0]
    prof = np.array([alpha_norm_profile(mu, 1.5, r, rel_tol=1e-5).value for r in rs])
    env = np.minimum(np.array(rs) ** 2, np.array(rs) ** 3)
    C = np.max(prof / env)
    assert np.all(prof <= C * env * (1 + 1e-12))
    assert C < 50


def mab_closed_form(beta):
    # int_0^inf profile(r) r^(-beta-1) dr with the closed-form profile
    b = beta
    h = 0.5
    head = 4 * h ** (2 - b) / (2 - b) - 8 / 3 * h ** (3 - b) / (3 - b)
    tail = 2 * h ** (1 - b) / (b - 1) - h ** (-b) / (3 * b)
    return head + tail


def test_mab_integral_closed_form():
    res = mab_integral(UNIT, 2.0, 1.5)
    assert res.value == pytest.approx(mab_closed_form(1.5), rel=1e-6)
    assert mab_closed_form(1.5) == pytest.approx(10.05663, abs=1e-5)


def test_mab_integral_tolerance_stable():
    a = mab_integral(UNIT, 2.0, 1.5, rel_tol=1e-5).value
    b = mab_integral(UNIT, 2.0, 1.5, rel_tol=5e-6).value
    assert abs(a - b) <= 5e-4 * abs(b)


def test_mab_integral_zero_and_homogeneity():
    assert mab_integral(TestMeasure.zero(1), 2.0, 1.5).value == 0.0
    base = mab_integral(DIPOLE, 1.7, 1.4, rel_tol=1e-7).value
    assert mab_integral(DIPOLE * -2.5, 1.7, 1.4, rel_tol=1e-7).value == pytest.approx(2.5**1.7 * base, rel=1e-6)


def test_mab_integral_divergence():
    with pytest.raises(ValidationError):
        mab_integral(UNIT, 2.0, 2.5)
    with pytest.raises(ValidationError):
        mab_integral(UNIT, 1.5, 0.9)


def test_signed_integrals():
    A, B = signed_alpha_integrals(UNIT, 2.0, 1.5)
    assert B.value == pytest.approx(A.value, rel=1e-12)
    assert A.value == pytest.approx(mab_closed_form(1.5), rel=1e-6)
    An, Bn = signed_alpha_integrals(-UNIT, 2.0, 1.5)
    assert An.value == pytest.approx(A.value, rel=1e-12)
    assert Bn.value == pytest.approx(-B.value, rel=1e-12)
    Ac, _ = signed_alpha_integrals(UNIT, 2.0, 1.5, 1.5)
    assert Ac.value == pytest.approx(1.5 * A.value, rel=1e-12)


def test_signed_integrals_dipole():
    A, B = signed_alpha_integrals(DIPOLE, 1.8, 1.5)
    assert A.value > 0
    assert abs(B.value) <= 1e-8 * A.value + B.error_estimate


@settings(max_examples=15, deadline=None)
@given(measures_1d, st.floats(1.2, 2.0))
def test_signed_integrals_bound(mu, alpha):
    beta = 1.0 + 0.5 * (alpha - 1.0)
    A, B = signed_alpha_integrals(mu, alpha, beta, rel_tol=1e-6)
    assert A.value >= abs(B.value) - A.error_estimate - 1e-12


def test_signed_integrals_agree_with_nested_quadrature():
    mu = TestMeasure.interval(0, 1) + TestMeasure.interval(1.5, 2.0, -2.0)
    A, B = signed_alpha_integrals(mu, 1.6, 1.3, rel_tol=1e-8)
    assert A.value == pytest.approx(mab_integral(mu, 1.6, 1.3, rel_tol=1e-7).value, rel=1e-5)


def test_ball_functional_engine_against_quad():
    mu = UNIT
    w = PowerWeight(1.5, 1.5, 0.2)
    x = np.array([-0.7, 0.25, 0.5, 1.3])
    F = lambda m: np.cos(m) - 1
    eng = BallFunctional1D(mu, w, x)
    got = eng.apply(F)
    for xi, g in zip(x, got):
        f = lambda s: F(ball_mass(mu, [xi], s)) * w.density(s)
        kinks = sorted({abs(xi), abs(xi - 1), 0.2} - {0.0})
        ref = integrate.quad(f, 0.2, 50, points=[k for k in kinks if 0.2 < k < 50], limit=400, epsabs=1e-13)[0]
        ref += integrate.quad(f, 50, np.inf, epsabs=1e-14)[0]
        assert g == pytest.approx(ref, rel=1e-7, abs=1e-12)


def test_global_grid_integrates_closed_form():
    grid = global_x_grid(UNIT)
    # int ball_mass(x, r)^2 dx at r = 0.3 is a closed form
    vals = np.array([ball_mass(UNIT, [xi], 0.3) ** 2 for xi in grid.x])
    assert grid.integrate(vals, tail_fit=False).value == pytest.approx(unit_profile_alpha2(0.3), rel=1e-6)


def test_measure_algebra():
    assert (UNIT * 2).total_mass == 2.0
    assert DIPOLE.total_mass == pytest.approx(0.0)
    assert DIPOLE.total_variation == pytest.approx(2.0)
    assert TestMeasure.zero(1).total_variation == 0.0
    lo, hi = DIPOLE.support_box
    assert lo[0] == 0.0 and hi[0] == 3.0
    assert TestMeasure.ball([0, 0], 1.0).total_mass == pytest.approx(math.pi)
