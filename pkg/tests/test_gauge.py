import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from ahm import MetricSpec
from ahm.asymptotics import RadialIntegral
from ahm.errors import RegularityFail
from ahm.fixtures import background, hat_spec, hm_spec, random_perturbation
from ahm.gauge import (F0, F_closed, F_expansion_fit, F_profile, F0_closed, expansion_fit, fit_transformed,
                       gauge_relation_residual, horizon_value_check, l1_condition_tilde, radial_gauge,
                       transformed_coeffs)


def F_quad(y, n):
    if y == 1.0:
        return 0.0
    # 1 - s^-n = (s - 1) sum_k s^k / s^n; the (s - 1)^{-1/2} factor goes into the weight
    g = lambda s: s ** (0.5 * n - 1) / math.sqrt(sum(s**k for k in range(n)))  # noqa: E731
    val, _ = quad(g, 1.0, y, weight="alg", wvar=(-0.5, 0.0), epsabs=1e-14, epsrel=1e-13)
    return val


@pytest.mark.parametrize("n", [3, 4, 5, 8])
@pytest.mark.parametrize("y", [1.0, 1.001, 1.7, 2.0, 3.0, 50.0])
def test_F_against_quad_and_closed_form(n, y):
    got = F_profile(y, n)[0]
    assert got == pytest.approx(F_quad(y, n), abs=1e-12)
    assert got == pytest.approx(float(F_closed(y, n)), abs=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5, 6, 7])
def test_F0(n):
    assert F0(n) == pytest.approx(F0_closed(n), abs=1e-14)
    assert F0_closed(n) == pytest.approx(2 * math.log(2) / n)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_F_expansion(n):
    c0, c1 = F_expansion_fit(n)
    assert c0 == pytest.approx(F0_closed(n), abs=1e-12)
    assert c1 == pytest.approx(-1.0 / (2 * n), abs=1e-6)


def test_F_domain():
    with pytest.raises(ValueError):
        F_profile(0.5, 3)


@pytest.mark.parametrize("n,r0", [(3, 1.0), (4, 2.0), (5, 0.5)])
def test_hm_gauge_is_identity(n, r0):
    gm = radial_gauge(hm_spec(n, r0))
    assert gm.r_tilde_0 == pytest.approx(r0, abs=1e-12)
    assert np.max(np.abs(gm.r_tilde_nodes - gm.r_nodes)) <= 1e-10 * r0
    assert np.allclose(gm.rho_nodes, 1.0, atol=1e-10)


@pytest.mark.parametrize("n,a,u", [(3, 1.0, 0.0), (4, -0.5, 0.2), (5, 0.7, -0.1)])
def test_gauge_solves_defining_equation(n, a, u):
    spec = MetricSpec.from_coefficients(background(n, a), u={n - 1: u})
    gm = radial_gauge(spec)
    rp = spec.background.r_plus
    ri = RadialIntegral(spec)
    for x in (1.01, 1.8, 4.0, 60.0):
        r = x * rp
        f = lambda s: (1 + spec.exp_u_hat.scalar(s, skip_constant=True)) / (s * math.sqrt(spec.background.q1(s)))  # noqa: E731
        G, _ = quad(f, rp, r, weight="alg", wvar=(-0.5, 0.0), epsabs=1e-14, epsrel=1e-13)
        rt = gm.r_tilde(np.array([r]))[0]
        assert float(F_closed(rt / gm.r_tilde_0, n)) == pytest.approx(G, rel=1e-10, abs=1e-12)
    assert gm.C == pytest.approx(ri.C, abs=1e-14)


def test_rho_matches_differences(hat):
    gm = radial_gauge(hat)
    assert gauge_relation_residual(gm) < 1e-9
    r = np.array([3.0, 30.0]) * hat.background.r_plus
    h = 1e-4 * r
    fd = (gm.r_tilde(r + h) - gm.r_tilde(r - h)) / (2 * h)
    assert np.allclose(gm.rho(r), fd, rtol=1e-8)


def test_d_log_rho_far_region(hat):
    gm = radial_gauge(hat)
    r = np.array([5.0, 50.0]) * hat.background.r_plus
    h = 1e-4 * r
    fd = (np.log(gm.rho(r + h)) - np.log(gm.rho(r - h))) / (2 * h)
    assert np.allclose(gm.d_log_rho(r), fd, rtol=1e-5, atol=1e-12)


@pytest.mark.parametrize("n,a,u", [(3, 1.0, 0.0), (3, 0.2, 0.3), (4, -0.5, 0.2)])
def test_expansion_coefficient(n, a, u):
    spec = MetricSpec.from_coefficients(background(n, a), u={n - 1: u})
    gm = radial_gauge(spec)
    assert gm.expansion[0] == pytest.approx((a - 2 * u) / (2 * (n - 1)), abs=1e-6)
    assert expansion_fit(gm) == gm.expansion


def test_horizon_rho(hat):
    gm = radial_gauge(hat)
    assert gm.rho_horizon_limit() == pytest.approx(gm.rho_at_horizon(), rel=1e-9)


@given(a=st.sampled_from([-0.5, 0.3, 1.0]), n=st.sampled_from([3, 4]))
def test_horizon_value(a, n):
    spec = hat_spec(n, a)
    chk = horizon_value_check(radial_gauge(spec), spec)
    assert chk.matched and chk.residual < 1e-9
    assert chk.rho_limit == pytest.approx(chk.rho_closed_form, rel=1e-9)


def test_horizon_value_detects_wrong_radius():
    spec = hat_spec(3, 1.0)
    chk = horizon_value_check(radial_gauge(spec), spec, r_breve=2 * spec.background.r_breve)
    assert not chk.matched and chk.residual > 0.1


def test_horizon_value_needs_regularity():
    spec = MetricSpec.from_coefficients(background(3, 0.5), v={2: 0.1})
    with pytest.raises(RegularityFail):
        horizon_value_check(radial_gauge(spec), spec)


@pytest.mark.parametrize("n", [3, 4])
def test_transformed_coefficients(n, rng):
    spec = random_perturbation(background(n, 0.4), rng, 1e-2)
    gm = radial_gauge(spec)
    tc = transformed_coeffs(gm, spec, check=True)
    assert tc.fit_deviation < 1e-4
    res = l1_condition_tilde(gm, spec, tc)
    assert res.passed and res.agrees_with_original


def test_transformed_coefficients_hat_closed_form():
    # with u = v = w = 0 the shifts are ((n-2)a/(2(n-1)), -a/(2(n-1)) identity)
    n, a = 4, 0.7
    gm = radial_gauge(hat_spec(n, a))
    cv1, cvn, cw1, cwn = fit_transformed(gm, np.zeros(n - 1))
    assert cv1 == pytest.approx((n - 2) * a / (2 * (n - 1)), abs=1e-5)
    assert np.allclose(cw1, -a / (2 * (n - 1)) * np.eye(n - 2), atol=1e-5)


def test_l1_tilde_fails_with_original():
    spec = MetricSpec.from_coefficients(background(3, 0.5), u={2: 0.1})
    res = l1_condition_tilde(radial_gauge(spec), spec)
    assert not res.passed and res.agrees_with_original


def test_interpolant_and_table(hat):
    gm = radial_gauge(hat)
    f = gm.interpolant()
    r = np.geomspace(gm.r_nodes[0], gm.r_nodes[-1], 50)
    assert np.all(np.diff(f(r)) > 0)
    assert np.allclose(f(r), gm.r_tilde(r), rtol=1e-4)
    rows = list(csv.reader(io.StringIO(gm.table_csv())))
    assert rows[0] == ["r", "r_tilde", "drtilde_dr"]
    assert len(rows) == gm.r_nodes.size + 1
    assert float(rows[5][1]) == gm.r_tilde_nodes[4]
