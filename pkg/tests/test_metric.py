import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ahm import BackgroundParams, Grid, MetricSpec
from ahm.errors import SingularAtHorizon
from ahm.fixtures import background, hat_spec, random_perturbation
from ahm.metric import decay_order, eval_metric, metric_jet, metric_values, regularity_residual, validate_spec


def roots_oracle(n, a, r0):
    coeffs = np.zeros(n + 1)
    coeffs[0], coeffs[-2], coeffs[-1] = 1.0, a, -r0**n
    rts = np.roots(coeffs)
    real = rts[np.abs(rts.imag) < 1e-9].real
    return real[real > 0].max()


@given(n=st.integers(3, 7), a=st.floats(-0.6, 3.0), r0=st.floats(0.3, 3.0))
def test_r_plus_matches_polynomial_roots(n, a, r0):
    bg = BackgroundParams(n, a, r0, (1.0,) * (n - 2))
    assert bg.r_plus == pytest.approx(roots_oracle(n, a, r0), rel=1e-10)
    rp = bg.r_plus
    assert abs(rp**n + a * rp - r0**n) <= 1e-12 * (rp**n + abs(a) * rp + r0**n)


@pytest.mark.parametrize("n,a,r0", [(3, 0.0, 1.0), (4, 0.7, 2.0), (5, -0.5, 1.0)])
def test_beta_from_surface_gravity(n, a, r0):
    # smoothness at the centre: beta = 4 pi / A'(r+), A' by a centred difference
    bg = background(n, a, r0)
    rp, h = bg.r_plus, 1e-5
    dA = (bg.A(rp + h) - bg.A(rp - h)) / (2 * h)
    assert bg.beta == pytest.approx(4 * math.pi / dA, rel=1e-8)


@pytest.mark.parametrize("n", [3, 4, 6])
def test_hm_reference_radius(n):
    # the HM radius whose period equals beta; for a = 0 it is r0 itself
    bg = background(n, 0.0, 1.7)
    assert bg.r_breve == pytest.approx(1.7, rel=1e-13)
    assert bg.r_plus == pytest.approx(1.7, rel=1e-13)


def test_q1_is_deflated_Q():
    bg = background(4, 0.3, 1.2)
    r = np.array([1.5, 2.0, 7.0])
    assert np.allclose(bg.q1(r) * (r - bg.r_plus), bg.Q(r), rtol=1e-13)
    assert bg.q1(bg.r_plus) > 0


@pytest.mark.parametrize("bad", [dict(n=2), dict(r0=-1.0), dict(periods=(1.0, 1.0))])
def test_background_validation(bad):
    kw = dict(n=3, a=0.0, r0=1.0, periods=(1.0,)) | bad
    with pytest.raises(ValueError):
        BackgroundParams(kw["n"], kw["a"], kw["r0"], kw["periods"])


def test_v_period_must_be_beta():
    bg = background(3, 0.5)
    from ahm.series import AngularSeries, RadialSeries
    with pytest.raises(ValueError):
        MetricSpec(bg, RadialSeries({0: 1.0}), RadialSeries({0: AngularSeries(1.0, {0: 1.0})}))


def test_metric_values_hat_family():
    spec = hat_spec(4, 0.7)
    bg = spec.background
    r = np.array([2.0, 5.0])
    g = metric_values(spec, r, np.array([0.3, 1.0, 2.0]))
    assert np.allclose(g[:, 0, 0], 1 / bg.A(r))
    assert np.allclose(g[:, 1, 1], bg.A(r))
    assert np.allclose(g[:, 2:, 2:], r[:, None, None] ** 2 * np.eye(2))


def test_metric_jet_against_differences(rng):
    spec = random_perturbation(background(4, 0.5), rng, 1e-2)
    p = np.array([2.3, 0.4, 1.1, 2.0])
    g, dg, ddg = metric_jet(spec, p[:1], p[1:])
    h = 1e-5
    for c in range(4):
        e = np.zeros(4)
        e[c] = h
        fd = (eval_metric(spec, p + e) - eval_metric(spec, p - e)) / (2 * h)
        assert np.allclose(dg[0, c], fd, atol=1e-8)
        fd2 = (eval_metric(spec, p + e) - 2 * eval_metric(spec, p) + eval_metric(spec, p - e)) / h**2
        assert np.allclose(ddg[0, c, c], fd2, atol=1e-4)


def test_eval_metric_at_horizon():
    spec = hat_spec(3, 1.0)
    rp = spec.background.r_plus
    with pytest.raises(SingularAtHorizon):
        eval_metric(spec, [rp, 0.0, 0.0])
    with pytest.raises(SingularAtHorizon):
        eval_metric(spec, [0.5 * rp, 0.0, 0.0])
    with pytest.raises(SingularAtHorizon):
        metric_jet(spec, rp)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_random_perturbation_is_admissible(n, rng):
    spec = random_perturbation(background(n, 0.4), rng, 1e-3)
    assert regularity_residual(spec) < 1e-12
    assert validate_spec(spec, Grid(nr=16, nxi=8, nphi=4)).ok


def test_validation_flags_low_order_terms():
    spec = MetricSpec.from_coefficients(background(4), u={1: 0.1})
    diag = validate_spec(spec, Grid(nr=8, nxi=8, nphi=4))
    assert not diag.checks["leading_order"].passed
    assert not diag.ok


def test_validation_flags_irregular_centre():
    spec = MetricSpec.from_coefficients(background(3, 0.5), v={2: 0.1})
    diag = validate_spec(spec, Grid(nr=8, nxi=8, nphi=4))
    assert not diag.checks["regularity"].passed


@pytest.mark.parametrize("p", [1.0, 2.5, 4.0])
def test_decay_order_of_power_law(p):
    fit = decay_order(lambda r: 3.0 * r ** (-p) + r ** (-p - 1))
    assert fit.order == pytest.approx(p, abs=0.02)
    assert fit.derivative_orders[1] == pytest.approx(p + 1, abs=0.02)


def test_decay_order_needs_two_decades():
    with pytest.raises(ValueError):
        decay_order(lambda r: 1 / r, r_range=(1.0, 10.0))


def test_grid_boundary_weights():
    bg = background(4, 0.2, periods=(1.0, 3.0))
    ang, w = Grid(nxi=6, nphi=5).boundary(bg)
    assert ang.shape == (150, 3)
    assert w.sum() == pytest.approx(bg.boundary_volume)
