import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahm import Grid, MetricSpec
from ahm.curvature import (scalar_curvature, scalar_curvature_oracle, scalar_curvature_warped, scalar_deficit,
                           scalar_deficit_leading, torus_scalar, torus_scalar_integral, w_quantities, warped)
from ahm.errors import DegenerateGamma, StencilOutOfDomain
from ahm.fixtures import background, hat_spec, hm_spec, random_perturbation
from ahm.geometry import fd_jet, scalar_from_jet


@given(n=st.integers(3, 6), a=st.floats(-0.5, 2.0), r0=st.floats(0.5, 2.0), x=st.floats(1.01, 50.0))
def test_hat_family_constant_curvature(n, a, r0, x):
    spec = hat_spec(n, a, r0)
    r = x * spec.background.r_plus
    R = scalar_curvature(spec, r, np.full(n - 1, 0.3))[0]
    # the literal sum cancels a r^{1-n} and r0^n r^{-n} against each other near a small r+
    yard = 1 + abs(a) * r ** (1 - n) + r0**n * r ** (-n)
    assert abs(R + n * (n - 1)) <= 1e-13 * n * n * yard
    assert abs(scalar_deficit(spec, r)[0]) <= 1e-10 * n * n


@pytest.mark.parametrize("n", [3, 4, 5])
def test_warped_agrees_with_oracle(n, rng):
    spec = random_perturbation(background(n, 0.5), rng, 5e-2)
    rp = spec.background.r_plus
    p = np.concatenate([[3 * rp], rng.uniform(0, 1, n - 1)])
    exact = scalar_curvature_warped(spec, p)
    errs = [abs(scalar_curvature_oracle(spec, p, step=h) - exact) for h in (2e-3, 1e-3)]
    assert errs[1] < 1e-5
    assert np.log2(errs[0] / errs[1]) > 1.8


def test_scalar_and_deficit_consistent(rng):
    spec = random_perturbation(background(4, 0.2), rng, 1e-2)
    r = np.geomspace(1.5, 30, 7) * spec.background.r_plus
    w = warped(spec, r, np.array([0.2, 0.4, 0.6]))
    assert np.allclose(w.scalar + 12, w.deficit, atol=1e-11)


def test_stencil_crossing_horizon():
    spec = hm_spec(3)
    rp = spec.background.r_plus
    with pytest.raises(StencilOutOfDomain):
        scalar_curvature_oracle(spec, [rp + 1e-4, 0.0, 0.0], step=1e-3)


def test_torus_scalar_flat_for_n3():
    spec = hat_spec(3, 0.5)
    assert torus_scalar(spec, [2.0, 0.1, 0.2]) == 0.0
    assert torus_scalar_integral(spec, 2.0, 0.1) == 0.0


def torus_with_phi_bump(eps):
    # conformal factor on the 2-torus that depends on phi^3 only
    bg = background(4, 0.0)
    w = {3: {(0, 0): {(0, 1, 0): (eps, 0.0)}, (1, 1): {(0, 1, 0): (eps, 0.0)}}}
    return MetricSpec.from_coefficients(bg, w=w)


@pytest.mark.parametrize("phi", [0.0, 0.7, 2.1])
def test_torus_scalar_against_fd(phi):
    spec = torus_with_phi_bump(0.3)
    r = 2.0

    def gamma(p):
        return spec.w_hat.tensor_jet(np.array([r]), np.array([[0.0, p[0], p[1]]]), 2,
                                     values_only=True)["val"][0] * r**2 + r**2 * np.eye(2)

    g, dg, ddg = fd_jet(gamma, np.array([phi, 0.4]), 1e-4)
    assert torus_scalar(spec, [r, 0.0, phi, 0.4]) == pytest.approx(float(scalar_from_jet(g, dg, ddg)), abs=1e-6)


def test_torus_scalar_integral_conformal_2torus():
    # Gauss-Bonnet: the area integral of R vanishes on a 2-torus; for e^{2f} delta
    # the coordinate integral is -4 int e^{-2f} |df|^2 < 0
    spec = torus_with_phi_bump(0.3)
    vol = torus_scalar_integral(spec, 2.0, 0.0, nphi=64, measure="volume")
    assert abs(vol) < 1e-10
    assert torus_scalar_integral(spec, 2.0, 0.0, nphi=64) < 0
    with pytest.raises(ValueError):
        torus_scalar_integral(spec, 2.0, 0.0, measure="other")


def test_w_quantities_traceless_parts(rng):
    spec = random_perturbation(background(5, 0.3), rng, 1e-2)
    q = w_quantities(spec, [2.0, 0.1, 0.2, 0.3, 0.4])
    gi = np.linalg.inv(q.gamma)
    assert abs(np.trace(gi @ q.W_r_traceless)) < 1e-12
    assert abs(np.trace(gi @ q.W_xi_traceless)) < 1e-12
    assert q.W_r == pytest.approx(0.5 * np.trace(gi @ q.d_r_gamma))


def test_degenerate_gamma():
    bg = background(4, 0.0)
    spec = MetricSpec.from_coefficients(bg, w={3: {(0, 0): {(0, 0, 0): (-8.0, 0.0)}}})
    with pytest.raises(DegenerateGamma):
        w_quantities(spec, [2.0, 0.0, 0.0, 0.0])


@settings(max_examples=8)
@given(u=st.floats(-0.3, 0.3), dv=st.floats(-0.3, 0.3))
def test_deficit_leading_coefficient(u, dv):
    # R + n(n-1) ~ c r^{1-n} with c = 2(n-1)(u + v + tr w) at order n-1
    n = 4
    spec = MetricSpec.from_coefficients(background(n, 0.2), u={n - 1: u}, v={n - 1: dv})
    fit = scalar_deficit_leading(spec, 0.0)
    assert fit.coefficient == pytest.approx(fit.predicted, abs=1e-6)
    assert fit.predicted == pytest.approx(2 * (n - 1) * (u + dv), abs=1e-14)
