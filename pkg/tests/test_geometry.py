import numpy as np
import pytest

from ahm import geometry


def hyperbolic(point):
    """Upper half-space metric x_n^{-2} delta in dimension len(point)."""
    return np.eye(point.size) / point[-1] ** 2


@pytest.mark.parametrize("dim", [2, 3, 4])
def test_fd_jet_recovers_hyperbolic_ricci(dim):
    p = np.linspace(0.3, 0.9, dim)
    g, dg, ddg = geometry.fd_jet(hyperbolic, p, np.full(dim, 1e-3))
    ric, ginv = geometry.ricci(g, dg, ddg)
    assert np.allclose(ric, -(dim - 1) * g, atol=1e-5 * np.abs(g).max())
    assert geometry.scalar_from_jet(g, dg, ddg) == pytest.approx(-dim * (dim - 1), rel=1e-4)


def test_flat_polar_christoffel():
    # dr^2 + r^2 dtheta^2: Gamma^r_tt = -r, Gamma^t_rt = 1/r
    r = 2.0
    g = np.diag([1.0, r * r])
    dg = np.zeros((2, 2, 2))
    dg[0, 1, 1] = 2 * r
    _, gam = geometry.christoffel(g, dg)
    assert gam[0, 1, 1] == pytest.approx(-r)
    assert gam[1, 0, 1] == pytest.approx(1 / r)
    assert gam[1, 1, 0] == pytest.approx(1 / r)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_min_eigenvalue(d, rng):
    A = rng.standard_normal((50, d, d))
    M = A @ np.swapaxes(A, -1, -2) + 0.1 * np.eye(d)
    assert np.allclose(geometry.min_eigenvalue(M), np.linalg.eigvalsh(M)[:, 0], rtol=1e-10, atol=1e-12)
