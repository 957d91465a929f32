"""Coordinate curvature of a metric from its 2-jet.

A jet is (g, dg, ddg) with ``dg[..., c, a, b] = d_c g_ab`` and
``ddg[..., c, d, a, b] = d_c d_d g_ab``.  Leading axes are batch axes.
The same contraction serves the analytic jets built from the series and the
finite-difference jets of the oracle.
"""
from __future__ import annotations

from typing import Callable

import numpy as np


def _lower(dg):
    # Gamma_{l ij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    return 0.5 * (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)


def christoffel(g, dg):
    """Return (g^{-1}, Gamma^k_ij) for a batch of metrics."""
    ginv = np.linalg.inv(g)
    d = g.shape[-1]
    lower = _lower(dg)
    gam = (ginv @ lower.reshape(*lower.shape[:-2], d * d)).reshape(lower.shape)
    return ginv, gam


def ricci(g, dg, ddg):
    """Ricci tensor R_ij from the 2-jet (contractions written as batched matmuls)."""
    d = g.shape[-1]
    batch = g.shape[:-2]
    ginv = np.linalg.inv(g)
    lower = _lower(dg)
    lower_f = lower.reshape(*batch, d, d * d)
    gam = (ginv @ lower_f).reshape(*batch, d, d, d)
    # d_m Gamma_{l ij}
    dlower = 0.5 * (np.einsum("...mijl->...mlij", ddg) + np.einsum("...mjil->...mlij", ddg) - ddg)
    gi = ginv[..., None, :, :]
    dginv = -(gi @ dg @ gi)
    dgam = (dginv @ lower_f[..., None, :, :]
            + gi @ dlower.reshape(*batch, d, d, d * d)).reshape(*batch, d, d, d, d)  # d_m Gamma^k_ij
    term1 = np.einsum("...kkij->...ij", dgam)
    term2 = np.einsum("...jkik->...ij", dgam)
    tr = np.einsum("...kkl->...l", gam)
    term3 = (tr[..., None, :] @ gam.reshape(*batch, d, d * d)).reshape(*batch, d, d)
    X = np.ascontiguousarray(np.einsum("...kjl->...jkl", gam)).reshape(*batch, d, d * d)
    Y = np.ascontiguousarray(np.einsum("...lik->...ikl", gam)).reshape(*batch, d, d * d)
    term4 = np.swapaxes(Y @ np.swapaxes(X, -1, -2), -1, -2)
    ric = term1 - term2 + term3 - term4
    return 0.5 * (ric + np.swapaxes(ric, -1, -2)), ginv


def scalar_from_jet(g, dg, ddg) -> np.ndarray:
    ric, ginv = ricci(g, dg, ddg)
    return np.einsum("...ij,...ij->...", ginv, ric)


def min_eigenvalue(M) -> np.ndarray:
    """Smallest eigenvalue of a batch of symmetric matrices (closed form for size <= 3)."""
    M = np.asarray(M, dtype=float)
    d = M.shape[-1]
    if d == 1:
        return M[..., 0, 0].copy()
    if d == 2:
        a, b, c = M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]
        return 0.5 * (a + c) - np.hypot(0.5 * (a - c), b)
    if d == 3:
        # trigonometric solution of the characteristic cubic
        q = np.trace(M, axis1=-2, axis2=-1) / 3.0
        off = M[..., 0, 1] ** 2 + M[..., 0, 2] ** 2 + M[..., 1, 2] ** 2
        p = np.sqrt(((M[..., 0, 0] - q) ** 2 + (M[..., 1, 1] - q) ** 2 + (M[..., 2, 2] - q) ** 2 + 2 * off) / 6.0)
        safe = np.where(p > 0, p, 1.0)
        Bm = (M - q[..., None, None] * np.eye(3)) / safe[..., None, None]
        det = (Bm[..., 0, 0] * (Bm[..., 1, 1] * Bm[..., 2, 2] - Bm[..., 1, 2] * Bm[..., 2, 1])
               - Bm[..., 0, 1] * (Bm[..., 1, 0] * Bm[..., 2, 2] - Bm[..., 1, 2] * Bm[..., 2, 0])
               + Bm[..., 0, 2] * (Bm[..., 1, 0] * Bm[..., 2, 1] - Bm[..., 1, 1] * Bm[..., 2, 0]))
        half_det = np.clip(det / 2.0, -1.0, 1.0)
        phi = np.arccos(half_det) / 3.0
        return np.where(p > 0, q + 2 * p * np.cos(phi + 2 * np.pi / 3), q)
    return np.linalg.eigvalsh(M)[..., 0]


def fd_jet(metric: Callable[[np.ndarray], np.ndarray], point, steps):
    """Second-order centred finite-difference 2-jet of ``metric`` at ``point``."""
    x0 = np.asarray(point, dtype=float)
    dim = x0.size
    h = np.broadcast_to(np.asarray(steps, dtype=float), (dim,))
    e = np.eye(dim) * h
    g0 = np.asarray(metric(x0), dtype=float)
    cache = {}

    def at(*shifts):
        key = tuple(sorted(shifts))
        if key not in cache:
            x = x0.copy()
            for idx, sgn in shifts:
                x = x + sgn * e[idx]
            cache[key] = np.asarray(metric(x), dtype=float)
        return cache[key]

    m = g0.shape[-1]
    dg = np.zeros((dim, m, m))
    ddg = np.zeros((dim, dim, m, m))
    for c in range(dim):
        gp, gm = at((c, 1)), at((c, -1))
        dg[c] = (gp - gm) / (2 * h[c])
        ddg[c, c] = (gp - 2 * g0 + gm) / h[c] ** 2
        for d in range(c):
            mixed = (at((c, 1), (d, 1)) - at((c, 1), (d, -1))
                     - at((c, -1), (d, 1)) + at((c, -1), (d, -1))) / (4 * h[c] * h[d])
            ddg[c, d] = ddg[d, c] = mixed
    return g0, dg, ddg
