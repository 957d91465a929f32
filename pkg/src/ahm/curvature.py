"""Scalar curvature of the warped metric.

Two independent paths: the warped-product decomposition evaluated from the
exact series jets, and the generic finite-difference oracle of ``geometry``.
For R + n(n-1) at large r the decomposition is rearranged so the background
cancels analytically (``Warped.deficit``); the literal decomposition
(``Warped.scalar``) is kept as written for cross-checking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import DegenerateGamma, FitUnstable, SingularAtHorizon, StencilOutOfDomain
from .metric import MetricSpec, eval_metric, points, profiles

COND_MAX = 1e12


@dataclass
class WQuantities:
    W_r: float
    W_r_traceless: np.ndarray
    W_xi: float
    W_xi_traceless: np.ndarray
    W_r_hat: float
    gamma: np.ndarray
    d_r_gamma: np.ndarray
    d_xi_gamma: np.ndarray


@dataclass
class Warped:
    """Pointwise ingredients of the decomposition, all arrays of shape (N,)."""

    n: int
    r: np.ndarray
    A: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    Eu: np.ndarray
    Eu_tail: np.ndarray
    du: np.ndarray          # d_r u_hat
    Ev: np.ndarray
    dv: np.ndarray          # d_r v_hat
    dv_r: np.ndarray        # d_r^2 v_hat
    W: np.ndarray           # W^r - (n-2)/r
    W_r: np.ndarray         # d_r of the above
    Wr_norm2: np.ndarray    # |traceless part of d_r gamma|^2_gamma
    Wxi: np.ndarray
    Wxi_norm2: np.ndarray
    div_xi: np.ndarray      # d_xi(W^xi / Ev)
    R_gamma: np.ndarray

    @property
    def c_n(self) -> float:
        return (self.n - 1) / (2.0 * (self.n - 2))

    @property
    def xi_terms(self) -> np.ndarray:
        """The two xi-derivative contributions (divergence and quadratic)."""
        quad = self.c_n * self.Wxi**2 + 0.125 * self.Wxi_norm2
        return -2.0 / (self.A * self.Ev) * self.div_xi - 2.0 / (self.A * self.Ev**2) * quad

    @property
    def scalar(self) -> np.ndarray:
        """R(g) from the decomposition as written (full W^r, e^{u}, e^{v})."""
        n, r, A = self.n, self.r, self.A
        Wfull = (n - 2) / r + self.W
        Wfull_r = -(n - 2) / r**2 + self.W_r
        psi = 0.5 * self.A1 + A * (self.dv + Wfull)
        psi_r = 0.5 * self.A2 + self.A1 * (self.dv + Wfull) + A * (self.dv_r + Wfull_r)
        ratio = self.Ev / self.Eu
        ratio_r = ratio * (self.dv - self.du)
        div_r = -2.0 / (self.Eu * self.Ev) * (ratio_r * psi + ratio * psi_r)
        quad_r = -2.0 * A / self.Eu**2 * (self.c_n * Wfull**2 + 0.125 * self.Wr_norm2)
        return div_r + self.xi_terms + self.R_gamma + quad_r

    @property
    def deficit(self) -> np.ndarray:
        """R(g) + n(n-1), with the background contribution removed analytically."""
        n, r, A = self.n, self.r, self.A
        S = self.dv + self.W
        S_r = self.dv_r + self.W_r
        dvu = self.dv - self.du
        Eu2 = self.Eu**2
        bracket = (A * S_r + (self.A1 + A * dvu) * S + dvu * (0.5 * self.A1 + (n - 2) * A / r)
                   + A * ((n - 1) * self.W / r + self.c_n * self.W**2 + 0.125 * self.Wr_norm2))
        lead = n * (n - 1) * self.Eu_tail * (2.0 + self.Eu_tail) / Eu2
        return lead - 2.0 / Eu2 * bracket + self.xi_terms + self.R_gamma

    @property
    def deficit_scale(self) -> np.ndarray:
        """Sum of magnitudes of the pieces combined in ``deficit`` (roundoff yardstick)."""
        n, r, A = self.n, self.r, self.A
        S = self.dv + self.W
        dvu = self.dv - self.du
        parts = [n * (n - 1) * np.abs(self.Eu_tail), A * np.abs(self.dv_r), A * np.abs(self.W_r),
                 np.abs(self.A1 * S), np.abs(A * dvu * S), np.abs(dvu) * (np.abs(self.A1) + (n - 2) * A / r),
                 A * ((n - 1) * np.abs(self.W) / r + self.W**2 + self.Wr_norm2),
                 np.abs(self.xi_terms), np.abs(self.R_gamma)]
        return sum(parts)


def _inverse_checked(M: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvalsh(M)
    lo, hi = ev[..., 0], ev[..., -1]
    bad = (lo <= 0) | (hi > COND_MAX * lo)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise DegenerateGamma(f"gamma/r^2 has eigenvalues [{lo[k]:.3g}, {hi[k]:.3g}]")
    return np.linalg.inv(M)


def _torus_curvature(M: dict, Minv: np.ndarray) -> np.ndarray:
    """Scalar curvature of the flat-coordinate metric M(phi) at fixed (r, xi)."""
    d = Minv.shape[-1]
    N = Minv.shape[0]
    if d == 1:
        return np.zeros(N)
    g = M["val"]
    dg = M["ang"][:, 1:]
    ddg = M["ang_ang"][:, 1:, 1:]
    if not np.any(dg) and not np.any(ddg):
        return np.zeros(N)
    return geometry.scalar_from_jet(g, dg, ddg)


def warped(spec: MetricSpec, r, angles=None, chunk: int = 1 << 15) -> Warped:
    r, angles = points(spec, r, angles)
    bg = spec.background
    if np.any(r <= bg.r_plus):
        raise SingularAtHorizon("curvature requested at or inside r_plus")
    if r.size > chunk:
        parts = [warped(spec, r[i:i + chunk], angles[i:i + chunk], chunk) for i in range(0, r.size, chunk)]
        return Warped(spec.n, *[np.concatenate([getattr(p, f) for p in parts])
                                for f in Warped.__dataclass_fields__ if f != "n"])
    if not spec.w_hat.terms:
        return _warped_flat_torus(spec, r, angles)
    P = profiles(spec, r, angles)
    M = P.M
    Minv = _inverse_checked(M["val"])
    d = spec.n - 2

    def tr(X):
        return np.einsum("nii->n", X)

    Mr = M["r"]
    MiMr = Minv @ Mr
    W = 0.5 * tr(MiMr)
    W_r = 0.5 * (tr(Minv @ M["rr"]) - tr(MiMr @ MiMr))
    B = Mr - (2.0 * W / d)[:, None, None] * M["val"]
    MiB = Minv @ B
    Wr_norm2 = tr(MiB @ MiB)

    Mx = M["ang"][:, 0]
    MiMx = Minv @ Mx
    Wxi = 0.5 * tr(MiMx)
    Wxi_xi = 0.5 * (tr(Minv @ M["ang_ang"][:, 0, 0]) - tr(MiMx @ MiMx))
    Bx = Mx - (2.0 * Wxi / d)[:, None, None] * M["val"]
    MiBx = Minv @ Bx
    Wxi_norm2 = tr(MiBx @ MiBx)

    Ev = P.Ev[(0, 0)]
    div_xi = Wxi_xi / Ev - Wxi * P.Ev[(0, 1)] / Ev**2
    dv = P.Ev[(1, 0)] / Ev
    dv_r = P.Ev[(2, 0)] / Ev - dv**2
    return Warped(
        n=spec.n, r=r, A=bg.A(r), A1=bg.A(r, 1), A2=bg.A(r, 2),
        Eu=P.Eu, Eu_tail=P.Eu_tail, du=P.Eu_r / P.Eu, Ev=Ev, dv=dv, dv_r=dv_r,
        W=W, W_r=W_r, Wr_norm2=Wr_norm2, Wxi=Wxi, Wxi_norm2=Wxi_norm2, div_xi=div_xi,
        R_gamma=_torus_curvature(M, Minv) / r**2,
    )


def _warped_flat_torus(spec: MetricSpec, r, angles) -> Warped:
    """Same as ``warped`` when what = 0: the torus block is r^2 delta."""
    bg = spec.background
    Eu_tail = spec.exp_u_hat.scalar(r, 0, skip_constant=True)
    Eu = 1.0 + Eu_tail
    Evj = spec.exp_v_hat.angular_jet(r, angles[:, 0])
    Ev = Evj[(0, 0)]
    dv = Evj[(1, 0)] / Ev
    z = np.zeros_like(r)
    return Warped(
        n=spec.n, r=r, A=bg.A(r), A1=bg.A(r, 1), A2=bg.A(r, 2),
        Eu=Eu, Eu_tail=Eu_tail, du=spec.exp_u_hat.scalar(r, 1) / Eu, Ev=Ev, dv=dv,
        dv_r=Evj[(2, 0)] / Ev - dv**2, W=z, W_r=z, Wr_norm2=z, Wxi=z, Wxi_norm2=z, div_xi=z, R_gamma=z,
    )


def w_quantities(spec: MetricSpec, point) -> WQuantities:
    point = np.asarray(point, dtype=float)
    r, angles = points(spec, point[0], point[1:])
    P = profiles(spec, r, angles)
    M = P.M["val"][0]
    if np.linalg.cond(M) > COND_MAX:
        raise DegenerateGamma(f"condition number of gamma exceeds {COND_MAX:g}")
    d = spec.n - 2
    rr = float(r[0])
    gamma = rr**2 * M
    d_r = 2 * rr * M + rr**2 * P.M["r"][0]
    d_xi = rr**2 * P.M["ang"][0, 0]
    gi = np.linalg.inv(gamma)
    Wr = 0.5 * np.trace(gi @ d_r)
    Wx = 0.5 * np.trace(gi @ d_xi)
    return WQuantities(
        W_r=float(Wr), W_r_traceless=d_r - 2 * Wr / d * gamma,
        W_xi=float(Wx), W_xi_traceless=d_xi - 2 * Wx / d * gamma,
        W_r_hat=float(0.5 * np.trace(np.linalg.solve(M, P.M["r"][0]))),
        gamma=gamma, d_r_gamma=d_r, d_xi_gamma=d_xi,
    )


def scalar_curvature_warped(spec: MetricSpec, point) -> float:
    point = np.asarray(point, dtype=float)
    return float(warped(spec, point[0], point[1:]).scalar[0])


def scalar_curvature(spec: MetricSpec, r, angles=None) -> np.ndarray:
    return warped(spec, r, angles).scalar


def scalar_deficit(spec: MetricSpec, r, angles=None) -> np.ndarray:
    """R(g) + n(n-1) at a batch of points."""
    return warped(spec, r, angles).deficit


def default_steps(point) -> np.ndarray:
    return 1e-3 * np.maximum(1.0, np.abs(np.asarray(point, dtype=float)))


def scalar_curvature_oracle(metric, point, step=None, r_plus: float | None = None) -> float:
    """Scalar curvature from centred finite differences of metric components.

    ``metric`` is a callable point -> matrix, or a MetricSpec (then the horizon
    radius is taken from it).  ``step`` is a scalar or per-coordinate array.
    """
    point = np.asarray(point, dtype=float)
    if isinstance(metric, MetricSpec):
        r_plus = metric.background.r_plus if r_plus is None else r_plus
        spec = metric
        metric = lambda x: eval_metric(spec, x)  # noqa: E731
    steps = default_steps(point) if step is None else np.broadcast_to(np.asarray(step, float), point.shape)
    if r_plus is not None and point[0] - steps[0] <= r_plus:
        raise StencilOutOfDomain(f"stencil [{point[0] - steps[0]:.6g}, ...] crosses r_plus = {r_plus:.6g}")
    try:
        g, dg, ddg = geometry.fd_jet(metric, point, steps)
    except SingularAtHorizon as exc:
        raise StencilOutOfDomain(str(exc)) from exc
    return float(geometry.scalar_from_jet(g, dg, ddg))


def ricci_oracle(metric, point, step=None):
    """(g, Ric) at a point from finite differences."""
    point = np.asarray(point, dtype=float)
    steps = default_steps(point) if step is None else np.broadcast_to(np.asarray(step, float), point.shape)
    g, dg, ddg = geometry.fd_jet(metric, point, steps)
    ric, _ = geometry.ricci(g, dg, ddg)
    return g, ric


def torus_scalar(spec: MetricSpec, point) -> float:
    """R(gamma) of the torus block at fixed (r, xi); identically 0 for n = 3."""
    if spec.n == 3:
        return 0.0
    point = np.asarray(point, dtype=float)
    r, angles = points(spec, point[0], point[1:])
    M = spec.w_hat.tensor_jet(r, angles, spec.n - 2)
    M["val"] = M["val"] + np.eye(spec.n - 2)
    return float(_torus_curvature(M, np.linalg.inv(M["val"]))[0] / r[0] ** 2)


def torus_scalar_integral(spec: MetricSpec, r: float, xi: float, nphi: int = 32,
                          measure: str = "coordinate") -> float:
    """Integral of R(gamma) over the phi-torus (periodic trapezoid rule).

    measure='coordinate' uses dphi^3...dphi^n; measure='volume' uses dV_gamma.
    """
    if spec.n == 3:
        return 0.0
    bg = spec.background
    axes = [np.arange(nphi) * lam / nphi for lam in bg.torus_periods]
    mesh = np.meshgrid(*axes, indexing="ij")
    phi = np.stack([m.ravel() for m in mesh], axis=-1)
    angles = np.column_stack([np.full(phi.shape[0], xi), phi])
    rr = np.full(phi.shape[0], float(r))
    M = spec.w_hat.tensor_jet(rr, angles, spec.n - 2)
    M["val"] = M["val"] + np.eye(spec.n - 2)
    R = _torus_curvature(M, np.linalg.inv(M["val"])) / float(r) ** 2
    if measure == "volume":
        R = R * float(r) ** (spec.n - 2) * np.sqrt(np.linalg.det(M["val"]))
    elif measure != "coordinate":
        raise ValueError("measure must be 'coordinate' or 'volume'")
    return float(np.mean(R) * np.prod(bg.torus_periods))


@dataclass
class DeficitFit:
    coefficient: float
    predicted: float
    residual: float


def predicted_trace_theta(spec: MetricSpec, angles) -> np.ndarray:
    """2(n-1)(u_{n-1} + v_{n-1} + tr w_{n-1}) at boundary angles (N, n-1)."""
    n = spec.n
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    tr_w = np.einsum("nii->n", spec.w_coeff(n - 1)(angles))
    return 2 * (n - 1) * (spec.u_coeff(n - 1) + spec.v_coeff(n - 1)(angles[:, 0]) + tr_w)


def scalar_deficit_leading(spec: MetricSpec, xi: float, phi=None, r_range=(1e2, 1e4),
                           samples: int = 40, max_residual: float = 1e-6) -> DeficitFit:
    """Fit c in R + n(n-1) = c r^{1-n} + c1 r^{-n} + c2 r^{-n-1} at fixed angles."""
    n = spec.n
    phi = np.zeros(n - 2) if phi is None else np.atleast_1d(np.asarray(phi, dtype=float))
    ang = np.concatenate([[xi], phi])
    scale = spec.background.r_plus
    rs = np.geomspace(r_range[0] * scale, r_range[1] * scale, samples)
    y = scalar_deficit(spec, rs, ang) * rs ** (n - 1)
    X = np.column_stack([np.ones_like(rs), 1 / rs, 1 / rs**2])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.max(np.abs(X @ coef - y)) / max(1.0, np.max(np.abs(y))))
    if not np.isfinite(resid) or resid > max_residual:
        raise FitUnstable(f"leading-coefficient fit residual {resid:.3g}")
    return DeficitFit(float(coef[0]), float(predicted_trace_theta(spec, ang[None])[0]), resid)
