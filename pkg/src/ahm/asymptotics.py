"""Defining function, boundary tensors, energy and the L1/APE criteria."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .curvature import predicted_trace_theta, scalar_deficit, warped
from .errors import BelowFloor, FitUnstable, QuadratureFail
from .metric import Grid, MetricSpec, decay_order, metric_jet, points

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def gauss_legendre(f, a, b, panels: int):
    """Composite Gauss-Legendre rule of f over [a, b], vectorised over array endpoints.

    ``f`` receives nodes of shape (N, panels * 24) and must return the same shape.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    edges = a[:, None] + (b - a)[:, None] * np.linspace(0.0, 1.0, panels + 1)[None, :]
    half = 0.5 * (edges[:, 1:] - edges[:, :-1])
    mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    nodes = (mid[:, :, None] + half[:, :, None] * _GL_X).reshape(a.size, -1)
    wts = (half[:, :, None] * _GL_W).reshape(a.size, -1)
    return np.sum(f(nodes) * wts, axis=1)


def checked_gl(f, a, b, panels: int, tol: float, what: str):
    """Gauss-Legendre with a panel-doubling error estimate."""
    coarse = gauss_legendre(f, a, b, panels)
    fine = gauss_legendre(f, a, b, 2 * panels)
    err = np.abs(fine - coarse)
    if np.any(err > tol * np.maximum(1.0, np.abs(fine))):
        raise QuadratureFail(f"{what}: error estimate {err.max():.3g} above {tol:g}")
    return fine, err


class RadialIntegral:
    """G(r) = int_{r+}^r e^{u_hat} / (s sqrt(Q)) ds and its large-r remainder T.

    Near the horizon (r <= split * r+) G is integrated in t = sqrt(s - r+), which
    removes the inverse square-root endpoint.  Beyond, G = C + ln r - T(r) with
    T(r) = int_r^inf (e^{u_hat}/sqrt(Q) - 1) ds / s evaluated in y = r/s on (0, 1],
    where the integrand is analytic.
    """

    def __init__(self, spec: MetricSpec, split: float = 2.0, tol: float = 1e-12):
        self.spec = spec
        self.bg = spec.background
        self.r_plus = self.bg.r_plus
        self.tol = tol
        self.r_split = split * self.r_plus
        self.t_split = np.sqrt(self.r_split - self.r_plus)
        g_split = self.G_near(np.array([self.r_split]))[0]
        t_split = self.T(np.array([self.r_split]))[0]
        self.C = float(g_split - np.log(self.r_split) + t_split)

    def _eu_tail(self, s):
        return self.spec.exp_u_hat.scalar(s, skip_constant=True)

    def near_integrand(self, t):
        s = self.r_plus + t * t
        return 2.0 * (1.0 + self._eu_tail(s)) / (s * np.sqrt(self.bg.q1(s)))

    def tail_integrand(self, s):
        """(e^{u_hat} / sqrt(Q) - 1) / s without cancellation at large s."""
        Qm1 = self.bg.Q_minus_one(s)
        sq = np.sqrt(1.0 + Qm1)
        return (self._eu_tail(s) - Qm1 / (1.0 + sq)) / (s * sq)

    def G_near(self, r):
        return self.G_near_t(np.sqrt(np.maximum(np.asarray(r, dtype=float) - self.r_plus, 0.0)))

    def G_near_t(self, t):
        t = np.asarray(t, dtype=float)
        val, _ = checked_gl(lambda z: self.near_integrand(z), np.zeros_like(t), t, 8, self.tol, "near-horizon G")
        return val

    def T(self, r, chunk: int = 4096):
        r = np.asarray(r, dtype=float)
        if r.size > chunk:
            return np.concatenate([self.T(r[i:i + chunk]) for i in range(0, r.size, chunk)])

        def f(y):
            s = r[:, None] / y
            return self.tail_integrand(s) * r[:, None] / y**2

        val, _ = checked_gl(f, np.zeros_like(r), np.ones_like(r), 4, self.tol, "tail integral T")
        return val

    def G(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        near = r <= self.r_split
        if np.any(near):
            out[near] = self.G_near(r[near])
        if np.any(~near):
            out[~near] = self.C + np.log(r[~near]) - self.T(r[~near])
        return out

    def log_x(self, r):
        """ln x(r) = C - G(r); equals T(r) - ln r in the far region."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        near = r <= self.r_split
        if np.any(near):
            out[near] = self.C - self.G_near(r[near])
        if np.any(~near):
            out[~near] = self.T(r[~near]) - np.log(r[~near])
        return out


def collar_scale(spec: MetricSpec) -> float:
    bg = spec.background
    return max(1.0, bg.r_plus, bg.r0, abs(bg.a) ** (1.0 / (bg.n - 1)))


def _polyfit(x, y, degree: int):
    X = np.vander(x, degree + 1, increasing=True)
    coef, res, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(1, x.size - degree - 1)
    cov = np.linalg.pinv(X.T @ X) * (resid @ resid) / dof
    return coef, np.sqrt(np.abs(np.diag(cov))), resid


@dataclass
class DefiningFunction:
    C: float
    r_plus: float
    r_nodes: np.ndarray
    x_nodes: np.ndarray
    coefficients: tuple[float, float, float]
    stderr: tuple[float, float]
    predicted: tuple[float, float]
    integral: RadialIntegral = field(repr=False)

    def x(self, r):
        return np.exp(self.integral.log_x(r))

    def to_dict(self) -> dict:
        return {"C": self.C, "r_plus": self.r_plus, "coefficients": list(self.coefficients),
                "stderr": list(self.stderr), "predicted": list(self.predicted)}


def defining_function(spec: MetricSpec, samples: int = 48, table_nodes: int = 256,
                      integral: RadialIntegral | None = None) -> DefiningFunction:
    """Special defining function x(r) = exp(C - G(r)) and its inverse expansion.

    The coefficients of r = 1/x + c1 x^{n-2} + c2 x^{n-1} + ... come from a
    least-squares fit of (r - 1/x)/x^{n-2} = expm1(T)/x^{n-1} over two decades of x.
    """
    n = spec.n
    bg = spec.background
    ri = integral or RadialIntegral(spec)
    R = collar_scale(spec)
    rs = np.geomspace(10 * R, 1e3 * R, samples)
    T = ri.T(rs)
    x = np.exp(T) / rs
    y = np.expm1(T) / x ** (n - 1)
    coef, err, _ = _polyfit(x, y, 4)
    r_nodes = np.geomspace(bg.r_plus * (1 + 1e-8), 1e3 * bg.r_plus, table_nodes)
    return DefiningFunction(
        C=ri.C, r_plus=bg.r_plus, r_nodes=r_nodes, x_nodes=np.exp(ri.log_x(r_nodes)),
        coefficients=(1.0, float(coef[0]), float(coef[1])), stderr=(float(err[0]), float(err[1])),
        predicted=((spec.u_coeff(n - 1) - 0.5 * bg.a) / (n - 1), (spec.u_coeff(n) + 0.5 * bg.r0**n) / n),
        integral=ri,
    )


# ----------------------------------------------------------------------
# boundary tensors and energy
# ----------------------------------------------------------------------

@dataclass
class BoundaryData:
    angles: np.ndarray          # (B, n-1) nodes on T^{n-1}, xi first
    weights: np.ndarray         # trapezoid weights, summing to the boundary volume
    h0: np.ndarray              # identity (n-1)x(n-1)
    theta: np.ndarray           # (B, n-1, n-1)
    kappa: np.ndarray
    tr_theta: np.ndarray
    tr_kappa: np.ndarray
    fit_deviation: float | None = None

    @property
    def volume(self) -> float:
        return float(self.weights.sum())


def boundary_grid(spec: MetricSpec, grid: Grid | None = None):
    """Boundary nodes fine enough that the periodic trapezoid rule is exact for the data."""
    grid = grid or Grid()
    bg = spec.background
    modes = [spec.w_hat.coefficient(m, None) for m in spec.w_hat.orders]
    kmax = max([t.max_mode() for t in modes if t is not None] +
               [max(c.coefficients, default=0) for c in spec.exp_v_hat.terms.values()] + [0])
    nxi = max(grid.nxi, 2 * kmax + 1)
    nphi = max(grid.phi_nodes(bg.dim_torus), min(2 * kmax + 1, 64))
    return grid.boundary(bg, nxi=nxi, nphi=nphi)


def theta_kappa(spec: MetricSpec, angles) -> tuple[np.ndarray, np.ndarray]:
    n = spec.n
    bg = spec.background
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    B, d = angles.shape[0], n - 2
    u1, un = spec.u_coeff(n - 1), spec.u_coeff(n)
    v1, vn = spec.v_coeff(n - 1)(angles[:, 0]), spec.v_coeff(n)(angles[:, 0])
    w1, wn = spec.w_coeff(n - 1)(angles), spec.w_coeff(n)(angles)
    theta = np.zeros((B, n - 1, n - 1))
    kappa = np.zeros_like(theta)
    theta[:, 0, 0] = (n - 2) * bg.a + 2 * u1 + 2 * (n - 1) * v1
    theta[:, 1:, 1:] = (2 * u1 - bg.a) * np.eye(d) + 2 * (n - 1) * w1
    kappa[:, 0, 0] = -(n - 1) * bg.r0**n + 2 * un + 2 * n * vn
    kappa[:, 1:, 1:] = (bg.r0**n + 2 * un) * np.eye(d) + 2 * n * wn
    return theta, kappa


def normal_form_fit(spec: MetricSpec, angle, integral: RadialIntegral | None = None, samples: int = 40):
    """Fit the x^{n-1} and x^n tangential coefficients of x^2 g at a fixed boundary point.

    Returns (theta, kappa) estimated from h_x - h0 = theta x^{n-1}/(n-1) + kappa x^n/n + ...
    """
    n = spec.n
    ri = integral or RadialIntegral(spec)
    R = collar_scale(spec)
    rs = np.geomspace(10 * R, 1e3 * R, samples)
    T = ri.T(rs)
    x = np.exp(T) / rs
    r, ang = points(spec, rs, np.asarray(angle, dtype=float))
    bg = spec.background
    Ev_tail = spec.exp_v_hat.angular_jet(r, ang[:, 0], skip_constant=True)[(0, 0)]
    d = n - 2
    what = spec.w_hat.tensor_jet(r, ang, d, values_only=True)["val"]
    dev = np.zeros((rs.size, n - 1, n - 1))
    dev[:, 0, 0] = np.expm1(2 * T + np.log1p(bg.Q_minus_one(rs)) + 2 * np.log1p(Ev_tail))
    dev[:, 1:, 1:] = np.expm1(2 * T)[:, None, None] * np.eye(d) + np.exp(2 * T)[:, None, None] * what
    y = dev.reshape(rs.size, -1) / x[:, None] ** (n - 1)
    X = np.vander(x, 5, increasing=True)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    theta = (n - 1) * coef[0].reshape(n - 1, n - 1)
    kappa = n * coef[1].reshape(n - 1, n - 1)
    return theta, kappa


def boundary_tensors(spec: MetricSpec, grid: Grid | None = None, check: bool = True,
                     check_points: int = 3, fit_tol: float = 1e-3) -> BoundaryData:
    """Closed-form theta, kappa on the boundary grid, optionally checked against fits."""
    angles, weights = boundary_grid(spec, grid)
    theta, kappa = theta_kappa(spec, angles)
    bd = BoundaryData(angles=angles, weights=weights, h0=np.eye(spec.n - 1), theta=theta, kappa=kappa,
                      tr_theta=np.einsum("bii->b", theta), tr_kappa=np.einsum("bii->b", kappa))
    if check:
        ri = RadialIntegral(spec)
        idx = np.linspace(0, angles.shape[0] - 1, check_points).astype(int)
        dev = 0.0
        for i in idx:
            th, ka = normal_form_fit(spec, angles[i], ri)
            scale = 1.0 + np.abs(theta[i]).max() + np.abs(kappa[i]).max()
            dev = max(dev, np.abs(th - theta[i]).max() / scale, np.abs(ka - kappa[i]).max() / scale)
        bd.fit_deviation = float(dev)
        if dev > fit_tol:
            raise FitUnstable(f"normal-form fit deviates from closed form by {dev:.3g}")
    return bd


def mass_aspect(spec: MetricSpec, angles) -> np.ndarray:
    n = spec.n
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    tr_wn = np.einsum("bii->b", spec.w_coeff(n)(angles))
    return -spec.background.r0**n + 2 * (n - 1) * spec.u_coeff(n) + 2 * n * spec.v_coeff(n)(angles[:, 0]) \
        + 2 * n * tr_wn


def total_energy(spec: MetricSpec, grid: Grid | None = None) -> float:
    """Integral of the mass aspect over the boundary torus (periodic trapezoid rule)."""
    angles, weights = boundary_grid(spec, grid)
    return float(np.dot(mass_aspect(spec, angles), weights))


def total_energy_closed_form(spec: MetricSpec) -> float:
    """Volume times the mean mass aspect, read directly from the zero modes."""
    n = spec.n
    mean = (-spec.background.r0**n + 2 * (n - 1) * spec.u_coeff(n) + 2 * n * spec.v_coeff(n).mean()
            + 2 * n * spec.w_coeff(n).mean_trace())
    return float(mean * spec.background.boundary_volume)


def energy_hm(spec: MetricSpec) -> float:
    bg = spec.background
    return -bg.r_breve**bg.n * bg.boundary_volume


def energy_difference(spec: MetricSpec, grid: Grid | None = None) -> float:
    """E(g) - E(g_HM) against the HM metric with the same xi-period."""
    bg = spec.background
    angles, weights = boundary_grid(spec, grid)
    integrand = bg.r_breve**bg.n + mass_aspect(spec, angles)
    return float(np.dot(integrand, weights))


# ----------------------------------------------------------------------
# L1 and APE criteria
# ----------------------------------------------------------------------

@dataclass
class L1Result:
    passed: bool
    sup: float
    field: np.ndarray
    angles: np.ndarray
    tolerance: float


def l1_field(spec: MetricSpec, angles) -> np.ndarray:
    n = spec.n
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    return predicted_trace_theta(spec, angles) / (2 * (n - 1))


def l1_condition(spec: MetricSpec, grid: Grid | None = None, tol: float = 1e-12) -> L1Result:
    """u_{n-1} + v_{n-1} + tr w_{n-1} on the boundary grid; passes iff its sup is <= tol."""
    angles, _ = boundary_grid(spec, grid)
    f = l1_field(spec, angles)
    sup = float(np.max(np.abs(f)))
    return L1Result(passed=sup <= tol, sup=sup, field=f, angles=angles, tolerance=tol)


def deficit_decay_order(spec: MetricSpec, angle=None, r_range=None, snr: float = 1e3):
    """Fitted decay order of R + n(n-1) along a radial ray.

    Without ``r_range`` the window is two decades wide and placed as far out as
    roundoff allows: its upper end is the largest power of ten (up to 1e6 times
    the collar scale) where |R + n(n-1)| exceeds ``snr`` times the estimated
    cancellation error.
    """
    n = spec.n
    angle = np.zeros(n - 1) if angle is None else np.asarray(angle, dtype=float)
    R = collar_scale(spec)
    if r_range is None:
        tops = R * 10.0 ** np.arange(6, 2, -1)
        w = warped(spec, tops, angle)
        ok = np.abs(w.deficit) >= snr * np.finfo(float).eps * w.deficit_scale
        top = tops[int(np.argmax(ok))] if np.any(ok) else tops[-1]
        r_range = (top / 100.0, top)
    else:
        r_range = (r_range[0] * R, r_range[1] * R)
    return decay_order(lambda r: scalar_deficit(spec, np.atleast_1d(r), angle), r_range=r_range, k_max=0)


@dataclass
class ApeResult:
    order: float
    residual: float
    ape: bool
    trace_theta_zero: bool
    x_samples: np.ndarray
    omega_norm: np.ndarray


def omega_norm(spec: MetricSpec, r, angles=None) -> np.ndarray:
    """|Ric + (n-1) g|_g from the analytic 2-jet of the metric."""
    g, dg, ddg = metric_jet(spec, r, angles)
    ric, ginv = geometry.ricci(g, dg, ddg)
    om = ric + (spec.n - 1) * g
    mixed = ginv @ om
    return np.sqrt(np.abs(np.einsum("nij,nji->n", mixed, mixed)))


def ape_deficit(spec: MetricSpec, x_samples=None, angle=None, floor: float = 1e-14,
                max_residual: float = 0.05) -> ApeResult:
    """Decay order of |Omega|_g in the defining function x.

    Orders >= n mean APE; order n-1 signals tr theta != 0.  If |Omega|_g sits at
    roundoff level the metric is Einstein to working precision and the order is
    reported as infinite.
    """
    n = spec.n
    angle = np.zeros(n - 1) if angle is None else np.asarray(angle, dtype=float)
    R = collar_scale(spec)
    if x_samples is None:
        x_samples = np.geomspace(2e-3, 2e-2, 16) / R
    x_samples = np.asarray(x_samples, dtype=float)
    ri = RadialIntegral(spec)
    # invert x(r) in the far region: r = e^{T(r)} / x, by fixed-point iteration
    r = 1.0 / x_samples
    for _ in range(60):
        r_new = np.exp(ri.T(r)) / x_samples
        if np.max(np.abs(r_new / r - 1)) < 1e-15:
            r = r_new
            break
        r = r_new
    if np.any(r <= ri.r_split):
        raise FitUnstable("x samples reach into the near-horizon region")
    om = omega_norm(spec, r, angle)
    tr_zero = bool(np.abs(predicted_trace_theta(spec, angle[None])[0]) <= 1e-12)
    if np.all(om <= floor):
        return ApeResult(np.inf, 0.0, True, tr_zero, x_samples, om)
    keep = om > floor
    if keep.sum() < 4:
        raise BelowFloor("too few samples above the roundoff floor")
    X = np.column_stack([np.ones(keep.sum()), np.log(x_samples[keep])])
    coef, *_ = np.linalg.lstsq(X, np.log(om[keep]), rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - np.log(om[keep])) ** 2)))
    if resid > max_residual:
        raise FitUnstable(f"log-log fit residual {resid:.3g}")
    order = float(coef[1])
    return ApeResult(order, resid, order >= n - 0.5, tr_zero, x_samples, om)
