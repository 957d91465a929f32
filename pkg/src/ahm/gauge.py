"""Radial gauge change putting the (r, r) component into exact HM form.

The new radius solves F(r_tilde / r_tilde_0) = G(r), where
F(y) = int_1^y ds / (s sqrt(1 - s^{-n})) and G is the radial integral of
``asymptotics.RadialIntegral``.  F has the closed form (2/n) arccosh(y^{n/2});
the solver inverts it directly, and the quadrature version of F is kept as an
independent check.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .asymptotics import RadialIntegral, checked_gl, collar_scale, l1_condition
from .errors import FitUnstable, NoRoot, RegularityFail
from .metric import Grid, MetricSpec, regularity_residual
from .series import AngularSeries, TorusTensorSeries


# ----------------------------------------------------------------------
# the HM profile F
# ----------------------------------------------------------------------

def _near_F_integrand(n):
    def f(tau):
        s = 1.0 + tau * tau
        return 2.0 * s ** (0.5 * n - 1) / np.sqrt(sum(s**k for k in range(n)))
    return f


def _far_F_excess(n):
    # (1/sqrt(1 - s^-n) - 1)/s written without cancellation
    def f(s):
        eps = s ** (-float(n))
        root = np.sqrt(1.0 - eps)
        return eps / (root * (1.0 + root)) / s
    return f


def F_profile(y, n: int, tol: float = 1e-13) -> np.ndarray:
    """F(y) = int_1^y ds / (s sqrt(1 - s^{-n})) by quadrature, for y >= 1."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y < 1):
        raise ValueError("F is defined for y >= 1")
    out = np.empty_like(y)
    near = y <= 2.0
    tau = np.sqrt(np.where(near, y, 2.0) - 1.0)
    vals, _ = checked_gl(_near_F_integrand(n), np.zeros_like(tau), tau, 4, tol, "F near s = 1")
    out[near] = vals[near]
    if np.any(~near):
        f2 = vals[~near][0] if np.all(~near) else F_profile(2.0, n)[0]
        yy = y[~near]
        exc = _far_F_excess(n)
        lo, hi = np.log(2.0) * np.ones_like(yy), np.log(yy)
        extra, _ = checked_gl(lambda z: exc(np.exp(z)) * np.exp(z), lo, hi, 8, tol, "F far")
        out[~near] = f2 + np.log(yy / 2.0) + extra
    return out


def F0(n: int, tol: float = 1e-13) -> float:
    """lim_{y -> inf} F(y) - ln y, by quadrature."""
    exc = _far_F_excess(n)
    tail, _ = checked_gl(lambda z: exc(2.0 / z) * 2.0 / z**2, np.zeros(1), np.ones(1), 4, tol, "F0 tail")
    return float(F_profile(2.0, n)[0] - math.log(2.0) + tail[0])


def F_closed(y, n: int):
    return (2.0 / n) * np.arccosh(np.asarray(y, dtype=float) ** (0.5 * n))


def F0_closed(n: int) -> float:
    return 2.0 * math.log(2.0) / n


def F_expansion_fit(n: int, r_range=(10.0, 1e3), samples: int = 40):
    """Fit F(y) - ln y = c0 + c1 y^{-n} + c2 y^{-2n}; returns (c0, c1)."""
    y = np.geomspace(*r_range, samples)
    resid = F_profile(y, n) - np.log(y)
    X = np.column_stack([np.ones_like(y), y ** (-float(n)), y ** (-2.0 * n)])
    coef, *_ = np.linalg.lstsq(X, resid, rcond=None)
    return float(coef[0]), float(coef[1])


def _logcosh(z):
    z = np.abs(z)
    small = np.log1p(2.0 * np.sinh(0.5 * np.minimum(z, 1.0)) ** 2)
    return np.where(z < 1.0, small, z + np.log1p(np.exp(-2.0 * z)) - math.log(2.0))


def _K_inf(y, n):
    """F0 + ln y - F(y), i.e. int_y^inf (1/sqrt(1 - s^-n) - 1) ds / s, closed form."""
    eps = np.asarray(y, dtype=float) ** (-float(n))
    root = np.sqrt(1.0 - eps)
    return -(2.0 / n) * np.log1p(-0.5 * eps / (1.0 + root))


# ----------------------------------------------------------------------
# gauge map
# ----------------------------------------------------------------------

@dataclass
class GaugePoints:
    """Exact gauge data at a batch of radii (all arrays of shape (N,))."""

    r: np.ndarray
    r_tilde: np.ndarray
    log_ratio: np.ndarray      # ln(r_tilde / r)
    log_rho: np.ndarray        # ln(d r_tilde / d r)
    lam: np.ndarray            # ln rho - ln(r_tilde / r)
    eps_tilde: np.ndarray      # (r_tilde_0 / r_tilde)^n
    offset: np.ndarray         # r_tilde - r_tilde_0, accurate near the horizon

    @property
    def rho(self) -> np.ndarray:
        return np.exp(self.log_rho)

    def repeat(self, count: int) -> "GaugePoints":
        """Each radius repeated ``count`` times (radius-major order)."""
        return GaugePoints(**{k: np.repeat(v, count) for k, v in vars(self).items()})


@dataclass
class GaugeMap:
    spec: MetricSpec = field(repr=False)
    integral: RadialIntegral = field(repr=False)
    r_tilde_0: float
    F0: float
    C: float
    r_breve: float
    r_nodes: np.ndarray = field(repr=False)
    r_tilde_nodes: np.ndarray = field(repr=False)
    rho_nodes: np.ndarray = field(repr=False)
    expansion: tuple[float, float] = (0.0, 0.0)
    expansion_predicted: tuple[float, float] = (0.0, 0.0)

    @property
    def n(self) -> int:
        return self.spec.n

    # exact evaluation ---------------------------------------------------
    def at(self, r, dr=None) -> GaugePoints:
        """Exact map at radii r; ``dr = r - r+`` may be passed to keep horizon digits."""
        ri, bg, n, rt0 = self.integral, self.spec.background, self.n, self.r_tilde_0
        if dr is not None:
            dr = np.atleast_1d(np.asarray(dr, dtype=float))
            r = bg.r_plus + dr
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if dr is None:
            dr = r - bg.r_plus
        if np.any(r < bg.r_plus):
            raise ValueError("gauge map is defined for r >= r_plus")
        out = {k: np.empty_like(r) for k in ("r_tilde", "log_ratio", "log_rho", "lam", "eps_tilde", "offset")}
        eu_tail = self.spec.exp_u_hat.scalar(r, skip_constant=True)
        near = r <= ri.r_split
        if np.any(near):
            rn = r[near]
            t = np.sqrt(dr[near])
            G = ri.G_near_t(t)
            tau2 = np.expm1((2.0 / n) * _logcosh(0.5 * n * G))
            rt = rt0 * (1.0 + tau2)
            # ln rho = ln(tau/t) + 1/2 ln(r~0 a~1) + ln Eu - ln r - 1/2 ln q1
            a1 = rt ** (2 - n) * sum(rt**k * rt0 ** (n - 1 - k) for k in range(n))
            with np.errstate(divide="ignore", invalid="ignore"):
                log_tau_t = 0.5 * np.log(tau2 / t**2)
            log_tau_t = np.where(t > 0, log_tau_t, self._log_tau_over_t_limit())
            lr = (log_tau_t + 0.5 * np.log(rt0 * a1) + np.log1p(eu_tail[near]) - np.log(rn)
                  - 0.5 * np.log(bg.q1(rn)))
            out["r_tilde"][near] = rt
            out["log_ratio"][near] = np.log(rt / rn)
            out["log_rho"][near] = lr
            out["lam"][near] = lr - np.log(rt / rn)
            out["eps_tilde"][near] = (rt0 / rt) ** n
            out["offset"][near] = rt0 * tau2
        if np.any(~near):
            rf = r[~near]
            T = ri.T(rf)
            delta = -T
            for _ in range(200):
                new = _K_inf(rf * np.exp(delta) / rt0, n) - T
                done = np.max(np.abs(new - delta)) <= 4e-16
                delta = new
                if done:
                    break
            else:
                raise NoRoot("fixed-point iteration for r_tilde did not converge")
            rt = rf * np.exp(delta)
            eps = (rt0 / rt) ** n
            lam = 0.5 * np.log1p(-eps) - 0.5 * np.log1p(bg.Q_minus_one(rf)) + np.log1p(eu_tail[~near])
            out["r_tilde"][~near] = rt
            out["log_ratio"][~near] = delta
            out["log_rho"][~near] = lam + delta
            out["lam"][~near] = lam
            out["eps_tilde"][~near] = eps
            out["offset"][~near] = rt - rt0
        return GaugePoints(r=r, **out)

    def _log_tau_over_t_limit(self) -> float:
        # tau/t -> sqrt(n) Eu(r+) / (r+ sqrt(q1(r+)))
        bg = self.spec.background
        rp = np.array([bg.r_plus])
        eu = 1.0 + self.spec.exp_u_hat.scalar(rp, skip_constant=True)[0]
        return float(0.5 * math.log(self.n) + math.log(eu) - math.log(bg.r_plus) - 0.5 * math.log(bg.q1(rp)[0]))

    def r_tilde(self, r) -> np.ndarray:
        return self.at(r).r_tilde

    def rho(self, r) -> np.ndarray:
        return self.at(r).rho

    def d_log_rho(self, r, gp: GaugePoints | None = None) -> np.ndarray:
        """d/dr ln rho, written in small quantities (far region only)."""
        gp = gp or self.at(r)
        bg, n = self.spec.background, self.n
        r = gp.r
        rho = gp.rho
        eps = gp.eps_tilde
        eu = 1.0 + self.spec.exp_u_hat.scalar(r, skip_constant=True)
        du = self.spec.exp_u_hat.scalar(r, 1) / eu
        return (0.5 * n * eps * rho / (gp.r_tilde * (1.0 - eps)) - bg.dQ(r) / (2.0 * bg.Q(r))
                + np.expm1(gp.lam) / r + du)

    def rho_at_horizon(self) -> float:
        """Closed form e^{2 u_hat(r+)} r_tilde_0 / r_breve."""
        bg = self.spec.background
        eu = 1.0 + self.spec.exp_u_hat.scalar(np.array([bg.r_plus]), skip_constant=True)[0]
        return float(eu**2 * self.r_tilde_0 / bg.r_breve)

    def rho_horizon_limit(self, h: float | None = None, levels: int = 4) -> float:
        """One-sided limit of d r_tilde/dr at r_plus by Richardson extrapolation in t^2."""
        bg = self.spec.background
        h = 1e-2 * math.sqrt(bg.r_plus) if h is None else h
        ts = h / 2.0 ** np.arange(levels)
        vals = self.at(None, dr=ts**2).log_rho
        # Neville extrapolation to t^2 = 0
        x = ts**2
        p = list(vals)
        for k in range(1, levels):
            for i in range(levels - k):
                p[i] = (x[i + k] * p[i] - x[i] * p[i + 1]) / (x[i + k] - x[i])
        return float(math.exp(p[0]))

    def interpolant(self) -> PchipInterpolator:
        return PchipInterpolator(self.r_nodes, self.r_tilde_nodes)

    def table_csv(self) -> str:
        buf = io.StringIO()
        buf.write("r,r_tilde,drtilde_dr\n")
        for r, rt, rho in zip(self.r_nodes, self.r_tilde_nodes, self.rho_nodes):
            buf.write(f"{r:.17g},{rt:.17g},{rho:.17g}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"r_tilde_0": self.r_tilde_0, "F0": self.F0, "C": self.C, "r_breve": self.r_breve,
                "expansion": list(self.expansion), "expansion_predicted": list(self.expansion_predicted)}


def gauge_nodes(spec: MetricSpec, count: int = 256) -> np.ndarray:
    """Log-spaced in r - r+ up to 2 r+, then log-spaced in r up to 1e3 r+."""
    rp = spec.background.r_plus
    half = count // 2
    near = rp + np.geomspace(1e-8 * rp, rp, half, endpoint=False)
    far = np.geomspace(2 * rp, 1e3 * rp, count - half)
    return np.concatenate([near, far])


def radial_gauge(spec: MetricSpec, nodes: int = 256, integral: RadialIntegral | None = None) -> GaugeMap:
    ri = integral or RadialIntegral(spec)
    n = spec.n
    bg = spec.background
    f0 = F0(n)
    rt0 = math.exp(f0 - ri.C)
    gm = GaugeMap(spec=spec, integral=ri, r_tilde_0=rt0, F0=f0, C=ri.C, r_breve=bg.r_breve,
                  r_nodes=np.empty(0), r_tilde_nodes=np.empty(0), rho_nodes=np.empty(0))
    r_nodes = gauge_nodes(spec, nodes)
    gp = gm.at(r_nodes)
    gm.r_nodes, gm.r_tilde_nodes, gm.rho_nodes = r_nodes, gp.r_tilde, gp.rho
    if np.any(np.diff(gp.r_tilde) <= 0) or np.any(gp.rho <= 0):
        raise NoRoot("gauge map is not strictly increasing")
    gm.expansion = expansion_fit(gm)
    gm.expansion_predicted = ((bg.a - 2 * spec.u_coeff(n - 1)) / (2 * (n - 1)),
                              (rt0**n - bg.r0**n - 2 * spec.u_coeff(n)) / (2 * n))
    return gm


def expansion_fit(gm: GaugeMap, samples: int = 40):
    """Fit r_tilde = r + c1 r^{2-n} + c2 r^{1-n} + ...; returns (c1, c2)."""
    n = gm.n
    R = collar_scale(gm.spec)
    r = np.geomspace(10 * R, 1e3 * R, samples)
    gp = gm.at(r)
    y = np.expm1(gp.log_ratio) * r ** (n - 1)
    X = np.column_stack([np.ones_like(r), 1 / r, 1 / r**2, 1 / r**3])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(coef[0]), float(coef[1])


def gauge_relation_residual(gm: GaugeMap, h: float = 2e-3) -> float:
    """Max relative gap between d r_tilde/dr by differencing the exact map and the closed form.

    Evaluated at midpoints of the tabulation with a fourth-order centred stencil in
    sigma = ln(r - r+), applied to r_tilde - r_tilde_0 to keep the horizon digits.
    """
    rp = gm.spec.background.r_plus
    sig = 0.5 * (np.log(gm.r_nodes[1:] - rp) + np.log(gm.r_nodes[:-1] - rp))
    f = lambda s: gm.at(None, dr=np.exp(s)).offset  # noqa: E731
    fd = (8 * (f(sig + h) - f(sig - h)) - (f(sig + 2 * h) - f(sig - 2 * h))) / (12 * h)
    return float(np.max(np.abs(fd / (np.exp(sig) * gm.at(None, dr=np.exp(sig)).rho) - 1.0)))


# ----------------------------------------------------------------------
# transformed coefficients
# ----------------------------------------------------------------------

@dataclass
class TransformedCoeffs:
    v_tilde_1: AngularSeries        # order n-1
    v_tilde_n: AngularSeries
    w_tilde_1: TorusTensorSeries    # conventional w (half of the what coefficient)
    w_tilde_n: TorusTensorSeries
    fit_deviation: float | None = None


def transformed_coeffs(gm: GaugeMap, spec: MetricSpec | None = None, check: bool = True,
                       check_points: int = 3, fit_tol: float = 1e-3) -> TransformedCoeffs:
    spec = spec or gm.spec
    n = spec.n
    bg = spec.background
    a, r0n, rtn = bg.a, bg.r0**n, gm.r_tilde_0**n
    u1, un = spec.u_coeff(n - 1), spec.u_coeff(n)
    d, periods = bg.dim_torus, bg.angle_periods
    vt1 = spec.v_coeff(n - 1).shifted(((n - 2) * a + 2 * u1) / (2 * (n - 1)))
    vtn = spec.v_coeff(n).shifted(((n - 1) * (rtn - r0n) + 2 * un) / (2 * n))
    wt1 = spec.w_coeff(n - 1) + TorusTensorSeries.identity(d, periods, (2 * u1 - a) / (2 * (n - 1)))
    wtn = spec.w_coeff(n) + TorusTensorSeries.identity(d, periods, (-(rtn - r0n) + 2 * un) / (2 * n))
    out = TransformedCoeffs(vt1, vtn, wt1, wtn)
    if check:
        angles, _ = Grid().boundary(bg, nxi=8, nphi=2)
        idx = np.linspace(0, angles.shape[0] - 1, check_points).astype(int)
        dev = 0.0
        for i in idx:
            fit = fit_transformed(gm, angles[i])
            ang = angles[i][None]
            ref = [vt1(ang[:, 0])[0], vtn(ang[:, 0])[0], wt1(ang)[0], wtn(ang)[0]]
            scale = 1.0 + max(np.max(np.abs(x)) for x in ref)
            dev = max(dev, *(float(np.max(np.abs(f - g))) / scale for f, g in zip(fit, ref)))
        out.fit_deviation = dev
        if dev > fit_tol:
            raise FitUnstable(f"transformed coefficients deviate from closed form by {dev:.3g}")
    return out


def fit_transformed(gm: GaugeMap, angle, samples: int = 40):
    """Large-r_tilde fits of e^{v_hat~} - 1 and of the rewritten angular block."""
    spec = gm.spec
    n = spec.n
    R = collar_scale(spec)
    r = np.geomspace(10 * R, 1e3 * R, samples)
    gp = gm.at(r)
    angle = np.asarray(angle, dtype=float)
    ang = np.broadcast_to(angle, (r.size, n - 1))
    eu_tail = spec.exp_u_hat.scalar(r, skip_constant=True)
    ev_tail = spec.exp_v_hat.angular_jet(r, ang[:, 0], skip_constant=True)[(0, 0)]
    ev_t = np.expm1(np.log1p(eu_tail) + np.log1p(ev_tail) - gp.log_rho)
    what = spec.w_hat.tensor_jet(r, ang, n - 2, values_only=True)["val"]
    shrink = np.exp(-2 * gp.log_ratio)[:, None, None]
    wt = shrink * what + np.expm1(-2 * gp.log_ratio)[:, None, None] * np.eye(n - 2)
    rt = gp.r_tilde
    X = np.column_stack([np.ones_like(rt), 1 / rt, 1 / rt**2, 1 / rt**3])
    cv, *_ = np.linalg.lstsq(X, ev_t * rt ** (n - 1), rcond=None)
    cw, *_ = np.linalg.lstsq(X, (wt * rt[:, None, None] ** (n - 1)).reshape(r.size, -1), rcond=None)
    d = n - 2
    return cv[0], cv[1], 0.5 * cw[0].reshape(d, d), 0.5 * cw[1].reshape(d, d)


@dataclass
class L1TildeResult:
    passed: bool
    sup: float
    agrees_with_original: bool


def l1_condition_tilde(gm: GaugeMap, spec: MetricSpec | None = None, coeffs: TransformedCoeffs | None = None,
                       grid: Grid | None = None, tol: float = 1e-12) -> L1TildeResult:
    """v~_{n-1} + tr w~_{n-1} on the boundary grid, compared with the original condition."""
    spec = spec or gm.spec
    coeffs = coeffs or transformed_coeffs(gm, spec, check=False)
    from .asymptotics import boundary_grid

    angles, _ = boundary_grid(spec, grid)
    f = coeffs.v_tilde_1(angles[:, 0]) + np.einsum("bii->b", coeffs.w_tilde_1(angles))
    sup = float(np.max(np.abs(f)))
    passed = sup <= tol
    return L1TildeResult(passed, sup, passed == l1_condition(spec, grid, tol).passed)


# ----------------------------------------------------------------------
# horizon value
# ----------------------------------------------------------------------

@dataclass
class HorizonCheck:
    residual: float
    field: np.ndarray
    xi: np.ndarray
    rho_limit: float
    rho_closed_form: float
    target: float
    matched: bool


def horizon_value_check(gm: GaugeMap, spec: MetricSpec | None = None, r_breve: float | None = None,
                        nxi: int = 64, tol: float = 1e-6, regularity_tol: float = 1e-10) -> HorizonCheck:
    """max_xi |e^{v_hat~(r_tilde_0, xi)} - r_breve / r_tilde_0|.

    The left side uses the one-sided limit of d r_tilde/dr along the exact map; the
    right side uses the HM radius matched to beta (or an override).
    """
    spec = spec or gm.spec
    bg = spec.background
    reg = regularity_residual(spec)
    if reg > regularity_tol:
        raise RegularityFail(f"v_hat(r+, xi) != u_hat(r+): residual {reg:.3g}")
    rb = bg.r_breve if r_breve is None else float(r_breve)
    rho0 = gm.rho_horizon_limit()
    xi = np.arange(nxi) * bg.beta / nxi
    rp = np.full(nxi, bg.r_plus)
    eu = 1.0 + spec.exp_u_hat.scalar(rp, skip_constant=True)
    ev = 1.0 + spec.exp_v_hat.angular_jet(rp, xi, skip_constant=True)[(0, 0)]
    field_ = eu * ev / rho0
    target = rb / gm.r_tilde_0
    res = float(np.max(np.abs(field_ - target)))
    return HorizonCheck(res, field_, xi, rho0, gm.rho_at_horizon(), target, res <= tol)
