"""Background parameters, metric specifications and their analytic jets.

The metric on R^2 x T^{n-2} is

    g = Eu^2 / A dr^2 + A Ev^2 dxi^2 + r^2 (delta + what),

with A(r) = r^2 Q(r), Q(r) = 1 + a r^{1-n} - r0^n r^{-n}, Eu = exp(u_hat),
Ev = exp(v_hat).  ``what`` is the torus perturbation, so the conventional
coefficients are w_m = what_m / 2.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import brentq

from .errors import BelowFloor, NoRoot, SingularAtHorizon
from .geometry import min_eigenvalue
from .series import AngularSeries, RadialSeries, TorusTensorSeries


@dataclass(frozen=True)
class BackgroundParams:
    n: int
    a: float
    r0: float
    torus_periods: tuple[float, ...]

    def __post_init__(self):
        periods = tuple(float(p) for p in self.torus_periods)
        object.__setattr__(self, "torus_periods", periods)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "r0", float(self.r0))
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if len(periods) != self.n - 2 or min(periods, default=1.0) <= 0:
            raise ValueError(f"need {self.n - 2} positive torus periods")
        find_r_plus(self)  # rejects backgrounds without a positive root

    @property
    def dim_torus(self) -> int:
        return self.n - 2

    @functools.cached_property
    def r_plus(self) -> float:
        return find_r_plus(self)

    @functools.cached_property
    def beta(self) -> float:
        return period_beta(self)

    @functools.cached_property
    def r_breve(self) -> float:
        return hm_reference(self)

    @property
    def angle_periods(self) -> tuple[float, ...]:
        return (self.beta,) + self.torus_periods

    @property
    def boundary_volume(self) -> float:
        return self.beta * float(np.prod(self.torus_periods))

    # radial background functions --------------------------------------
    def Q(self, r):
        r = np.asarray(r, dtype=float)
        return 1.0 + self.Q_minus_one(r)

    def Q_minus_one(self, r):
        r = np.asarray(r, dtype=float)
        n = self.n
        return self.a * r ** (1 - n) - self.r0**n * r ** (-n)

    def dQ(self, r):
        r = np.asarray(r, dtype=float)
        n = self.n
        return (1 - n) * self.a * r ** (-n) + n * self.r0**n * r ** (-n - 1)

    def A(self, r, k: int = 0):
        """k-th derivative of A(r) = r^2 + a r^{3-n} - r0^n r^{2-n}."""
        r = np.asarray(r, dtype=float)
        n = self.n
        out = np.zeros_like(r)
        for coef, p in ((1.0, 2), (self.a, 3 - n), (-self.r0**n, 2 - n)):
            fac = 1.0
            for i in range(k):
                fac *= p - i
            out = out + coef * fac * r ** (p - k)
        return out

    @functools.cached_property
    def _deflated(self) -> np.ndarray:
        n = self.n
        poly = np.zeros(n + 1)
        poly[0], poly[-2], poly[-1] = 1.0, self.a, -self.r0**n
        quot, _ = np.polydiv(poly, np.array([1.0, -self.r_plus]))
        return quot

    def q1(self, r):
        """Q(r) / (r - r_plus), evaluated without cancellation near the horizon."""
        r = np.asarray(r, dtype=float)
        return np.polyval(self._deflated, r) / r**self.n


def _P(bg: BackgroundParams, r):
    return r**bg.n + bg.a * r - bg.r0**bg.n


def find_r_plus(bg: BackgroundParams, samples: int = 4000) -> float:
    """Largest positive root of 1 + a r^{1-n} - r0^n r^{-n}.

    Scans the sign of r^n Q(r) on a geometric grid, brackets the rightmost
    sign change and refines it with Brent's method.
    """
    lo = 1e-6 * bg.r0
    hi = 1e3 * max(bg.r0, abs(bg.a) + 1.0)
    rs = np.geomspace(lo, hi, samples)
    vals = _P(bg, rs)
    change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if change.size == 0:
        raise NoRoot(f"no sign change of Q on ({lo:g}, {hi:g}]")
    i = change[-1]
    if vals[i + 1] == 0.0:
        return float(rs[i + 1])
    return float(brentq(lambda r: _P(bg, r), rs[i], rs[i + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps,
                        maxiter=500))


def period_beta(bg: BackgroundParams) -> float:
    rp = bg.r_plus
    return 4.0 * math.pi / (rp * (bg.n - 1 + bg.r0**bg.n / rp**bg.n))


def hm_reference(bg: BackgroundParams) -> float:
    """Radius of the Horowitz-Myers metric whose xi-period equals beta."""
    return 4.0 * math.pi / (bg.n * bg.beta)


# ----------------------------------------------------------------------
# metric specifications
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MetricSpec:
    background: BackgroundParams
    exp_u_hat: RadialSeries
    exp_v_hat: RadialSeries
    w_hat: RadialSeries = field(default_factory=RadialSeries)

    def __post_init__(self):
        bg = self.background
        for m, c in self.exp_u_hat.terms.items():
            if not isinstance(c, float):
                raise TypeError("exp_u_hat coefficients must be real numbers")
        for m, c in self.exp_v_hat.terms.items():
            if not isinstance(c, AngularSeries):
                raise TypeError("exp_v_hat coefficients must be AngularSeries")
            if not np.isclose(c.period, bg.beta, rtol=1e-12):
                raise ValueError(f"exp_v_hat order {m}: period {c.period} != beta {bg.beta}")
        for m, c in self.w_hat.terms.items():
            if not isinstance(c, TorusTensorSeries):
                raise TypeError("w_hat coefficients must be TorusTensorSeries")
            if c.dim != bg.dim_torus or not np.allclose(c.periods, bg.angle_periods, rtol=1e-12):
                raise ValueError(f"w_hat order {m}: dimension or periods do not match the background")

    @classmethod
    def from_coefficients(cls, background: BackgroundParams,
                          u: Mapping[int, float] | None = None,
                          v: Mapping[int, object] | None = None,
                          w: Mapping[int, Mapping] | None = None) -> "MetricSpec":
        """Build a spec from plain coefficient maps.

        ``u``: {order: value} for exp(u_hat) - 1.  ``v``: {order: value or
        {mode: (cos, sin)}} for exp(v_hat) - 1.  ``w``: {order: {(i, j): {multimode:
        (cos, sin)}}} for what itself.  Constant terms default to 1; an explicit
        order-0 entry replaces the default.
        """
        bg = background
        u_terms: dict = {0: 1.0}
        for m, c in (u or {}).items():
            m = int(m)
            u_terms[m] = float(c) if m == 0 else u_terms.get(m, 0.0) + float(c)
        v_terms: dict = {0: AngularSeries.constant(bg.beta, 1.0)}
        for m, c in (v or {}).items():
            ser = c if isinstance(c, AngularSeries) else (
                AngularSeries.constant(bg.beta, float(c)) if np.isscalar(c) else AngularSeries(bg.beta, c))
            m = int(m)
            v_terms[m] = v_terms[m] + ser if (m in v_terms and m != 0) else ser
        w_terms: dict = {}
        for m, c in (w or {}).items():
            ser = c if isinstance(c, TorusTensorSeries) else TorusTensorSeries(bg.dim_torus, bg.angle_periods, c)
            w_terms[int(m)] = w_terms[int(m)] + ser if int(m) in w_terms else ser
        return cls(bg, RadialSeries(u_terms), RadialSeries(v_terms), RadialSeries(w_terms))

    @property
    def n(self) -> int:
        return self.background.n

    # conventional coefficients -----------------------------------------
    def u_coeff(self, m: int) -> float:
        return float(self.exp_u_hat.coefficient(m, 0.0)) if m else 0.0

    def v_coeff(self, m: int) -> AngularSeries:
        c = self.exp_v_hat.coefficient(m, None)
        zero = AngularSeries(self.background.beta, {})
        if m == 0 or c is None:
            return zero
        return c

    def what_coeff(self, m: int) -> TorusTensorSeries:
        bg = self.background
        return self.w_hat.coefficient(m, None) or TorusTensorSeries.zero(bg.dim_torus, bg.angle_periods)

    def w_coeff(self, m: int) -> TorusTensorSeries:
        """Conventional w_m, i.e. half the order-m coefficient of what."""
        return self.what_coeff(m).scaled(0.5)

    def replace(self, **changes) -> "MetricSpec":
        import dataclasses
        return dataclasses.replace(self, **changes)


def points(spec: MetricSpec, r, angles=None):
    """Normalise (r, angles) to arrays of shape (N,) and (N, n-1)."""
    r = np.atleast_1d(np.asarray(r, dtype=float)).ravel()
    k = spec.n - 1
    if angles is None:
        angles = np.zeros((r.size, k))
    angles = np.asarray(angles, dtype=float)
    if angles.ndim == 1:
        angles = np.broadcast_to(angles, (r.size, k))
    angles = angles.reshape(-1, k)
    if angles.shape[0] != r.size:
        if r.size == 1:
            r = np.full(angles.shape[0], r[0])
        else:
            raise ValueError("r and angles have incompatible lengths")
    return r, np.ascontiguousarray(angles)


@dataclass
class Profiles:
    """Exact values and derivatives of the profile functions at a batch of points."""

    r: np.ndarray
    Eu: np.ndarray
    Eu_r: np.ndarray
    Eu_rr: np.ndarray
    Eu_tail: np.ndarray          # Eu - 1
    Ev: dict                     # (k_r, k_xi) -> array
    Ev_tail: np.ndarray          # Ev - 1
    M: dict                      # tensor jet of delta + what (see RadialSeries.tensor_jet)


def profiles(spec: MetricSpec, r, angles=None) -> Profiles:
    r, angles = points(spec, r, angles)
    d = spec.n - 2
    Eu_tail = spec.exp_u_hat.scalar(r, 0, skip_constant=True)
    Ev = spec.exp_v_hat.angular_jet(r, angles[:, 0])
    Ev_tail = spec.exp_v_hat.angular_jet(r, angles[:, 0], skip_constant=True)[(0, 0)]
    M = spec.w_hat.tensor_jet(r, angles, d)
    M["val"] = M["val"] + np.eye(d)
    return Profiles(r=r, Eu=1.0 + Eu_tail, Eu_r=spec.exp_u_hat.scalar(r, 1), Eu_rr=spec.exp_u_hat.scalar(r, 2),
                    Eu_tail=Eu_tail, Ev=Ev, Ev_tail=Ev_tail, M=M)


def metric_jet(spec: MetricSpec, r, angles=None):
    """Analytic 2-jet (g, dg, ddg) of the full metric in coordinates (r, xi, phi)."""
    r, angles = points(spec, r, angles)
    bg = spec.background
    if np.any(r <= bg.r_plus):
        raise SingularAtHorizon("metric jet requested at or inside r_plus")
    n, N = spec.n, r.size
    P = profiles(spec, r, angles)
    A0, A1, A2 = bg.A(r), bg.A(r, 1), bg.A(r, 2)
    g = np.zeros((N, n, n))
    dg = np.zeros((N, n, n, n))
    ddg = np.zeros((N, n, n, n, n))

    # g_rr = Eu^2 / A
    grr = P.Eu**2 / A0
    L1 = 2 * P.Eu_r / P.Eu - A1 / A0
    L2 = 2 * (P.Eu_rr / P.Eu - (P.Eu_r / P.Eu) ** 2) - (A2 / A0 - (A1 / A0) ** 2)
    g[:, 0, 0] = grr
    dg[:, 0, 0, 0] = grr * L1
    ddg[:, 0, 0, 0, 0] = grr * (L2 + L1**2)

    # g_xixi = A Ev^2, log-derivatives in (r, xi)
    Ev = P.Ev
    e = Ev[(0, 0)]
    gxx = A0 * e**2
    Lr = A1 / A0 + 2 * Ev[(1, 0)] / e
    Lx = 2 * Ev[(0, 1)] / e
    Lrr = A2 / A0 - (A1 / A0) ** 2 + 2 * (Ev[(2, 0)] / e - (Ev[(1, 0)] / e) ** 2)
    Lrx = 2 * (Ev[(1, 1)] / e - Ev[(1, 0)] * Ev[(0, 1)] / e**2)
    Lxx = 2 * (Ev[(0, 2)] / e - (Ev[(0, 1)] / e) ** 2)
    g[:, 1, 1] = gxx
    dg[:, 0, 1, 1] = gxx * Lr
    dg[:, 1, 1, 1] = gxx * Lx
    ddg[:, 0, 0, 1, 1] = gxx * (Lrr + Lr**2)
    ddg[:, 0, 1, 1, 1] = ddg[:, 1, 0, 1, 1] = gxx * (Lrx + Lr * Lx)
    ddg[:, 1, 1, 1, 1] = gxx * (Lxx + Lx**2)

    # torus block r^2 M
    M = P.M
    rr = r[:, None, None]
    g[:, 2:, 2:] = rr**2 * M["val"]
    dg[:, 0, 2:, 2:] = 2 * rr * M["val"] + rr**2 * M["r"]
    dg[:, 1:, 2:, 2:] = rr[:, None] ** 2 * M["ang"]
    ddg[:, 0, 0, 2:, 2:] = 2 * M["val"] + 4 * rr * M["r"] + rr**2 * M["rr"]
    mixed = 2 * rr[:, None] * M["ang"] + rr[:, None] ** 2 * M["r_ang"]
    ddg[:, 0, 1:, 2:, 2:] = mixed
    ddg[:, 1:, 0, 2:, 2:] = mixed
    ddg[:, 1:, 1:, 2:, 2:] = rr[:, None, None] ** 2 * M["ang_ang"]
    return g, dg, ddg


def metric_values(spec: MetricSpec, r, angles=None) -> np.ndarray:
    r, angles = points(spec, r, angles)
    bg = spec.background
    n = spec.n
    P = profiles(spec, r, angles)
    A0 = bg.A(r)
    g = np.zeros((r.size, n, n))
    with np.errstate(divide="ignore"):
        g[:, 0, 0] = P.Eu**2 / A0
    g[:, 1, 1] = A0 * P.Ev[(0, 0)] ** 2
    g[:, 2:, 2:] = r[:, None, None] ** 2 * P.M["val"]
    return g


def eval_metric(spec: MetricSpec, point) -> np.ndarray:
    """Components of g at a single point (r, xi, phi^3..phi^n)."""
    point = np.asarray(point, dtype=float)
    r = point[0]
    rp = spec.background.r_plus
    if r < rp:
        raise SingularAtHorizon(f"r = {r} lies inside r_plus = {rp}")
    if r == rp:
        raise SingularAtHorizon("g_rr is singular at r = r_plus")
    return metric_values(spec, r, point[1:])[0]


# ----------------------------------------------------------------------
# decay fits
# ----------------------------------------------------------------------

@dataclass
class DecayFit:
    order: float
    residual: float
    derivative_orders: dict = field(default_factory=dict)


def _fit_order(rs, vals, floor):
    mags = np.abs(vals)
    if not np.all(np.isfinite(mags)) or np.any(mags <= floor):
        raise BelowFloor("order >= cutoff: |f| underflows the sample floor")
    X = np.column_stack([np.ones_like(rs), np.log(rs)])
    coef, *_ = np.linalg.lstsq(X, np.log(mags), rcond=None)
    resid = np.log(mags) - X @ coef
    return -coef[1], float(np.sqrt(np.mean(resid**2)))


def decay_order(f: Callable, k_max: int = 2, r_range=(1e2, 1e4), samples: int = 25,
                floor: float = 1e-280, rel_step: float = 1e-3) -> DecayFit:
    """Fit the power-law decay order of f and of its first k_max r-derivatives."""
    r1, r2 = r_range
    if r2 / r1 < 1e2 - 1e-9:
        raise ValueError("sample range must span at least two decades")
    rs = np.geomspace(r1, r2, samples)

    def call(x):
        return np.array([float(f(xi)) for xi in x]) if not _vectorizes(f) else np.asarray(f(x), dtype=float)

    vals = call(rs)
    order, residual = _fit_order(rs, vals, floor)
    derivs = {}
    h = rel_step * rs
    fp, fm = call(rs + h), call(rs - h)
    for k in range(1, k_max + 1):
        if k == 1:
            dv = (fp - fm) / (2 * h)
        elif k == 2:
            dv = (fp - 2 * vals + fm) / h**2
        else:
            raise ValueError("derivative checks are implemented for k <= 2")
        try:
            derivs[k] = _fit_order(rs, dv, floor)[0]
        except BelowFloor:
            derivs[k] = None
    return DecayFit(order=float(order), residual=residual, derivative_orders=derivs)


def _vectorizes(f) -> bool:
    try:
        out = np.asarray(f(np.array([1e2, 2e2])), dtype=float)
    except Exception:
        return False
    return out.shape == (2,)


# ----------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Sampling grid: log-spaced r nodes, uniform nodes on each angle circle.

    ``phi_budget`` caps the total number of phi nodes so high dimensions stay
    tractable; each circle gets min(nphi, floor(budget^(1/(n-2)))) nodes.
    """

    nr: int = 64
    nxi: int = 32
    nphi: int = 16
    r_min_factor: float = 1.0 + 1e-6
    r_max_factor: float = 1e3
    phi_budget: int = 4096

    def __post_init__(self):
        if min(self.nr, self.nxi, self.nphi) < 1:
            raise ValueError("node counts must be positive")

    def phi_nodes(self, dim: int) -> int:
        if dim == 0:
            return 1
        return max(2, min(self.nphi, int(math.floor(self.phi_budget ** (1.0 / dim) + 1e-9))))

    def r_nodes(self, bg: BackgroundParams) -> np.ndarray:
        rp = bg.r_plus
        return np.geomspace(rp * self.r_min_factor, rp * self.r_max_factor, self.nr)

    def boundary(self, bg: BackgroundParams, nxi: int | None = None, nphi: int | None = None):
        """Uniform nodes on T^{n-1} with equal trapezoid weights summing to the volume."""
        nxi = nxi or self.nxi
        npc = self.phi_nodes(bg.dim_torus) if nphi is None else nphi
        axes = [np.arange(nxi) * bg.beta / nxi] + [np.arange(npc) * lam / npc for lam in bg.torus_periods]
        mesh = np.meshgrid(*axes, indexing="ij")
        ang = np.stack([m.ravel() for m in mesh], axis=-1)
        w = np.full(ang.shape[0], bg.boundary_volume / ang.shape[0])
        return ang, w

    def to_dict(self) -> dict:
        return {"nr": self.nr, "nxi": self.nxi, "nphi": self.nphi, "r_min_factor": self.r_min_factor,
                "r_max_factor": self.r_max_factor, "phi_budget": self.phi_budget}


@dataclass
class Check:
    passed: bool
    residual: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"passed": bool(self.passed), "residual": float(self.residual), "detail": self.detail}


@dataclass
class Diagnostics:
    checks: dict

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": {k: c.to_dict() for k, c in self.checks.items()}}


def regularity_residual(spec: MetricSpec, nxi: int = 256) -> float:
    """max over xi of |v_hat(r_plus, xi) - u_hat(r_plus)|."""
    bg = spec.background
    xi = np.arange(nxi) * bg.beta / nxi
    rp = np.full(nxi, bg.r_plus)
    P = profiles(spec, rp, np.column_stack([xi] + [np.zeros(nxi)] * bg.dim_torus))
    return float(np.max(np.abs(np.log(P.Ev[(0, 0)]) - np.log(P.Eu))))


def validate_spec(spec: MetricSpec, grid: Grid | None = None, regularity_tol: float = 1e-10) -> Diagnostics:
    grid = grid or Grid()
    bg = spec.background
    n = spec.n
    checks = {}
    rs = grid.r_nodes(bg)

    Eu = 1.0 + spec.exp_u_hat.scalar(rs, skip_constant=True)
    i = int(np.argmin(Eu))
    checks["positivity_exp_u_hat"] = Check(bool(Eu[i] > 0), float(Eu[i]), f"min at r={rs[i]:.6g}")

    ang, _ = grid.boundary(bg)
    xi_nodes = np.unique(ang[:, 0])
    R, X = np.meshgrid(rs, xi_nodes, indexing="ij")
    Ev = 1.0 + spec.exp_v_hat.angular_jet(R.ravel(), X.ravel(), skip_constant=True)[(0, 0)]
    j = int(np.argmin(Ev))
    checks["positivity_exp_v_hat"] = Check(bool(Ev[j] > 0), float(Ev[j]),
                                           f"min at r={R.ravel()[j]:.6g}, xi={X.ravel()[j]:.6g}")

    if spec.w_hat.terms:
        # angular coefficients are r-independent: evaluate them once on the grid
        coeffs = [(m, c(ang)) for m, c in spec.w_hat.terms.items()]
        worst, where = np.inf, None
        for r in rs:
            M = np.eye(n - 2) + sum(r ** (-float(m)) * V for m, V in coeffs)
            ev = min_eigenvalue(M)
            k = int(np.argmin(ev))
            if ev[k] < worst:
                worst, where = float(ev[k]), (float(r),) + tuple(float(x) for x in ang[k])
        checks["positivity_gamma"] = Check(worst > 0, worst, f"min eigenvalue of gamma/r^2 at {where}")
    else:
        checks["positivity_gamma"] = Check(True, 1.0, "what = 0")

    reg = regularity_residual(spec)
    checks["regularity"] = Check(reg <= regularity_tol, reg, "max_xi |v_hat(r+, xi) - u_hat(r+)|")

    bad = []
    if spec.exp_u_hat.coefficient(0) != 1.0:
        bad.append("exp_u_hat constant term != 1")
    v0 = spec.exp_v_hat.coefficient(0, None)
    if v0 is None or v0.coefficients != {0: (1.0, 0.0)}:
        bad.append("exp_v_hat constant term != 1")
    if 0 in spec.w_hat.terms:
        bad.append("what has a constant term")
    for name, ser in (("exp_u_hat", spec.exp_u_hat), ("exp_v_hat", spec.exp_v_hat), ("w_hat", spec.w_hat)):
        low = [m for m in ser.orders if 1 <= m <= n - 2]
        if low:
            bad.append(f"{name} has terms at orders {low} < n-1")
    checks["leading_order"] = Check(not bad, float(len(bad)), "; ".join(bad) or "asymptotics start at order n-1")
    return Diagnostics(checks)
