"""Energy inequality pipeline: bulk integrand, flux limit, integrated identity, verdict."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .asymptotics import (_GL_W, _GL_X, boundary_grid, collar_scale, energy_difference, energy_hm, l1_condition,
                          total_energy)
from .curvature import torus_scalar_integral, warped
from .errors import AHMError, Divergent, QuadratureFail
from .gauge import GaugeMap, GaugePoints, horizon_value_check, radial_gauge, transformed_coeffs
from .metric import Grid, MetricSpec, regularity_residual, validate_spec


def _tilde_A(gp: GaugePoints, r_tilde_0: float, n: int) -> np.ndarray:
    """r~^2 (1 - (r~0/r~)^n), factored through r~ - r~0 so it keeps digits at the horizon."""
    rt = gp.r_tilde
    s = sum(rt**k * r_tilde_0 ** (n - 1 - k) for k in range(n))
    return gp.offset * rt ** (2 - n) * s


@dataclass
class BulkTerms:
    """Integrand pieces at (r, angle) pairs, per unit r~ (multiply by rho for dr)."""

    r: np.ndarray
    r_tilde: np.ndarray
    rho: np.ndarray
    A1: np.ndarray       # e^{v~} r~^{n-1} (R + n(n-1))
    A2: np.ndarray       # radial quadratic
    A3: np.ndarray       # xi quadratic
    xi_div: np.ndarray   # 2 e^{2u~} r~^{n-1} d_xi(e^{-v~} W^xi)
    r_gamma: np.ndarray  # -e^{v~} r~^{n-1} R(gamma)
    flux: np.ndarray | None = None

    @property
    def A(self) -> np.ndarray:
        return self.A1 + self.A2 + self.A3

    @property
    def rhs(self) -> np.ndarray:
        return self.xi_div + self.r_gamma + self.A


def bulk_terms(spec: MetricSpec, gm: GaugeMap, r=None, angles=None, dr=None, with_flux: bool = False,
               gp: GaugePoints | None = None) -> BulkTerms:
    """Integrand pieces at paired (r, angle) rows; ``gp`` may carry precomputed gauge data."""
    n = spec.n
    gp = gp if gp is not None else gm.at(r, dr=dr)
    w = warped(spec, gp.r, angles)
    rho = gp.rho
    rt = gp.r_tilde
    At = _tilde_A(gp, gm.r_tilde_0, n)
    log_E = np.log(w.Eu) + np.log(w.Ev) - gp.log_rho
    E = np.exp(log_E)
    pw = rt ** (n - 1)
    c_n = (n - 1) / (2.0 * (n - 2))
    W_t = w.W / rho - (n - 2) * np.expm1(gp.lam) / (gp.r * rho)
    A1 = E * pw * w.deficit
    A2 = 2.0 * At * E * pw * (c_n * W_t**2 + 0.125 * w.Wr_norm2 / rho**2)
    A3 = 2.0 / At / E * pw * (c_n * w.Wxi**2 + 0.125 * w.Wxi_norm2)
    xi_div = 2.0 / At * pw * (rho / w.Eu) * w.div_xi
    r_gamma = -E * pw * w.R_gamma
    out = BulkTerms(gp.r, rt, rho, A1, A2, A3, xi_div, r_gamma)
    if with_flux:
        d_vt = (w.dv + w.du - gm.d_log_rho(gp.r, gp)) / rho
        out.flux = -2.0 * At * E * pw * (d_vt + W_t)
    return out


def nonneg_integrand_A(spec: MetricSpec, gm: GaugeMap, point) -> tuple[float, tuple[float, float, float]]:
    """A and its three addends at a single point (r, xi, phi...) given in the original radius."""
    point = np.asarray(point, dtype=float)
    b = bulk_terms(spec, gm, point[:1], point[None, 1:])
    return float(b.A[0]), (float(b.A1[0]), float(b.A2[0]), float(b.A3[0]))


# ----------------------------------------------------------------------
# flux limit
# ----------------------------------------------------------------------

@dataclass
class FluxLimit:
    value: float
    predicted: float
    growth: float


def flux_values(spec: MetricSpec, gm: GaugeMap, angle, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    ang = np.broadcast_to(np.asarray(angle, dtype=float), (r.size, spec.n - 1))
    return bulk_terms(spec, gm, r, ang, with_flux=True).flux


def flux_limit(spec: MetricSpec, gm: GaugeMap, angle, samples: int = 40, growth_tol: float = 1e-4,
               coeffs=None) -> FluxLimit:
    """Extrapolate the boundary flux to r~ = infinity at one boundary angle.

    A linear-growth column is included in the fit; a significant growth
    coefficient means the L1 condition fails and Divergent is raised.
    """
    R = collar_scale(spec)
    r = np.geomspace(10 * R, 1e3 * R, samples)
    F = flux_values(spec, gm, angle, r)
    X = np.column_stack([r, np.ones_like(r), 1 / r, 1 / r**2, 1 / r**3, 1 / r**4])
    coef, *_ = np.linalg.lstsq(X, F, rcond=None)
    growth, L = float(coef[0]), float(coef[1])
    if abs(growth) * r[-1] > growth_tol * (1.0 + abs(L)):
        raise Divergent(f"flux grows like {growth:.3g} r; the L1 condition fails")
    coeffs = coeffs or transformed_coeffs(gm, spec, check=False)
    ang = np.atleast_2d(np.asarray(angle, dtype=float))
    n = spec.n
    pred = 2 * n * (coeffs.v_tilde_n(ang[:, 0])[0] + np.trace(coeffs.w_tilde_n(ang)[0]))
    return FluxLimit(L, float(pred), growth)


def predicted_flux(gm: GaugeMap, angles, coeffs=None) -> np.ndarray:
    coeffs = coeffs or transformed_coeffs(gm, check=False)
    angles = np.atleast_2d(angles)
    return 2 * gm.n * (coeffs.v_tilde_n(angles[:, 0]) + np.einsum("bii->b", coeffs.w_tilde_n(angles)))


# ----------------------------------------------------------------------
# integrated identity
# ----------------------------------------------------------------------

def _gl_nodes(a: float, b: float, panels: int):
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_X).ravel()
    w = (half[:, None] * _GL_W).ravel()
    return x, w


@dataclass
class IdentityResult:
    residual: float
    lhs: np.ndarray
    rhs: np.ndarray
    boundary_term: float
    A_integral: np.ndarray        # int A dr~ per boundary point
    r_gamma_integral: np.ndarray  # int -e^{v~} r~^{n-1} R(gamma) dr~ per boundary point
    xi_integral: np.ndarray       # int of the xi-divergence term per boundary point
    xi_cancellation: float        # worst xi-average of the divergence term over the r nodes
    quadrature_error: float
    angles: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)


def _radial_quadrature(spec, gm, angles, panels):
    """Integrate the right-hand side in r over (r+, inf) at each boundary angle.

    Near the horizon the variable is t = sqrt(r - r+), beyond r_s = split * r+ it is
    x = r_s / r in (0, 1]; both integrands are analytic on their closed intervals.
    """
    B = angles.shape[0]
    r_s = gm.integral.r_split
    t_s = math.sqrt(r_s - spec.background.r_plus)
    t, wt = _gl_nodes(0.0, t_s, panels)
    x, wx = _gl_nodes(0.0, 1.0, panels)
    dr = np.concatenate([t**2, r_s / x - spec.background.r_plus])
    jac = np.concatenate([2 * t * wt, r_s / x**2 * wx])
    K = dr.size
    b = bulk_terms(spec, gm, angles=np.tile(angles, (K, 1)), gp=gm.at(None, dr=dr).repeat(B))
    scale = (jac[:, None] * b.rho.reshape(K, B))

    def integ(v):
        return np.sum(v.reshape(K, B) * scale, axis=0)

    return {"A": integ(b.A), "r_gamma": integ(b.r_gamma), "xi": integ(b.xi_div),
            "xi_field": b.xi_div.reshape(K, B), "xi_scale": np.abs(b.xi_div).reshape(K, B)}


def integrated_identity(spec: MetricSpec, gm: GaugeMap, grid: Grid | None = None, panels: int = 6,
                        quad_tol: float = 1e-6, coeffs=None) -> IdentityResult:
    """Both sides of the integrated identity at each boundary point; returns the sup residual."""
    grid = grid or Grid(nxi=16, nphi=6)
    bg = spec.background
    n = spec.n
    angles, weights = grid.boundary(bg)
    coarse = _radial_quadrature(spec, gm, angles, panels)
    fine = _radial_quadrature(spec, gm, angles, 2 * panels)
    parts = ("A", "r_gamma", "xi")
    err = max(float(np.max(np.abs(fine[k] - coarse[k]))) for k in parts)
    yard = max(1.0, max(float(np.max(np.abs(fine[k]))) for k in parts))
    if err > quad_tol * yard:
        raise QuadratureFail(f"radial quadrature of the identity: error estimate {err:.3g}")

    rt0 = gm.r_tilde_0
    boundary = n * rt0**n * (1.0 - bg.r_breve / rt0)
    rhs = boundary + fine["A"] + fine["r_gamma"] + fine["xi"]
    coeffs = coeffs or transformed_coeffs(gm, spec, check=False)
    lhs = _flux_limits(spec, gm, angles, coeffs)

    # xi-average of the divergence term at every radial node and phi point
    nxi = grid.nxi
    xf = fine["xi_field"].reshape(fine["xi_field"].shape[0], nxi, -1)
    xs = fine["xi_scale"].reshape(xf.shape)
    canc = float(np.max(np.abs(xf.mean(axis=1)) / (1.0 + xs.max(axis=1))))
    return IdentityResult(float(np.max(np.abs(lhs - rhs))), lhs, rhs, boundary, fine["A"], fine["r_gamma"],
                          fine["xi"], canc, err, angles, weights)


def _flux_limits(spec, gm, angles, coeffs, samples: int = 40, growth_tol: float = 1e-4) -> np.ndarray:
    """Vectorised flux_limit over boundary angles."""
    R = collar_scale(spec)
    r = np.geomspace(10 * R, 1e3 * R, samples)
    B = angles.shape[0]
    F = bulk_terms(spec, gm, angles=np.tile(angles, (r.size, 1)), with_flux=True, gp=gm.at(r).repeat(B)).flux
    F = F.reshape(r.size, B)
    X = np.column_stack([r, np.ones_like(r), 1 / r, 1 / r**2, 1 / r**3, 1 / r**4])
    coef, *_ = np.linalg.lstsq(X, F, rcond=None)
    growth, L = coef[0], coef[1]
    bad = np.abs(growth) * r[-1] > growth_tol * (1.0 + np.abs(L))
    if np.any(bad):
        raise Divergent(f"flux grows like {growth[bad][0]:.3g} r; the L1 condition fails")
    return L


def horizon_flux_ratio(spec: MetricSpec, gm: GaugeMap, angle, scales=(1e-4, 1e-5, 1e-6), h: float = 1e-3):
    """|F| / (r~ - r~0) at a few small offsets; a bounded ratio means F = O(r~ - r~0).

    d/dr~ of v_hat~ is taken by differencing in ln(r - r+), which avoids the
    cancelling closed form of d ln rho near the horizon.
    """
    n = spec.n
    rp = spec.background.r_plus
    ang = np.atleast_2d(np.asarray(angle, dtype=float))
    out = []
    for sc in scales:
        dr0 = sc * rp
        sig = math.log(dr0) + h * np.array([-1.0, 1.0])

        def log_E(dr):
            gp = gm.at(None, dr=dr)
            w = warped(spec, gp.r, np.repeat(ang, dr.size, axis=0))
            return np.log(w.Eu) + np.log(w.Ev) - gp.log_rho

        le = log_E(np.exp(sig))
        gp = gm.at(None, dr=np.array([dr0]))
        w = warped(spec, gp.r, ang)
        d_vt = (le[1] - le[0]) / (2 * h) / dr0 / gp.rho[0]
        W_t = w.W[0] / gp.rho[0] - (n - 2) * np.expm1(gp.lam[0]) / (gp.r[0] * gp.rho[0])
        At = _tilde_A(gp, gm.r_tilde_0, n)[0]
        E = w.Eu[0] * w.Ev[0] / gp.rho[0]
        F = -2 * At * E * gp.r_tilde[0] ** (n - 1) * (d_vt + W_t)
        out.append(abs(F) / gp.offset[0])
    return np.array(out)


# ----------------------------------------------------------------------
# inequality pieces
# ----------------------------------------------------------------------

def elementary_inequality(n: int, s) -> tuple:
    """n - 1 + s^n - n s, directly and as (1 - s)(n - 1 - s - ... - s^{n-1})."""
    s = np.asarray(s, dtype=float)
    direct = n - 1 + s**n - n * s
    factored = (1 - s) * (n - 1 - sum(s**k for k in range(1, n)))
    if direct.ndim == 0:
        return float(direct), float(factored)
    return direct, factored


class Verdict(str, enum.Enum):
    STRICT = "strict"
    EQUALITY = "equality"
    HYPOTHESIS_FAILED = "hypothesis_failed"


@dataclass(frozen=True)
class Tolerances:
    identity: float = 1e-4
    curvature_sign: float = 1e-9
    l1: float = 1e-12
    regularity: float = 1e-10
    beta_match: float = 1e-12
    torus_integral: float = 1e-10
    equality: float = 1e-6
    rigidity: float = 1e-8
    lower_bound: float = 1e-4


@dataclass
class EnergyReport:
    E_g: float
    E_hm: float
    difference: float
    r_tilde_0: float | None
    r_breve_0: float
    identity_residual: float | None
    A_integral: float | None
    hypothesis_flags: dict
    equality_verdict: Verdict
    rigidity_residual: float | None
    lower_bound: float | None = None
    bound_gap: float | None = None
    details: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["equality_verdict"] = self.equality_verdict.value
        return d

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, enum.Enum):
        return x.value
    return x


def curvature_sign_gate(spec: MetricSpec, grid: Grid, tol: float):
    """Grid minimum of R + n(n-1) with the relative tolerance -tol (1 + |R|)."""
    r = grid.r_nodes(spec.background)
    angles, _ = grid.boundary(spec.background)
    B = angles.shape[0]
    w = warped(spec, np.repeat(r, B), np.tile(angles, (r.size, 1)))
    deficit = w.deficit
    R = deficit - spec.n * (spec.n - 1)
    margin = deficit + tol * (1.0 + np.abs(R))
    i = int(np.argmin(margin))
    point = [float(r[i // B])] + [float(a) for a in angles[i % B]]
    return bool(margin[i] >= 0), float(deficit[i]), point


def torus_integral_gate(spec: MetricSpec, grid: Grid, tol: float, nphi: int = 16):
    """max over (r, xi) nodes of the phi-integral of R(gamma); must be <= tol."""
    if spec.n == 3:
        return True, 0.0
    bg = spec.background
    worst = -math.inf
    xi = np.arange(grid.nxi) * bg.beta / grid.nxi
    for r in grid.r_nodes(bg):
        for x in xi:
            worst = max(worst, torus_scalar_integral(spec, r, x, nphi=nphi) * r**2)
    return bool(worst <= tol), float(worst)


def rigidity_residual(spec: MetricSpec, gm: GaugeMap, grid: Grid | None = None, h: float = 0.05) -> float:
    """Largest deviation from the equality case on a grid (0 for g_HM)."""
    grid = grid or Grid(nr=24, nxi=8, nphi=4)
    bg = spec.background
    n = spec.n
    r = np.geomspace(bg.r_plus * (1 + 1e-2), bg.r_plus * grid.r_max_factor, grid.nr)
    angles, _ = grid.boundary(bg)
    B = angles.shape[0]
    rr, aa = np.repeat(r, B), np.tile(angles, (r.size, 1))
    gp = gm.at(r).repeat(B)
    w = warped(spec, rr, aa)
    rho = gp.rho
    W_t = w.W / rho - (n - 2) * np.expm1(gp.lam) / (rr * rho)
    P = spec.w_hat.tensor_jet(rr, aa, n - 2, values_only=True)["val"]
    gamma_dev = np.exp(-2 * gp.log_ratio)[:, None, None] * (np.eye(n - 2) + P) - np.eye(n - 2)
    rt, rt0 = gp.r_tilde, gm.r_tilde_0
    rb = bg.r_breve
    At = _tilde_A(gp, rt0, n)
    A_hm = rt**2 * (1 - (rb / rt) ** n)
    E = w.Eu * w.Ev / rho
    terms = [np.abs(w.deficit), np.abs(W_t), np.abs(w.Wxi), np.sqrt(np.abs(w.Wr_norm2)) / rho,
             np.sqrt(np.abs(w.Wxi_norm2)), np.max(np.abs(gamma_dev), axis=(1, 2)),
             np.abs(A_hm / At - 1), np.abs(At * E**2 / A_hm - 1)]

    # equality ODE for e^{v_hat~}, derivatives in r~ by differencing the exact map
    def E_at(dr):
        g = gm.at(None, dr=dr).repeat(B)
        ww = warped(spec, g.r, aa)
        return g.offset, ww.Eu * ww.Ev / g.rho

    # steps taken in ln(r - r+) so the stencil never crosses the horizon
    dr0 = r - bg.r_plus
    om, Em = E_at(dr0 * math.exp(-h))
    op, Ep = E_at(dr0 * math.exp(h))
    hm_, hp_ = gp.offset - om, op - gp.offset
    dE = (Ep * hm_**2 - Em * hp_**2 + E * (hp_**2 - hm_**2)) / (hm_ * hp_ * (hm_ + hp_))
    d2E = 2 * (Ep * hm_ + Em * hp_ - E * (hm_ + hp_)) / (hm_ * hp_ * (hm_ + hp_))
    coef = ((n + 1) * rt**n + (0.5 * n - 1) * rt0**n) / (rt * (rt**n - rt0**n))
    terms.append(np.abs(d2E + coef * dE**2))
    return float(max(np.max(t) for t in terms))


def verify_theorem(spec: MetricSpec, tolerances: Tolerances | None = None, grid: Grid | None = None,
                   identity_grid: Grid | None = None, r_breve: float | None = None) -> EnergyReport:
    tol = tolerances or Tolerances()
    grid = grid or Grid(nr=48, nxi=16, nphi=6)
    identity_grid = identity_grid or Grid(nxi=16, nphi=6)
    bg = spec.background
    n = spec.n
    flags: dict = {}
    details: dict = {}

    diag = validate_spec(spec, grid, tol.regularity)
    reg = regularity_residual(spec)
    flags["validation"] = diag.ok
    flags["regularity"] = bool(reg <= tol.regularity)
    details["validation"] = diag.to_dict()
    details["regularity_residual"] = reg

    rb = bg.r_breve if r_breve is None else float(r_breve)
    flags["beta_match"] = bool(abs(rb - bg.r_breve) <= tol.beta_match * max(1.0, bg.r_breve))

    sign_ok, sign_min, sign_point = curvature_sign_gate(spec, grid, tol.curvature_sign)
    flags["scalar_curvature_sign"] = sign_ok
    details["scalar_curvature_min_deficit"] = sign_min
    details["scalar_curvature_min_point"] = sign_point

    l1 = l1_condition(spec, grid, tol.l1)
    flags["l1"] = l1.passed
    details["l1_sup"] = l1.sup

    torus_ok, torus_max = torus_integral_gate(spec, grid, tol.torus_integral)
    flags["torus_integral"] = torus_ok
    details["torus_integral_max"] = torus_max

    E_g = total_energy(spec, grid)
    E_hm = -rb**n * bg.boundary_volume if r_breve is not None else energy_hm(spec)
    difference = E_g - E_hm if r_breve is not None else energy_difference(spec, grid)

    gates = ("validation", "regularity", "beta_match", "scalar_curvature_sign", "l1", "torus_integral")
    hypotheses_hold = all(flags[g] for g in gates)
    gm = rt0 = ident = A_int = lower = gap = None
    try:
        gm = radial_gauge(spec)
        rt0 = gm.r_tilde_0
        details["gauge"] = gm.to_dict()
        if flags["regularity"]:
            details["horizon_residual"] = horizon_value_check(gm, spec, r_breve=rb).residual
    except AHMError as exc:
        details["gauge_error"] = f"{type(exc).__name__}: {exc}"

    if gm is not None and flags["l1"] and flags["regularity"] and flags["beta_match"]:
        try:
            res = integrated_identity(spec, gm, identity_grid)
            ident = res.residual
            A_int = float(np.dot(res.A_integral, res.weights))
            s = rb / rt0
            lower = rt0**n * elementary_inequality(n, s)[0] * bg.boundary_volume + A_int
            gap = difference - lower
            details["identity"] = {"boundary_term": res.boundary_term, "xi_cancellation": res.xi_cancellation,
                                   "quadrature_error": res.quadrature_error,
                                   "r_gamma_integral": float(np.dot(res.r_gamma_integral, res.weights)),
                                   "A_min": float(np.min(res.A_integral))}
            flags["identity"] = bool(ident <= tol.identity)
            if hypotheses_hold:
                # the inequality is only claimed inside the hypothesis class
                scale = abs(E_hm) + abs(E_g) + 1.0
                flags["lower_bound_ordering"] = bool(gap >= -tol.lower_bound * scale)
        except AHMError as exc:
            details["identity_error"] = f"{type(exc).__name__}: {exc}"

    rig = None
    if not hypotheses_hold:
        verdict = Verdict.HYPOTHESIS_FAILED
    elif abs(difference) <= tol.equality * (abs(E_hm) + 1.0):
        verdict = Verdict.EQUALITY
        rig = rigidity_residual(spec, gm) if gm is not None else math.inf
        details["rigidity_confirmed"] = bool(rig <= tol.rigidity)
    else:
        verdict = Verdict.STRICT
    return EnergyReport(E_g=E_g, E_hm=E_hm, difference=difference, r_tilde_0=rt0, r_breve_0=rb,
                        identity_residual=ident, A_integral=A_int, hypothesis_flags=flags,
                        equality_verdict=verdict, rigidity_residual=rig, lower_bound=lower, bound_gap=gap,
                        details=details, grid={"validation": grid.to_dict(), "identity": identity_grid.to_dict()},
                        tolerances=asdict(tol))
