"""Reference metrics and random admissible perturbations."""
from __future__ import annotations

import math

import numpy as np

from .metric import BackgroundParams, MetricSpec

TWO_PI = 2.0 * math.pi


def background(n: int, a: float = 0.0, r0: float = 1.0, periods=None) -> BackgroundParams:
    periods = tuple(periods) if periods is not None else (TWO_PI,) * (n - 2)
    return BackgroundParams(n, a, r0, periods)


def hat_spec(n: int, a: float = 0.0, r0: float = 1.0, periods=None) -> MetricSpec:
    """The constant-curvature family with all hats zero."""
    return MetricSpec.from_coefficients(background(n, a, r0, periods))


def hm_spec(n: int, r_breve: float = 1.0, periods=None) -> MetricSpec:
    return hat_spec(n, 0.0, r_breve, periods)


def random_perturbation(bg: BackgroundParams, rng: np.random.Generator, amplitude: float = 1e-3,
                        modes: int = 2, tail: bool = True) -> MetricSpec:
    """Random perturbation that satisfies the L1 condition and horizon regularity.

    exp(u_hat) = 1 + u r^{1-n} + u_n r^{-n} (+ tail), exp(v_hat) repeats it and adds
    dv(xi) (r^{1-n} - r_+ r^{-n}); what = 2 W (r^{1-n} - r_+ r^{-n}) with
    tr W = -2u - dv(xi), so u + v_{n-1} + tr w_{n-1} = 0 and v_hat = u_hat at r_+.
    """
    n, d, rp = bg.n, bg.dim_torus, bg.r_plus
    amp = amplitude * rp ** (n - 1)  # keeps the relative perturbation ~ amplitude near r_+
    u1 = amp * rng.standard_normal()
    un = amp * rp * rng.standard_normal()
    u = {n - 1: u1, n: un}
    if tail:
        u[n + 1] = amp * rp**2 * rng.standard_normal()
    dv = {k: tuple(amp * rng.standard_normal(2)) for k in range(0, modes + 1)}
    dv[0] = (dv[0][0], 0.0)

    v = {m: {0: (c, 0.0)} for m, c in u.items()}
    v[n - 1] = {0: (u1 + dv[0][0], 0.0), **{k: dv[k] for k in range(1, modes + 1)}}
    v[n] = {0: (un - rp * dv[0][0], 0.0), **{k: (-rp * dv[k][0], -rp * dv[k][1]) for k in range(1, modes + 1)}}

    zero = (0,) * (d + 1)
    W: dict = {}
    for i in range(d):
        slot = W.setdefault((i, i), {})
        slot[zero] = (-(2 * u1 + dv[0][0]) / d, 0.0)
        for k in range(1, modes + 1):
            slot[(k,) + (0,) * d] = (-dv[k][0] / d, -dv[k][1] / d)
    if d >= 2:
        # trace-free part with genuine torus dependence
        for k in range(1, modes + 1):
            mode = tuple(int(x) for x in rng.integers(-1, 2, size=d + 1))
            mode = (abs(mode[0]),) + mode[1:]
            if not any(mode):
                mode = (0, 1) + (0,) * (d - 1)
            c, s = amp * rng.standard_normal(2)
            i, j = sorted(rng.choice(d, size=2, replace=False))
            W.setdefault((i, j), {})[mode] = (c, s)
            W.setdefault((0, 0), {})
            diag = (c, s)
            a0 = W[(0, 0)].get(mode, (0.0, 0.0))
            a1 = W.setdefault((1, 1), {}).get(mode, (0.0, 0.0))
            W[(0, 0)][mode] = (a0[0] + diag[0], a0[1] + diag[1])
            W[(1, 1)][mode] = (a1[0] - diag[0], a1[1] - diag[1])
    w = {n - 1: {ij: {m: (2 * c, 2 * s) for m, (c, s) in modes_.items()} for ij, modes_ in W.items()},
         n: {ij: {m: (-2 * rp * c, -2 * rp * s) for m, (c, s) in modes_.items()} for ij, modes_ in W.items()}}
    return MetricSpec.from_coefficients(bg, u=u, v=v, w=w)
