"""Finite Fourier and inverse-power series used to describe metric profiles.

Everything here is exact: derivatives in r and in the angles are taken term
by term, so no finite differencing ever enters the metric data itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

TWO_PI = 2.0 * np.pi


def _pair(value) -> tuple[float, float]:
    if np.isscalar(value):
        return float(value), 0.0
    c, s = value
    return float(c), float(s)


def power_jet(r: np.ndarray, orders: np.ndarray, k: int) -> np.ndarray:
    """d^k/dr^k of r**(-m) for every m in ``orders``; shape (len(r), len(orders))."""
    r = np.asarray(r, dtype=float)[..., None]
    m = np.asarray(orders, dtype=float)
    fac = np.ones_like(m)
    for i in range(k):
        fac = fac * (-m - i)
    return fac * r ** (-m - k)


@dataclass(frozen=True)
class AngularSeries:
    """f(xi) = sum_k c_k cos(2 pi k xi / period) + s_k sin(2 pi k xi / period)."""

    period: float
    coefficients: Mapping[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")
        clean = {}
        for k, v in dict(self.coefficients).items():
            k = int(k)
            if k < 0:
                raise ValueError("Fourier modes must be non-negative")
            c, s = _pair(v)
            if k == 0:
                s = 0.0
            if c or s:
                clean[k] = (c, s)
        object.__setattr__(self, "coefficients", clean)

    @classmethod
    def constant(cls, period: float, value: float) -> "AngularSeries":
        return cls(period, {0: (value, 0.0)})

    @property
    def omega(self) -> float:
        return TWO_PI / self.period

    def arrays(self):
        ks = np.array(sorted(self.coefficients), dtype=int)
        c = np.array([self.coefficients[k][0] for k in ks], dtype=float)
        s = np.array([self.coefficients[k][1] for k in ks], dtype=float)
        return ks, c, s

    def __call__(self, xi, deriv: int = 0) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = np.zeros_like(xi)
        for k, (c, s) in self.coefficients.items():
            w = k * self.omega
            for _ in range(deriv):
                c, s = w * s, -w * c
            out = out + c * np.cos(w * xi) + s * np.sin(w * xi)
        return out

    def mean(self) -> float:
        return self.coefficients.get(0, (0.0, 0.0))[0]

    def is_zero(self) -> bool:
        return not self.coefficients

    def shifted(self, const: float) -> "AngularSeries":
        coeffs = dict(self.coefficients)
        c0 = coeffs.get(0, (0.0, 0.0))[0]
        coeffs[0] = (c0 + const, 0.0)
        return AngularSeries(self.period, coeffs)

    def scaled(self, factor: float) -> "AngularSeries":
        return AngularSeries(self.period, {k: (factor * c, factor * s)
                                           for k, (c, s) in self.coefficients.items()})

    def __add__(self, other: "AngularSeries") -> "AngularSeries":
        if not np.isclose(self.period, other.period, rtol=1e-14):
            raise ValueError("period mismatch")
        coeffs = dict(self.coefficients)
        for k, (c, s) in other.coefficients.items():
            c0, s0 = coeffs.get(k, (0.0, 0.0))
            coeffs[k] = (c0 + c, s0 + s)
        return AngularSeries(self.period, coeffs)


Component = tuple[int, int]
MultiMode = tuple[int, ...]


@dataclass(frozen=True)
class TorusTensorSeries:
    """Symmetric (n-2)x(n-2) tensor field on the angle torus (xi, phi^3..phi^n).

    ``components`` maps an upper-triangular index pair (i, j), i <= j, to a
    multi-mode Fourier series {(k_xi, k_3, ..., k_n): (cos_amp, sin_amp)}.
    The phase of a mode is 2 pi sum_a k_a angle_a / period_a.  Lower-triangular
    keys are folded onto the upper triangle, so symmetry holds by construction.
    """

    dim: int
    periods: tuple[float, ...]
    components: Mapping[Component, Mapping[MultiMode, tuple[float, float]]] = field(default_factory=dict)

    def __post_init__(self):
        periods = tuple(float(p) for p in self.periods)
        if len(periods) != self.dim + 1 or min(periods) <= 0:
            raise ValueError("need dim + 1 positive periods (xi first)")
        object.__setattr__(self, "periods", periods)
        clean: dict = {}
        for (i, j), modes in dict(self.components).items():
            i, j = sorted((int(i), int(j)))
            if not (0 <= i < self.dim and 0 <= j < self.dim):
                raise ValueError(f"component {(i, j)} out of range for dim {self.dim}")
            slot = clean.setdefault((i, j), {})
            for mode, amp in dict(modes).items():
                mode = tuple(int(k) for k in mode)
                if len(mode) != self.dim + 1:
                    raise ValueError(f"multi-mode {mode} must have {self.dim + 1} entries")
                c, s = _pair(amp)
                if all(k == 0 for k in mode):
                    s = 0.0
                c0, s0 = slot.get(mode, (0.0, 0.0))
                if c or s:
                    slot[mode] = (c0 + c, s0 + s)
            if not slot:
                del clean[(i, j)]
        object.__setattr__(self, "components", clean)

    @classmethod
    def zero(cls, dim: int, periods) -> "TorusTensorSeries":
        return cls(dim, tuple(periods), {})

    @classmethod
    def identity(cls, dim: int, periods, value: float = 1.0) -> "TorusTensorSeries":
        zero = (0,) * (dim + 1)
        return cls(dim, tuple(periods), {(i, i): {zero: (value, 0.0)} for i in range(dim)})

    def is_zero(self) -> bool:
        return not self.components

    def scaled(self, factor: float) -> "TorusTensorSeries":
        return TorusTensorSeries(self.dim, self.periods, {
            ij: {m: (factor * c, factor * s) for m, (c, s) in modes.items()}
            for ij, modes in self.components.items()})

    def __add__(self, other: "TorusTensorSeries") -> "TorusTensorSeries":
        if other.dim != self.dim or not np.allclose(self.periods, other.periods, rtol=1e-14):
            raise ValueError("incompatible tensor series")
        comps = {ij: dict(m) for ij, m in self.components.items()}
        for ij, modes in other.components.items():
            slot = comps.setdefault(ij, {})
            for m, (c, s) in modes.items():
                c0, s0 = slot.get(m, (0.0, 0.0))
                slot[m] = (c0 + c, s0 + s)
        return TorusTensorSeries(self.dim, self.periods, comps)

    def plus_identity(self, value: float) -> "TorusTensorSeries":
        return self + TorusTensorSeries.identity(self.dim, self.periods, value)

    def mean_trace(self) -> float:
        """Average over the torus of the flat trace sum_i T_ii."""
        zero = (0,) * (self.dim + 1)
        return sum(self.components.get((i, i), {}).get(zero, (0.0, 0.0))[0]
                   for i in range(self.dim))

    def max_mode(self) -> int:
        return max((max(abs(k) for k in m) for modes in self.components.values() for m in modes),
                   default=0)

    def arrays(self):
        """Flatten to (modes K, cos C, sin S) with C, S of shape (n_modes, dim, dim)."""
        modes = sorted({m for modes in self.components.values() for m in modes})
        index = {m: a for a, m in enumerate(modes)}
        C = np.zeros((len(modes), self.dim, self.dim))
        S = np.zeros_like(C)
        for (i, j), comp in self.components.items():
            for m, (c, s) in comp.items():
                a = index[m]
                C[a, i, j] = C[a, j, i] = c
                S[a, i, j] = S[a, j, i] = s
        K = np.array(modes, dtype=float).reshape(len(modes), self.dim + 1)
        return K, C, S

    def __call__(self, angles) -> np.ndarray:
        """Value at angles of shape (..., dim + 1); returns (..., dim, dim)."""
        angles = np.asarray(angles, dtype=float)
        K, C, S = self.arrays()
        ph = angles @ (TWO_PI * K / np.array(self.periods)).T
        d2 = self.dim * self.dim
        out = np.cos(ph) @ C.reshape(-1, d2) + np.sin(ph) @ S.reshape(-1, d2)
        return out.reshape(angles.shape[:-1] + (self.dim, self.dim))


Coefficient = Union[float, AngularSeries, TorusTensorSeries]


@dataclass(frozen=True)
class RadialSeries:
    """f(r) = sum_m c_m r**(-m) with scalar, angular or tensor coefficients c_m."""

    terms: Mapping[int, Coefficient] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for m, c in dict(self.terms).items():
            m = int(m)
            if m < 0:
                raise ValueError("orders must be non-negative")
            if isinstance(c, (AngularSeries, TorusTensorSeries)):
                if not c.is_zero():
                    clean[m] = c
            elif float(c) != 0.0:
                clean[m] = float(c)
        object.__setattr__(self, "terms", dict(sorted(clean.items())))

    @property
    def orders(self) -> list[int]:
        return list(self.terms)

    @property
    def min_order(self) -> int | None:
        return min(self.terms, default=None)

    def coefficient(self, m: int, default=0.0):
        return self.terms.get(m, default)

    # scalar series -----------------------------------------------------
    def scalar(self, r, k: int = 0, skip_constant: bool = False) -> np.ndarray:
        """k-th r-derivative of a scalar series; ``skip_constant`` drops order 0."""
        r = np.asarray(r, dtype=float)
        orders = [m for m in self.terms if not (skip_constant and m == 0)]
        if not orders:
            return np.zeros_like(r)
        coeffs = np.array([self.terms[m] for m in orders])
        return power_jet(r.ravel(), np.array(orders), k).dot(coeffs).reshape(r.shape)

    # angular series ----------------------------------------------------
    def angular_jet(self, r, xi, skip_constant: bool = False) -> dict:
        """All derivatives up to second order in (r, xi) of an angular series.

        Returns a dict keyed by (k_r, k_xi) with k_r + k_xi <= 2.
        """
        r = np.asarray(r, dtype=float).ravel()
        xi = np.asarray(xi, dtype=float).ravel()
        orders = [m for m in self.terms if not (skip_constant and m == 0)]
        out = {key: np.zeros_like(r) for key in [(0, 0), (1, 0), (2, 0), (0, 1), (0, 2), (1, 1)]}
        if not orders:
            return out
        period = self.terms[orders[0]].period
        ks = sorted({k for m in orders for k in self.terms[m].coefficients})
        kidx = {k: a for a, k in enumerate(ks)}
        C = np.zeros((len(orders), len(ks)))
        S = np.zeros_like(C)
        for b, m in enumerate(orders):
            for k, (c, s) in self.terms[m].coefficients.items():
                C[b, kidx[k]], S[b, kidx[k]] = c, s
        w = TWO_PI * np.array(ks, dtype=float) / period
        ph = xi[:, None] * w[None, :]
        cs, sn = np.cos(ph), np.sin(ph)
        bases = {0: (cs, sn), 1: (-sn * w, cs * w), 2: (-cs * w**2, -sn * w**2)}
        for kr in range(3):
            P = power_jet(r, np.array(orders), kr)
            pc, ps = P @ C, P @ S
            for kx in range(3 - kr):
                bc, bs = bases[kx]
                out[(kr, kx)] = np.sum(pc * bc + ps * bs, axis=1)
        return out

    # tensor series -----------------------------------------------------
    def tensor_jet(self, r, angles, dim: int, values_only: bool = False) -> dict:
        """Value and derivatives of a tensor series at points (r, angles).

        Keys: 'val', 'r', 'rr' -> (N, d, d); 'ang', 'r_ang' -> (N, A, d, d);
        'ang_ang' -> (N, A, A, d, d), A = dim + 1 angles (xi first).
        With ``values_only`` only 'val' is returned.
        """
        r = np.asarray(r, dtype=float).ravel()
        angles = np.asarray(angles, dtype=float).reshape(r.size, dim + 1)
        N, A = r.size, dim + 1
        if values_only:
            orders = list(self.terms)
            val = np.zeros((N, dim, dim))
            for o in orders:
                val += self.terms[o](angles) * (r ** (-float(o)))[:, None, None]
            return {"val": val}
        out = {
            "val": np.zeros((N, dim, dim)), "r": np.zeros((N, dim, dim)), "rr": np.zeros((N, dim, dim)),
            "ang": np.zeros((N, A, dim, dim)), "r_ang": np.zeros((N, A, dim, dim)),
            "ang_ang": np.zeros((N, A, A, dim, dim)),
        }
        orders = list(self.terms)
        if not orders:
            return out
        periods = np.array(self.terms[orders[0]].periods)
        modes = sorted({m for o in orders for modes in self.terms[o].components.values() for m in modes})
        midx = {m: a for a, m in enumerate(modes)}
        C = np.zeros((len(orders), len(modes), dim, dim))
        S = np.zeros_like(C)
        for b, o in enumerate(orders):
            for (i, j), comp in self.terms[o].components.items():
                for m, (c, s) in comp.items():
                    C[b, midx[m], i, j] = C[b, midx[m], j, i] = c
                    S[b, midx[m], i, j] = S[b, midx[m], j, i] = s
        W = TWO_PI * np.array(modes, dtype=float).reshape(len(modes), A) / periods  # (K, A)
        ph = angles @ W.T
        cs, sn = np.cos(ph), np.sin(ph)
        P = [power_jet(r, np.array(orders), k) for k in range(3)]
        pc = [np.einsum("nb,bkij->nkij", p, C, optimize=True) for p in P]
        ps = [np.einsum("nb,bkij->nkij", p, S, optimize=True) for p in P]
        for key, k in (("val", 0), ("r", 1), ("rr", 2)):
            out[key] = np.einsum("nk,nkij->nij", cs, pc[k]) + np.einsum("nk,nkij->nij", sn, ps[k])
        for key, k in (("ang", 0), ("r_ang", 1)):
            # d/d angle_a of (c cos + s sin) = W_a (s cos - c sin)
            out[key] = np.einsum("ka,nkij->naij", W, cs[..., None, None] * ps[k] - sn[..., None, None] * pc[k],
                                 optimize=True)
        mix = cs[..., None, None] * pc[0] + sn[..., None, None] * ps[0]
        out["ang_ang"] = -np.einsum("ka,kb,nkij->nabij", W, W, mix, optimize=True)
        return out
