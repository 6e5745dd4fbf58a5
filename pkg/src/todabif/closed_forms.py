"""Closed-form radial solutions of the generalized Toda system.

The system is

    -Δu = 2 e^u + μ e^v,   -Δv = 2 e^v + μ e^u   in R^2.

Two explicit families are provided: the synchronized Liouville bubble
u = v = U_{μ,δ} and the radial Jost-Wang solutions of the Cartan case
μ = -1.  Everything is returned in log-space with exact radial derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ArrayLike = float | np.ndarray


@dataclass(frozen=True)
class LiouvilleParams:
    """Parameters of U(x) = log(64δ / ((2+μ)(8δ + |x-y|²)²))."""

    mu: float
    delta: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not (self.mu > -2.0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be finite and > -2, got {self.mu}")
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be finite and > 0, got {self.delta}")


@dataclass(frozen=True)
class JostWangParams:
    """Radial Jost-Wang parameters (the complex parameters are fixed to zero)."""

    a1: float
    a2: float

    def __post_init__(self) -> None:
        for name in ("a1", "a2"):
            val = getattr(self, name)
            if not (val > 0.0 and math.isfinite(val)):
                raise ValueError(f"{name} must be finite and > 0, got {val}")


def _as_radius(r: ArrayLike) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("radii must be finite and non-negative")
    return r


def _unwrap(*arrs: np.ndarray):
    if arrs[0].ndim == 0:
        return tuple(float(a) for a in arrs)
    return arrs


def radial_laplacian(r: ArrayLike, d1: ArrayLike, d2: ArrayLike) -> np.ndarray:
    """f'' + f'/r, using the limit 2 f''(0) at the origin."""
    r, d1, d2 = np.broadcast_arrays(np.asarray(r, float), np.asarray(d1, float), np.asarray(d2, float))
    out = 2.0 * d2
    pos = r > 0
    out = np.where(pos, d2 + d1 / np.where(pos, r, 1.0), out)
    return out if out.ndim else float(out)


def liouville_eval(p: LiouvilleParams, r: ArrayLike):
    """Return (U, U', U'') of the Liouville bubble centred at the origin."""
    if p.center != (0.0, 0.0):
        raise ValueError("radial evaluation requires the bubble to be centred at the origin")
    r = _as_radius(r)
    q = 8.0 * p.delta + r * r
    U = math.log(64.0 * p.delta / (2.0 + p.mu)) - 2.0 * np.log(q)
    dU = -4.0 * r / q
    d2U = (4.0 * r * r - 32.0 * p.delta) / (q * q)
    return _unwrap(U, dU, d2U)


def _jw_polys(p: JostWangParams, r: np.ndarray):
    a1s, a2s = p.a1**2, p.a2**2
    r2 = r * r
    N = a1s * a2s + 4.0 * a1s * r2 + a2s * r2 * r2
    dN = 8.0 * a1s * r + 4.0 * a2s * r2 * r
    d2N = 8.0 * a1s + 12.0 * a2s * r2
    D = a1s + a2s * r2 + r2 * r2
    dD = 2.0 * a2s * r + 4.0 * r2 * r
    d2D = 2.0 * a2s + 12.0 * r2
    return N, dN, d2N, D, dD, d2D


def jostwang_eval(p: JostWangParams, r: ArrayLike):
    """Return (u, v) of the radial Jost-Wang solution of the Cartan system."""
    r = _as_radius(r)
    N, _, _, D, _, _ = _jw_polys(p, r)
    u = math.log(4.0) + np.log(N) - 2.0 * np.log(D)
    v = math.log(16.0 * p.a1**2 * p.a2**2) + np.log(D) - 2.0 * np.log(N)
    return _unwrap(u, v)


def jostwang_derivatives(p: JostWangParams, r: ArrayLike):
    """Return (u, u', u'', v, v', v'') by the quotient rule on the polynomials."""
    r = _as_radius(r)
    N, dN, d2N, D, dD, d2D = _jw_polys(p, r)
    gN, gD = dN / N, dD / D
    hN, hD = d2N / N - gN**2, d2D / D - gD**2
    u = math.log(4.0) + np.log(N) - 2.0 * np.log(D)
    v = math.log(16.0 * p.a1**2 * p.a2**2) + np.log(D) - 2.0 * np.log(N)
    return _unwrap(u, gN - 2.0 * gD, hN - 2.0 * hD, v, gD - 2.0 * gN, hD - 2.0 * hN)


def jostwang_origin_values(p: JostWangParams) -> tuple[float, float]:
    """(u(0), v(0)) in closed form."""
    return math.log(4.0 * p.a2**2 / p.a1**2), math.log(16.0 / p.a2**2)


def gudnason_mu(alpha: float, beta: float) -> float:
    """Coupling 2(α² - αβ)/(α² + αβ) of the Gudnason model; always in (-2, 2)."""
    if not (alpha > 0 and beta > 0 and math.isfinite(alpha) and math.isfinite(beta)):
        raise ValueError("alpha and beta must be finite and positive")
    return 2.0 * (alpha - beta) / (alpha + beta)
