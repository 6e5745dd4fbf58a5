"""Legendre machinery and the linearized spectrum around the Liouville bubble.

Linearizing the difference equation at u = v = U_μ and compactifying with
t = (8 - r²)/(8 + r²) turns the radial problem into Legendre's equation.
A bounded nontrivial solution exists exactly when 2(2-μ)/(2+μ) = n(n+1),
i.e. at μ_n = 2(2 - n - n²)/(2 + n + n²), with kernel P_n(t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import special

from todabif.radial_calculus import RadialGrid

_T_TOL = 1e-12


def _check_t(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + _T_TOL):
        raise ValueError("Legendre argument must lie in [-1, 1]")
    return np.clip(t, -1.0, 1.0)


def legendre_P(n: int, t):
    """P_n(t) by the three-term recurrence; exact at t = ±1."""
    if n < 0:
        raise ValueError("n must be non-negative")
    t = _check_t(t)
    p0, p1 = np.ones_like(t), t.copy()
    if n == 0:
        out = p0
    else:
        for k in range(1, n):
            p0, p1 = p1, ((2 * k + 1) * t * p1 - k * p0) / (k + 1)
        out = p1
    return float(out) if np.ndim(out) == 0 else out


def legendre_P_assoc(n: int, m: int, t):
    """(-1)^m (1-t²)^{m/2} d^m P_n/dt^m, Condon-Shortley phase included."""
    if not 0 <= m <= n:
        raise ValueError("need 0 <= m <= n")
    out = special.lpmv(int(m), int(n), _check_t(t))
    return float(out) if np.ndim(out) == 0 else out


def legendre_dP(n: int, t):
    """Derivative P_n'(t)."""
    c = np.zeros(n + 1)
    c[n] = 1.0
    return np.polynomial.legendre.legval(np.asarray(t, float), np.polynomial.legendre.legder(c))


def legendre_zeros(n: int) -> np.ndarray:
    """Zeros of P_n in increasing order."""
    return special.roots_legendre(n)[0] if n > 0 else np.empty(0)


def bifurcation_mu(n: int) -> float:
    """μ_n = 2(2-n-n²)/(2+n+n²), correctly rounded."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return float(Fraction(2 * (2 - n - n * n), 2 + n + n * n))


def _mode_root(mu: float) -> float:
    k = 2.0 * (2.0 - mu) / (2.0 + mu)
    return 0.5 * (-1.0 + math.sqrt(max(1.0 + 4.0 * k, 0.0)))


def eigencondition(mu: float, tol: float = 1e-9) -> int | None:
    """Index n with 2(2-μ)/(2+μ) = n(n+1), or None."""
    if not mu > -2.0:
        raise ValueError("mu must be > -2")
    if mu > 2.0:
        return None
    x = _mode_root(mu)
    n = round(x)
    return int(n) if abs(x - n) <= tol else None


def nearest_mode(mu: float) -> tuple[int, float]:
    """Closest mode index and |μ - μ_n|, for matching numerically located crossings."""
    n = max(round(_mode_root(min(mu, 2.0))), 0)
    return int(n), abs(mu - bifurcation_mu(n))


@dataclass(frozen=True)
class SpectralMode:
    n: int
    mu_n: float
    multiplicity: int
    kind: str = "radial-kernel"
    eigenfunction: Callable = field(default=None, repr=False, compare=False)


def spectrum(max_n: int, min_n: int = 1) -> list[SpectralMode]:
    """Kernel data for n = min_n..max_n; multiplicity counts all 2n+1 angular members."""
    return [
        SpectralMode(n, bifurcation_mu(n), 2 * n + 1, "radial-kernel", lambda t, n=n: legendre_P(n, t))
        for n in range(min_n, max_n + 1)
    ]


def kernel_radial(n: int, grid: RadialGrid) -> np.ndarray:
    """P_n((8-r²)/(8+r²)) on the grid nodes."""
    if n < 1:
        raise ValueError("kernel_radial needs n >= 1; n = 0 is not a bifurcation mode")
    return legendre_P(n, grid.nodes_t)


def kernel_member(n: int, m: int, r, angle, sine: bool = False):
    """Nonradial kernel member P_n^m(t) cos(mθ) (or sin), for display only."""
    t = (8.0 - np.asarray(r, float) ** 2) / (8.0 + np.asarray(r, float) ** 2)
    trig = np.sin if sine else np.cos
    return legendre_P_assoc(n, m, t) * trig(m * np.asarray(angle, float))


def scaling_mode(grid: RadialGrid) -> np.ndarray:
    """(8-r²)/(8+r²), the generator of dilations of the bubble."""
    return np.array(grid.nodes_t, copy=True)


def translation_modes(r, angle) -> tuple[np.ndarray, np.ndarray]:
    """r cosθ/(8+r²) and r sinθ/(8+r²), the generators of translations."""
    r = np.asarray(r, float)
    angle = np.asarray(angle, float)
    q = 8.0 + r * r
    return r * np.cos(angle) / q, r * np.sin(angle) / q
