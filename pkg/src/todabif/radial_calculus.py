"""Radial grids, quadrature and linear radial solvers.

Radial functions on R^2 are stored on the compactified coordinate
t = (8 - r²)/(8 + r²) = cos θ, i.e. as axisymmetric functions on the sphere.
With this substitution

    Δ_plane = ((1 + t)²/8) Δ_S,     r dr = 8/(1 + t)² (-dt),

where Δ_S w = ((1 - t²) w_t)_t is the zonal Laplace-Beltrami operator.  The
finite-volume grid is uniform (or smoothly stretched) in θ, with node 0 at
the north pole (r = 0) and the last cell closing at the south pole (r = ∞).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline

SQRT8 = math.sqrt(8.0)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class AccuracyWarning(UserWarning):
    """Raised when a cancellation check detects loss of significant digits."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def r_of_t(t):
    t = np.asarray(t, float)
    with np.errstate(divide="ignore"):
        return np.sqrt(8.0 * (1.0 - t) / (1.0 + t))


@dataclass(frozen=True)
class RadialGrid:
    """Nodes in t and r with weights for ∫₀^∞ f(r) r dr.

    Finite-volume grids also carry the cell measures ``areas`` (in t) and the
    tridiagonal stiffness matrix of -Δ_S, stored as ``stiff_diag``/``stiff_off``.
    """

    nodes_t: np.ndarray
    nodes_r: np.ndarray
    quad_weights: np.ndarray
    theta: np.ndarray
    areas: np.ndarray | None = None
    stiff_diag: np.ndarray | None = None
    stiff_off: np.ndarray | None = None
    t_moments: np.ndarray | None = None
    kind: str = "finite-volume"

    @property
    def size(self) -> int:
        return int(self.nodes_t.size)

    @property
    def h(self) -> float:
        """Largest angular spacing, the mesh width of the scheme."""
        return float(np.max(np.diff(self.theta)))

    @property
    def is_finite_volume(self) -> bool:
        return self.areas is not None

    def stiffness(self) -> sparse.csr_matrix:
        if not self.is_finite_volume:
            raise ValueError("grid carries no finite-volume operator")
        return sparse.diags([self.stiff_off, self.stiff_diag, self.stiff_off], [-1, 0, 1], format="csr")

    @classmethod
    def from_t(cls, t) -> "RadialGrid":
        """Bare grid on given t-nodes (decreasing) with trapezoid weights in θ."""
        t = np.asarray(t, float)
        if np.any(np.diff(t) >= 0) or t[0] > 1 or t[-1] <= -1:
            raise ValueError("t-nodes must be strictly decreasing in (-1, 1]")
        th = np.arccos(t)
        w = np.zeros_like(th)
        if t.size > 1:
            d = np.diff(th)
            w[:-1] += 0.5 * d
            w[1:] += 0.5 * d
        qw = w * np.sin(th) * 8.0 / (1.0 + t) ** 2
        return cls(_frozen(t), _frozen(r_of_t(t)), _frozen(qw), _frozen(th), kind="nodes")


def make_grid(size: int, stretch: float = 1.0) -> RadialGrid:
    """Finite-volume grid with nodes θ_j = θ(s_j), s_j = j/(size - 1/2).

    θ(s) = π s + c sin(π s) with c = 1 - 1/stretch; stretch > 1 refines the
    far field (t → -1) by that factor.  The last face sits exactly at θ = π,
    so t = -1 is never a node.
    """
    if size < 16:
        raise ValueError("size must be at least 16")
    if not stretch >= 1.0:
        raise ValueError("stretch must be >= 1")
    c = 1.0 - 1.0 / stretch
    theta_of = lambda s: np.pi * s + c * np.sin(np.pi * s)
    hs = 1.0 / (size - 0.5)
    th = theta_of(np.arange(size) * hs)
    th[0] = 0.0
    faces = theta_of((np.arange(size) + 0.5) * hs)
    faces[-1] = np.pi
    lo = np.concatenate([[0.0], faces[:-1]])
    areas = np.cos(lo) - np.cos(faces)
    flux = np.sin(faces[:-1]) / np.diff(th)
    diag = np.zeros(size)
    diag[:-1] += flux
    diag[1:] += flux
    t = np.cos(th)
    r = SQRT8 * np.tan(0.5 * th)
    qw = areas * 8.0 / (1.0 + t) ** 2
    moments = 0.5 * (np.cos(lo) ** 2 - np.cos(faces) ** 2)
    return RadialGrid(
        _frozen(t), _frozen(r), _frozen(qw), _frozen(th), _frozen(areas), _frozen(diag), _frozen(-flux), _frozen(moments)
    )


def gauss_legendre_grid(size: int) -> RadialGrid:
    """Gauss-Legendre nodes in t; an independent quadrature family for diagnostics."""
    x, w = np.polynomial.legendre.leggauss(size)
    t, w = x[::-1], w[::-1]
    return RadialGrid(
        _frozen(t), _frozen(r_of_t(t)), _frozen(w * 8.0 / (1.0 + t) ** 2), _frozen(np.arccos(t)), kind="gauss-legendre"
    )


def radial_quad(f, grid: RadialGrid) -> float:
    """∫₀^∞ f(r) r dr with the grid weights."""
    return float(np.dot(grid.quad_weights, f))


def sphere_laplacian_apply(w, grid: RadialGrid) -> np.ndarray:
    """Discrete Δ_S w (cell average of the zonal Laplacian)."""
    return -(grid.stiffness() @ np.asarray(w, float)) / grid.areas


def planar_laplacian_apply(w, grid: RadialGrid) -> np.ndarray:
    """Discrete planar radial Laplacian Δw = ((1+t)²/8) Δ_S w."""
    return (1.0 + grid.nodes_t) ** 2 / 8.0 * sphere_laplacian_apply(w, grid)


def ell(theta) -> np.ndarray:
    """ℓ = log((1+t)/2) = 2 log cos(θ/2) = log(8/(8+r²)); ℓ ≈ -2 log r at infinity."""
    with np.errstate(divide="ignore"):
        return 2.0 * np.log(np.cos(0.5 * np.asarray(theta, float)))


class FieldInterpolant:
    """f(θ) = σ ℓ(θ) + s(θ) with s a periodic cubic spline of the even extension.

    The log coefficient σ captures the -2σ log r far-field growth; if not
    supplied it is fitted on the last ``tail_nodes`` nodes with the basis
    {1, ℓ, 1 + t, (1 + t)²}.
    """

    def __init__(self, values, grid: RadialGrid, log_coeff: float | None = None, tail_nodes: int = 8):
        values = np.asarray(values, float)
        th = np.asarray(grid.theta, float)
        if log_coeff is None:
            k = min(tail_nodes, th.size)
            tt = th[-k:]
            q = 1.0 + np.cos(tt)
            basis = np.column_stack([np.ones(k), ell(tt), q, q * q])
            log_coeff = float(np.linalg.lstsq(basis, values[-k:], rcond=None)[0][1])
        self.log_coeff = float(log_coeff)
        s = values - self.log_coeff * ell(th)
        x = np.concatenate([th, 2.0 * np.pi - th[::-1]])
        y = np.concatenate([s, s[::-1]])
        if th[-1] == np.pi:
            x, y = np.delete(x, th.size), np.delete(y, th.size)
        if th[0] != 0.0:
            x, y = np.append(x, th[0] + 2.0 * np.pi), np.append(y, s[0])
        self._x0 = x[0]
        self._spline = CubicSpline(x, y, bc_type="periodic")
        self._dspline = self._spline.derivative()

    def _wrap(self, theta):
        theta = np.asarray(theta, float)
        return np.where(theta < self._x0, theta + 2.0 * np.pi, theta)

    @staticmethod
    def _theta(t, theta):
        if theta is None:
            theta = np.arccos(np.clip(np.asarray(t, float), -1.0, 1.0))
        return np.asarray(theta, float)

    def smooth(self, t=None, theta=None) -> np.ndarray:
        return self._spline(self._wrap(self._theta(t, theta)))

    def __call__(self, t=None, theta=None) -> np.ndarray:
        th = self._theta(t, theta)
        return self.log_coeff * ell(th) + self.smooth(theta=th)

    def r_times_derivative(self, t=None, theta=None) -> np.ndarray:
        """r f'(r) = -σ(1 - t) + s'(θ) sin θ."""
        th = self._theta(t, theta)
        return -self.log_coeff * (1.0 - np.cos(th)) + self._dspline(self._wrap(th)) * np.sin(th)

    def r_derivative(self, t=None, theta=None) -> np.ndarray:
        """f'(r) = (-σ sin θ + s'(θ)(1 + t)) / √8."""
        th = self._theta(t, theta)
        return (-self.log_coeff * np.sin(th) + self._dspline(self._wrap(th)) * (1.0 + np.cos(th))) / SQRT8


# ------------------------------------------------------------ θ-quadrature helpers

def _graded(a: float, b: float, levels: int = 24) -> np.ndarray:
    """Points accumulating geometrically at a inside (a, b)."""
    return a + (b - a) * 2.0 ** -np.arange(1, levels + 1)


def _cumulative_theta(fun: Callable[[np.ndarray], np.ndarray], breakpoints) -> np.ndarray:
    """∫_{b_0}^{b_i} fun(θ) dθ at sorted breakpoints, 8-point Gauss per segment."""
    b = np.asarray(breakpoints, float)
    a, c = b[:-1], b[1:]
    half = 0.5 * (c - a)
    X = (0.5 * (a + c))[:, None] + half[:, None] * _GL_X
    seg = np.sum(fun(X) * (half[:, None] * _GL_W), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _segment_nodes(breakpoints):
    b = np.asarray(breakpoints, float)
    a, c = b[:-1], b[1:]
    half = 0.5 * (c - a)
    X = (0.5 * (a + c))[:, None] + half[:, None] * _GL_X
    return X, half[:, None] * _GL_W


def _sorted_unique(*arrs) -> np.ndarray:
    return np.unique(np.concatenate([np.ravel(a) for a in arrs]))


# ------------------------------------------------------------ weighted norms

@dataclass(frozen=True)
class WeightConfig:
    alpha: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


def decay_exponent(f, grid: RadialGrid, tail_nodes: int = 6) -> float:
    """k in |f| ~ r^{-k}, fitted on the outermost nodes; +inf if f vanishes there."""
    f = np.abs(np.asarray(f, float)[-tail_nodes:])
    r = grid.nodes_r[-tail_nodes:]
    if np.all(f == 0.0) or np.any(f == 0.0):
        return math.inf if np.all(f == 0) else float("nan")
    return float(-np.polyfit(np.log(r), np.log(f), 1)[0])


def weighted_norm(f, grid: RadialGrid, cfg: WeightConfig, which: str) -> float:
    """Square roots of the weighted L² integrals, or weighted sup norms.

    X:          (2π ∫ (1 + r^{2+α}) f² r dr)^{1/2}
    Y-lower:    (2π ∫ f² / (1 + r^{1+α/2})² r dr)^{1/2}
    star-star:  sup (1 + r)^{2+α} |f|
    star:       max(Y-proxy, sup |f| / log(2 + r)), Y-proxy = (‖Δf‖_X² + Y-lower²)^{1/2}

    Divergence is decided from the decay exponent on the outermost nodes and
    reported as +inf.
    """
    f = np.asarray(f, float)
    a = cfg.alpha
    if np.all(f == 0.0):
        return 0.0
    k = decay_exponent(f, grid)
    r = grid.nodes_r
    tol = 0.05
    if which == "X":
        if not k > 2.0 + a / 2.0 + tol:
            return math.inf
        return math.sqrt(2 * math.pi * radial_quad((1.0 + r ** (2 + a)) * f * f, grid))
    if which == "Y-lower":
        return _y_lower(f, grid, a, k)
    if which == "star-star":
        if not k >= 2.0 + a - tol:
            return math.inf
        return float(np.max((1.0 + r) ** (2 + a) * np.abs(f)))
    if which == "star":
        if not k > -tol:
            return math.inf
        ylow = _y_lower(f, grid, a, k)
        lap2 = 0.0
        if grid.is_finite_volume:
            lap = planar_laplacian_apply(f, grid)
            lap[np.abs(lap) <= 1e-12 * np.max(np.abs(f))] = 0.0
            lap2 = weighted_norm(lap, grid, cfg, "X") ** 2
        return max(math.sqrt(lap2 + ylow**2), float(np.max(np.abs(f) / np.log(2.0 + r))))
    raise ValueError(f"unknown norm tag {which!r}")


def _y_lower(f, grid, a, k) -> float:
    if not k > -a / 2.0 + 0.05:
        return math.inf
    r = grid.nodes_r
    return math.sqrt(2 * math.pi * radial_quad(f * f / (1.0 + r ** (1 + a / 2)) ** 2, grid))


# ------------------------------------------------------------ potentials and slopes

def log_potential(f, grid: RadialGrid, r_eval) -> np.ndarray:
    """M(f)(r) = -∫₀^∞ log(max(r, s)) f(s) s ds for radial f.

    f is interpolated through its sphere density f·8/(1+t)² and integrated in θ
    with composite Gauss rules split at the evaluation radii.
    """
    f = np.asarray(f, float)
    r_eval = np.atleast_1d(np.asarray(r_eval, float))
    if np.all(f == 0.0):
        return np.zeros_like(r_eval)
    if not math.isfinite(weighted_norm(f, grid, WeightConfig(0.5), "X")):
        raise ValueError("f is not integrable with the required weight (weighted norm diverges)")
    dens = FieldInterpolant(f * 8.0 / (1.0 + grid.nodes_t) ** 2, grid, log_coeff=0.0)
    th_eval = 2.0 * np.arctan(r_eval / SQRT8)
    bps = _sorted_unique(grid.theta, th_eval, [0.0, np.pi], _graded(0.0, grid.theta[1]), _graded(np.pi, grid.theta[-1]))

    def F(th):
        return dens.smooth(theta=th) * np.sin(th)

    def logF(th):
        with np.errstate(divide="ignore"):
            return np.log(SQRT8 * np.tan(0.5 * th)) * F(th)

    I = _cumulative_theta(F, bps)
    J = _cumulative_theta(logF, bps)
    idx = np.searchsorted(bps, th_eval)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.where(r_eval > 0, np.log(r_eval) * I[idx], 0.0) - (J[-1] - J[idx])
    return out


def asymptotic_slope(f, grid: RadialGrid, window: tuple[float, float]) -> float:
    """Least-squares slope of f against log r over grid nodes inside the window."""
    lo, hi = window
    if lo < 100.0:
        raise ValueError("slope window must start at r >= 100")
    if lo > grid.nodes_r[-1]:
        raise ValueError("slope window lies outside the grid")
    mask = (grid.nodes_r >= lo) & (grid.nodes_r <= hi)
    if np.count_nonzero(mask) < 8:
        raise ValueError(f"ill-conditioned slope fit: only {np.count_nonzero(mask)} nodes in window")
    return float(np.polyfit(np.log(grid.nodes_r[mask]), np.asarray(f, float)[mask], 1)[0])


def k_orthogonality(w, grid: RadialGrid) -> float:
    """∫ Δw · (8-r²)/(8+r²) r dr, integrated by parts: -64 ∫ (8-r²)/(8+r²)³ w r dr.

    In t this is -2 ∫ t w dt.  Finite-volume grids integrate the weight t
    exactly over each cell, so constants are annihilated to round-off.
    """
    w = np.asarray(w, float)
    if grid.t_moments is not None:
        return float(-2.0 * np.dot(grid.t_moments, w))
    t = grid.nodes_t
    return radial_quad(-t * (1.0 + t) ** 2 / 4.0 * w, grid)


# ------------------------------------------------------------ variation of constants

def _legendre_parts(n: int):
    from todabif.spectral import legendre_P, legendre_zeros

    z = legendre_zeros(n)
    lead = math.comb(2 * n, n) / 2.0**n

    def P(t):
        return legendre_P(n, np.clip(t, -1.0, 1.0))

    def P_over(t, k):
        """P_n(t)/(t - z_k) as the product over the other zeros."""
        t = np.asarray(t, float)
        out = np.full_like(t, lead)
        for j, zj in enumerate(z):
            if j != k:
                out = out * (t - zj)
        return out

    return z, P, P_over


def _voc_core(n: int, g, grid: RadialGrid):
    if n < 1:
        raise ValueError("voc_solve needs n >= 1")
    g = np.asarray(g, float)
    z, P, P_over = _legendre_parts(n)
    dens = FieldInterpolant(g * 8.0 / (1.0 + grid.nodes_t) ** 2, grid, log_coeff=0.0)
    th_z = np.arccos(z)
    th = np.asarray(grid.theta)
    # fallback: grid nodes too close to a zero are dropped from the breakpoints
    spacing = np.min(np.diff(th))
    near = np.zeros(th.size, bool)
    for tz in th_z:
        near |= np.abs(th - tz) < 0.25 * spacing
    outer_bps = _sorted_unique(th[~near], th_z, [0.0])

    def inner(thx):
        return P(np.cos(thx)) * dens.smooth(theta=thx) * np.sin(thx)

    Xo, Wo = _segment_nodes(outer_bps)
    pts = _sorted_unique(Xo, th_z, [np.pi])
    inner_bps = _sorted_unique(pts, [0.0], _graded(0.0, th[1]))
    Ic = _cumulative_theta(inner, inner_bps)

    def I_at(x):
        return Ic[np.searchsorted(inner_bps, x)]

    I_pi = float(I_at(np.array([np.pi]))[0])
    Iz = I_at(th_z)
    dP = np.array([float(np.polynomial.legendre.legval(zk, np.polynomial.legendre.legder(np.eye(n + 1)[n]))) for zk in z])
    ck = Iz / ((1.0 - z**2) * dP**2)

    def h_reg(thx, Ix):
        t = np.cos(thx)
        out = Ix / (np.sin(thx) ** 2 * P(t) ** 2) - I_pi / (2.0 * (1.0 + t))
        for zk, c in zip(z, ck):
            out = out - c / (t - zk) ** 2
        return out

    Ho = h_reg(Xo, I_at(Xo.ravel()).reshape(Xo.shape))
    Jcum = np.concatenate([[0.0], np.cumsum(np.sum(Ho * np.sin(Xo) * Wo, axis=1))])
    J_nodes = np.empty(th.size)
    J_nodes[~near] = Jcum[np.searchsorted(outer_bps, th[~near])]
    if np.any(near):
        J_nodes[near] = CubicSpline(th[~near], J_nodes[~near])(th[near])
    info = dict(z=z, ck=ck, I_pi=I_pi, h_reg=h_reg, I_at=I_at, inner_bps=inner_bps, Ic=Ic, inner=inner)
    return J_nodes, z, ck, I_pi, P, P_over, info


def voc_solve(n: int, g, grid: RadialGrid, C: float = 0.0) -> np.ndarray:
    """Bounded-at-origin solution of -w'' - w'/r - (n(n+1)/2)·64/(8+r²)² w = g.

    Variation of constants around P_n:
        w = -P_n(t) [ ∫_t^1 I(τ)/((1-τ²)P_n(τ)²) dτ + C ],   I(t) = ∫_t^1 P_n G dτ,
    with G = 8g/(1+t)² the sphere density.  At each zero z_k of P_n the inner
    factor has a double pole with vanishing residue; the outer integral is taken
    as its finite part, which makes w smooth across z_k.  The far field behaves
    like -P_n(-1) I(-1) log r.
    """
    J, z, ck, I_pi, P, P_over, _ = _voc_core(n, g, grid)
    t = np.asarray(grid.nodes_t)
    w = -P(t) * (J + C) - P(t) * (I_pi / 2.0) * (math.log(2.0) - np.log1p(t))
    for k, (zk, c) in enumerate(zip(z, ck)):
        w -= c * (P_over(t, k) - P(t) / (1.0 - zk))
    return w


def voc_regularity_jumps(n: int, g, grid: RadialGrid, rel_offset: float = 0.1) -> list[float]:
    """Jump of the regularized inner factor across each zero of P_n.

    The factor is sampled at z_k ± η, ± 2η, ± 3η (η a fraction of the mesh
    width, large enough to keep the pole subtraction above round-off) and
    extrapolated quadratically to z_k from either side; the two limits are
    compared relative to max(1, |value|).
    """
    _, z, _, _, _, _, info = _voc_core(n, g, grid)
    eta = rel_offset * grid.h
    jumps = []
    for zk in z:
        thz = math.acos(zk)
        pts = thz + eta * np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
        bps = np.unique(np.concatenate([info["inner_bps"], pts]))
        Ic = _cumulative_theta(info["inner"], bps)
        hv = info["h_reg"](pts, Ic[np.searchsorted(bps, pts)])
        left = 3 * hv[2] - 3 * hv[1] + hv[0]
        right = 3 * hv[3] - 3 * hv[4] + hv[5]
        jumps.append(float(abs(right - left) / max(1.0, abs(left))))
    if max(jumps, default=0.0) > 1e-6:
        warnings.warn("loss of accuracy near a zero of P_n", AccuracyWarning, stacklevel=2)
    return jumps
