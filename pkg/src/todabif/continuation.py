"""Projected radial system, Newton corrector and branch continuation.

Write u = U_μ + (φ+ψ)/2, v = U_μ + (φ-ψ)/2 with (2+μ)e^{U_μ} = 64/(8+r²)².
In the sphere variable t = (8-r²)/(8+r²), with a, b = (φ±ψ)/2 and
λ = (2-μ)/(2+μ), the projected system reads

    -Δ_S φ = 2(e^a + e^b - 2) + 2 L t,
    -Δ_S ψ = 2λ(e^a - e^b),
    K(φ) = -2 ∫ t φ dt = 0.

Each field row is integrated over its finite-volume cell, so rows carry the
measure of ∫ (planar residual) r dr over the cell.  Regularity at r = 0 and
boundedness at infinity are the zero-flux faces at θ = 0 and θ = π.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np
from scipy import sparse
from scipy.linalg import eigvalsh_tridiagonal
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from todabif.closed_forms import JostWangParams, jostwang_eval
from todabif.radial_calculus import RadialGrid, ell
from todabif.spectral import legendre_P, nearest_mode

EXP_GUARD = 50.0


class ContinuationError(RuntimeError):
    """Base class for solver failures."""


class ConvergenceError(ContinuationError):
    """Newton did not reach the tolerance within max_iter."""


class SingularJacobianError(ContinuationError):
    """The linearization could not be factored."""


class StepUnderflowError(ContinuationError):
    """The continuation step was halved below its floor."""


class FieldOverflowError(ArithmeticError):
    """An exponent (φ±ψ)/2 left the safe range."""


@dataclass(frozen=True)
class FieldPair:
    phi: np.ndarray
    psi: np.ndarray
    L: float
    mu: float

    def __post_init__(self) -> None:
        if not self.mu > -2.0:
            raise ValueError("mu must be > -2")

    def base(self, grid: RadialGrid) -> np.ndarray:
        """U_μ on the grid nodes: 2ℓ - log(2+μ)."""
        return 2.0 * ell(grid.theta) - math.log(2.0 + self.mu)

    def u(self, grid: RadialGrid) -> np.ndarray:
        return self.base(grid) + 0.5 * (self.phi + self.psi)

    def v(self, grid: RadialGrid) -> np.ndarray:
        return self.base(grid) + 0.5 * (self.phi - self.psi)


@dataclass
class BranchState:
    fields: FieldPair
    epsilon: float
    arclength: float
    diagnostics: Any = None
    iterations: int = 0
    residual: float = 0.0
    # coefficients σ in u ≈ σ ℓ at infinity; 2 on bifurcating branches
    log_coeffs: tuple[float, float] = (2.0, 2.0)
    family: str = "branch"


@dataclass(frozen=True)
class NewtonResult:
    state: FieldPair
    iterations: int
    residual: float


class Crossing(NamedTuple):
    mu: float
    index: int
    gap: float


def _lam(mu: float) -> float:
    return (2.0 - mu) / (2.0 + mu)


def _dlam(mu: float) -> float:
    return -4.0 / (2.0 + mu) ** 2


def trivial_state(grid: RadialGrid, mu: float) -> FieldPair:
    z = np.zeros(grid.size)
    return FieldPair(z, z.copy(), 0.0, mu)


def _exponents(phi, psi):
    a = 0.5 * (phi + psi)
    b = 0.5 * (phi - psi)
    if np.max(np.abs(a), initial=0.0) > EXP_GUARD or np.max(np.abs(b), initial=0.0) > EXP_GUARD:
        raise FieldOverflowError("|(φ±ψ)/2| exceeds the exponential guard")
    return a, b


def _require_fv(grid: RadialGrid) -> None:
    if not grid.is_finite_volume:
        raise ValueError("continuation needs a finite-volume grid (make_grid)")


def residual(state: FieldPair, grid: RadialGrid) -> np.ndarray:
    """Stacked cell-integrated residual [φ rows, ψ rows, K]."""
    _require_fv(grid)
    S, A, m = grid.stiffness(), grid.areas, grid.t_moments
    a, b = _exponents(state.phi, state.psi)
    ea, eb = np.expm1(a), np.expm1(b)
    r_phi = S @ state.phi - 2.0 * A * (ea + eb) - 2.0 * state.L * m
    r_psi = S @ state.psi - 2.0 * _lam(state.mu) * A * (ea - eb)
    k = -2.0 * np.dot(m, state.phi)
    return np.concatenate([r_phi, r_psi, [k]])


def mu_derivative(state: FieldPair, grid: RadialGrid) -> np.ndarray:
    """∂(residual)/∂μ; only the ψ rows depend on μ."""
    a, b = _exponents(state.phi, state.psi)
    out = np.zeros(2 * grid.size + 1)
    out[grid.size : 2 * grid.size] = -2.0 * _dlam(state.mu) * grid.areas * (np.expm1(a) - np.expm1(b))
    return out


def jacobian(state: FieldPair, grid: RadialGrid) -> sparse.csr_matrix:
    """Analytic derivative of residual with respect to (φ, ψ, L)."""
    _require_fv(grid)
    S, A, m = grid.stiffness(), grid.areas, grid.t_moments
    a, b = _exponents(state.phi, state.psi)
    sp, sm = np.exp(a) + np.exp(b), np.exp(a) - np.exp(b)
    lam = _lam(state.mu)
    col = sparse.csr_matrix(-2.0 * m[:, None])
    return sparse.bmat(
        [
            [S - sparse.diags(A * sp), sparse.diags(-A * sm), col],
            [sparse.diags(-lam * A * sm), S - sparse.diags(lam * A * sp), None],
            [col.T, None, None],
        ],
        format="csr",
    )


def cell_average(res: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Convert field rows to cell averages of the planar residual; scalars pass through."""
    n = grid.size
    out = np.array(res, dtype=float)
    out[:n] /= grid.quad_weights
    out[n : 2 * n] /= grid.quad_weights
    return out


def residual_norm(state: FieldPair, grid: RadialGrid) -> float:
    return float(np.max(np.abs(cell_average(residual(state, grid), grid))))


def kernel_weight(n: int, grid: RadialGrid) -> np.ndarray:
    return legendre_P(n, grid.nodes_t)


def amplitude(state: FieldPair, n: int, grid: RadialGrid) -> float:
    """ε with ψ ≈ 2ε P_n: ⟨ψ, P_n⟩ / (2⟨P_n, P_n⟩) in the cell-area inner product."""
    P = kernel_weight(n, grid)
    return float(np.dot(grid.areas * P, state.psi) / (2.0 * np.dot(grid.areas * P, P)))


def _pack(s: FieldPair) -> np.ndarray:
    return np.concatenate([s.phi, s.psi, [s.L, s.mu]])


def _unpack(x: np.ndarray, n: int) -> FieldPair:
    return FieldPair(x[:n].copy(), x[n : 2 * n].copy(), float(x[2 * n]), float(x[2 * n + 1]))


def _solve(J, rhs) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            dx = spsolve(sparse.csc_matrix(J), rhs)
        except (MatrixRankWarning, RuntimeError) as exc:
            raise SingularJacobianError(str(exc)) from exc
    if not np.all(np.isfinite(dx)):
        raise SingularJacobianError("non-finite Newton update")
    return dx


def _newton(state: FieldPair, grid: RadialGrid, tol: float, max_iter: int, extra=None) -> NewtonResult:
    """Newton on (φ, ψ, L), or on (φ, ψ, L, μ) when ``extra`` supplies one scalar row.

    ``extra`` is (value(x), gradient) with x the packed (φ, ψ, L, μ) vector.
    """
    N = grid.size
    x = _pack(state)

    def evaluate(x):
        s = _unpack(x, N)
        F = residual(s, grid)
        if extra is not None:
            F = np.append(F, extra[0](x))
        scaled = cell_average(F[: 2 * N + 1], grid)
        norm = float(np.max(np.abs(np.append(scaled, F[2 * N + 1 :]))))
        return s, F, norm

    s, F, norm = evaluate(x)
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise ConvergenceError(f"no convergence after {max_iter} iterations (residual {norm:.3e})")
        J = jacobian(s, grid)
        if extra is not None:
            J = sparse.bmat(
                [
                    [J, sparse.csr_matrix(mu_derivative(s, grid)[:, None])],
                    [sparse.csr_matrix(extra[1][None, :-1]), sparse.csr_matrix([[extra[1][-1]]])],
                ],
                format="csr",
            )
            x = x - _solve(J, F)
        else:
            x[: 2 * N + 1] -= _solve(J, F)
        it += 1
        try:
            s, F, norm = evaluate(x)
        except FieldOverflowError as exc:
            raise ConvergenceError(f"iterate overflowed at iteration {it}") from exc
        if not np.isfinite(norm):
            raise ConvergenceError("non-finite residual")
    return NewtonResult(s, it, norm)


def newton_correct(
    state: FieldPair,
    grid: RadialGrid,
    tol: float = 1e-10,
    max_iter: int = 25,
    amplitude: tuple[int, float] | None = None,
) -> NewtonResult:
    """Newton at fixed μ, or with μ free and the amplitude pinned when ``amplitude=(n, ε)``.

    The stopping metric is the sup of cell-averaged planar residuals together
    with the scalar constraint rows.
    """
    if amplitude is None:
        return _newton(state, grid, tol, max_iter)
    n, eps = amplitude
    N = grid.size
    P = kernel_weight(n, grid)
    g = np.zeros(2 * N + 2)
    g[N : 2 * N] = grid.areas * P / (2.0 * np.dot(grid.areas * P, P))
    return _newton(state, grid, tol, max_iter, extra=(lambda x: float(g @ x) - eps, g))


def _sym_operator(grid: RadialGrid):
    """Diagonal and off-diagonal of A^{-1/2} S A^{-1/2}."""
    s = 1.0 / np.sqrt(grid.areas)
    return grid.stiff_diag * s * s, grid.stiff_off * s[:-1] * s[1:]


def _discrete_eigs(grid: RadialGrid, lo: int, hi: int) -> np.ndarray:
    d, e = _sym_operator(grid)
    return eigvalsh_tridiagonal(d, e, select="i", select_range=(lo, hi))


def _mu_of_kappa(kappa):
    lam = 0.5 * np.asarray(kappa, float)
    return 2.0 * (1.0 - lam) / (1.0 + lam)


def discrete_bifurcation_mu(n: int, grid: RadialGrid) -> float:
    """μ where the discrete ψ-block S - 2λA is singular in its n-th mode."""
    _require_fv(grid)
    return float(_mu_of_kappa(_discrete_eigs(grid, n, n)[0]))


def discrete_kernel(n: int, grid: RadialGrid) -> np.ndarray:
    """Null vector of the discrete ψ-block at its n-th crossing, signed like P_n, ‖·‖_A = 1."""
    from scipy.linalg import eigh_tridiagonal

    d, e = _sym_operator(grid)
    _, vec = eigh_tridiagonal(d, e, select="i", select_range=(n, n))
    w = vec[:, 0] / np.sqrt(grid.areas)
    if np.dot(grid.areas * w, kernel_weight(n, grid)) < 0:
        w = -w
    return w / math.sqrt(np.dot(grid.areas * w, w))


def detect_bifurcations(mu_range: tuple[float, float], grid: RadialGrid, match_tol: float = 1e-2) -> list[Crossing]:
    """Crossings of the trivial branch where the ψ-block loses invertibility.

    The ψ-block S - 2λ(μ)A is singular exactly when 2λ(μ) is an eigenvalue κ_j
    of the pencil (S, A).  The inertia of the pencil below 2λ changes only at
    such μ, which are located from κ_j in closed form.  Crossings are returned
    in increasing μ, matched to the nearest continuum mode.
    """
    _require_fv(grid)
    lo, hi = sorted(float(x) for x in mu_range)
    if lo <= -2.0 or hi >= 2.0:
        raise ValueError("mu_range must lie inside (-2, 2)")
    d, e = _sym_operator(grid)
    kap = eigvalsh_tridiagonal(d, e, select="v", select_range=(2.0 * _lam(hi), 2.0 * _lam(lo)))
    out = []
    for j, kappa in enumerate(np.atleast_1d(kap)):
        mu = float(_mu_of_kappa(kappa))
        if not lo <= mu <= hi:
            continue
        n, gap = nearest_mode(mu)
        if n >= 1 and gap <= match_tol:
            out.append(Crossing(mu, n, gap))
    return sorted(out)


# ------------------------------------------------------------ branch tracing

def _weights(grid: RadialGrid) -> np.ndarray:
    return np.concatenate([grid.areas, grid.areas, [1.0, 1.0]])


def _wnorm(x, w) -> float:
    return math.sqrt(float(np.dot(w * x, x)))


def _diagnose(state: BranchState, grid: RadialGrid) -> None:
    from todabif.diagnostics import diagnose_state

    state.diagnostics = diagnose_state(state, grid)


def _trace_side(n, eps_max, steps, grid, tol, max_iter, x0, tau0, sign, ds0):
    N = grid.size
    w = _weights(grid)
    P = kernel_weight(n, grid)
    g_amp = np.zeros(2 * N + 2)
    g_amp[N : 2 * N] = grid.areas * P / (2.0 * np.dot(grid.areas * P, P))
    target = sign * eps_max
    states = []
    x_prev, tau = x0, sign * tau0
    arc = 0.0
    ds, ds_min = ds0, ds0 * 2.0**-12
    while True:
        eps_prev = float(g_amp @ x_prev)
        # land exactly on the amplitude once the next step would pass it
        landing = abs(eps_prev + ds * float(g_amp @ tau)) >= eps_max * (1.0 - 0.5 / steps)
        if landing:
            h_eps = (target - eps_prev) / float(g_amp @ tau)
            guess = x_prev + h_eps * tau
            extra = (lambda x: float(g_amp @ x) - target, g_amp)
        else:
            guess = x_prev + ds * tau
            xp, tp = x_prev.copy(), tau.copy()
            extra = (lambda x, xp=xp, tp=tp, d=ds: float(np.dot(w * tp, x - xp)) - d, w * tau)
        try:
            res = _newton(_unpack(guess, N), grid, tol, max_iter, extra=extra)
        except (ConvergenceError, SingularJacobianError):
            ds *= 0.5
            if ds < ds_min:
                raise StepUnderflowError(f"step fell below {ds_min:.3e} on the n={n} branch")
            continue
        x_new = _pack(res.state)
        step = x_new - x_prev
        arc += _wnorm(step, w)
        eps = float(g_amp @ x_new)
        states.append(BranchState(res.state, eps, sign * arc, None, res.iterations, res.residual))
        if landing:
            return states
        tau = step / _wnorm(step, w)
        x_prev = x_new


def trace_branch(
    n: int,
    eps_max: float,
    steps: int,
    grid: RadialGrid,
    tol: float = 1e-10,
    max_iter: int = 25,
    diagnose: bool = True,
) -> list[BranchState]:
    """Pseudo-arclength continuation of the n-th branch to |ε| = eps_max on both sides.

    Starts at the discrete crossing μ_n^h with the kernel tangent (0, P_n, 0, 0),
    uses secant tangents afterwards, and pins the final state of each side by the
    amplitude ε = ±eps_max.  States come back sorted by ε, the onset included.
    """
    _require_fv(grid)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not eps_max > 0 or steps < 1:
        raise ValueError("need eps_max > 0 and steps >= 1")
    N = grid.size
    mu0 = discrete_bifurcation_mu(n, grid)
    onset = BranchState(trivial_state(grid, mu0), 0.0, 0.0)
    x0 = _pack(onset.fields)
    ker = discrete_kernel(n, grid)
    tau0 = np.zeros(2 * N + 2)
    tau0[N : 2 * N] = ker
    P = kernel_weight(n, grid)
    ds0 = 2.0 * eps_max * math.sqrt(np.dot(grid.areas * P, P)) / steps
    minus = _trace_side(n, eps_max, steps, grid, tol, max_iter, x0, tau0, -1.0, ds0)
    plus = _trace_side(n, eps_max, steps, grid, tol, max_iter, x0, tau0, 1.0, ds0)
    states = sorted(minus + [onset] + plus, key=lambda s: s.epsilon)
    if diagnose:
        for s in states:
            _diagnose(s, grid)
    return states


# ------------------------------------------------------------ perturbation of Jost-Wang pairs

def _power_cells(grid: RadialGrid, expo: float) -> tuple[np.ndarray, np.ndarray]:
    """∫_cell ((1+t)/2)^expo dt and its derivative in expo, per cell."""
    faces = 0.5 * (1.0 + np.cos(np.concatenate([grid.theta[:1], _faces(grid)])))
    hi, lo = faces[:-1], faces[1:]
    k = expo + 1.0

    def F(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, 2.0 * x**k / k, 0.0)

    def dF(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, 2.0 * x**k * (np.log(np.where(x > 0, x, 1.0)) / k - 1.0 / k**2), 0.0)

    return F(hi) - F(lo), dF(hi) - dF(lo)


def _faces(grid: RadialGrid) -> np.ndarray:
    """Upper cell faces in θ recovered from the cell areas; the last equals π."""
    c = 1.0 - np.cumsum(grid.areas)
    return np.arccos(np.clip(c, -1.0, 1.0))


def _cartan_residual(x, mu, grid, pins):
    N = grid.size
    p, q, su, sv = x[:N], x[N : 2 * N], x[2 * N], x[2 * N + 1]
    if np.max(np.abs(p)) > EXP_GUARD or np.max(np.abs(q)) > EXP_GUARD:
        raise FieldOverflowError("sphere potential left the safe range")
    Wu, dWu = _power_cells(grid, su - 2.0)
    Wv, dWv = _power_cells(grid, sv - 2.0)
    ep, eq = np.exp(p), np.exp(q)
    S, A = grid.stiffness(), grid.areas
    Fp = S @ p - 4.0 * Wu * ep - 2.0 * mu * Wv * eq + su * A
    Fq = S @ q - 4.0 * Wv * eq - 2.0 * mu * Wu * ep + sv * A
    F = np.concatenate([Fp, Fq, [p[0] - pins[0], q[0] - pins[1]]])
    pin = sparse.csr_matrix(([1.0, 1.0], ([0, 1], [0, N])), shape=(2, 2 * N + 2))
    col = lambda c: sparse.csr_matrix(c[:, None])
    J = sparse.vstack(
        [
            sparse.hstack([S - sparse.diags(4.0 * Wu * ep), sparse.diags(-2.0 * mu * Wv * eq),
                           col(A - 4.0 * dWu * ep), col(-2.0 * mu * dWv * eq)]),
            sparse.hstack([sparse.diags(-2.0 * mu * Wu * ep), S - sparse.diags(4.0 * Wv * eq),
                           col(-2.0 * mu * dWu * ep), col(A - 4.0 * dWv * eq)]),
            pin,
        ],
        format="csr",
    )
    return F, J


def _cartan_newton(x, mu, grid, pins, tol, max_iter):
    it = 0
    for it in range(max_iter + 1):
        try:
            F, J = _cartan_residual(x, mu, grid, pins)
        except FieldOverflowError as exc:
            raise ConvergenceError(f"overflow at mu={mu}") from exc
        scale = np.concatenate([grid.quad_weights, grid.quad_weights, [1.0, 1.0]])
        norm = float(np.max(np.abs(F / scale)))
        if norm <= tol:
            return x, it, norm
        if it == max_iter:
            break
        x = x - _solve(J, F)
    raise ConvergenceError(f"Cartan continuation failed at mu={mu} (residual {norm:.3e})")


def _cartan_state(x, mu, grid, arc, it, norm) -> BranchState:
    N = grid.size
    lg = ell(grid.theta)
    u = x[2 * N] * lg + x[:N]
    v = x[2 * N + 1] * lg + x[N : 2 * N]
    base = 2.0 * lg - math.log(2.0 + mu)
    fp = FieldPair(u + v - 2.0 * base, u - v, 0.0, mu)
    return BranchState(fp, mu + 1.0, arc, None, it, norm, (float(x[2 * N]), float(x[2 * N + 1])), "cartan")


def perturb_cartan(
    p: JostWangParams,
    mu_target: float,
    steps: int,
    grid: RadialGrid,
    tol: float = 1e-8,
    max_iter: int = 25,
    diagnose: bool = True,
) -> list[BranchState]:
    """Continue the radial Jost-Wang pair from μ = -1 to mu_target at fixed u(0), v(0).

    Unknowns are u = σ_u ℓ + p, v = σ_v ℓ + q with σ free, so the far-field
    slopes are part of the solution.  The multiplier is frozen at zero.  The
    default tolerance sits above the round-off floor of cell averages near
    r = 0 for O(1) fields.
    """
    _require_fv(grid)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not -2.0 < mu_target < 2.0:
        raise ValueError("mu_target must lie in (-2, 2)")
    N = grid.size
    lg = ell(grid.theta)
    u0, v0 = jostwang_eval(p, grid.nodes_r)
    x = np.concatenate([u0 - 2.0 * lg, v0 - 2.0 * lg, [2.0, 2.0]])
    pins = (x[0], x[N])
    states = [_cartan_state(x, -1.0, grid, 0.0, 0, 0.0)]
    if mu_target != -1.0:
        mus = np.linspace(-1.0, mu_target, steps + 1)
        x_prev = None
        for k, mu in enumerate(mus):
            guess = x if x_prev is None or k < 2 else 2.0 * x - x_prev
            xn, it, norm = _cartan_newton(guess, float(mu), grid, pins, tol, max_iter)
            x_prev, x = x, xn
            if k > 0:
                states.append(_cartan_state(x, float(mu), grid, float(mu) + 1.0, it, norm))
    if diagnose:
        for s in states:
            _diagnose(s, grid)
    return states
