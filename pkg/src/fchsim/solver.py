"""Preconditioned steepest descent solver for the per-step nonlinear system.

One time step solves N(phi) = f for the new state, where N is strongly
monotone thanks to the convexity of the implicit energy part.  The solver
iterates

    L d_k = r_k - mean(r_k),      r_k = f - N(phi_k),
    phi_{k+1} = phi_k + alpha_k d_k,

with the constant-coefficient preconditioner

    L = 1/dt - eps^4 lap^3 + eps^2 theta1 lap^2
        - (lam^2 + lam eps^p eta + theta2) lap,

inverted exactly by FFT (its Fourier symbol is strictly positive), and
alpha_k the root of the scalar line function

    g(alpha) = <N(phi_k + alpha d_k) - f, d_k>.

g(0) = -<L d, d> < 0 whenever unconverged, so the root is bracketed by
doubling from alpha = 1 and polished with a secant/bisection hybrid.  Every
trial step is capped so the iterate keeps a fraction of its current distance
to the pure states +-1, where the logarithmic terms blow up; if the root lies
beyond that cap the capped step is taken (it still decreases the objective)
and later iterations re-center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, SpectralWorkspace, cell_avg, face_avg, face_diff, laplacian
from .energy import nonlinear_map, rhs_explicit
from .potential import PhysParams, PotentialDomainError, require_admissible
from ._kernels import (
    HAVE_NUMBA,
    fast_residual,
    lap2d,
    line_g_2d,
    line_setup_2d,
    step_cap_2d,
)

__all__ = [
    "SolverConfig",
    "SolveReport",
    "SolverDivergedError",
    "LineSearchError",
    "precond_symbol",
    "precond_solve",
    "admissible_step_cap",
    "LineObjective",
    "line_minimize",
    "psd_solve",
]


class SolverDivergedError(RuntimeError):
    """The descent iteration hit its cap without meeting the tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class LineSearchError(RuntimeError):
    """The line function could not be bracketed within the evaluation budget."""


@dataclass(frozen=True)
class SolverConfig:
    """Descent solver tuning.

    theta1/theta2 shape the preconditioner symbol; tol_res is the relative
    residual target ||N(phi) - f||_2 <= tol_res * max(1, ||f||_2); ls_tol is
    the relative root tolerance on |g| and ls_margin the fraction of the
    current separation that trial steps must keep.
    """

    theta1: float = 1.0
    theta2: float = 1.0
    tol_res: float = 1e-9
    max_iter: int = 500
    ls_tol: float = 1e-10
    ls_max: int = 100
    ls_margin: float = 1e-4

    def __post_init__(self):
        if self.tol_res <= 0:
            raise ValueError(f"tol_res must be positive, got {self.tol_res}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if not 0.0 < self.ls_margin < 1.0:
            raise ValueError(f"ls_margin must lie in (0, 1), got {self.ls_margin}")
        if self.theta1 < 0 or self.theta2 < 0:
            raise ValueError("theta1 and theta2 must be nonnegative")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    line_search_evals: int
    margin: float


def precond_symbol(
    ws: SpectralWorkspace, dt: float, pp: PhysParams, cfg: SolverConfig
) -> np.ndarray:
    """Positive Fourier symbol of the preconditioner for this step size."""
    key = (dt, pp.eps, pp.lam, pp.eps_p_eta, cfg.theta1, cfg.theta2)
    cached = ws._symbol_cache.get(key)
    if cached is not None:
        return cached
    s = ws.sigma
    sym = (
        1.0 / dt
        + pp.eps**4 * s**3
        + pp.eps**2 * cfg.theta1 * s**2
        + (pp.lam**2 + pp.lam * pp.eps_p_eta + cfg.theta2) * s
    )
    ws._symbol_cache.clear()
    ws._symbol_cache[key] = sym
    return sym


def precond_solve(
    r: np.ndarray,
    dt: float,
    pp: PhysParams,
    cfg: SolverConfig,
    ws: SpectralWorkspace,
) -> np.ndarray:
    """Solve L d = r - mean(r); the result is mean-zero to round-off."""
    sym = precond_symbol(ws, dt, pp, cfg)
    rhat = ws.forward(r - np.mean(r))
    rhat[(0,) * rhat.ndim] = 0.0
    d = ws.inverse(rhat / sym)
    return d - np.mean(d)


def admissible_step_cap(phi: np.ndarray, d: np.ndarray, margin_frac: float) -> float:
    """Largest alpha keeping ||phi + alpha d||_inf <= 1 - margin_frac*(1 - ||phi||_inf)."""
    sup = float(np.max(np.abs(phi)))
    bound = 1.0 - margin_frac * (1.0 - sup)
    if HAVE_NUMBA and phi.ndim == 2:
        return float(step_cap_2d(phi, d, bound))
    cap = np.inf
    pos = d > 0
    if np.any(pos):
        cap = min(cap, float(np.min((bound - phi[pos]) / d[pos])))
    neg = d < 0
    if np.any(neg):
        cap = min(cap, float(np.min((-bound - phi[neg]) / d[neg])))
    return cap


class LineObjective:
    """Evaluator for g(alpha) = <N(phi + alpha d) - f, d>.

    All stencil quantities that are linear or quadratic in alpha are
    precomputed once, so one evaluation costs only the pointwise potential
    terms plus a couple of face averages.  Inner products against the
    divergence-form terms are moved onto faces by summation-by-parts.
    """

    def __init__(
        self,
        phi: np.ndarray,
        d: np.ndarray,
        f_rhs: np.ndarray,
        dt: float,
        grid: Grid,
        pp: PhysParams,
    ):
        self.phi = phi
        self.d = d
        self.grid = grid
        self.pp = pp
        vol = grid.cell_volume
        c_quad = pp.lam * (pp.lam + pp.eps_p_eta)
        self._use_kernel = HAVE_NUMBA and grid.ndim == 2

        if self._use_kernel:
            hx, hy = grid.spacing
            lap_phi = np.empty_like(phi)
            lap_d = np.empty_like(d)
            lap2d(phi, hx * hx, hy * hy, lap_phi)
            lap2d(d, hx * hx, hy * hy, lap_d)
            buffers = [np.empty_like(phi) for _ in range(7)]
            lin0_nf, lin1, s_fd = line_setup_2d(
                phi, d, f_rhs, lap_phi, lap_d, dt, pp.eps**4, c_quad, hx, hy, vol,
                *buffers,
            )
            self._lin0 = lin0_nf - vol * s_fd
            self._lin1 = lin1
            self.lap_d = lap_d
            self._gsq_0, self._gsq_1, self._gsq_2 = buffers[0:3]
            self._face_p = [buffers[3], buffers[5]]
            self._face_q = [buffers[4], buffers[6]]
        else:
            lap_d = laplacian(d, grid)
            lap_phi = laplacian(phi, grid)
            bilap_phi = laplacian(lap_phi, grid)
            bilap_d = laplacian(lap_d, grid)
            # <N(phi_a), d> linear-in-alpha pieces: phi_a/dt and the linear
            # part of var_convex hit with the Laplacian moved onto d.
            self._lin0 = vol * (
                float(np.sum(phi * d)) / dt
                - pp.eps**4 * float(np.sum(bilap_phi * lap_d))
                - c_quad * float(np.sum(phi * lap_d))
            ) - vol * float(np.sum(f_rhs * d))
            self._lin1 = vol * (
                float(np.sum(d * d)) / dt
                - pp.eps**4 * float(np.sum(bilap_d * lap_d))
                - c_quad * float(np.sum(d * lap_d))
            )
            self.lap_d = lap_d
            # Face data for the nonlinear gradient terms: D phi, D d, and the
            # products with D(lap d) the per-axis face inner products need.
            dphi_faces = [face_diff(phi, grid, a) for a in range(grid.ndim)]
            dd_faces = [face_diff(d, grid, a) for a in range(grid.ndim)]
            dlap_faces = [face_diff(lap_d, grid, a) for a in range(grid.ndim)]
            self._face_p = [dphi_faces[a] * dlap_faces[a] for a in range(grid.ndim)]
            self._face_q = [dd_faces[a] * dlap_faces[a] for a in range(grid.ndim)]
            # avg(|D phi_a|^2) = A + 2 alpha B + alpha^2 C, summed over axes.
            A = np.zeros_like(phi)
            B = np.zeros_like(phi)
            C = np.zeros_like(phi)
            for a in range(grid.ndim):
                A += cell_avg(dphi_faces[a] ** 2, grid, a)
                B += cell_avg(dphi_faces[a] * dd_faces[a], grid, a)
                C += cell_avg(dd_faces[a] ** 2, grid, a)
            self._gsq_0, self._gsq_1, self._gsq_2 = A, B, C
        self._vol = vol
        self.evals = 0

    def __call__(self, alpha: float) -> float:
        pp = self.pp
        grid = self.grid
        self.evals += 1
        if self._use_kernel:
            point, face = line_g_2d(
                self.phi,
                self.d,
                self.lap_d,
                self._gsq_0,
                self._gsq_1,
                self._gsq_2,
                self._face_p[0],
                self._face_q[0],
                self._face_p[1],
                self._face_q[1],
                alpha,
                pp.eps**2,
                self._vol,
            )
            if np.isnan(point):
                raise PotentialDomainError(
                    f"line-search trial alpha = {alpha!r} left the phase domain"
                )
            return self._lin0 + alpha * self._lin1 + point + face

        phi_a = self.phi + alpha * self.d
        one_minus = 1.0 - phi_a * phi_a
        if np.min(one_minus) <= 0.0:
            raise PotentialDomainError(
                f"line-search trial alpha = {alpha!r} left the phase domain"
            )
        b = np.log1p(phi_a) - np.log1p(-phi_a)
        b1 = 2.0 / one_minus
        gsq = self._gsq_0 + alpha * (2.0 * self._gsq_1 + alpha * self._gsq_2)

        # Pointwise var_convex terms against lap(d):
        # b b1 + eps^2 b2 gsq = (2 b one_minus + 4 eps^2 phi gsq) / one_minus^2.
        num = 2.0 * b * one_minus + (4.0 * pp.eps**2) * phi_a * gsq
        pointwise = -self._vol * float(np.sum(num / (one_minus * one_minus) * self.lap_d))
        # Divergence term moved onto faces: <lap d, d_a(avg(b1) Dphi_a)>
        # = -[D_a lap d, avg(b1) Dphi_a]; it enters var_convex with factor -2,
        # and var_convex enters g negated, giving -2 overall.
        face_sum = 0.0
        for a in range(grid.ndim):
            avg_b1 = face_avg(b1, grid, a)
            face_sum += float(np.sum(avg_b1 * (self._face_p[a] + alpha * self._face_q[a])))
        return (
            self._lin0
            + alpha * self._lin1
            + pointwise
            - 2.0 * pp.eps**2 * self._vol * face_sum
        )


def line_minimize(
    phi: np.ndarray,
    d: np.ndarray,
    f_rhs: np.ndarray,
    dt: float,
    grid: Grid,
    pp: PhysParams,
    cfg: SolverConfig,
    g0: float | None = None,
    hint: float | None = None,
) -> tuple[float, int]:
    """Root of g(alpha) inside the admissible interval.

    Returns (alpha, evaluations).  When the root lies beyond the admissibility
    cap, the cap itself is returned; g is still negative there, so the step
    decreases the descent objective.  ``g0`` may carry a precomputed g(0)
    (the descent iteration knows it as -<residual, d>); ``hint`` seeds the
    bracket with the previous accepted step length.
    """
    require_admissible(phi, "line search base point")
    if not np.any(d):
        return 0.0, 0

    g = LineObjective(phi, d, f_rhs, dt, grid, pp)
    cap = admissible_step_cap(phi, d, cfg.ls_margin)

    if g0 is None:
        g0 = g(0.0)
    scale = abs(g0)
    if scale == 0.0 or g0 > 0.0:
        # No descent left along d at this scale; converged step.
        return 0.0, g.evals
    tol = cfg.ls_tol * scale

    lo, g_lo = 0.0, g0
    hi = hint if hint is not None and hint > 0.0 else 1.0
    while hi > cap:
        hi *= 0.5
    at_cap = False
    while True:
        if g.evals >= cfg.ls_max:
            raise LineSearchError(
                f"no sign change within {cfg.ls_max} evaluations (alpha up to {hi:.3e})"
            )
        g_hi = g(hi)
        if g_hi >= 0.0:
            break
        if at_cap:
            return hi, g.evals
        lo, g_lo = hi, g_hi
        hi *= 2.0
        if hi >= cap:
            hi = cap
            at_cap = True
    if abs(g_hi) <= tol:
        return hi, g.evals

    # Secant with bisection safeguarding on the bracket [lo, hi].  Near
    # convergence g sits at the floating-point noise floor and |g| <= tol may
    # be unreachable, so a collapsed bracket also counts as success; forcing a
    # bisection whenever the previous cut failed to halve the bracket keeps
    # progress guaranteed.
    best_alpha, best_val = hi, abs(g_hi)
    force_bisect = False
    while g.evals < cfg.ls_max:
        width = hi - lo
        if width <= 1e-14 * max(1.0, hi):
            return best_alpha, g.evals
        denom = g_hi - g_lo
        alpha = hi - g_hi * width / denom if denom != 0 and not force_bisect else 0.5 * (lo + hi)
        if not (lo < alpha < hi):
            alpha = 0.5 * (lo + hi)
        val = g(alpha)
        if abs(val) < best_val:
            best_alpha, best_val = alpha, abs(val)
        if abs(val) <= tol:
            return alpha, g.evals
        if val < 0.0:
            lo, g_lo = alpha, val
        else:
            hi, g_hi = alpha, val
        force_bisect = (hi - lo) > 0.5 * width
    # Budget exhausted with a valid bracket: the root is localized, take the
    # best point seen.
    return best_alpha, g.evals


def psd_solve(
    phi_n: np.ndarray,
    dt: float,
    grid: Grid,
    pp: PhysParams,
    cfg: SolverConfig,
    ws: SpectralWorkspace,
    source: np.ndarray | None = None,
    phi_init: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Advance one semi-implicit step by preconditioned steepest descent.

    Solves N(phi) = rhs_explicit(phi_n) (+ source) to the configured relative
    residual.  The returned state has the same mean as phi_n to round-off
    (every search direction is mean-zero) and is strictly admissible.

    ``phi_init`` may supply a better starting iterate (the adaptive driver
    passes a linear extrapolation of the two previous states); it is used
    only when admissible and mean-consistent with ``phi_n``.

    The requested tolerance is floored at the representable limit
    eps_machine * ||phi_n||_2 * rms(symbol): rounding the state itself
    perturbs N(phi) by that much, so no float64 iterate can do better when
    the sixth-order symbol is large.  Residual content at that level sits in
    the stiffest modes and moves the state by a vanishing amount.
    """
    require_admissible(phi_n, "previous step state")
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")

    f = rhs_explicit(phi_n, dt, grid, pp)
    if source is not None:
        f = f + source
    vol = grid.cell_volume
    f_norm = float(np.sqrt(vol * np.sum(f * f)))
    sym = precond_symbol(ws, dt, pp, cfg)
    phi_norm = float(np.sqrt(vol * np.sum(phi_n * phi_n)))
    fp_floor = np.finfo(float).eps * phi_norm * float(np.sqrt(np.mean(sym**2)))
    tol = max(cfg.tol_res * max(1.0, f_norm), fp_floor)

    phi = phi_n.copy()
    if phi_init is not None:
        sup0 = float(np.max(np.abs(phi_n)))
        headroom = 1.0 - 0.5 * (1.0 - sup0)
        candidate = phi_init + (np.mean(phi_n) - np.mean(phi_init))
        if float(np.max(np.abs(candidate))) <= headroom:
            phi = candidate
    ls_evals_total = 0
    use_kernel = HAVE_NUMBA and grid.ndim == 2
    work = tuple(np.empty_like(phi) for _ in range(4)) if use_kernel else None
    alpha_prev: float | None = None
    for it in range(cfg.max_iter + 1):
        if use_kernel:
            r, res = fast_residual(phi, f, dt, grid, pp, work)
        else:
            r = f - nonlinear_map(phi, dt, grid, pp)
            res = float(np.sqrt(vol * np.sum(r * r)))
        if res <= tol:
            margin = 1.0 - float(np.max(np.abs(phi)))
            return phi, SolveReport(it, res, ls_evals_total, margin)
        if it == cfg.max_iter:
            raise SolverDivergedError(
                f"residual {res:.3e} > tolerance {tol:.3e} after {it} iterations",
                residual=res,
                iterations=it,
            )
        d = precond_solve(r, dt, pp, cfg, ws)
        g0 = -vol * float(np.sum(r * d))
        alpha, evals = line_minimize(
            phi, d, f, dt, grid, pp, cfg, g0=g0, hint=alpha_prev
        )
        ls_evals_total += evals
        if alpha == 0.0:
            raise SolverDivergedError(
                f"stalled line search at residual {res:.3e} (tolerance {tol:.3e})",
                residual=res,
                iterations=it,
            )
        alpha_prev = alpha
        phi = phi + alpha * d
    raise AssertionError("unreachable")
