"""Discrete FCH energy, its convex-concave split, and the per-step system.

The free energy of a phase field phi couples the squared Cahn-Hilliard
chemical potential against the Cahn-Hilliard energy itself.  After
integrating the mixed term by parts (periodic boundary), the discrete energy
splits as E = E_c - E_e with both parts convex on admissible fields:

    E_c = eps^4/2 ||lap phi||^2 + 1/2 ||beta(phi)||^2
          + (lam^2 + lam eps^p eta)/2 ||phi||^2
          + eps^2 <beta'(phi), sum_axis avg(|D_axis phi|^2)>

    E_e = (eps^{2+p} eta / 2 + lam eps^2) ||grad phi||^2
          + lam <phi, beta(phi)> + eps^p eta <B(phi), 1>

Treating E_c implicitly and E_e explicitly gives the semi-implicit step

    (phi_new - phi_old) / dt = lap mu,
    mu = var_convex(phi_new) - var_concave(phi_old),

which this module exposes in solver-friendly form: the nonlinear map
N(phi) = phi/dt - lap var_convex(phi) and the explicit right-hand side
f = phi_old/dt - lap var_concave(phi_old), so that one step solves
N(phi_new) = f.

The mixed gradient term is evaluated exactly as written, face-square then
cell-average; the convexity of E_c depends on that ordering.  The biharmonic
is two Laplacian applications, never a fused stencil.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    Grid,
    cell_avg,
    cell_diff,
    face_avg,
    face_diff,
    grad_norm_sq,
    inner,
    laplacian,
)
from .potential import (
    PhysParams,
    beta,
    beta_prime,
    beta_second,
    mixing_family,
    require_admissible,
)

__all__ = [
    "EnergyBreakdown",
    "avg_grad_sq",
    "energy_convex",
    "energy_concave",
    "energy_total",
    "var_convex",
    "var_concave",
    "nonlinear_map",
    "rhs_explicit",
    "chemical_potential",
    "omega_field",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    """All energies monitored along a run.

    ``total = convex - concave`` holds to round-off, and
    ``willmore = total + eps^p eta * cahn_hilliard`` by construction.
    """

    total: float
    convex: float
    concave: float
    cahn_hilliard: float
    willmore: float


def avg_grad_sq(phi: np.ndarray, grid: Grid) -> np.ndarray:
    """Cell field sum_axis a_axis(|D_axis phi|^2)."""
    out = np.zeros_like(phi)
    for a in range(grid.ndim):
        d = face_diff(phi, grid, a)
        out += cell_avg(d * d, grid, a)
    return out


def energy_convex(phi: np.ndarray, grid: Grid, pp: PhysParams) -> float:
    require_admissible(phi, "energy argument")
    lap = laplacian(phi, grid)
    b = beta(phi)
    b1 = beta_prime(phi)
    quad = 0.5 * (pp.lam**2 + pp.lam * pp.eps_p_eta)
    return (
        0.5 * pp.eps**4 * inner(lap, lap, grid)
        + 0.5 * inner(b, b, grid)
        + quad * inner(phi, phi, grid)
        + pp.eps**2 * inner(b1, avg_grad_sq(phi, grid), grid)
    )


def energy_concave(phi: np.ndarray, grid: Grid, pp: PhysParams) -> float:
    require_admissible(phi, "energy argument")
    B, _, _ = mixing_family(phi, pp)
    b = beta(phi)
    grad_coeff = 0.5 * pp.eps**2 * pp.eps_p_eta + pp.lam * pp.eps**2
    return (
        grad_coeff * grad_norm_sq(phi, grid)
        + pp.lam * inner(phi, b, grid)
        + pp.eps_p_eta * inner(B, np.ones_like(B), grid)
    )


def energy_total(phi: np.ndarray, grid: Grid, pp: PhysParams) -> EnergyBreakdown:
    """Full energy with its split and the CH / Willmore diagnostics."""
    require_admissible(phi, "energy argument")
    B, F, _ = mixing_family(phi, pp)
    b = beta(phi)
    b1 = beta_prime(phi)
    lap = laplacian(phi, grid)
    gsq = grad_norm_sq(phi, grid)
    one = np.ones_like(phi)

    quad = 0.5 * (pp.lam**2 + pp.lam * pp.eps_p_eta)
    e_c = (
        0.5 * pp.eps**4 * inner(lap, lap, grid)
        + 0.5 * inner(b, b, grid)
        + quad * inner(phi, phi, grid)
        + pp.eps**2 * inner(b1, avg_grad_sq(phi, grid), grid)
    )
    grad_coeff = 0.5 * pp.eps**2 * pp.eps_p_eta + pp.lam * pp.eps**2
    e_e = (
        grad_coeff * gsq
        + pp.lam * inner(phi, b, grid)
        + pp.eps_p_eta * inner(B, one, grid)
    )
    total = e_c - e_e
    e_ch = 0.5 * pp.eps**2 * gsq + inner(F, one, grid)
    return EnergyBreakdown(
        total=total,
        convex=e_c,
        concave=e_e,
        cahn_hilliard=e_ch,
        willmore=total + pp.eps_p_eta * e_ch,
    )


def var_convex(phi: np.ndarray, grid: Grid, pp: PhysParams) -> np.ndarray:
    """Variational derivative of the convex energy part."""
    require_admissible(phi, "variational derivative argument")
    b = beta(phi)
    b1 = beta_prime(phi)
    b2 = beta_second(phi)
    out = pp.eps**4 * laplacian(laplacian(phi, grid), grid)
    out += b * b1
    out += pp.lam * (pp.lam + pp.eps_p_eta) * phi
    mixed = np.zeros_like(phi)
    for a in range(grid.ndim):
        d = face_diff(phi, grid, a)
        mixed += b2 * cell_avg(d * d, grid, a)
        mixed -= 2.0 * cell_diff(face_avg(b1, grid, a) * d, grid, a)
    out += pp.eps**2 * mixed
    return out


def var_concave(phi: np.ndarray, grid: Grid, pp: PhysParams) -> np.ndarray:
    """Variational derivative of the concave energy part."""
    require_admissible(phi, "variational derivative argument")
    return (
        -pp.eps**2 * (2.0 * pp.lam + pp.eps_p_eta) * laplacian(phi, grid)
        + pp.lam * phi * beta_prime(phi)
        + (pp.lam + pp.eps_p_eta) * beta(phi)
    )


def nonlinear_map(phi: np.ndarray, dt: float, grid: Grid, pp: PhysParams) -> np.ndarray:
    """Implicit side of one step: N(phi) = phi/dt - lap var_convex(phi)."""
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    return phi / dt - laplacian(var_convex(phi, grid, pp), grid)


def rhs_explicit(phi_old: np.ndarray, dt: float, grid: Grid, pp: PhysParams) -> np.ndarray:
    """Explicit side of one step: f = phi_old/dt - lap var_concave(phi_old).

    Defined so that solving N(phi_new) = f reproduces the semi-implicit
    scheme with mu = var_convex(phi_new) - var_concave(phi_old); the mean of
    f equals mean(phi_old)/dt since the Laplacian term is mean-free.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    return phi_old / dt - laplacian(var_concave(phi_old, grid, pp), grid)


def chemical_potential(
    phi_new: np.ndarray, phi_old: np.ndarray, grid: Grid, pp: PhysParams
) -> np.ndarray:
    """Chemical potential of the semi-implicit step joining the two states."""
    return var_convex(phi_new, grid, pp) - var_concave(phi_old, grid, pp)


def omega_field(phi: np.ndarray, grid: Grid, pp: PhysParams) -> np.ndarray:
    """Cahn-Hilliard chemical potential diagnostic -eps^2 lap phi + f(phi)."""
    require_admissible(phi, "omega argument")
    _, _, f = mixing_family(phi, pp)
    return -pp.eps**2 * laplacian(phi, grid) + f
