"""Initial conditions and presets for the four standard experiments.

Presets (grids, physical constants, horizons) follow the experiment matrix:

* ``convergence`` -- manufactured single-mode solution on the unit square,
  eps = 0.5, eta = 1, lam = 3, p = 2, with an explicit forcing derived below.
* ``pearling`` -- a circular bilayer ring on the unit square whose interface
  width parameter ``ell`` selects between splitting into pearls and staying a
  ring; eps = 0.03, eta = 4, p = 1.
* ``meandering`` -- a flat stripe with two sinusoidal edges of incommensurate
  wavelengths 12 and 15.  The stripe thresholds (6.4 and -5.6) force a domain
  far larger than the unit square; the preset uses x-length 30 (the least
  common period of the two sinusoids) and y in (-7.5, 7.5).
* ``spinodal`` -- uniform 0.5 plus +-0.01 uniform noise; eps = 0.008,
  eta = 8, p = 1.

The double-well depth lam = log(19)/0.9 used by the physical presets places
the potential minima exactly at +-0.9 (see :func:`well_depth`).

The manufactured forcing makes Phi(x,y,t) = sin(2 pi x) cos(2 pi y) cos(t)/pi
an exact solution of the continuous equation: S = dPhi/dt - lap mu(Phi) with
the continuous chemical potential mu.  Composite potential terms are
evaluated pointwise from the closed form of Phi (using its analytic first
derivatives); the Laplacians of the composites and the outer Laplacian are
applied by Fourier differentiation on a refined lattice whose points contain
the simulation cell centers, so restriction is plain subsampling of the
trigonometric interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .grid import Grid
from .potential import PhysParams, beta, beta_prime, beta_second

__all__ = [
    "Scenario",
    "well_depth",
    "init_pearling",
    "init_meandering",
    "init_spinodal",
    "manufactured_state",
    "manufactured_time_derivative",
    "manufactured_forcing",
    "preset",
    "PRESET_NAMES",
]

PEARLING_RADIUS = 0.42
PEARLING_AMPLITUDE = 0.9
SPINODAL_MEAN = 0.5
SPINODAL_NOISE = 0.01
RNG_NAME = "numpy-pcg64"


def well_depth(r_star: float) -> float:
    """Well depth lam making the mixing potential minima sit at +-r_star."""
    if not 0 < r_star < 1:
        raise ValueError(f"well location must lie in (0, 1), got {r_star}")
    return float(beta(r_star) / r_star)


@dataclass(frozen=True)
class Scenario:
    """A named experiment: grid, physics, horizon and IC parameters."""

    name: str
    grid: Grid
    phys: PhysParams
    t_end: float
    seed: int = 0
    ell: float = 0.35

    def initial_condition(self) -> np.ndarray:
        if self.name == "pearling":
            return init_pearling(self.grid, self.ell, self.phys.eps)
        if self.name == "meandering":
            return init_meandering(self.grid)
        if self.name == "spinodal":
            return init_spinodal(self.grid, self.seed)
        if self.name == "convergence":
            return manufactured_state(self.grid, 0.0)
        raise ValueError(f"unknown scenario {self.name!r}")


def _require_unit_square(grid: Grid, what: str) -> None:
    if grid.ndim != 2 or any(abs(l - 1.0) > 1e-12 for l in grid.lengths):
        raise ValueError(f"{what} needs the unit square, got lengths {grid.lengths}")


def init_pearling(
    grid: Grid,
    ell: float,
    eps: float,
    radius: float = PEARLING_RADIUS,
    center: tuple[float, float] = (0.5, 0.5),
    amplitude: float = PEARLING_AMPLITUDE,
) -> np.ndarray:
    """Circular bilayer ring: 2A/cosh((dist - radius)/(ell eps)) - A.

    The crest of the ring reaches +A at distance ``radius`` from the center
    and the background tends to -A; with the default A = 0.9 the range stays
    inside [-0.9, 0.9].
    """
    if ell <= 0:
        raise ValueError(f"interface width factor ell must be positive, got {ell}")
    _require_unit_square(grid, "pearling initial condition")
    x, y = grid.mesh()
    dist = np.sqrt((x - center[0]) ** 2 + (y - center[1]) ** 2)
    return 2.0 * amplitude / np.cosh((dist - radius) / (ell * eps)) - amplitude


def init_meandering(grid: Grid) -> np.ndarray:
    """Stripe of +0.9 between two sinusoidal edges, -0.9 outside.

    The upper edge is 0.5 sin(4 pi x / 12) + 6.4 and the lower edge
    0.5 sin(4 pi x / 15) - 5.6, so the x-length must be a common period of
    both sinusoids (a multiple of 30) for periodic continuity, and the
    y-interval is centered: y ranges over (-len_y/2, len_y/2).
    """
    if grid.ndim != 2:
        raise ValueError("meandering initial condition needs a 2D grid")
    len_x, len_y = grid.lengths
    for period in (6.0, 7.5):
        ratio = len_x / period
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(
                f"x-length {len_x} is not a common period of the stripe edges "
                f"(needs a multiple of both 6 and 7.5)"
            )
    x, y_raw = grid.mesh()
    y = y_raw - 0.5 * len_y
    upper = 0.5 * np.sin(4.0 * np.pi * x / 12.0) + 6.4
    lower = 0.5 * np.sin(4.0 * np.pi * x / 15.0) - 5.6
    phi = np.full(grid.shape, 0.9)
    phi[(y > upper) | (y < lower)] = -0.9
    return phi


def init_spinodal(grid: Grid, seed: int) -> np.ndarray:
    """Uniform mixture 0.5 with +-0.01 uniform noise, deterministic per seed."""
    rng = np.random.default_rng(seed)
    r = rng.random(grid.shape)
    return SPINODAL_MEAN + SPINODAL_NOISE * (2.0 * r - 1.0)


def manufactured_state(grid: Grid, t: float) -> np.ndarray:
    """Exact test solution sin(2 pi x) cos(2 pi y) cos(t) / pi at cell centers."""
    _require_unit_square(grid, "manufactured solution")
    x, y = grid.mesh()
    return np.sin(2.0 * np.pi * x) * np.cos(2.0 * np.pi * y) * (np.cos(t) / np.pi)


def manufactured_time_derivative(grid: Grid, t: float) -> np.ndarray:
    _require_unit_square(grid, "manufactured solution")
    x, y = grid.mesh()
    return -np.sin(2.0 * np.pi * x) * np.cos(2.0 * np.pi * y) * (np.sin(t) / np.pi)


def _fourier_laplacian(values: np.ndarray, lengths: tuple[float, ...]) -> np.ndarray:
    """Continuous (trigonometric-interpolant) Laplacian on a uniform lattice."""
    shape = values.shape
    per_axis = []
    for a, (n, L) in enumerate(zip(shape, lengths)):
        if a == len(shape) - 1:
            k = np.arange(n // 2 + 1)
        else:
            k = np.fft.fftfreq(n, d=1.0 / n)
        per_axis.append(-((2.0 * np.pi * k / L) ** 2))
    sym = per_axis[0]
    for arr in per_axis[1:]:
        sym = sym[..., None] + arr
    return np.fft.irfftn(np.fft.rfftn(values) * sym, s=shape, axes=tuple(range(len(shape))))


def _restrict_spectrum(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Band-limit a fine-lattice 2D field to a coarse lattice.

    Both lattices must share the same physical offset; the coefficient block
    below the coarse Nyquist band is kept (Nyquist row/column dropped, where
    the content of smooth fields is negligible) and synthesized at the coarse
    resolution.  Truncation also discards the fine-band rounding noise that
    repeated spectral differentiation amplifies.
    """
    m0, m1 = values.shape
    n0, n1 = shape
    if (m0, m1) == (n0, n1):
        return values.copy()
    fhat = np.fft.rfftn(values)
    out = np.zeros((n0, n1 // 2 + 1), dtype=complex)
    half0 = n0 // 2
    out[:half0, : n1 // 2] = fhat[:half0, : n1 // 2]
    out[-(half0 - 1):, : n1 // 2] = fhat[-(half0 - 1):, : n1 // 2]
    out *= (n0 * n1) / (m0 * m1)
    return np.fft.irfftn(out, s=shape, axes=(0, 1))


def manufactured_forcing(
    grid: Grid, t: float, pp: PhysParams, refine_factor: int = 4
) -> np.ndarray:
    """Forcing S(., t) making the manufactured state an exact solution.

    The composites are sampled on a lattice refined by ``refine_factor`` and
    offset by half a simulation cell, so its trigonometric interpolant is
    evaluated at the simulation cell centers by plain band truncation.  The
    Laplacians of the sampled single mode are closed-form (its spectral
    derivative); only the potential composites and the outer Laplacian need
    the transform.  The residual mean (spectrally small) is removed so forced
    runs conserve the discrete mean exactly.
    """
    _require_unit_square(grid, "manufactured forcing")
    if refine_factor < 4:
        raise ValueError(f"refine_factor must be at least 4, got {refine_factor}")
    R = int(refine_factor)
    fine_shape = tuple(R * n for n in grid.shape)
    coords = [
        (np.arange(m) / m + 0.5 / n) * L
        for m, n, L in zip(fine_shape, grid.shape, grid.lengths)
    ]
    x, y = np.meshgrid(*coords, indexing="ij")

    cos_t = np.cos(t)
    phi = np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) * (cos_t / np.pi)
    gx = 2.0 * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y) * cos_t
    gy = -2.0 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y) * cos_t
    grad_sq = gx * gx + gy * gy

    b = beta(phi)
    b1 = beta_prime(phi)
    b2 = beta_second(phi)
    # The sampled state is a single resolved mode: its spectral Laplacian and
    # bilaplacian reduce to -8 pi^2 phi and 64 pi^4 phi exactly.  The chain
    # rule gives the composite Laplacian pointwise from the same closed forms;
    # differentiating beta(phi) through a transform instead would stack two
    # spectral symbols and amplify rounding noise beyond the self-convergence
    # target of the refinement check.
    lap_phi = -8.0 * np.pi**2 * phi
    bilap_phi = 64.0 * np.pi**4 * phi
    lap_b = b1 * lap_phi + b2 * grad_sq

    mu = (
        pp.eps**4 * bilap_phi
        + b * b1
        + pp.eps**2 * b2 * grad_sq
        - 2.0 * pp.eps**2 * lap_b
        - pp.lam * phi * b1
        + pp.eps**2 * (2.0 * pp.lam + pp.eps_p_eta) * lap_phi
        - (pp.lam + pp.eps_p_eta) * b
        + pp.lam * (pp.lam + pp.eps_p_eta) * phi
    )
    dphi_dt = -np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) * (np.sin(t) / np.pi)
    s_fine = dphi_dt - _fourier_laplacian(mu, grid.lengths)
    s = _restrict_spectrum(s_fine, grid.shape)
    return s - np.mean(s)


def preset(
    name: str,
    n: Optional[int] = None,
    seed: int = 0,
    ell: float = 0.35,
    t_end: Optional[float] = None,
) -> Scenario:
    """Build one of the named experiments with its published parameter set."""
    lam_star = well_depth(0.9)
    if name == "pearling":
        grid = Grid.square(n if n is not None else 256)
        return Scenario(
            name,
            grid,
            PhysParams(eps=0.03, eta=4.0, lam=lam_star, p=1),
            t_end=t_end if t_end is not None else 10.0,
            seed=seed,
            ell=ell,
        )
    if name == "meandering":
        cells = n if n is not None else 1024
        if cells % 2:
            raise ValueError("meandering preset needs an even x cell count")
        grid = Grid((cells, cells // 2), (30.0, 15.0))
        return Scenario(
            name,
            grid,
            PhysParams(eps=0.01, eta=10.0, lam=lam_star, p=1),
            t_end=t_end if t_end is not None else 100.0,
            seed=seed,
        )
    if name == "spinodal":
        grid = Grid.square(n if n is not None else 256)
        return Scenario(
            name,
            grid,
            PhysParams(eps=0.008, eta=8.0, lam=lam_star, p=1),
            t_end=t_end if t_end is not None else 1.0,
            seed=seed,
        )
    if name == "convergence":
        grid = Grid.square(n if n is not None else 128)
        return Scenario(
            name,
            grid,
            PhysParams(eps=0.5, eta=1.0, lam=3.0, p=2),
            t_end=t_end if t_end is not None else 0.32,
            seed=seed,
        )
    raise ValueError(f"unknown scenario {name!r}; choose from {sorted(PRESET_NAMES)}")


PRESET_NAMES = frozenset({"pearling", "meandering", "spinodal", "convergence"})


def with_overrides(scn: Scenario, **kwargs) -> Scenario:
    return replace(scn, **kwargs)
