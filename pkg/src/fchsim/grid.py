"""Periodic cell-centered grids and their discrete calculus.

Scalar fields live at cell centers ((i + 1/2) * h per axis) and are stored as
plain float64 ndarrays of shape ``grid.shape``.  Face fields carry one array
per axis; component ``axis`` at index ``i`` holds the value on the face
between cells ``i`` and ``i + 1`` (periodic wrap at the last index).

The difference/average stencils come in cell->face (``face_diff``,
``face_avg``) and face->cell (``cell_diff``, ``cell_avg``) pairs, chosen so
that the summation-by-parts identity

    <psi, div F> = -[grad psi, F]

holds exactly (up to round-off) on any periodic grid.  The Laplacian is the
standard 3/5-point stencil, and ``SpectralWorkspace`` diagonalizes it with
real FFTs for the inverse used by the H^{-1} inner product and the solver
preconditioner.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "Grid",
    "SpectralWorkspace",
    "NonzeroMeanError",
    "face_diff",
    "face_avg",
    "cell_diff",
    "cell_avg",
    "gradient",
    "divergence",
    "laplacian",
    "inner",
    "inner_face",
    "mean",
    "norm",
    "grad_norm_sq",
    "inv_neg_laplacian",
    "norm_hm1",
]


class NonzeroMeanError(ValueError):
    """Input to an operator defined only on mean-zero fields has a mean."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic rectangular mesh with cell-centered samples.

    ``shape[a]`` cells of spacing ``spacing[a] = lengths[a] / shape[a]`` along
    each axis; cell centers sit at ``(i + 1/2) * spacing[a]``.
    """

    shape: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        lengths = tuple(float(l) for l in self.lengths)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)
        if len(shape) != len(lengths):
            raise ValueError(f"shape {shape} and lengths {lengths} disagree on dimension")
        if len(shape) not in (1, 2):
            raise ValueError(f"only 1D and 2D grids are supported, got {len(shape)}D")
        if any(n < 2 for n in shape):
            raise ValueError(f"need at least 2 cells per axis, got {shape}")
        if any(l <= 0 for l in lengths):
            raise ValueError(f"domain lengths must be positive, got {lengths}")

    @classmethod
    def square(cls, n: int, length: float = 1.0) -> "Grid":
        return cls((n, n), (length, length))

    @classmethod
    def line(cls, n: int, length: float = 1.0) -> "Grid":
        return cls((n,), (length,))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(l / n for l, n in zip(self.lengths, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates along each axis."""
        return tuple(
            (np.arange(n) + 0.5) * h for n, h in zip(self.shape, self.spacing)
        )

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinate arrays, shaped like a field."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))


def _check_same_grid(f: np.ndarray, g: np.ndarray, grid: Grid) -> None:
    if f.shape != grid.shape or g.shape != grid.shape:
        raise ValueError(
            f"field shapes {f.shape}, {g.shape} do not match grid shape {grid.shape}"
        )


# cell -> face stencils


def face_diff(f: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Forward difference onto faces: (f_{i+1} - f_i) / h."""
    h = grid.spacing[axis]
    return (np.roll(f, -1, axis=axis) - f) / h


def face_avg(f: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Forward average onto faces: (f_{i+1} + f_i) / 2."""
    return 0.5 * (np.roll(f, -1, axis=axis) + f)


# face -> cell stencils


def cell_diff(g: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Difference of the two faces of a cell: (g_{i+1/2} - g_{i-1/2}) / h."""
    h = grid.spacing[axis]
    return (g - np.roll(g, 1, axis=axis)) / h


def cell_avg(g: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Average of the two faces of a cell: (g_{i+1/2} + g_{i-1/2}) / 2."""
    return 0.5 * (g + np.roll(g, 1, axis=axis))


def gradient(f: np.ndarray, grid: Grid) -> tuple[np.ndarray, ...]:
    """Face-centered gradient, one component per axis."""
    return tuple(face_diff(f, grid, a) for a in range(grid.ndim))


def divergence(components: Iterable[np.ndarray], grid: Grid) -> np.ndarray:
    """Cell-centered divergence of a face field."""
    out = grid.zeros()
    for a, g in enumerate(components):
        out += cell_diff(g, grid, a)
    return out


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Standard 3/5-point periodic Laplacian (div of grad)."""
    out = np.zeros_like(f)
    for a in range(grid.ndim):
        h2 = grid.spacing[a] ** 2
        out += (np.roll(f, -1, axis=a) - 2.0 * f + np.roll(f, 1, axis=a)) / h2
    return out


# inner products, means and norms


def inner(f: np.ndarray, g: np.ndarray, grid: Grid) -> float:
    """Cell-volume-weighted inner product <f, g>."""
    _check_same_grid(f, g, grid)
    return grid.cell_volume * float(np.sum(f * g))


def inner_face(F: Iterable[np.ndarray], G: Iterable[np.ndarray], grid: Grid) -> float:
    """Face-field inner product [F, G], summed over axes.

    The per-axis form <a_axis(F G), 1> reduces to a plain face sum under
    periodicity, which is what is computed here.
    """
    total = 0.0
    count = 0
    for Fa, Ga in zip(F, G):
        _check_same_grid(Fa, Ga, grid)
        total += float(np.sum(Fa * Ga))
        count += 1
    if count != grid.ndim:
        raise ValueError(f"expected {grid.ndim} components, got {count}")
    return grid.cell_volume * total


def mean(f: np.ndarray, grid: Grid) -> float:
    """Domain average |Omega|^{-1} <f, 1>."""
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    return float(np.mean(f))


def grad_norm_sq(f: np.ndarray, grid: Grid) -> float:
    """Squared discrete L2 norm of the face-centered gradient."""
    total = 0.0
    for a in range(grid.ndim):
        df = face_diff(f, grid, a)
        total += float(np.sum(df * df))
    return grid.cell_volume * total


def norm(f: np.ndarray, grid: Grid, kind: str = "l2", p: float = 2.0) -> float:
    """Discrete norms: 'l2', 'lp' (needs p >= 1), 'linf', 'h1', 'h2'."""
    kind = kind.lower()
    if kind == "l2":
        return float(np.sqrt(inner(f, f, grid)))
    if kind == "lp":
        if p < 1:
            raise ValueError(f"Lp norm needs p >= 1, got {p}")
        return float(
            (grid.cell_volume * np.sum(np.abs(f) ** p)) ** (1.0 / p)
        )
    if kind == "linf":
        return float(np.max(np.abs(f)))
    if kind == "h1":
        return float(np.sqrt(inner(f, f, grid) + grad_norm_sq(f, grid)))
    if kind == "h2":
        lap = laplacian(f, grid)
        return float(
            np.sqrt(inner(f, f, grid) + grad_norm_sq(f, grid) + inner(lap, lap, grid))
        )
    raise ValueError(f"unknown norm kind {kind!r}")


# spectral inversion of the stencil Laplacian


def _stencil_eigenvalues(grid: Grid) -> np.ndarray:
    """Eigenvalues of -laplacian per discrete wavenumber, rfftn layout.

    Along each axis the 3-point stencil acting on the mode exp(2*pi*i*k*x/L)
    has eigenvalue -(4/h^2) sin^2(pi k / n); the rfft layout keeps the full
    frequency range on all axes except the last, which is halved.
    """
    per_axis = []
    for a, (n, h) in enumerate(zip(grid.shape, grid.spacing)):
        if a == grid.ndim - 1:
            k = np.arange(n // 2 + 1)
        else:
            k = np.fft.fftfreq(n, d=1.0 / n)
        per_axis.append((4.0 / h**2) * np.sin(np.pi * k / n) ** 2)
    sigma = per_axis[0]
    for arr in per_axis[1:]:
        sigma = sigma[..., None] + arr
    return sigma


@dataclass
class SpectralWorkspace:
    """FFT machinery diagonalizing the stencil Laplacian on one grid.

    Owns precomputed eigenvalues of ``-laplacian`` and a small cache for
    solver preconditioner symbols.  Not shared between concurrent
    simulations; each trajectory owns its workspace.
    """

    grid: Grid
    sigma: np.ndarray = field(init=False, repr=False)
    _symbol_cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self.sigma = _stencil_eigenvalues(self.grid)

    @property
    def sigma_min_nonzero(self) -> float:
        """Smallest nonzero eigenvalue of -laplacian."""
        flat = self.sigma.ravel()
        return float(np.min(flat[flat > 0]))

    def forward(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f)

    def inverse(self, fhat: np.ndarray) -> np.ndarray:
        shape = self.grid.shape
        return np.fft.irfftn(fhat, s=shape, axes=tuple(range(len(shape))))

    def solve_symbol(self, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        """Solve ``Op u = f`` where Op has the given positive Fourier symbol."""
        return self.inverse(self.forward(f) / symbol)


def inv_neg_laplacian(f: np.ndarray, ws: SpectralWorkspace) -> np.ndarray:
    """Mean-zero solution psi of -laplacian(psi) = f for mean-zero f.

    The input must have zero mean up to 1e-12 relative to its sup norm; the
    residual mean (round-off accumulated by long runs) is subtracted before
    solving, and the zero mode of the result is pinned to zero.
    """
    grid = ws.grid
    fbar = mean(f, grid)
    scale = float(np.max(np.abs(f)))
    if abs(fbar) > 1e-12 * max(scale, 1e-300):
        raise NonzeroMeanError(
            f"inverse Laplacian needs a mean-zero field, got mean {fbar:.3e} "
            f"(sup norm {scale:.3e})"
        )
    fhat = ws.forward(f - fbar)
    sigma = ws.sigma
    out = np.empty_like(fhat)
    np.divide(fhat, sigma, out=out, where=sigma > 0)
    out[(0,) * out.ndim] = 0.0
    psi = ws.inverse(out)
    return psi - np.mean(psi)


def norm_hm1(f: np.ndarray, ws: SpectralWorkspace) -> float:
    """Discrete H^{-1} norm sqrt(<f, psi[f]>) of a mean-zero field."""
    psi = inv_neg_laplacian(f, ws)
    val = inner(f, psi, ws.grid)
    return float(np.sqrt(max(val, 0.0)))
