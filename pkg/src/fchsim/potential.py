"""Logarithmic Flory-Huggins potential family with singularity guards.

All functions are defined on (-1, 1) only.  Evaluation at or beyond the pure
states +-1 raises :class:`PotentialDomainError` instead of clamping: the
scheme guarantees interior iterates, so an excursion always means a solver
bug or an oversized trial step that the caller must shrink.

Monotone part of the mixing derivative and its derivatives:

    beta(r)   = log((1 + r) / (1 - r))
    beta'(r)  = 2 / (1 - r^2)            >= 2
    beta''(r) = 4 r / (1 - r^2)^2
    beta'''(r)= 4 (1 + 3 r^2) / (1 - r^2)^3

Mixing energy density and friends, with well depth lambda:

    B(r) = (1 + r) log(1 + r) + (1 - r) log(1 - r)     (convex part)
    F(r) = B(r) - lambda r^2 / 2
    f(r) = F'(r) = beta(r) - lambda r
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhysParams",
    "PotentialDomainError",
    "beta",
    "beta_prime",
    "beta_second",
    "beta_third",
    "beta_family",
    "mixing_family",
    "admissible",
    "require_admissible",
]


class PotentialDomainError(ValueError):
    """A phase value reached or crossed the pure states +-1."""


@dataclass(frozen=True)
class PhysParams:
    """Model constants: interface width eps, functionalization strength eta,
    well depth lam, and the functionalization exponent p (1 strong, 2 weak)."""

    eps: float
    eta: float
    lam: float
    p: int = 1

    def __post_init__(self):
        if self.eps <= 0 or self.eta <= 0 or self.lam <= 0:
            raise ValueError(
                f"eps, eta, lam must be positive, got {self.eps}, {self.eta}, {self.lam}"
            )
        if self.p not in (1, 2):
            raise ValueError(f"functionalization exponent p must be 1 or 2, got {self.p}")

    @property
    def eps_p_eta(self) -> float:
        """The combination eps^p * eta appearing throughout the model."""
        return self.eps**self.p * self.eta


def _check_interior(r) -> None:
    r = np.asarray(r)
    if not np.all(np.isfinite(r)):
        raise PotentialDomainError("phase values must be finite")
    worst = float(np.max(np.abs(r))) if r.size else 0.0
    if worst >= 1.0:
        raise PotentialDomainError(
            f"phase value with |r| = {worst!r} >= 1 hit the logarithmic singularity"
        )


def beta(r):
    _check_interior(r)
    return np.log1p(r) - np.log1p(-r)


def beta_prime(r):
    _check_interior(r)
    return 2.0 / (1.0 - np.square(r))


def beta_second(r):
    _check_interior(r)
    return 4.0 * r / np.square(1.0 - np.square(r))


def beta_third(r):
    _check_interior(r)
    one_minus = 1.0 - np.square(r)
    return 4.0 * (1.0 + 3.0 * np.square(r)) / (one_minus**3)


def beta_family(r):
    """beta and its first three derivatives at r, as a tuple."""
    _check_interior(r)
    r = np.asarray(r, dtype=float)
    one_minus = 1.0 - np.square(r)
    b = np.log1p(r) - np.log1p(-r)
    b1 = 2.0 / one_minus
    b2 = 4.0 * r / np.square(one_minus)
    b3 = 4.0 * (1.0 + 3.0 * np.square(r)) / (one_minus**3)
    return b, b1, b2, b3


def mixing_family(r, pp: PhysParams):
    """Mixing energy density pieces (B, F, f) at r.

    B is the convex logarithmic part, F = B - lam r^2 / 2 the full density,
    f = F' its derivative.
    """
    _check_interior(r)
    r = np.asarray(r, dtype=float)
    B = (1.0 + r) * np.log1p(r) + (1.0 - r) * np.log1p(-r)
    F = B - 0.5 * pp.lam * np.square(r)
    f = np.log1p(r) - np.log1p(-r) - pp.lam * r
    return B, F, f


def admissible(f: np.ndarray, margin: float = 0.0) -> bool:
    """True when the field keeps distance ``margin`` from the pure states.

    With margin 0 the comparison is strict (max |value| < 1); with a positive
    margin it is ||f||_inf <= 1 - margin.
    """
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    sup = float(np.max(np.abs(f)))
    if not np.isfinite(sup):
        return False
    if margin == 0.0:
        return sup < 1.0
    return sup <= 1.0 - margin


def require_admissible(f: np.ndarray, what: str = "field") -> None:
    """Raise PotentialDomainError unless the field is strictly inside (-1, 1)."""
    if not admissible(f, 0.0):
        raise PotentialDomainError(
            f"{what} is not strictly separated from the pure states: "
            f"sup norm {float(np.max(np.abs(f))):.17g}"
        )
