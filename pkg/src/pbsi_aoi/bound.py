"""Universal lower bound on the time-average on-demand AoCSI."""

from __future__ import annotations

from dataclasses import dataclass


class AdmissibilityError(ValueError):
    """Channel success probability below the range where the bound holds."""


def chi0(x: float, max_aocsi: int) -> float:
    """Twice the extra on-demand age of an x-slot block opened by one success."""
    if x < 1:
        raise ValueError(f"chi0 needs x >= 1, got {x}")
    D = max_aocsi
    if x <= D:
        return x * x + x - 2.0
    return 2.0 * D * x - D * D + D - 2.0


def chi1(x: float, max_aocsi: int) -> float:
    """Convex, continuously differentiable minorant of chi0."""
    D = max_aocsi
    if x <= D - 0.5:
        return x * x + x - 2.0
    return 2.0 * D * x - D * D + D - 2.25


def min_channel_success(max_aocsi: int) -> float:
    return 1.0 / (max_aocsi - 0.5)


def lambda0(eta: float, xi: float, max_aocsi: int) -> float:
    """Arrival rate separating the two branches of the bound."""
    denom = (max_aocsi - 0.5) * xi + 1.0 / eta - 1.0
    if denom <= 0:
        raise ValueError("lambda0 denominator must be positive")
    return 1.0 / denom


@dataclass(frozen=True)
class BoundInputs:
    lam: float
    eta: float
    xi: float
    max_aocsi: int = 48

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not 0.0 < self.xi <= 1.0:
            raise ValueError("xi must lie in (0, 1]")
        if self.xi < min_channel_success(self.max_aocsi):
            raise AdmissibilityError(
                f"xi={self.xi} is below 1/(max_aocsi - 1/2) = {min_channel_success(self.max_aocsi):.6g}"
            )


def theta_branch_high(lam: float, eta: float, xi: float) -> float:
    m = min(lam, eta)
    return eta / 2.0 + eta / (2.0 * xi * m) - (1.0 - eta) / xi * (1.0 - m / (2.0 * eta))


def theta_branch_low(lam: float, eta: float, xi: float, max_aocsi: int) -> float:
    D = max_aocsi
    return eta * (D - lam * xi / 2.0 * (D - 0.5) ** 2) - lam * (1.0 - eta) * (D - 1.0 / (2.0 * xi) - 0.5)


def theta_lower_bound(inputs: BoundInputs) -> float:
    lam, eta, xi, D = inputs.lam, inputs.eta, inputs.xi, inputs.max_aocsi
    if lam >= lambda0(eta, xi, D):
        return theta_branch_high(lam, eta, xi)
    return theta_branch_low(lam, eta, xi, D)


def theta(lam: float, eta: float, xi: float, max_aocsi: int = 48) -> float:
    return theta_lower_bound(BoundInputs(lam, eta, xi, max_aocsi))
