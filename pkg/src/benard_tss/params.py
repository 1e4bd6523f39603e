"""Physical parameters, admissibility constraints and derived constants.

All radii in this package (``R0``, ball radii, tightness radii) bound the
*squared* H-norm ``|z|_H^2``; annulus radii are the one exception and are
stated in ``|z|_H``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from .errors import (BadTemperatureOrder, EpsilonTooLarge, GammaTooSmall,
                     NonPositiveField)

_POSITIVE = ("nu", "kappa", "g", "alpha", "h", "L1", "L2", "gamma", "epsilon")


@dataclass(frozen=True)
class Parameters:
    """Boussinesq coefficients plus the norm weight ``gamma`` and the
    background-profile thickness ``epsilon``."""

    nu: float
    kappa: float
    g: float
    alpha: float
    T0: float
    T1: float
    h: float
    L1: float
    L2: float
    gamma: float
    epsilon: float

    @property
    def g_alpha(self) -> float:
        return self.g * self.alpha

    @property
    def delta_T(self) -> float:
        """Bottom-minus-top temperature difference ``T0 - T1`` (>= 0)."""
        return self.T0 - self.T1

    @property
    def area(self) -> float:
        return self.L1 * self.L2

    @property
    def eta(self) -> float:
        return min(self.nu, self.kappa)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "Parameters":
        d = {f.name: getattr(self, f.name) for f in fields(Parameters)}
        d.update(changes)
        return Parameters(**d)


@dataclass(frozen=True)
class ValidatedParameters(Parameters):
    """Parameters that passed :func:`validate_parameters` for ``lambda0``."""

    lambda0: float = math.nan

    def base(self) -> Parameters:
        return Parameters(**{f.name: getattr(self, f.name) for f in fields(Parameters)})


@dataclass(frozen=True)
class DerivedConstants:
    eta: float
    lambda1: float
    lambda2: float
    lambda0: float
    R0: float
    Kb: float

    def to_dict(self) -> dict:
        return asdict(self)


def gamma_lower_bound(p: Parameters, lambda0: float) -> float:
    """Strict lower bound ``4 (g alpha)^2 / (nu kappa lambda0^2)`` on gamma."""
    return 4.0 * p.g_alpha ** 2 / (p.nu * p.kappa * lambda0 ** 2)


def epsilon_sq_upper_bound(p: Parameters, lambda0: float) -> float:
    """Strict upper bound on ``epsilon**2``; ``inf`` when ``T0 == T1``.

    Negative when gamma violates its own bound.
    """
    inner = p.kappa / 4.0 - p.g_alpha ** 2 / (p.gamma * p.nu * lambda0 ** 2)
    dT2 = p.delta_T ** 2
    if dT2 == 0.0:
        return math.inf if inner > 0 else -math.inf
    return p.nu / (p.gamma * dT2) * inner


def validate_parameters(p: Parameters, lambda0: float, *,
                        strict_order: bool = True) -> ValidatedParameters:
    """Check positivity, temperature ordering and the gamma/epsilon bounds.

    ``strict_order=False`` admits ``T0 == T1`` (no imposed gradient), which
    the zero-dynamics checks rely on; ``T1 > T0`` is always rejected.
    """
    for name in _POSITIVE:
        v = getattr(p, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise NonPositiveField(f"{name} must be a finite positive number, got {v!r}")
    for name in ("T0", "T1"):
        if not math.isfinite(getattr(p, name)):
            raise NonPositiveField(f"{name} must be finite")
    if not (lambda0 > 0 and math.isfinite(lambda0)):
        raise NonPositiveField(f"lambda0 must be positive, got {lambda0!r}")
    if p.T1 > p.T0 or (strict_order and p.T1 == p.T0):
        raise BadTemperatureOrder(f"need T1 < T0, got T0={p.T0}, T1={p.T1}")
    if p.epsilon >= p.h:
        raise EpsilonTooLarge(f"epsilon={p.epsilon} must be smaller than h={p.h}")

    gmin = gamma_lower_bound(p, lambda0)
    if not p.gamma > gmin:
        raise GammaTooSmall(f"gamma={p.gamma} must exceed {gmin:.6g}")
    emax2 = epsilon_sq_upper_bound(p, lambda0)
    if not p.epsilon ** 2 < emax2:
        raise EpsilonTooLarge(
            f"epsilon^2={p.epsilon ** 2:.6g} must be below {emax2:.6g}")
    return ValidatedParameters(**asdict(p), lambda0=float(lambda0))


def propose_gamma_epsilon(p: Parameters, lambda0: float) -> tuple[float, float]:
    """Suggest ``gamma`` at twice its lower bound and ``epsilon`` at the
    midpoint of the admissible range ``(0, min(eps_max, h))``."""
    gamma = 2.0 * gamma_lower_bound(p, lambda0)
    if gamma == 0.0:
        gamma = 1.0
    emax2 = epsilon_sq_upper_bound(p.replace(gamma=gamma), lambda0)
    emax = min(math.sqrt(emax2), p.h)
    return gamma, 0.5 * emax


def derived_constants(p: ValidatedParameters, lambda1: float,
                      lambda2: float) -> DerivedConstants:
    lambda0 = min(lambda1, lambda2)
    eta = min(p.nu, p.kappa)
    R0 = (2.0 * p.kappa * p.gamma * p.L1 * p.L2 * (p.T1 - p.T0) ** 2
          / (eta * lambda0 * p.epsilon))
    return DerivedConstants(eta=eta, lambda1=float(lambda1), lambda2=float(lambda2),
                            lambda0=float(lambda0), R0=R0, Kb=0.5 * eta * lambda0 * R0)


def background_temperature(p: Parameters, x3):
    """Piecewise-linear profile, zero below ``h - epsilon`` and equal to
    ``T1 - T0`` at the top wall."""
    import numpy as np

    x3 = np.asarray(x3, dtype=float)
    slope = (p.T1 - p.T0) / p.epsilon
    return np.where(x3 >= p.h - p.epsilon, slope * (x3 - p.h + p.epsilon), 0.0)
