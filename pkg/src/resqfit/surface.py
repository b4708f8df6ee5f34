"""Surface-loss regression and oxide-layer thickness estimation.

Unsaturated TLS loss scales with the metal-substrate participation ratio,
1/Q_TLS0 = p_MS * tan(delta), collapsing all interface contributions into
one effective surface loss tangent. Oxide thickness comes from the
standard overlayer attenuation expression applied to decomposed XPS peak
intensities; the spectral decomposition itself happens upstream in the
instrument software and is ingested here as relative intensities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Measurement
from .errors import DomainError

__all__ = [
    "TanDeltaFit",
    "XpsInput",
    "fit_tan_delta",
    "implied_tan_delta",
    "ma_excess_fraction",
    "oxide_thickness",
    "surface_limited_q",
]


@dataclass(frozen=True)
class TanDeltaFit:
    points: tuple[tuple[float, Measurement], ...]  # (p_MS, Q_TLS0) used in the fit
    tan_delta: Measurement
    per_point_residuals: tuple[float, ...]  # in 1/Q units
    excluded: tuple[tuple[float, Measurement], ...]  # points with sigma >= value


@dataclass(frozen=True)
class XpsInput:
    """Decomposed Ta4f intensities plus material parameters.

    i_ox:       summed relative intensity of the oxide species
    i_m:        relative intensity of the metallic species
    lambda_eff: effective photoelectron attenuation length [m]
    n_m, n_ox:  atomic volume densities of metal and oxide [1/m^3]
    """

    i_ox: float
    i_m: float
    lambda_eff: float
    n_m: float
    n_ox: float

    def __post_init__(self) -> None:
        if self.i_ox < 0:
            raise DomainError("oxide intensity must be >= 0")
        if not (self.i_m > 0 and self.lambda_eff > 0 and self.n_m > 0 and self.n_ox > 0):
            raise DomainError("i_m, lambda_eff and densities must be positive")


def implied_tan_delta(p_ms: float, q_tls0: float) -> float:
    """Closed-form single-point loss tangent 1/(p_MS * Q_TLS0)."""
    if not (p_ms > 0 and q_tls0 > 0):
        raise DomainError("p_ms and q_tls0 must be positive")
    return 1.0 / (p_ms * q_tls0)


def fit_tan_delta(points) -> TanDeltaFit:
    """Weighted zero-intercept fit of 1/Q_TLS0 against p_MS.

    Weights follow from sigma(1/Q) = sigma(Q)/Q^2; points whose Q error
    reaches the value itself are excluded from the fit and listed. For the
    zero-intercept model the estimate is the closed-form weighted ratio
    sum(w p y) / sum(w p^2).
    """
    pts = [(float(p), m if isinstance(m, Measurement) else Measurement(*m)) for p, m in points]
    if any(p <= 0 or m.value <= 0 for p, m in pts):
        raise DomainError("participation ratios and Q_TLS0 must be positive")
    kept = [(p, m) for p, m in pts if m.reliable]
    excluded = tuple((p, m) for p, m in pts if not m.reliable)
    if len({p for p, _ in kept}) < 2:
        raise DomainError("need at least 2 reliable points with distinct p_MS")
    p = np.array([q[0] for q in kept])
    y = np.array([1.0 / q[1].value for q in kept])
    sig_y = np.array([q[1].sigma / q[1].value ** 2 for q in kept])
    if np.all(sig_y > 0):
        w = 1.0 / sig_y**2
        tan = float(np.sum(w * p * y) / np.sum(w * p * p))
        tan_sigma = math.sqrt(1.0 / float(np.sum(w * p * p)))
    else:
        w = np.ones_like(y)
        tan = float(np.sum(p * y) / np.sum(p * p))
        dof = len(p) - 1
        s_sq = float(np.sum((y - tan * p) ** 2)) / dof if dof > 0 else 0.0
        tan_sigma = math.sqrt(s_sq / float(np.sum(p * p)))
    residuals = tuple(float(r) for r in (y - tan * p))
    return TanDeltaFit(
        points=tuple(kept),
        tan_delta=Measurement(tan, tan_sigma),
        per_point_residuals=residuals,
        excluded=excluded,
    )


def surface_limited_q(p_ms: float, tan_delta: float) -> float:
    """Expected unsaturated TLS quality factor 1/(p_MS tan delta) for a
    device with the given participation ratio."""
    if not (p_ms > 0 and tan_delta > 0):
        raise DomainError("p_ms and tan_delta must be positive")
    return 1.0 / (p_ms * tan_delta)


def oxide_thickness(x: XpsInput) -> float:
    """Effective overlayer oxide thickness [m] from XPS intensities,
    lambda_eff * ln((N_m/N_ox)(I_ox/I_m) + 1)."""
    return x.lambda_eff * math.log((x.n_m / x.n_ox) * (x.i_ox / x.i_m) + 1.0)


def ma_excess_fraction(
    t_thick: float,
    t_thin: float,
    rescaled_ma_tan: float,
    tan_high: float,
    tan_low: float,
) -> float:
    """Fraction of a loss-tangent excess explained by a thicker oxide.

    Under a metal-air loss that scales linearly with oxide thickness, a
    film with oxide t_thick carries rescaled_ma_tan * (t_thick/t_thin - 1)
    extra loss relative to the t_thin reference; this is expressed as a
    fraction of the observed tangent difference tan_high - tan_low.
    """
    if not all(v > 0 for v in (t_thick, t_thin, rescaled_ma_tan, tan_high, tan_low)):
        raise DomainError("all inputs must be positive")
    if t_thick < t_thin:
        raise DomainError("t_thick must be >= t_thin")
    if tan_high <= tan_low:
        raise DomainError("no excess to apportion: tan_high <= tan_low")
    return rescaled_ma_tan * (t_thick / t_thin - 1.0) / (tan_high - tan_low)
