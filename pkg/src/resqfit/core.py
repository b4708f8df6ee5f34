"""Physical constants and the shared domain types used by every analysis module.

All internal computation is in SI base units (Hz, s, K, H, ohm*m, J).
Instrument-facing units (dBm, um, GHz) appear only at the I/O boundary.
Uncertainties are carried as one standard error per scalar and propagated
to first order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DomainError

__all__ = [
    "CONSTANTS",
    "ComplexTrace",
    "Measurement",
    "PhysicalConstants",
    "QubitRecord",
    "ResonatorRecord",
    "SuperconductorParams",
    "TraceFinding",
    "ValidationReport",
    "delta0_from_tc",
    "validate_trace",
]

# Weak-coupling BCS ratio between the zero-temperature gap and k_B*T_c.
BCS_GAP_RATIO = 1.76


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA 2022 values, fixed at build time.

    hbar: reduced Planck constant [J s]
    k_b:  Boltzmann constant [J/K]
    mu_0: vacuum magnetic permeability [H/m]
    """

    hbar: float = 1.0545718176461565e-34
    k_b: float = 1.380649e-23
    mu_0: float = 1.25663706127e-6

    def __post_init__(self) -> None:
        if not (self.hbar > 0 and self.k_b > 0 and self.mu_0 > 0):
            raise DomainError("physical constants must be positive")


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class Measurement:
    """A scalar with one standard error."""

    value: float
    sigma: float = 0.0

    def __post_init__(self) -> None:
        # +inf is a meaningful value (an absent loss channel); NaN is not.
        if math.isnan(self.value):
            raise DomainError("measurement value must not be NaN")
        if not (self.sigma >= 0.0):
            raise DomainError(f"standard error must be >= 0, got {self.sigma}")

    def __iter__(self):
        return iter((self.value, self.sigma))

    @property
    def reliable(self) -> bool:
        """True when the standard error is smaller than the value itself."""
        return self.sigma < abs(self.value)

    def scaled(self, factor: float) -> "Measurement":
        return Measurement(self.value * factor, self.sigma * abs(factor))


def delta0_from_tc(t_c: float) -> float:
    """Zero-temperature superconducting gap [J] from the critical temperature [K].

    Uses the weak-coupling BCS approximation Delta_0 = 1.76 k_B T_c.
    """
    if not (isinstance(t_c, (int, float)) and math.isfinite(t_c) and t_c > 0):
        raise DomainError(f"critical temperature must be finite and positive, got {t_c}")
    return BCS_GAP_RATIO * CONSTANTS.k_b * t_c


@dataclass(frozen=True)
class SuperconductorParams:
    """Normal-state and superconducting film parameters.

    t_c:        superconducting critical temperature [K]
    rho_n:      normal-state resistivity [ohm m]
    delta_0:    zero-temperature gap [J], derived from t_c
    lambda_fit: fitted magnetic penetration depth [m], set once known
    """

    t_c: float
    rho_n: float
    delta_0: float = field(init=False)
    lambda_fit: Measurement | None = None

    def __post_init__(self) -> None:
        if not (isinstance(self.rho_n, (int, float)) and math.isfinite(self.rho_n) and self.rho_n > 0):
            raise DomainError(f"normal-state resistivity must be positive, got {self.rho_n}")
        object.__setattr__(self, "delta_0", delta0_from_tc(self.t_c))

    def with_lambda(self, lam: Measurement) -> "SuperconductorParams":
        if lam.value <= 0:
            raise DomainError("penetration depth must be positive")
        new = SuperconductorParams(self.t_c, self.rho_n)
        object.__setattr__(new, "lambda_fit", lam)
        return new


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ComplexTrace:
    """Frequency-ordered complex transmission samples.

    freq: probe frequency [Hz], expected strictly increasing
    s21:  complex transmission coefficient, same length as freq
    """

    freq: np.ndarray
    s21: np.ndarray
    power_dbm: float | None = None
    temperature_k: float | None = None

    def __post_init__(self) -> None:
        freq = _readonly(np.asarray(self.freq, dtype=float).copy())
        s21 = _readonly(np.asarray(self.s21, dtype=complex).copy())
        if freq.ndim != 1 or s21.ndim != 1:
            raise DomainError("trace arrays must be one-dimensional")
        if len(freq) != len(s21):
            raise DomainError(f"frequency and s21 lengths differ: {len(freq)} vs {len(s21)}")
        object.__setattr__(self, "freq", freq)
        object.__setattr__(self, "s21", s21)

    def __len__(self) -> int:
        return len(self.freq)


MIN_TRACE_POINTS = 8


@dataclass(frozen=True)
class TraceFinding:
    kind: str  # "monotonicity" | "non_finite" | "length"
    index: int
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[TraceFinding, ...]

    @property
    def ok(self) -> bool:
        return not self.findings

    def __len__(self) -> int:
        return len(self.findings)


def validate_trace(trace: ComplexTrace) -> ValidationReport:
    """Report structural problems in a trace without raising.

    A trace with an empty report satisfies all ComplexTrace invariants:
    at least 8 samples, strictly increasing frequency, finite values.
    """
    findings: list[TraceFinding] = []
    n = len(trace)
    if n < MIN_TRACE_POINTS:
        findings.append(
            TraceFinding("length", n, f"trace has {n} samples, need at least {MIN_TRACE_POINTS}")
        )
    diffs = np.diff(trace.freq)
    for i in np.flatnonzero(~(diffs > 0)):
        findings.append(
            TraceFinding(
                "monotonicity",
                int(i) + 1,
                f"frequency not strictly increasing at sample {int(i) + 1}",
            )
        )
    bad_freq = ~np.isfinite(trace.freq)
    bad_s21 = ~np.isfinite(trace.s21.real) | ~np.isfinite(trace.s21.imag)
    for i in np.flatnonzero(bad_freq | bad_s21):
        findings.append(TraceFinding("non_finite", int(i), f"non-finite value at sample {int(i)}"))
    return ValidationReport(tuple(findings))


@dataclass(frozen=True)
class ResonatorRecord:
    """Geometry, simulated, and measured quantities for one resonator.

    Device ids follow the F<n>-type-s convention: film number, resonator
    type (CPW or LE), and the nominal gap / pad spacing s in micrometres.
    Fields that a given dataset does not provide are None.
    """

    id: str
    kind: str  # "CPW" | "LE"
    gap_um: float
    thickness_um: float
    f_r_sim: float | None = None
    f_r_meas: float | None = None
    l_g: float | None = None  # geometric inductance [H]
    g_factor: float | None = None  # dimensionless lateral-geometry factor
    p_ms: float | None = None
    p_ma: float | None = None
    p_sa: float | None = None
    q_c_mag: float | None = None
    q_tls0: Measurement | None = None
    q_other: Measurement | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("CPW", "LE"):
            raise DomainError(f"resonator kind must be CPW or LE, got {self.kind!r}")
        if not self.thickness_um > 0:
            raise DomainError("film thickness must be positive")
        if self.f_r_sim is not None and self.f_r_meas is not None:
            if self.f_r_meas > self.f_r_sim:
                raise DomainError(
                    f"{self.id}: measured frequency exceeds simulated "
                    "(kinetic inductance can only lower the resonance)"
                )
        for name in ("p_ms", "p_ma", "p_sa"):
            p = getattr(self, name)
            if p is not None and not (0.0 < p < 1.0):
                raise DomainError(f"{self.id}: participation ratio {name}={p} outside (0, 1)")


@dataclass(frozen=True)
class QubitRecord:
    """Design parameters for one transmon, with the energy ratio derived
    from the transmon approximation."""

    id: int
    f_q: float  # qubit frequency [Hz]
    f_r: float  # readout resonator frequency [Hz]
    chi_mag: float  # dispersive shift magnitude [Hz], metadata only
    kappa_r: float  # readout linewidth [Hz], metadata only
    e_c_over_h: float  # charging energy / h [Hz]
    e_j_over_e_c: float = field(init=False)
    stats: Any = None

    def __post_init__(self) -> None:
        if not (self.f_q > 0 and self.e_c_over_h > 0):
            raise DomainError("qubit frequency and charging energy must be positive")
        ej_over_h = (self.f_q + self.e_c_over_h) ** 2 / (8.0 * self.e_c_over_h)
        object.__setattr__(self, "e_j_over_e_c", ej_over_h / self.e_c_over_h)
