"""Internal-loss decomposition over photon-number and temperature sweeps.

The inverse internal quality factor is modelled as a sum of three
channels: saturable two-level systems, thermal quasiparticles, and a
power- and temperature-independent remainder,

    1/Q_int(n, T) = 1/Q_TLS(n, T) + 1/Q_QP(T) + 1/Q_other.

Q_TLS follows the standard saturation law with unsaturated value
Q_TLS,0 and saturation parameters (D, beta1, beta2); Q_QP carries the
thermal activation exp(Delta_0/k_B T) together with the sinh * K_0
photon-occupation factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import k0e

from ._lm import levenberg_marquardt
from .core import CONSTANTS, Measurement
from .errors import DomainError, FitError

__all__ = [
    "AttenuationChain",
    "LossFit",
    "LossGridPoint",
    "fit_loss_grid",
    "photons_from_power",
    "q_qp",
    "q_tls",
    "q_total",
]

LOSS_PARAM_NAMES = ("q_tls0", "d_scale", "beta1", "beta2", "a_qp", "q_other")


@dataclass(frozen=True)
class LossGridPoint:
    """One Q_int observation at a photon number and temperature setpoint."""

    nbar: float
    temperature_k: float
    q_int: Measurement
    source_power_dbm: float | None = None

    def __post_init__(self) -> None:
        if not (self.nbar > 0 and self.temperature_k > 0):
            raise DomainError("photon number and temperature must be positive")
        if not self.q_int.value > 0:
            raise DomainError("Q_int must be positive")


@dataclass(frozen=True)
class AttenuationChain:
    """Input-line attenuation versus frequency, plus the trace-fit quality
    factors at the setpoint being converted."""

    freq_hz: np.ndarray
    atten_db: np.ndarray
    q_l: float
    q_c_mag: float

    def __post_init__(self) -> None:
        freq = np.asarray(self.freq_hz, dtype=float).copy()
        att = np.asarray(self.atten_db, dtype=float).copy()
        if freq.ndim != 1 or att.shape != freq.shape or len(freq) < 2:
            raise DomainError("attenuation table needs matching 1-D arrays of length >= 2")
        if np.any(np.diff(freq) <= 0):
            raise DomainError("attenuation table frequencies must be strictly increasing")
        if np.any(att < 0):
            raise DomainError("attenuation must be >= 0 dB over the band")
        freq.flags.writeable = False
        att.flags.writeable = False
        object.__setattr__(self, "freq_hz", freq)
        object.__setattr__(self, "atten_db", att)

    def total_atten_db(self, f: float) -> float:
        if not (self.freq_hz[0] <= f <= self.freq_hz[-1]):
            raise DomainError(
                f"no attenuation data at {f:.4e} Hz "
                f"(table covers {self.freq_hz[0]:.4e}..{self.freq_hz[-1]:.4e} Hz)"
            )
        return float(np.interp(f, self.freq_hz, self.atten_db))


@dataclass(frozen=True)
class LossFit:
    """Fitted loss-channel parameters.

    a_qp is None when the grid had no temperature lever arm and the
    quasiparticle term was frozen out. ``unreliable`` lists parameters
    whose standard error reached or exceeded the fitted value, matching
    the reporting convention of omitting such entries.
    """

    q_tls0: Measurement
    d_scale: Measurement
    beta1: Measurement
    beta2: Measurement
    a_qp: Measurement | None
    q_other: Measurement
    omega: float
    delta_0: float
    correlations: np.ndarray
    param_names: tuple[str, ...]
    unreliable: tuple[str, ...]
    n_points: int
    cost: float


def _thermal_ratio(temperature_k, omega):
    # hbar*omega / (2 k_B T), the argument shared by tanh, sinh and K0
    return CONSTANTS.hbar * omega / (2.0 * CONSTANTS.k_b * np.asarray(temperature_k, dtype=float))


def q_tls(nbar, temperature_k, q_tls0, d_scale, beta1, beta2, omega):
    """Two-level-system quality factor at photon number nbar and temperature T.

    Saturates as Q_TLS0 * sqrt(1 + n^b2 tanh(x) / (D T^b1)) / tanh(x) with
    x = hbar*omega / 2 k_B T.
    """
    args = (q_tls0, d_scale, beta1, beta2, omega)
    if not all(np.isfinite(v) and v > 0 for v in args):
        raise DomainError("all TLS parameters must be finite and positive")
    nbar = np.asarray(nbar, dtype=float)
    temperature_k = np.asarray(temperature_k, dtype=float)
    if np.any(~np.isfinite(nbar)) or np.any(nbar <= 0) or np.any(temperature_k <= 0):
        raise DomainError("nbar and temperature must be finite and positive")
    th = np.tanh(_thermal_ratio(temperature_k, omega))
    saturation = np.sqrt(1.0 + nbar**beta2 / (d_scale * temperature_k**beta1) * th)
    out = q_tls0 * saturation / th
    return float(out) if out.ndim == 0 else out


def q_qp(temperature_k, a_qp, delta_0, omega):
    """Thermal-quasiparticle quality factor.

    Diverges exponentially as T -> 0; overflow is returned as +inf,
    meaning the channel is negligible at that temperature.
    """
    if not (a_qp > 0 and delta_0 > 0 and omega > 0):
        raise DomainError("a_qp, delta_0 and omega must be positive")
    temperature_k = np.asarray(temperature_k, dtype=float)
    if np.any(temperature_k <= 0):
        raise DomainError("temperature must be positive")
    x = _thermal_ratio(temperature_k, omega)
    with np.errstate(over="ignore", under="ignore"):
        # sinh(x) K0(x) = (1 - exp(-2x))/2 * exp(x) * K0(x); the scaled
        # Bessel function keeps the product finite at large x.
        occupation = 0.5 * (1.0 - np.exp(-2.0 * x)) * k0e(x)
        out = a_qp * np.exp(delta_0 / (CONSTANTS.k_b * temperature_k)) / occupation
    return float(out) if out.ndim == 0 else out


def q_total(nbar, temperature_k, fit: LossFit):
    """Combined quality factor: harmonic sum of the three loss channels."""
    inv = 1.0 / q_tls(
        nbar, temperature_k, fit.q_tls0.value, fit.d_scale.value,
        fit.beta1.value, fit.beta2.value, fit.omega,
    )
    if fit.a_qp is not None:
        with np.errstate(divide="ignore"):
            inv = inv + 1.0 / q_qp(temperature_k, fit.a_qp.value, fit.delta_0, fit.omega)
    inv = inv + 1.0 / fit.q_other.value
    out = 1.0 / inv
    return float(out) if np.ndim(out) == 0 else out


def photons_from_power(power_dbm: float, chain: AttenuationChain, f_r: float) -> float:
    """Mean intracavity photon number for a source power in dBm.

    Applies the tabulated line attenuation at f_r, then the hanger-mode
    relation n = 2 Q_l^2 P / (hbar omega^2 |Q_c|).
    """
    if not f_r > 0:
        raise DomainError("f_r must be positive")
    atten = chain.total_atten_db(f_r)
    p_watt = 1e-3 * 10.0 ** ((power_dbm - atten) / 10.0)
    omega = 2.0 * math.pi * f_r
    return 2.0 * chain.q_l**2 * p_watt / (CONSTANTS.hbar * omega**2 * chain.q_c_mag)


# ---------------------------------------------------------------------------
# grid fitting


def _model_log_q(u: np.ndarray, nbar, temp, omega, delta_0, qp_frozen: bool):
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        q_tls0, d_scale, beta1, beta2 = np.exp(u[0]), np.exp(u[1]), np.exp(u[2]), np.exp(u[3])
        q_other = np.exp(u[-1])
        x = _thermal_ratio(temp, omega)
        th = np.tanh(x)
        sat = np.sqrt(1.0 + nbar**beta2 / (d_scale * temp**beta1) * th)
        inv = th / (q_tls0 * sat) + 1.0 / q_other
        if not qp_frozen:
            a_qp = np.exp(u[4])
            occupation = 0.5 * (1.0 - np.exp(-2.0 * x)) * k0e(x)
            inv = inv + occupation * np.exp(-delta_0 / (CONSTANTS.k_b * temp)) / a_qp
        return -np.log(inv)


def _seed_a_qp(nbar, temp, q_obs, omega, delta_0, stage1_u) -> float:
    """Estimate the quasiparticle prefactor from the highest-temperature data."""
    t_max = temp.max()
    at_top = temp >= 0.999 * t_max
    inv_obs = float(np.median(1.0 / q_obs[at_top]))
    model_top = np.exp(
        _model_log_q(stage1_u, nbar[at_top], temp[at_top], omega, delta_0, qp_frozen=True)
    )
    inv_qp = inv_obs - float(np.median(1.0 / model_top))
    x = float(_thermal_ratio(t_max, omega))
    occupation = 0.5 * (1.0 - math.exp(-2.0 * x)) * float(k0e(x))
    activation = math.exp(-delta_0 / (CONSTANTS.k_b * t_max))
    if inv_qp <= 0:
        # No visible quasiparticle suppression: park the channel well above
        # the observed quality factors.
        return 100.0 * float(q_obs.max()) * occupation / activation
    return occupation * activation / inv_qp


def fit_loss_grid(grid, omega: float, delta_0: float) -> LossFit:
    """Fit a Q_int(nbar, T) grid to the three-channel loss model.

    Weighted least squares in log(Q_int) with weights (sigma_Q/Q)^-2. The
    fit runs in two stages: the well-determined pair (Q_TLS0, Q_other) is
    fitted first on the lowest-temperature data with the saturation
    parameters held at canonical starts, then all parameters are released
    jointly on the full grid. Grids without at least three distinct
    temperatures proceed with the quasiparticle term frozen out.
    """
    points = list(grid)
    if any(not isinstance(p, LossGridPoint) for p in points):
        raise DomainError("grid must contain LossGridPoint entries")
    if not (omega > 0 and delta_0 > 0):
        raise DomainError("omega and delta_0 must be positive")
    nbar = np.array([p.nbar for p in points])
    temp = np.array([p.temperature_k for p in points])
    q_obs = np.array([p.q_int.value for p in points])
    q_sig = np.array([p.q_int.sigma for p in points])
    n_powers = len(np.unique(np.round(np.log10(nbar), 9)))
    n_temps = len(np.unique(np.round(temp, 12)))
    if n_powers < 3:
        raise DomainError(f"grid spans {n_powers} photon numbers, need at least 3")
    qp_frozen = n_temps < 3

    log_q = np.log(q_obs)
    rel = np.where(q_sig > 0, q_sig / q_obs, 0.0)
    if np.all(rel > 0):
        weights = 1.0 / rel
    else:
        weights = np.ones_like(q_obs)

    # Stage 1: lowest-temperature slice, canonical saturation parameters.
    t_min = temp.min()
    low = temp <= 1.2 * t_min
    d_start = math.log(float(np.median(nbar)) / float(np.median(temp)))
    fixed = np.array([d_start, 0.0, 0.0])  # ln D, ln beta1=0, ln beta2=0

    def residual_stage1(v):
        u = np.array([v[0], *fixed, 0.0, v[1]])
        model = _model_log_q(u, nbar[low], temp[low], omega, delta_0, qp_frozen=True)
        return (model - log_q[low]) * weights[low]

    q0 = math.log(float(np.max(q_obs)))
    stage1 = levenberg_marquardt(residual_stage1, np.array([q0, q0]), max_iter=200)
    u_stage1 = np.array([stage1.x[0], *fixed, 0.0, stage1.x[1]])

    # Stage 2: release everything on the full grid.
    if qp_frozen:
        u0 = np.array([stage1.x[0], *fixed, stage1.x[1]])
    else:
        a_qp0 = _seed_a_qp(nbar, temp, q_obs, omega, delta_0, u_stage1)
        u0 = np.array([stage1.x[0], *fixed, math.log(max(a_qp0, 1e-300)), stage1.x[1]])

    def residual(u):
        model = _model_log_q(u, nbar, temp, omega, delta_0, qp_frozen)
        return (model - log_q) * weights

    result = levenberg_marquardt(residual, u0, max_iter=200)
    if not result.converged or not np.all(np.isfinite(result.x)):
        raise FitError("fit diverged: loss-grid refinement did not converge")

    # A parameter the data cannot bound runs away in log space; report a
    # huge finite value with an infinite error so it lands in `unreliable`.
    values = np.exp(np.clip(result.x, -700.0, 700.0))
    sig_log = result.sigmas
    with np.errstate(over="ignore", invalid="ignore"):
        sigmas = values * sig_log  # first order from log-space
    names = [n for n in LOSS_PARAM_NAMES if not (qp_frozen and n == "a_qp")]

    cov = result.covariance
    k = len(result.x)
    corr = np.eye(k)
    if cov is not None:
        d = np.sqrt(np.maximum(np.diag(cov), 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = cov / np.outer(d, d)
        corr[~np.isfinite(corr)] = 0.0
        np.fill_diagonal(corr, 1.0)

    def measurement(idx: int) -> Measurement:
        # An undetermined error bar is reported as infinite, never zero.
        sigma = sigmas[idx] if not np.isnan(sigmas[idx]) else np.inf
        return Measurement(float(values[idx]), float(sigma))

    by_name = {name: measurement(i) for i, name in enumerate(names)}
    unreliable = tuple(
        name for name in ("q_tls0", "q_other")
        if not by_name[name].reliable
    )
    return LossFit(
        q_tls0=by_name["q_tls0"],
        d_scale=by_name["d_scale"],
        beta1=by_name["beta1"],
        beta2=by_name["beta2"],
        a_qp=by_name.get("a_qp"),
        q_other=by_name["q_other"],
        omega=omega,
        delta_0=delta_0,
        correlations=corr,
        param_names=tuple(names),
        unreliable=unreliable,
        n_points=len(points),
        cost=result.cost,
    )
