"""Kinetic inductance, penetration depth, and the superfluid-response envelope.

The measured-to-simulated frequency shift defines an effective kinetic
inductance fraction alpha = 1 - (f_meas/f_sim)^2, modelled as the series
combination L_k / (L_k + L_g). The film's sheet kinetic inductance follows
L_ksq(t) = mu_0 lambda coth(t / lambda) with a single penetration depth
lambda, and a geometry factor G(s) maps sheet values onto each resonator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._lm import levenberg_marquardt
from .core import CONSTANTS, Measurement, ResonatorRecord
from .errors import DomainError, FitError

__all__ = [
    "GFactorFit",
    "LambdaFit",
    "alpha_from_freqs",
    "alpha_model",
    "fit_g_factor",
    "fit_kappa_envelope",
    "fit_lambda",
    "lambda_dirty",
    "lambda_dirty_sigma",
    "sheet_lk_from_resonator",
    "sigma2",
]

# Default fractional uncertainty assigned to simulated resonance
# frequencies, which come without error bars.
DEFAULT_SIM_FRACTIONAL_SIGMA = 0.005


@dataclass(frozen=True)
class GFactorFit:
    """Linear fit of resonator kinetic inductance versus applied sheet
    inductance; the slope is the dimensionless geometry factor."""

    samples: tuple[tuple[float, float], ...]  # (L_s [H], L_k [H]) pairs
    g: Measurement
    intercept: float  # [H]; near-zero by construction, kept as a diagnostic


@dataclass(frozen=True)
class LambdaFit:
    points: tuple[tuple[float, Measurement], ...]  # (thickness [m], L_ksq [H/sq])
    lam: Measurement  # penetration depth [m]
    l_bulk: float  # mu_0 * lambda [H/sq]
    residuals: tuple[float, ...]


def alpha_from_freqs(f_meas: float, f_sim: float) -> float:
    """Kinetic inductance fraction from measured and simulated resonance
    frequencies: 1 - (f_meas/f_sim)^2."""
    if not (f_meas > 0 and f_sim > 0):
        raise DomainError("frequencies must be positive")
    if f_meas > f_sim:
        raise DomainError(
            f"unphysical: measured {f_meas:.6e} Hz above simulated {f_sim:.6e} Hz"
        )
    return 1.0 - (f_meas / f_sim) ** 2


def alpha_model(l_k: float, l_g: float) -> float:
    """Series-inductance kinetic fraction L_k / (L_k + L_g)."""
    if l_k < 0 or not l_g > 0:
        raise DomainError("need l_k >= 0 and l_g > 0")
    return l_k / (l_k + l_g)


def fit_g_factor(samples, l_g: float) -> GFactorFit:
    """Least-squares line through (L_s, L_tot - L_g); the slope is G(s).

    The intercept is not forced through zero: a large value flags an
    inconsistent simulation sweep.
    """
    pairs = [(float(ls), float(lt)) for ls, lt in samples]
    if len(pairs) < 3:
        raise DomainError(f"need at least 3 samples, got {len(pairs)}")
    ls = np.array([p[0] for p in pairs])
    lk = np.array([p[1] for p in pairs]) - l_g
    if len(np.unique(ls)) < 2:
        raise DomainError("surface-inductance values are degenerate")
    design = np.column_stack([ls, np.ones_like(ls)])
    coef, res_ss, *_ = np.linalg.lstsq(design, lk, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    dof = len(ls) - 2
    if dof > 0 and res_ss.size:
        s_sq = float(res_ss[0]) / dof
    else:
        s_sq = 0.0
    cov = s_sq * np.linalg.inv(design.T @ design)
    return GFactorFit(
        samples=tuple((p[0], p[1] - l_g) for p in pairs),
        g=Measurement(slope, math.sqrt(max(cov[0, 0], 0.0))),
        intercept=intercept,
    )


def sheet_lk_from_resonator(
    rec: ResonatorRecord,
    *,
    f_meas_sigma: float = 0.0,
    f_sim_sigma: float | None = None,
) -> Measurement:
    """Sheet kinetic inductance [H/sq] for one resonator.

    Inverts the series model, L_k = L_g alpha / (1 - alpha), then divides by
    the geometry factor. Frequency uncertainties propagate to first order;
    simulated frequencies default to a 0.5% fractional error since the
    electromagnetic solver reports none.
    """
    for name in ("f_r_sim", "f_r_meas", "l_g", "g_factor"):
        if getattr(rec, name) is None:
            raise DomainError(f"{rec.id}: record is missing {name}")
    f_m, f_s = rec.f_r_meas, rec.f_r_sim
    alpha = alpha_from_freqs(f_m, f_s)
    if alpha >= 1.0:
        raise DomainError(f"{rec.id}: alpha = 1 makes the inversion singular")
    l_k = rec.l_g * alpha / (1.0 - alpha)
    l_ksq = l_k / rec.g_factor

    if f_sim_sigma is None:
        f_sim_sigma = DEFAULT_SIM_FRACTIONAL_SIGMA * f_s
    # d alpha/d f_m = -2 f_m / f_s^2, d alpha/d f_s = 2 f_m^2 / f_s^3
    var_alpha = (2.0 * f_m / f_s**2 * f_meas_sigma) ** 2 + (
        2.0 * f_m**2 / f_s**3 * f_sim_sigma
    ) ** 2
    dlk_dalpha = rec.l_g / (1.0 - alpha) ** 2
    sigma = math.sqrt(var_alpha) * dlk_dalpha / rec.g_factor
    return Measurement(l_ksq, sigma)


def coth_sheet_inductance(thickness, lam: float):
    """Sheet kinetic inductance law mu_0 lambda coth(t/lambda) [H/sq]."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    t = np.asarray(thickness, dtype=float)
    out = CONSTANTS.mu_0 * lam / np.tanh(t / lam)
    return float(out) if out.ndim == 0 else out


def fit_lambda(points) -> LambdaFit:
    """Weighted nonlinear fit of lambda to sheet-inductance-versus-thickness data.

    ``points`` holds (thickness [m], Measurement of L_ksq [H/sq]) pairs from
    individual resonators; same-film points are fitted as-is, not averaged.
    """
    pts = [(float(t), m if isinstance(m, Measurement) else Measurement(*m)) for t, m in points]
    if len(pts) < 3:
        raise DomainError(f"need at least 3 points, got {len(pts)}")
    t = np.array([p[0] for p in pts])
    lk = np.array([p[1].value for p in pts])
    sig = np.array([p[1].sigma for p in pts])
    if np.any(t <= 0) or np.any(lk <= 0):
        raise DomainError("thicknesses and sheet inductances must be positive")
    if t.max() / t.min() < 4.0:
        raise DomainError("thickness range too narrow: need at least a factor 4 span")
    weights = 1.0 / sig if np.all(sig > 0) else np.ones_like(lk)

    # Thin-film seed: L_ksq -> mu_0 lambda^2 / t as t -> 0.
    i_min = int(np.argmin(t))
    lam0 = math.sqrt(lk[i_min] * t[i_min] / CONSTANTS.mu_0)

    def residual(u):
        with np.errstate(over="ignore", invalid="ignore"):
            lam = np.exp(u[0])
            model = CONSTANTS.mu_0 * lam / np.tanh(t / lam)
            return (model - lk) * weights

    result = levenberg_marquardt(residual, np.array([math.log(lam0)]), max_iter=200)
    if not result.converged or not np.isfinite(result.x[0]):
        raise FitError("fit diverged: penetration-depth fit did not converge")
    lam = float(np.exp(result.x[0]))
    if t.min() > 3.0 * lam:
        raise FitError(
            "insufficient thin-film leverage: every film is in the bulk limit, "
            "lambda is not identifiable"
        )
    sigma = lam * float(result.sigmas[0]) if np.isfinite(result.sigmas[0]) else math.inf
    residuals = coth_sheet_inductance(t, lam) - lk
    return LambdaFit(
        points=tuple(pts),
        lam=Measurement(lam, sigma),
        l_bulk=CONSTANTS.mu_0 * lam,
        residuals=tuple(float(r) for r in residuals),
    )


def lambda_dirty(rho_n: float, delta_0: float) -> float:
    """Zero-temperature dirty-limit estimate of the penetration depth [m],
    sqrt(hbar rho_n / (pi mu_0 Delta_0))."""
    if not (rho_n > 0 and delta_0 > 0):
        raise DomainError("rho_n and delta_0 must be positive")
    return math.sqrt(CONSTANTS.hbar * rho_n / (math.pi * CONSTANTS.mu_0 * delta_0))


def lambda_dirty_sigma(
    rho_n: float, delta_0: float, rho_n_sigma: float = 0.0, delta_0_sigma: float = 0.0
) -> Measurement:
    """Dirty-limit estimate with first-order propagation of the resistivity
    and gap uncertainties."""
    lam = lambda_dirty(rho_n, delta_0)
    rel = 0.5 * math.hypot(rho_n_sigma / rho_n, delta_0_sigma / delta_0)
    return Measurement(lam, lam * rel)


def sigma2(omega: float, lam: float) -> float:
    """Imaginary part of the complex conductivity, 1/(mu_0 omega lambda^2) [S/m]."""
    if not (omega > 0 and lam > 0):
        raise DomainError("omega and lambda must be positive")
    return 1.0 / (CONSTANTS.mu_0 * omega * lam**2)


def fit_kappa_envelope(points, sigmas=None) -> Measurement:
    """Zero-intercept weighted linear fit of Q_int against sigma_2.

    Returns the slope kappa [ohm m]. ``sigmas`` optionally weights the
    points by their Q_int standard errors; otherwise the error comes from
    the residual scatter.
    """
    pts = [(float(s2), float(q)) for s2, q in points]
    if len(pts) < 3:
        raise DomainError(f"need at least 3 points, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if sigmas is not None:
        sig = np.asarray(sigmas, dtype=float)
        if np.any(sig <= 0):
            raise DomainError("sigmas must be positive")
        w = 1.0 / sig**2
        kappa = float(np.sum(w * x * y) / np.sum(w * x * x))
        kappa_sigma = math.sqrt(1.0 / float(np.sum(w * x * x)))
    else:
        kappa = float(np.sum(x * y) / np.sum(x * x))
        dof = len(x) - 1
        s_sq = float(np.sum((y - kappa * x) ** 2)) / dof if dof > 0 else 0.0
        kappa_sigma = math.sqrt(s_sq / float(np.sum(x * x)))
    return Measurement(kappa, kappa_sigma)
