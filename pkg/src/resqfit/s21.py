"""Hanger-mode transmission fits.

A side-coupled (notch/hanger) resonator produces a dip in the complex
transmission,

    S21(f) = A e^{i(bg_phase + 2 pi f tau)}
             * [1 - (Q_l/|Q_c|) e^{i phi} / (1 + 2i Q_l (f/f_r - 1))],

which traces a circle in the complex plane. Fitting proceeds in the usual
multi-step fashion: cable-delay removal, algebraic circle fit, phase-vs-
frequency fit, then full nonlinear refinement of all seven parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from ._lm import levenberg_marquardt
from .core import ComplexTrace, validate_trace
from .errors import DomainError, FitError, ValidationError

__all__ = [
    "HpdPlan",
    "ResonanceFit",
    "ScreenResult",
    "fit_s21",
    "nonlinearity_screen",
    "plan_hpd",
    "q_int",
    "reject",
    "s21_model",
    "seed_chain",
]

PARAM_NAMES = ("a", "bg_phase", "tau", "q_l", "q_c_mag", "phi", "f_r")

# A dip counts as detected when the deepest sample drops below this
# fraction of the median magnitude.
DIP_THRESHOLD = 0.99
# Fraction of samples (split between both ends of the sweep) treated as
# off-resonant for delay seeding and noise-floor estimation.
OUTER_FRACTION = 0.2
# MAD -> standard deviation for Gaussian noise.
MAD_SCALE = 1.4826


@dataclass(frozen=True)
class ResonanceFit:
    """Fitted hanger-model parameters and the derived internal quality factor.

    sigmas maps parameter names (plus "q_int") to one standard error.
    residual_rms is the rms magnitude of the complex fit residual.
    """

    a: float
    bg_phase: float
    tau: float
    q_l: float
    q_c_mag: float
    phi: float
    f_r: float
    q_int: float
    sigmas: dict[str, float]
    residual_rms: float
    accepted: bool = True

    @property
    def params(self) -> tuple[float, ...]:
        return (self.a, self.bg_phase, self.tau, self.q_l, self.q_c_mag, self.phi, self.f_r)


@dataclass(frozen=True)
class HpdPlan:
    """Frequency sweep covering the resonance circle at uniform phase steps."""

    freqs: np.ndarray
    f_r_seed: float
    q_l_seed: float
    span_linewidths: float

    def __post_init__(self) -> None:
        freqs = np.asarray(self.freqs, dtype=float).copy()
        freqs.flags.writeable = False
        object.__setattr__(self, "freqs", freqs)

    def __len__(self) -> int:
        return len(self.freqs)


@dataclass(frozen=True)
class ScreenResult:
    flagged: bool
    reasons: tuple[str, ...]
    residual_rms: float
    noise_floor: float


def _check_model_params(a, q_l, q_c_mag, f_r) -> None:
    for name, value in (("a", a), ("q_l", q_l), ("q_c_mag", q_c_mag), ("f_r", f_r)):
        if not (np.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be finite and positive, got {value}")


def s21_model(f, a, bg_phase, tau, q_l, q_c_mag, phi, f_r):
    """Evaluate the hanger transmission model at frequency f [Hz]."""
    _check_model_params(a, q_l, q_c_mag, f_r)
    if not (np.isfinite(bg_phase) and np.isfinite(tau) and np.isfinite(phi)):
        raise DomainError("bg_phase, tau, and phi must be finite")
    f = np.asarray(f, dtype=float)
    background = a * np.exp(1j * (bg_phase + 2.0 * np.pi * f * tau))
    denom = 1.0 + 2j * q_l * (f / f_r - 1.0)
    return background * (1.0 - (q_l / q_c_mag) * np.exp(1j * phi) / denom)


def q_int(q_l: float, q_c_mag: float, phi: float) -> float:
    """Internal quality factor from 1/Q_int = 1/Q_l - cos(phi)/|Q_c|."""
    if not (q_l > 0 and q_c_mag > 0):
        raise DomainError("q_l and q_c_mag must be positive")
    inv = 1.0 / q_l - math.cos(phi) / q_c_mag
    if inv <= 0.0:
        raise FitError(
            f"overcoupled/unphysical: 1/Q_l - cos(phi)/|Q_c| = {inv:.3e} is not positive"
        )
    return 1.0 / inv


def plan_hpd(
    f_r_seed: float,
    q_l_seed: float,
    n_points: int = 251,
    span_linewidths: float = 15.0,
) -> HpdPlan:
    """Build a homophasal sweep: frequencies at uniform steps of the circle
    angle theta, via f(theta) = f_r (1 - tan(theta/2) / (2 Q_l)).

    The extreme frequencies span ``span_linewidths`` times f_r/Q_l. With the
    defaults this covers about 95% of the angular arc of the circle.
    """
    if not (f_r_seed > 0 and q_l_seed > 0):
        raise DomainError("f_r_seed and q_l_seed must be positive")
    if n_points < 3:
        raise DomainError(f"need at least 3 points, got {n_points}")
    if not (np.isfinite(span_linewidths) and span_linewidths > 0):
        raise DomainError(f"span must be positive and finite, got {span_linewidths}")
    theta_max = 2.0 * math.atan(span_linewidths)
    if not theta_max < math.pi:
        raise DomainError("requested span pushes theta to the tangent singularity at pi")
    # Integer-symmetric theta grid keeps f(-theta)-f_r == -(f(theta)-f_r)
    # exact in floating point.
    k = (n_points - 1) - 2 * np.arange(n_points)
    thetas = k * (theta_max / (n_points - 1))
    deltas = f_r_seed * (np.tan(thetas / 2.0) / (2.0 * q_l_seed))
    freqs = f_r_seed - deltas  # thetas descend, so freqs ascend
    return HpdPlan(freqs=freqs, f_r_seed=f_r_seed, q_l_seed=q_l_seed, span_linewidths=span_linewidths)


def seed_chain(previous: ResonanceFit) -> tuple[float, float]:
    """Seed (f_r, Q_l) for the next lower-power sweep from the accepted fit
    at the immediately preceding higher power."""
    if not previous.accepted:
        raise FitError("cannot seed from a rejected fit")
    return previous.f_r, previous.q_l


# ---------------------------------------------------------------------------
# fitting internals


def _taubin_circle(z: np.ndarray) -> tuple[complex, float]:
    """Algebraic (Taubin) circle fit; returns (center, radius)."""
    origin = z.mean()
    w = z - origin
    x = w.real
    y = w.imag
    zsq = x * x + y * y
    mz = zsq.mean()
    mx = x.mean()
    my = y.mean()
    data = np.column_stack([zsq, x, y, np.ones_like(x)])
    scatter = data.T @ data / len(x)
    # Gradient-normalization (Taubin) constraint for a(x^2+y^2)+bx+cy+d=0.
    constraint = np.array(
        [
            [4.0 * mz, 2.0 * mx, 2.0 * my, 0.0],
            [2.0 * mx, 1.0, 0.0, 0.0],
            [2.0 * my, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    eigvals, eigvecs = scipy.linalg.eig(scatter, constraint)
    eigvals = np.real(eigvals)
    good = np.isfinite(eigvals) & (eigvals > 0)
    if not good.any():
        raise FitError("circle fit failed: no positive generalized eigenvalue")
    idx = np.flatnonzero(good)[np.argmin(eigvals[good])]
    a_, b_, c_, d_ = np.real(eigvecs[:, idx])
    if a_ == 0.0:
        raise FitError("circle fit degenerated to a line")
    xc = -b_ / (2.0 * a_)
    yc = -c_ / (2.0 * a_)
    r_sq = xc * xc + yc * yc - d_ / a_
    if r_sq <= 0:
        raise FitError("circle fit produced non-positive radius")
    return complex(xc, yc) + origin, math.sqrt(r_sq)


def _radial_ssr(z: np.ndarray) -> float:
    center, radius = _taubin_circle(z)
    res = np.abs(z - center) - radius
    return float(res @ res)


def _delay_seed(freq: np.ndarray, z: np.ndarray) -> float:
    """Slope of the off-resonant unwrapped phase, one linear fit per wing."""
    n = len(freq)
    edge = max(3, int(round(n * OUTER_FRACTION / 2.0)))
    slopes = []
    weights = []
    for sl in (slice(0, edge), slice(n - edge, n)):
        fw = freq[sl]
        ph = np.unwrap(np.angle(z[sl]))
        if fw[-1] == fw[0]:
            continue
        slope = np.polyfit(fw - fw.mean(), ph, 1)[0]
        slopes.append(slope)
        weights.append(len(fw))
    if not slopes:
        return 0.0
    return float(np.average(slopes, weights=weights)) / (2.0 * np.pi)


DELAY_SEARCH_RANGE = (-20e-9, 120e-9)  # plausible cable delays [s]


def _refine_delay(freq: np.ndarray, z: np.ndarray, tau0: float) -> float:
    """Find the delay that makes the delay-corrected data maximally circular.

    The phase-slope seed ``tau0`` can alias by whole turns when the sweep
    wings are sparsely sampled, so the search scans candidates across the
    plausible instrument range (plus a few turns around the seed) before a
    bounded 1-D refinement near the best one.
    """
    span = float(freq[-1] - freq[0])
    if span <= 0:
        return tau0

    def objective(tau: float) -> float:
        try:
            return _radial_ssr(z * np.exp(-2j * np.pi * freq * tau))
        except FitError:
            return np.inf

    turn = 1.0 / span
    lo, hi = DELAY_SEARCH_RANGE
    n = int(np.clip(math.ceil((hi - lo) / (0.2 * turn)), 9, 701))
    candidates = np.concatenate(
        [np.linspace(lo, hi, n), tau0 + turn * np.arange(-3, 4)]
    )
    costs = np.array([objective(t) for t in candidates])
    best = candidates[int(np.argmin(costs))]
    width = max(0.25 * turn, (hi - lo) / (n - 1))
    res = minimize_scalar(
        objective, bounds=(best - width, best + width), method="bounded",
        options={"xatol": 1e-6 * turn},
    )
    if res.success and res.fun <= objective(best):
        return float(res.x)
    return float(best)


def _phase_fit(freq: np.ndarray, theta: np.ndarray, f_r0: float, q_l0: float):
    """Fit theta(f) = theta0 + 2 atan(2 Q_l (1 - f/f_r))."""

    def residual(u):
        theta0, ln_ql, f_r = u
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            model = theta0 + 2.0 * np.arctan(2.0 * np.exp(ln_ql) * (1.0 - freq / f_r))
        return model - theta

    theta0_init = float(theta[0] + theta[-1]) / 2.0
    x0 = np.array([theta0_init, math.log(q_l0), f_r0])
    scale = np.array([1.0, 1.0, f_r0 / max(q_l0, 1.0)])
    result = levenberg_marquardt(residual, x0, x_scale=scale, max_iter=100)
    theta0, ln_ql, f_r = result.x
    return theta0, math.exp(ln_ql), f_r


def _model_and_jacobian(u: np.ndarray, freq: np.ndarray, f_center: float):
    """Model and analytic Jacobian in the internal parameterization.

    u = [ln a, alpha_c, tau, ln q_l, ln q_c, phi, f_r] where alpha_c is the
    background phase referenced to f_center (decorrelates phase and delay).
    Overflow during step exploration yields non-finite values, which the
    minimizer rejects.
    """
    ln_a, alpha_c, tau, ln_ql, ln_qc, phi, f_r = u
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # numpy scalars: overflow/underflow yields inf/nan for the step
        # search to reject instead of raising.
        a = np.exp(np.float64(ln_a))
        q_l = np.exp(np.float64(ln_ql))
        q_c = np.exp(np.float64(ln_qc))
        f_r = np.float64(f_r)
        bg = a * np.exp(1j * (alpha_c + 2.0 * np.pi * (freq - f_center) * tau))
        d = 1.0 + 2j * q_l * (freq / f_r - 1.0)
        e_phi = np.complex128(complex(math.cos(phi), math.sin(phi)))
        k = q_l / q_c
        resonant = 1.0 - k * e_phi / d
        model = bg * resonant

        jac = np.empty((len(freq), 7), dtype=complex)
        jac[:, 0] = model  # d/d ln a
        jac[:, 1] = 1j * model  # d/d alpha_c
        jac[:, 2] = 2j * np.pi * (freq - f_center) * model  # d/d tau
        jac[:, 3] = bg * (-(e_phi / q_c) / (d * d)) * q_l  # d/d ln q_l
        jac[:, 4] = bg * (k * e_phi / d)  # d/d ln q_c
        jac[:, 5] = bg * (-1j * k * e_phi / d)  # d/d phi
        jac[:, 6] = bg * (k * e_phi * (-2j * q_l * freq / f_r**2) / (d * d))  # d/d f_r
    return model, jac


def _wrap_phase(x: float) -> float:
    return float(math.remainder(x, 2.0 * math.pi))


def fit_s21(trace: ComplexTrace, *, max_iter: int = 200) -> ResonanceFit:
    """Fit a transmission trace to the hanger model and derive Q_int.

    Raises FitError when no dip is present, the refinement fails to
    converge, or the fitted parameters are unphysical.
    """
    report = validate_trace(trace)
    if not report.ok:
        raise ValidationError(
            f"trace failed validation: {report.findings[0].message}"
            + (f" (+{len(report) - 1} more)" if len(report) > 1 else "")
        )
    freq = trace.freq
    z = trace.s21
    mag = np.abs(z)
    scale = float(np.median(mag))
    if scale <= 0 or not np.isfinite(scale):
        raise FitError("no resonance detected: trace magnitude is degenerate")
    if mag.min() >= DIP_THRESHOLD * scale:
        raise FitError("no resonance detected: no dip below the off-resonant level")

    # Step 1: cable delay from the off-resonant phase slope, refined for
    # circularity, then removed.
    tau0 = _refine_delay(freq, z, _delay_seed(freq, z))
    z1 = z * np.exp(-2j * np.pi * freq * tau0)

    # Step 2: algebraic circle fit.
    center, radius = _taubin_circle(z1)

    # Step 3: phase-vs-frequency fit of the centered data.
    theta = np.unwrap(np.angle(z1 - center))
    dip = int(np.argmin(mag))
    f_r0 = float(freq[dip])
    dtheta = np.gradient(theta, freq)
    q_l0 = abs(float(np.median(np.sort(np.abs(dtheta))[-3:]))) * f_r0 / 4.0
    q_l0 = min(max(q_l0, 10.0), 1e9)
    theta0, q_l1, f_r1 = _phase_fit(freq, theta, f_r0, q_l0)

    # Step 4: derive the remaining seeds from the circle geometry.
    p_off = center - radius * complex(math.cos(theta0), math.sin(theta0))
    if p_off == 0:
        raise FitError("fit diverged: degenerate off-resonant point")
    a0 = abs(p_off)
    r_norm = radius / a0
    c_norm = center / p_off
    phi0 = math.atan2((1.0 - c_norm).imag, (1.0 - c_norm).real)
    q_c0 = q_l1 / (2.0 * r_norm)

    # Step 5: full nonlinear refinement.
    f_center = float(np.median(freq))
    alpha_c0 = _wrap_phase(math.atan2(p_off.imag, p_off.real) + 2.0 * np.pi * f_center * tau0)
    u0 = np.array([
        math.log(a0),
        alpha_c0,
        tau0,
        math.log(max(q_l1, 1.0)),
        math.log(max(q_c0, 1.0)),
        phi0,
        f_r1,
    ])
    x_scale = np.array([1.0, 1.0, 1e-9, 1.0, 1.0, 1.0, f_r1 / max(q_l1, 10.0)])

    def residual(u):
        model, _ = _model_and_jacobian(u, freq, f_center)
        r = model - z
        return np.concatenate([r.real, r.imag])

    def jacobian(u):
        _, jac = _model_and_jacobian(u, freq, f_center)
        return np.concatenate([jac.real, jac.imag])

    result = levenberg_marquardt(
        residual, u0, jacobian, x_scale=x_scale, max_iter=max_iter, step_tol=1e-10
    )
    if not result.converged:
        raise FitError("fit diverged: refinement did not converge")

    ln_a, alpha_c, tau, ln_ql, ln_qc, phi, f_r = result.x
    with np.errstate(over="ignore"):
        a = float(np.exp(ln_a))
        q_l = float(np.exp(ln_ql))
        q_c = float(np.exp(ln_qc))
    if not all(np.isfinite(v) and v > 0 for v in (a, q_l, q_c)):
        raise FitError("unphysical fit: parameter magnitudes overflowed")
    phi = _wrap_phase(phi)
    if abs(phi) >= math.pi / 2.0:
        raise FitError(f"unphysical fit: asymmetry angle phi={phi:.3f} outside (-pi/2, pi/2)")
    bg_phase = _wrap_phase(alpha_c - 2.0 * np.pi * f_center * tau)
    if not (freq[0] <= f_r <= freq[-1]):
        raise FitError(f"unphysical fit: f_r={f_r:.6e} outside the sweep span")
    quality = q_int(q_l, q_c, phi)  # raises "overcoupled/unphysical" when invalid

    # Covariance back to physical parameters: d p/d ln p = p for the three
    # log-fitted magnitudes; the phase offset shifts by -2 pi f_center tau.
    sigmas: dict[str, float] = {}
    residual_rms = math.sqrt(result.cost / len(freq))
    if result.covariance is not None:
        grads = np.eye(7)
        grads[0, 0] = a
        grads[3, 3] = q_l
        grads[4, 4] = q_c
        grads[1, 2] = -2.0 * np.pi * f_center  # bg_phase couples to tau
        cov = grads @ result.covariance @ grads.T
        for i, name in enumerate(PARAM_NAMES):
            sigmas[name] = math.sqrt(max(cov[i, i], 0.0))
        # First-order propagation into Q_int over (q_l, q_c, phi).
        gq = np.zeros(7)
        gq[3] = quality**2 / q_l**2
        gq[4] = -(quality**2) * math.cos(phi) / q_c**2
        gq[5] = -(quality**2) * math.sin(phi) / q_c
        sigmas["q_int"] = math.sqrt(max(gq @ cov @ gq, 0.0))
    else:
        sigmas = {name: float("nan") for name in (*PARAM_NAMES, "q_int")}

    return ResonanceFit(
        a=a,
        bg_phase=bg_phase,
        tau=tau,
        q_l=q_l,
        q_c_mag=q_c,
        phi=phi,
        f_r=f_r,
        q_int=quality,
        sigmas=sigmas,
        residual_rms=residual_rms,
        accepted=True,
    )


def reject(fit: ResonanceFit) -> ResonanceFit:
    """Return a copy of the fit marked as rejected."""
    return replace(fit, accepted=False)


def nonlinearity_screen(trace: ComplexTrace, fit: ResonanceFit) -> ScreenResult:
    """Flag traces whose residuals or phase response betray a driven
    (Duffing-like) resonance.

    The per-component noise floor is MAD-estimated from first differences
    of the fit residual over the outer 20% of samples (differencing keeps
    smooth model mismatch out of the floor); the trace is flagged when the
    overall residual exceeds five times that floor, or when the circle
    phase is non-monotonic through resonance beyond noise. This screen is
    a stand-in criterion and is labelled as such in reports.
    """
    if not fit.accepted:
        raise FitError("screen requires an accepted fit")
    freq = trace.freq
    z = trace.s21
    model = s21_model(freq, *fit.params)
    res = model - z
    n = len(freq)
    edge = max(3, int(round(n * OUTER_FRACTION / 2.0)))
    diffs = []
    for component in (res.real, res.imag):
        for sl in (slice(0, edge), slice(n - edge, n)):
            d = np.diff(component[sl])
            if d.size:
                diffs.append(d)
    diffs = np.concatenate(diffs)
    floor_comp = MAD_SCALE * float(np.median(np.abs(diffs))) / math.sqrt(2.0)
    noise_floor = math.sqrt(2.0) * floor_comp
    residual_rms = math.sqrt(float(res.real @ res.real + res.imag @ res.imag) / len(freq))
    scale = float(np.median(np.abs(z)))

    reasons: list[str] = []
    if residual_rms > max(5.0 * noise_floor, 1e-10 * scale):
        reasons.append("residual_rms exceeds 5x the off-resonant noise floor")

    # Phase monotonicity through resonance on the delay/background-corrected circle.
    w = z / (fit.a * np.exp(1j * (fit.bg_phase + 2.0 * np.pi * freq * fit.tau)))
    center = 1.0 - (fit.q_l / (2.0 * fit.q_c_mag)) * np.exp(1j * fit.phi)
    r_canon = fit.q_l / (2.0 * fit.q_c_mag)
    theta = np.unwrap(np.angle(w - center))
    sigma_theta = floor_comp / max(fit.a * r_canon, 1e-300)
    # theta must decrease with frequency; measure the largest uphill excursion.
    running_min = np.minimum.accumulate(theta)
    excursion = float(np.max(theta - running_min))
    if excursion > max(0.12, 9.0 * sigma_theta):
        reasons.append("phase response is non-monotonic through resonance")

    return ScreenResult(
        flagged=bool(reasons),
        reasons=tuple(reasons),
        residual_rms=residual_rms,
        noise_floor=noise_floor,
    )
