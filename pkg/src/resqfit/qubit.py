"""Qubit decay fitting and coherence statistics.

Relaxation (T1) and Hahn-echo (T2E) traces are fitted to a single
exponential on log-spaced delays. Ramsey traces carry intentional
detuning and beat structure, so they are fitted to one or two cosines
under a common exponential envelope, with the model order chosen by a
small-sample-corrected information criterion. Time-series statistics
follow the reporting conventions of repeated-benchmarking runs: means
and standard deviations per metric, a time-averaged quality factor
2 pi f_q T1_mean, and a pure-dephasing series built from consecutive
(T1, T2E) pairs via 1/T_phi = 1/T2E - 0.5/T1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._lm import levenberg_marquardt
from .core import CONSTANTS, Measurement
from .errors import DomainError, FitError

__all__ = [
    "CoherenceStats",
    "DecayFit",
    "DecayTrace",
    "FitRecord",
    "SeriesStats",
    "build_stats",
    "ej_from_transmon",
    "fit_exp_decay",
    "fit_ramsey",
    "q_bar",
    "qp_fraction",
    "t_phi",
]

TRACE_KINDS = ("T1", "T2E", "T2R")
MIN_EXP_POINTS = 8
MIN_RAMSEY_POINTS = 32
# Extra AICc penalty a two-beat model must overcome to be preferred.
MODEL_SELECTION_MARGIN = 2.0


@dataclass(frozen=True)
class DecayTrace:
    """Excited-state population versus delay for one T1/T2E/T2R run."""

    delays: np.ndarray  # [s]
    p_e: np.ndarray
    kind: str
    detuning_hint: float | None = None  # [Hz], T2R only

    def __post_init__(self) -> None:
        delays = np.asarray(self.delays, dtype=float).copy()
        p_e = np.asarray(self.p_e, dtype=float).copy()
        if self.kind not in TRACE_KINDS:
            raise DomainError(f"kind must be one of {TRACE_KINDS}, got {self.kind!r}")
        if delays.shape != p_e.shape or delays.ndim != 1:
            raise DomainError("delays and p_e must be matching 1-D arrays")
        if np.any(np.diff(delays) <= 0):
            raise DomainError("delays must be strictly increasing")
        delays.flags.writeable = False
        p_e.flags.writeable = False
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "p_e", p_e)

    def __len__(self) -> int:
        return len(self.delays)


@dataclass(frozen=True)
class DecayFit:
    """Fitted decay time with amplitude/offset; Ramsey fits also carry the
    recovered beat frequencies."""

    t: Measurement  # decay time [s]
    amplitude: float
    offset: float
    beat_freqs: tuple[Measurement, ...] = ()
    residual_rms: float = 0.0
    kind: str = "T1"


@dataclass(frozen=True)
class FitRecord:
    timestamp: float
    kind: str
    fit: DecayFit


@dataclass(frozen=True)
class SeriesStats:
    timestamps: tuple[float, ...]
    values: tuple[float, ...]
    mean: float
    sd: float

    @property
    def count(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class CoherenceStats:
    t1: SeriesStats | None
    t2r: SeriesStats | None
    t2e: SeriesStats | None
    t_phi: SeriesStats | None
    q_bar: Measurement | None
    n_rejected: int


def ej_from_transmon(f_q: float, e_c_over_h: float) -> float:
    """Josephson energy over h [Hz] from the transmon relation
    h f_q = sqrt(8 E_J E_C) - E_C."""
    if not (f_q > 0 and e_c_over_h > 0):
        raise DomainError("f_q and e_c_over_h must be positive")
    return (f_q + e_c_over_h) ** 2 / (8.0 * e_c_over_h)


def t_phi(t1: float, t2e: float) -> float:
    """Pure dephasing time 1/(1/T2E - 0.5/T1) [s].

    Returns +inf when T2E >= 2 T1 (lifetime-limited coherence leaves no
    resolvable pure dephasing).
    """
    if not (t1 > 0 and t2e > 0):
        raise DomainError("t1 and t2e must be positive")
    inv = 1.0 / t2e - 0.5 / t1
    if inv <= 0.0:
        return math.inf
    return 1.0 / inv


def q_bar(f_q: float, t1_mean: float) -> float:
    """Time-averaged quality factor 2 pi f_q T1_mean."""
    if not (f_q > 0 and t1_mean > 0):
        raise DomainError("f_q and t1_mean must be positive")
    return 2.0 * math.pi * f_q * t1_mean


def qp_fraction(temperature_k: float, delta_0: float) -> float:
    """Thermal-equilibrium fraction of broken Cooper pairs,
    sqrt(2 pi k_B T / Delta_0) exp(-Delta_0 / k_B T)."""
    if not (temperature_k > 0 and delta_0 > 0):
        raise DomainError("temperature and delta_0 must be positive")
    kt = CONSTANTS.k_b * temperature_k
    return math.sqrt(2.0 * math.pi * kt / delta_0) * math.exp(-delta_0 / kt)


# ---------------------------------------------------------------------------
# decay fits


def _varpro_exp(delays, p_e, ln_t):
    """Linear amplitude/offset solve at fixed decay time; returns
    (residuals, amplitude, offset)."""
    with np.errstate(over="ignore", under="ignore"):
        env = np.exp(-delays / np.exp(ln_t))
    design = np.column_stack([env, np.ones_like(env)])
    coef, *_ = np.linalg.lstsq(design, p_e, rcond=None)
    resid = design @ coef - p_e
    return resid, float(coef[0]), float(coef[1])


def fit_exp_decay(trace: DecayTrace) -> DecayFit:
    """Fit p_e(tau) = a exp(-tau/T) + c for a T1 or T2E trace."""
    if trace.kind not in ("T1", "T2E"):
        raise DomainError(f"expected a T1 or T2E trace, got {trace.kind}")
    if len(trace) < MIN_EXP_POINTS:
        raise DomainError(f"need at least {MIN_EXP_POINTS} points, got {len(trace)}")
    delays = trace.delays
    p_e = trace.p_e
    if np.ptp(p_e) == 0.0:
        raise DomainError("p_e is constant; nothing to fit")

    # Deterministic seeding: offset from the tail, amplitude from the head,
    # T from the log-linear slope of the positive part of (p_e - c).
    n = len(delays)
    tail = p_e[-max(2, n // 5):]
    c0 = float(tail.mean())
    a0 = float(p_e[: max(2, n // 5)].mean()) - c0
    band = p_e - c0
    if a0 < 0:
        band = -band
    usable = band > max(1e-3 * abs(a0), 1e-12)
    if usable.sum() >= 2:
        slope = np.polyfit(delays[usable], np.log(band[usable]), 1)[0]
        t0 = -1.0 / slope if slope < 0 else float(delays[-1] - delays[0])
    else:
        t0 = float(delays[-1] - delays[0])
    t0 = min(max(t0, float(np.diff(delays).min())), 100.0 * float(delays[-1]))

    def residual(u):
        return _varpro_exp(delays, p_e, u[0])[0]

    result = levenberg_marquardt(residual, np.array([math.log(t0)]), max_iter=200)
    if not result.converged or not np.isfinite(result.x[0]):
        raise FitError("fit diverged: exponential fit did not converge")
    t_fit = float(np.exp(result.x[0]))
    if not t_fit > 0:
        raise FitError("unphysical fit: decay time is not positive")
    resid, amp, off = _varpro_exp(delays, p_e, result.x[0])

    # Full 3-parameter covariance at the solution for the T error bar.
    env = np.exp(-delays / t_fit)
    jac = np.column_stack([amp * env * delays / t_fit**2, env, np.ones_like(env)])
    cost = float(resid @ resid)
    dof = len(delays) - 3
    sigma_t = math.inf
    if dof > 0 and cost >= 0:
        try:
            cov = np.linalg.inv(jac.T @ jac) * (cost / dof)
            sigma_t = math.sqrt(max(cov[0, 0], 0.0))
        except np.linalg.LinAlgError:
            pass
    return DecayFit(
        t=Measurement(t_fit, sigma_t),
        amplitude=amp,
        offset=off,
        residual_rms=math.sqrt(cost / len(delays)),
        kind=trace.kind,
    )


def _periodogram_peaks(delays, values, n_peaks):
    """Strongest periodogram frequencies with parabolic refinement.

    Returns (peaks, threshold): peaks as (frequency, power) pairs and the
    power a peak must exceed to count as an oscillation. The threshold is
    three times the expected maximum of a pure-noise spectrum, whose bins
    are exponentially distributed: mean = median/ln(2), and the maximum of
    n_bins draws concentrates near mean * ln(n_bins).
    """
    n = len(values)
    dt = float(np.median(np.diff(delays)))
    spec = np.abs(np.fft.rfft(values - values.mean())) ** 2
    spec[0] = 0.0
    freqs = np.fft.rfftfreq(n, dt)
    n_bins = len(spec) - 1
    noise_mean = float(np.median(spec[1:])) / math.log(2.0)
    threshold = 3.0 * noise_mean * math.log(max(n_bins, 2))

    # Group contiguous above-threshold bins into islands so that spectral
    # leakage around a strong line cannot masquerade as a second beat.
    above = spec >= threshold
    above[0] = False
    islands: list[tuple[int, float]] = []  # (argmax bin, max power)
    idx = 1
    while idx < len(spec):
        if not above[idx]:
            idx += 1
            continue
        stop = idx
        while stop < len(spec) and above[stop]:
            stop += 1
        local = idx + int(np.argmax(spec[idx:stop]))
        islands.append((local, float(spec[local])))
        idx = stop
    islands.sort(key=lambda t: -t[1])

    picked: list[tuple[float, float]] = []
    for bin_idx, power in islands[:n_peaks]:
        # parabolic interpolation on log power
        if 1 <= bin_idx < len(spec) - 1 and spec[bin_idx - 1] > 0 and spec[bin_idx + 1] > 0:
            la, lb, lc = (np.log(spec[bin_idx - 1]), np.log(spec[bin_idx]),
                          np.log(spec[bin_idx + 1]))
            denom = la - 2.0 * lb + lc
            shift = 0.5 * (la - lc) / denom if denom != 0 else 0.0
            shift = float(np.clip(shift, -0.5, 0.5))
        else:
            shift = 0.0
        picked.append((float(freqs[bin_idx] + shift * (freqs[1] - freqs[0])), power))
    return picked, threshold


def _varpro_ramsey(delays, p_e, u):
    """Amplitudes/offset solve at fixed (ln T, nu_k); returns residuals and
    the linear coefficients [cos_k, sin_k, ..., offset]."""
    with np.errstate(over="ignore", under="ignore"):
        env = np.exp(-delays / np.exp(u[0]))
    cols = []
    for nu in u[1:]:
        phase = 2.0 * np.pi * nu * delays
        cols.extend([env * np.cos(phase), env * np.sin(phase)])
    cols.append(np.ones_like(delays))
    design = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(design, p_e, rcond=None)
    resid = design @ coef - p_e
    return resid, coef, design


def _aicc(cost: float, m: int, k: int) -> float:
    if m - k - 1 <= 0:
        return math.inf
    return m * math.log(max(cost, 1e-300) / m) + 2.0 * k + 2.0 * k * (k + 1) / (m - k - 1)


def fit_ramsey(trace: DecayTrace) -> DecayFit:
    """Fit a Ramsey trace to one or two cosines under a common exponential
    envelope; the beat count is chosen by corrected AIC with a margin."""
    if trace.kind != "T2R":
        raise DomainError(f"expected a T2R trace, got {trace.kind}")
    if len(trace) < MIN_RAMSEY_POINTS:
        raise DomainError(f"need at least {MIN_RAMSEY_POINTS} points, got {len(trace)}")
    if trace.detuning_hint is None:
        raise DomainError("Ramsey fits need the applied detuning as a hint")
    delays = trace.delays
    steps = np.diff(delays)
    if np.ptp(steps) > 1e-6 * steps.mean():
        raise DomainError("Ramsey delays must be linearly spaced")
    p_e = trace.p_e

    # Oscillation must stand out of the spectrum once the decay envelope is
    # removed; otherwise there is no beat to fit.
    try:
        exp_fit = fit_exp_decay(DecayTrace(delays, p_e, "T1"))
        detrended = p_e - (exp_fit.amplitude * np.exp(-delays / exp_fit.t.value) + exp_fit.offset)
    except (DomainError, FitError):
        detrended = p_e - p_e.mean()
    peaks, threshold = _periodogram_peaks(delays, detrended, 2)
    # A peak must clear the noise statistics and carry real amplitude; the
    # latter rejects numerically-flat traces whose spectrum is rounding noise.
    m = len(delays)
    amp_floor = 1e-7 * max(float(np.ptp(p_e)), 1e-300)
    significant = [
        f for f, power in peaks
        if power >= threshold and 2.0 * math.sqrt(power) / m >= amp_floor
    ]
    if not significant:
        raise FitError("no oscillation detected: spectral peak below 3x the noise floor")

    span = float(delays[-1] - delays[0])
    candidates = {1: [significant[0]]}
    if len(significant) > 1:
        candidates[2] = [significant[0], significant[1]]

    results = {}
    for k_beats, nus in candidates.items():
        u0 = np.array([math.log(span), *nus])
        scale = np.array([1.0, *(1.0 / span,) * k_beats])

        def residual(u):
            return _varpro_ramsey(delays, p_e, u)[0]

        res = levenberg_marquardt(residual, u0, x_scale=scale, max_iter=200)
        n_params = 1 + k_beats + 2 * k_beats + 1  # T, nu_k, (cos, sin)_k, offset
        results[k_beats] = (res, _aicc(res.cost, len(delays), n_params))

    best_k = 1
    if 2 in results and results[2][1] < results[1][1] - MODEL_SELECTION_MARGIN:
        best_k = 2
    result, _ = results[best_k]
    if not result.converged or not np.all(np.isfinite(result.x)):
        raise FitError("fit diverged: Ramsey fit did not converge")

    t_fit = float(np.exp(result.x[0]))
    nus = [abs(float(v)) for v in result.x[1:]]
    resid, coef, design = _varpro_ramsey(delays, p_e, result.x)
    cost = float(resid @ resid)

    # Covariance over the full parameter set (nonlinear + linear).
    env = np.exp(-delays / t_fit)
    model_cols = []
    d_t = np.zeros_like(delays)
    for i, nu in enumerate(nus):
        phase = 2.0 * np.pi * nu * delays
        c_i, s_i = coef[2 * i], coef[2 * i + 1]
        term = env * (c_i * np.cos(phase) + s_i * np.sin(phase))
        d_t += term * delays / t_fit**2
        model_cols.append(env * 2.0 * np.pi * delays * (-c_i * np.sin(phase) + s_i * np.cos(phase)))
    jac = np.column_stack([d_t, *model_cols, design])
    dof = len(delays) - jac.shape[1]
    sigma_t = math.inf
    nu_sigmas = [math.inf] * len(nus)
    if dof > 0:
        try:
            cov = np.linalg.pinv(jac.T @ jac) * (cost / dof)
            sigma_t = math.sqrt(max(cov[0, 0], 0.0))
            nu_sigmas = [math.sqrt(max(cov[1 + i, 1 + i], 0.0)) for i in range(len(nus))]
        except np.linalg.LinAlgError:
            pass

    beats = tuple(
        sorted((Measurement(nu, s) for nu, s in zip(nus, nu_sigmas)), key=lambda m: m.value)
    )
    amplitude = float(np.hypot(coef[0], coef[1]))
    return DecayFit(
        t=Measurement(t_fit, sigma_t),
        amplitude=amplitude,
        offset=float(coef[-1]),
        beat_freqs=beats,
        residual_rms=math.sqrt(cost / len(delays)),
        kind="T2R",
    )


# ---------------------------------------------------------------------------
# time-series statistics


def _series(records) -> SeriesStats | None:
    if not records:
        return None
    records = sorted(records, key=lambda r: r[0])
    ts = tuple(r[0] for r in records)
    vals = tuple(r[1] for r in records)
    finite = [v for v in vals if math.isfinite(v)]
    if finite:
        mean = float(np.mean(finite))
        sd = float(np.std(finite, ddof=1)) if len(finite) > 1 else 0.0
    else:
        mean = math.inf
        sd = 0.0
    return SeriesStats(timestamps=ts, values=vals, mean=mean, sd=sd)


def build_stats(records, pair_window: float, f_q: float | None = None) -> CoherenceStats:
    """Aggregate a timestamped log of decay fits into per-metric statistics.

    Fits whose error reaches the fitted value are rejected from all series.
    The pure-dephasing series pairs each T1 with the nearest unpaired T2E
    whose timestamp lies within ``pair_window`` seconds; infinite entries
    (lifetime-limited pairs) stay in the series but are excluded from the
    mean and standard deviation.
    """
    entries = sorted(records, key=lambda r: r.timestamp)
    if not entries:
        raise DomainError("empty fit log")
    if pair_window <= 0:
        raise DomainError("pair_window must be positive")
    accepted = [r for r in entries if r.fit.t.reliable]
    n_rejected = len(entries) - len(accepted)

    by_kind: dict[str, list[tuple[float, float]]] = {k: [] for k in TRACE_KINDS}
    for rec in accepted:
        by_kind[rec.kind].append((rec.timestamp, rec.fit.t.value))

    # Consecutive T1/T2E pairing for the dephasing series.
    tphi_records: list[tuple[float, float]] = []
    pending: dict[str, tuple[float, float] | None] = {"T1": None, "T2E": None}
    for rec in accepted:
        if rec.kind == "T2R":
            continue
        other = "T2E" if rec.kind == "T1" else "T1"
        match = pending[other]
        if match is not None and abs(rec.timestamp - match[0]) < pair_window:
            t1_val = match[1] if other == "T1" else rec.fit.t.value
            t2e_val = rec.fit.t.value if other == "T1" else match[1]
            tphi_records.append((rec.timestamp, t_phi(t1_val, t2e_val)))
            pending[other] = None
            pending[rec.kind] = None
        else:
            pending[rec.kind] = (rec.timestamp, rec.fit.t.value)

    t1_stats = _series(by_kind["T1"])
    qbar = None
    if f_q is not None and t1_stats is not None:
        qbar = Measurement(q_bar(f_q, t1_stats.mean), 2.0 * math.pi * f_q * t1_stats.sd)
    return CoherenceStats(
        t1=t1_stats,
        t2r=_series(by_kind["T2R"]),
        t2e=_series(by_kind["T2E"]),
        t_phi=_series(tphi_records),
        q_bar=qbar,
        n_rejected=n_rejected,
    )
