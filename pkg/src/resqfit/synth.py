"""Forward simulators: synthetic traces, loss grids, inductance tables,
and decay logs from known ground truth.

Every generator is a pure function of its scenario, whose seed fully
determines the output. These serve as the oracle for the inverse fits:
zero-noise output must round-trip through the corresponding fit, and
noisy output exercises the error bars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CONSTANTS, ComplexTrace, Measurement, ResonatorRecord
from .errors import DomainError
from .kinetic import coth_sheet_inductance
from .loss import AttenuationChain, LossFit, LossGridPoint, photons_from_power, q_total
from .qubit import DecayTrace
from .rng import CounterRng
from .s21 import HpdPlan, plan_hpd, s21_model

__all__ = [
    "CpwGeometry",
    "DecayLogScenario",
    "LossGridScenario",
    "S21Scenario",
    "SynthInductanceSet",
    "default_geometries",
    "synth_decay_log",
    "synth_inductance_tables",
    "synth_loss_grid",
    "synth_s21",
]

# Stream labels keep the noise of different outputs independent.
_STREAM_S21_RE = 1
_STREAM_S21_IM = 2
_STREAM_LOSS = 3
_STREAM_DECAY = 4


@dataclass(frozen=True)
class S21Scenario:
    """Ground truth for one transmission trace."""

    seed: int
    a: float = 1.0
    bg_phase: float = 0.0
    tau: float = 0.0
    q_l: float = 1e5
    q_c_mag: float = 2e5
    phi: float = 0.0
    f_r: float = 5e9
    n_points: int = 251
    span_linewidths: float = 15.0
    freqs: np.ndarray | None = None  # explicit grid overrides the sweep plan
    noise_sigma: float = 0.0  # per real/imag component
    warp: float = 0.0  # bifurcation-style frequency pull, in linewidths
    power_dbm: float | None = None
    temperature_k: float | None = None

    def plan(self) -> HpdPlan:
        return plan_hpd(self.f_r, self.q_l, self.n_points, self.span_linewidths)


def synth_s21(scenario: S21Scenario) -> ComplexTrace:
    """Synthesize a ComplexTrace; returns the model samples plus seeded
    complex Gaussian noise, optionally warped to mimic a driven resonator."""
    freqs = scenario.freqs if scenario.freqs is not None else scenario.plan().freqs
    freqs = np.asarray(freqs, dtype=float)
    f_eval = freqs
    if scenario.warp != 0.0:
        # Detuning compression centered on resonance: for warp > 1 the
        # effective frequency axis folds through f_r, reversing the circle
        # phase like a bifurcated (driven-Duffing) response.
        linewidth = scenario.f_r / scenario.q_l
        x = (freqs - scenario.f_r) / linewidth
        f_eval = freqs - scenario.warp * linewidth * x / (1.0 + x * x)
    z = s21_model(
        f_eval, scenario.a, scenario.bg_phase, scenario.tau,
        scenario.q_l, scenario.q_c_mag, scenario.phi, scenario.f_r,
    )
    if scenario.noise_sigma > 0.0:
        rng = CounterRng(scenario.seed)
        re = rng.stream(_STREAM_S21_RE).normals(0, len(freqs))
        im = rng.stream(_STREAM_S21_IM).normals(0, len(freqs))
        z = z + scenario.noise_sigma * (re + 1j * im)
    return ComplexTrace(freqs, z, scenario.power_dbm, scenario.temperature_k)


@dataclass(frozen=True)
class LossGridScenario:
    """Ground truth for a Q_int(nbar, T) sweep."""

    seed: int
    q_tls0: float
    q_other: float
    f_r: float
    delta_0: float
    d_scale: float = 50.0
    beta1: float = 1.0
    beta2: float = 1.0
    a_qp: float | None = None
    nbars: tuple[float, ...] = tuple(float(v) for v in np.logspace(0, 6, 7))
    temps_k: tuple[float, ...] = (0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
    q_rel_sigma: float = 0.0
    atten_db: float = 66.0
    q_l: float = 1e5
    q_c_mag: float = 2e5

    def truth(self) -> LossFit:
        """The generating parameters packaged for q_total evaluation."""
        return LossFit(
            q_tls0=Measurement(self.q_tls0),
            d_scale=Measurement(self.d_scale),
            beta1=Measurement(self.beta1),
            beta2=Measurement(self.beta2),
            a_qp=None if self.a_qp is None else Measurement(self.a_qp),
            q_other=Measurement(self.q_other),
            omega=2.0 * math.pi * self.f_r,
            delta_0=self.delta_0,
            correlations=np.eye(6),
            param_names=("q_tls0", "d_scale", "beta1", "beta2", "a_qp", "q_other"),
            unreliable=(),
            n_points=0,
            cost=0.0,
        )

    def chain(self) -> AttenuationChain:
        return AttenuationChain(
            freq_hz=np.array([1e9, 12e9]),
            atten_db=np.array([self.atten_db, self.atten_db]),
            q_l=self.q_l,
            q_c_mag=self.q_c_mag,
        )


def _power_for_photons(nbar: float, chain: AttenuationChain, f_r: float) -> float:
    """Source power in dBm that lands the requested photon number."""
    omega = 2.0 * math.pi * f_r
    p_watt = nbar * CONSTANTS.hbar * omega**2 * chain.q_c_mag / (2.0 * chain.q_l**2)
    return 10.0 * math.log10(p_watt * 1e3) + chain.total_atten_db(f_r)


def synth_loss_grid(scenario: LossGridScenario) -> list[LossGridPoint]:
    """Evaluate the loss model over the (nbar, T) grid with multiplicative
    lognormal noise of relative size q_rel_sigma."""
    truth = scenario.truth()
    chain = scenario.chain()
    rng = CounterRng(scenario.seed).stream(_STREAM_LOSS)
    points: list[LossGridPoint] = []
    k = 0
    for temp in scenario.temps_k:
        for nbar in scenario.nbars:
            q = q_total(nbar, temp, truth)
            if scenario.q_rel_sigma > 0.0:
                g = float(rng.normals(k, 1)[0])
                q = q * math.exp(scenario.q_rel_sigma * g)
                sigma = q * scenario.q_rel_sigma
            else:
                sigma = 0.0
            k += 1
            dbm = _power_for_photons(nbar, chain, scenario.f_r)
            points.append(
                LossGridPoint(
                    nbar=nbar,
                    temperature_k=temp,
                    q_int=Measurement(q, sigma),
                    source_power_dbm=dbm,
                )
            )
    # Round-trip sanity: the recorded powers reproduce the grid photon numbers.
    assert all(
        abs(photons_from_power(p.source_power_dbm, chain, scenario.f_r) - p.nbar) < 1e-6 * p.nbar
        for p in points[: len(scenario.nbars)]
    )
    return points


@dataclass(frozen=True)
class CpwGeometry:
    """Lateral geometry of one coplanar-waveguide resonator design."""

    name: str
    gap_um: float
    width_um: float
    length_um: float
    l_g: float  # geometric inductance [H]
    f_sim: float  # kinetic-inductance-free resonance [Hz]
    g_per_length: float = 0.4  # G(s) * (w + s) / L, held constant across the family

    @property
    def g_factor(self) -> float:
        return self.g_per_length * self.length_um / (self.width_um + self.gap_um)


def default_geometries() -> tuple[CpwGeometry, ...]:
    """A CPW family with gaps 2..16 um at constant impedance (w/s fixed)."""
    out = []
    for i, gap in enumerate(range(2, 17, 2)):
        out.append(
            CpwGeometry(
                name=f"CPW-{gap}",
                gap_um=float(gap),
                width_um=1.6 * gap,
                length_um=4000.0 + 250.0 * i,
                l_g=(8.0 + 0.5 * i) * 1e-9,
                f_sim=4.2e9 + 0.45e9 * i,
            )
        )
    return tuple(out)


@dataclass(frozen=True)
class SynthInductanceSet:
    """Per-film resonator records plus the simulation sweeps behind G(s)."""

    records: tuple[ResonatorRecord, ...]
    gfactor_tables: dict[str, tuple[tuple[float, float], ...]]
    true_lambda: float
    lk_true: dict[str, float] = field(default_factory=dict)  # film id -> L_ksq [H/sq]


def synth_inductance_tables(
    lam: float,
    thicknesses_um,
    geometries=None,
    *,
    seed: int = 0,
    lk_rel_sigma: float = 0.0,
    ls_grid=(0.5e-12, 1e-12, 2e-12, 4e-12),
) -> SynthInductanceSet:
    """Emit film records consistent with a single penetration depth.

    Each film gets one resonator per geometry: the sheet inductance follows
    the coth law (optionally with lognormal scatter per resonator), total
    kinetic inductance is G(s) * L_ksq, and the measured frequency follows
    the fixed-capacitance scaling f_meas = f_sim sqrt(L_g / (L_g + L_k)).
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    geometries = tuple(geometries) if geometries is not None else default_geometries()
    rng = CounterRng(seed)
    records: list[ResonatorRecord] = []
    lk_true: dict[str, float] = {}
    k = 0
    for i, t_um in enumerate(thicknesses_um):
        film = f"F{i + 1}"
        lk_sq_film = coth_sheet_inductance(t_um * 1e-6, lam)
        lk_true[film] = lk_sq_film
        for geo in geometries:
            lk_sq = lk_sq_film
            if lk_rel_sigma > 0.0:
                g = float(rng.normals(k, 1)[0])
                lk_sq = lk_sq * math.exp(lk_rel_sigma * g)
            k += 1
            l_k = geo.g_factor * lk_sq
            f_meas = geo.f_sim * math.sqrt(geo.l_g / (geo.l_g + l_k))
            records.append(
                ResonatorRecord(
                    id=f"{film}-{geo.name}",
                    kind="CPW",
                    gap_um=geo.gap_um,
                    thickness_um=float(t_um),
                    f_r_sim=geo.f_sim,
                    f_r_meas=f_meas,
                    l_g=geo.l_g,
                    g_factor=geo.g_factor,
                    p_ms=1e-4 * (1.0 + geo.gap_um),
                )
            )
    tables = {
        geo.name: tuple((ls, geo.l_g + geo.g_factor * ls) for ls in ls_grid)
        for geo in geometries
    }
    return SynthInductanceSet(
        records=tuple(records),
        gfactor_tables=tables,
        true_lambda=lam,
        lk_true=lk_true,
    )


@dataclass(frozen=True)
class DecayLogScenario:
    """Ground truth for an interleaved T1/T2E/T2R benchmarking log."""

    seed: int
    t1: float
    t2e: float
    t2r: float
    beat_freqs: tuple[float, ...] = (17e3,)
    n_cycles: int = 10
    pe_sigma: float = 0.0
    drift_frac: float = 0.0  # linear drift of the true times across the log
    n_exp_points: int = 30
    n_ramsey_points: int = 257
    cycle_period_s: float = 300.0
    ramsey_every: int = 3  # one T2R per this many cycles


def _exp_delays(t_scale: float, n: int) -> np.ndarray:
    return np.logspace(math.log10(t_scale / 50.0), math.log10(5.0 * t_scale), n)


def synth_decay_log(scenario: DecayLogScenario):
    """Generate timestamped DecayTraces: (timestamp, trace) pairs, ordered
    T1 then T2E each cycle with a Ramsey run every few cycles."""
    rng = CounterRng(scenario.seed).stream(_STREAM_DECAY)
    out: list[tuple[float, DecayTrace]] = []
    counter = 0

    def noisy(values: np.ndarray) -> np.ndarray:
        nonlocal counter
        if scenario.pe_sigma <= 0.0:
            return values
        g = rng.normals(counter, len(values))
        counter += len(values)
        return values + scenario.pe_sigma * g

    total = scenario.n_cycles * scenario.cycle_period_s
    for cycle in range(scenario.n_cycles):
        t0 = cycle * scenario.cycle_period_s
        drift = 1.0 + scenario.drift_frac * ((t0 / total) - 0.5) if total > 0 else 1.0
        t1 = scenario.t1 * drift
        t2e = scenario.t2e * drift

        delays = _exp_delays(t1, scenario.n_exp_points)
        out.append((t0, DecayTrace(delays, noisy(np.exp(-delays / t1)), "T1")))

        delays = _exp_delays(t2e, scenario.n_exp_points)
        out.append(
            (t0 + scenario.cycle_period_s / 3.0,
             DecayTrace(delays, noisy(np.exp(-delays / t2e)), "T2E"))
        )

        if cycle % scenario.ramsey_every == 0:
            t2r = scenario.t2r * drift
            delays = np.linspace(0.0, 2.0 * t2r, scenario.n_ramsey_points + 1)[1:]
            signal = np.zeros_like(delays)
            for nu in scenario.beat_freqs:
                signal += np.cos(2.0 * np.pi * nu * delays) / len(scenario.beat_freqs)
            p_e = 0.5 + 0.5 * np.exp(-delays / t2r) * signal
            out.append(
                (t0 + 2.0 * scenario.cycle_period_s / 3.0,
                 DecayTrace(delays, noisy(p_e), "T2R",
                            detuning_hint=min(scenario.beat_freqs)))
            )
    return out


# ---------------------------------------------------------------------------
# full dataset assembly


def write_synthetic_dataset(root, seed: int = 12345) -> None:
    """Assemble a complete on-disk dataset from the generators above.

    The files double as format-conformance fixtures: everything written
    here loads back through the dataio readers.
    """
    from pathlib import Path

    from . import dataio
    from .core import delta0_from_tc

    root = Path(root)
    for sub in ("traces", "grids", "decay", "gfactor"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    t_c, rho_n = 0.7, 1.8e-6
    delta_0 = delta0_from_tc(t_c)
    lam_true = 1.78e-6
    dataio.write_json(
        {"t_c_k": t_c, "t_c_sigma_k": 0.1, "rho_n_ohm_m": rho_n, "rho_n_sigma_ohm_m": 1e-8},
        root / "material.json",
    )

    thicknesses = (0.021, 0.052, 0.131, 0.238, 0.263, 0.475, 1.09, 2.00)
    table = synth_inductance_tables(lam_true, thicknesses, seed=seed, lk_rel_sigma=0.03)
    dataio.write_json(
        {"films": [{"id": f"F{i + 1}", "thickness_um": t} for i, t in enumerate(thicknesses)]},
        root / "films.json",
    )
    for geometry, samples in sorted(table.gfactor_tables.items()):
        dataio.save_gfactor_table(samples, root / "gfactor" / f"{geometry}.csv", geometry=geometry)

    atten_freq = np.linspace(1e9, 12e9, 23)
    atten_db = 66.0 + 0.1 * (atten_freq - 1e9) / 1e9
    dataio.save_attenuation(atten_freq, atten_db, root / "attenuation.csv")

    # A single surface loss tangent generates the registry Q_TLS0 values.
    tan_delta_true = 1.6e-3
    rng = CounterRng(seed, stream=90)
    rows = []
    traced = {"F1-CPW-8": (-90.0, 0.010), "F5-CPW-6": (-90.0, 0.011), "F8-CPW-4": (-80.0, 0.011)}
    gridded = {"F5-CPW-6": 1.33e6, "F8-CPW-4": 2.5e6}  # id -> Q_other truth
    for k, rec in enumerate(table.records):
        q_tls0 = 1.0 / (rec.p_ms * tan_delta_true)
        q_tls0 *= math.exp(0.05 * float(rng.normals(k, 1)[0]))
        row = {
            "id": rec.id,
            "kind": rec.kind,
            "gap_um": rec.gap_um,
            "thickness_um": rec.thickness_um,
            "f_r_sim_hz": rec.f_r_sim,
            "f_r_meas_hz": rec.f_r_meas,
            "l_g_h": rec.l_g,
            "g_factor": rec.g_factor,
            "p_ms": rec.p_ms,
            "q_c_mag": 2e5,
            "q_tls0": q_tls0,
            "q_tls0_sigma": 0.06 * q_tls0,
            "geometry": rec.id.split("-", 1)[1],
            "traces": [],
            "grid": None,
        }
        if rec.id in traced:
            power, temp = traced[rec.id]
            scenario = S21Scenario(
                seed=seed + k,
                a=1.1,
                bg_phase=0.4,
                tau=32e-9,
                q_l=6.7e4,
                q_c_mag=2e5,
                phi=0.15,
                f_r=rec.f_r_meas,
                noise_sigma=0.002,
                power_dbm=power,
                temperature_k=temp,
            )
            for j, extra_power in enumerate((0.0, -10.0)):
                trace = synth_s21(
                    _replace_power(scenario, power + extra_power, seed + k + 1000 * j)
                )
                rel = f"traces/{rec.id}__{j}.csv"
                dataio.save_trace(trace, root / rel)
                row["traces"].append(rel)
        if rec.id in gridded:
            # The grid truth matches the registry value so that the surface
            # regression sees one consistent loss tangent either way.
            grid_sc = LossGridScenario(
                seed=seed + 7 * k,
                q_tls0=q_tls0,
                q_other=gridded[rec.id],
                f_r=rec.f_r_meas,
                delta_0=delta_0,
                a_qp=8000.0,
                q_rel_sigma=0.02,
            )
            points = synth_loss_grid(grid_sc)
            rel = f"grids/{rec.id}.csv"
            dataio.save_grid(
                points, root / rel, resonator_id=rec.id, f_r_hz=rec.f_r_meas,
                delta0_j=delta_0, q_l=grid_sc.q_l, q_c_mag=grid_sc.q_c_mag,
            )
            row["grid"] = rel
        rows.append(row)
    dataio.write_json({"resonators": rows}, root / "resonators.json")

    qubit_rows = []
    qubit_truth = [
        (1, 2.736e9, 7.541e9, 0.098e6, 0.353e6, 245e6, 585e-6, 328e-6, 136e-6, (17e3, 95e3)),
        (2, 4.822e9, 7.987e9, 0.277e6, 0.299e6, 202e6, 148e-6, 256e-6, 205e-6, (25e3,)),
    ]
    for qid, f_q, f_r, chi, kappa, e_c, t1, t2e, t2r, beats in qubit_truth:
        scenario = DecayLogScenario(
            seed=seed + 100 * qid,
            t1=t1,
            t2e=t2e,
            t2r=t2r,
            beat_freqs=beats,
            n_cycles=5,
            pe_sigma=0.01,
            drift_frac=0.05,
        )
        rel = f"decay/qubit{qid}.csv"
        dataio.save_decay_log(synth_decay_log(scenario), root / rel, qubit_id=qid, f_q_hz=f_q)
        qubit_rows.append(
            {
                "id": qid,
                "f_q_hz": f_q,
                "f_r_hz": f_r,
                "chi_mag_hz": chi,
                "kappa_r_hz": kappa,
                "e_c_over_h_hz": e_c,
                "decay_log": rel,
            }
        )
    dataio.write_json({"qubits": qubit_rows}, root / "qubits.json")

    dataio.write_json(
        {
            "i_ox": 0.578,
            "i_m": 0.241,
            "lambda_eff_m": 1.51e-9,
            "n_m_per_m3": 5.43e28,
            "n_ox_per_m3": 2.24e28,
        },
        root / "xps.json",
    )
    dataio.write_json(
        {"seed": seed, "figures": True, "qubit_p_ms": 1.3e-4},
        root / "config.json",
    )


def _replace_power(scenario: S21Scenario, power_dbm: float, seed: int) -> S21Scenario:
    from dataclasses import replace

    return replace(scenario, power_dbm=power_dbm, seed=seed)
