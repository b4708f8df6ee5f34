"""End-to-end analysis pipeline and report bundle.

Stages run in measurement order: transmission fits, loss-grid fits,
kinetic-inductance extraction, surface-loss regression, qubit statistics.
Failures are isolated per record: a bad trace or a missing table marks
that record (or stage) failed in the report and the rest of the pipeline
continues. Given the same dataset and configuration the bundle is
byte-identical between runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .core import Measurement, delta0_from_tc
from .dataio import (
    Dataset,
    load_decay_log,
    load_gfactor_table,
    load_grid,
    load_trace,
    write_json,
)
from .errors import ResqfitError, ValidationError
from .kinetic import (
    fit_g_factor,
    fit_kappa_envelope,
    fit_lambda,
    lambda_dirty_sigma,
    sheet_lk_from_resonator,
    sigma2,
)
from .loss import AttenuationChain, LossGridPoint, fit_loss_grid, photons_from_power
from .qubit import FitRecord, build_stats, fit_exp_decay, fit_ramsey
from .s21 import fit_s21, nonlinearity_screen
from .surface import XpsInput, fit_tan_delta, oxide_thickness, surface_limited_q

__all__ = ["PipelineConfig", "PipelineResult", "run_pipeline"]


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 12345
    figures: bool = True
    f_sim_fractional_sigma: float = 0.005
    pair_window_s: float = 200.0
    qubit_p_ms: float | None = None  # compute the surface-limited Q for this p_MS

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class PipelineResult:
    report: dict
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _meas_dict(m: Measurement | None, suffix: str = "") -> dict:
    if m is None:
        return {}
    return {f"value{suffix}": m.value, f"sigma{suffix}": m.sigma}


def _fail(failures, stage, ident, exc) -> None:
    failures.append({"stage": stage, "id": str(ident), "error": str(exc)})


def _stage_s21(dataset: Dataset, failures) -> dict:
    """Fit every registered trace; returns per-trace fits keyed by path."""
    fits: dict[str, dict] = {}
    for rid, res in sorted(dataset.resonators.items()):
        for rel in res.traces:
            try:
                trace = load_trace(dataset.path(rel))
                fit = fit_s21(trace)
                screen = nonlinearity_screen(trace, fit)
                fits[rel] = {
                    "resonator_id": rid,
                    "power_dbm": trace.power_dbm,
                    "temperature_k": trace.temperature_k,
                    "a": fit.a,
                    "bg_phase_rad": fit.bg_phase,
                    "tau_s": fit.tau,
                    "q_l": fit.q_l,
                    "q_c_mag": fit.q_c_mag,
                    "phi_rad": fit.phi,
                    "f_r_hz": fit.f_r,
                    "q_int": fit.q_int,
                    "sigmas": dict(sorted(fit.sigmas.items())),
                    "residual_rms": fit.residual_rms,
                    "nonlinearity_flagged": screen.flagged,
                    "screen_reasons": list(screen.reasons),
                    "_fit": fit,
                    "_trace": trace,
                }
            except ResqfitError as exc:
                _fail(failures, "s21", rel, exc)
    return fits


def _stage_loss(dataset: Dataset, failures) -> dict:
    """Fit every registered loss grid, converting powers through the chain."""
    out: dict[str, dict] = {}
    for rid, res in sorted(dataset.resonators.items()):
        if not res.grid:
            continue
        try:
            points, meta = load_grid(dataset.path(res.grid))
            if dataset.attenuation is None:
                raise ValidationError("dataset has no attenuation table")
            q_l = meta["q_l"]
            q_c_mag = meta["q_c_mag"] if meta["q_c_mag"] is not None else res.record.q_c_mag
            if q_l is None or q_c_mag is None:
                raise ValidationError(
                    f"grid for {rid} has no coupling data to convert powers"
                )
            chain = AttenuationChain(
                freq_hz=dataset.attenuation[0],
                atten_db=dataset.attenuation[1],
                q_l=q_l,
                q_c_mag=q_c_mag,
            )
            f_r = meta["f_r_hz"]
            converted = []
            for p in points:
                if p.source_power_dbm is not None:
                    nbar = photons_from_power(p.source_power_dbm, chain, f_r)
                    converted.append(
                        LossGridPoint(nbar, p.temperature_k, p.q_int, p.source_power_dbm)
                    )
                else:
                    converted.append(p)
            fit = fit_loss_grid(converted, 2.0 * math.pi * f_r, meta["delta0_j"])
            out[rid] = {
                "resonator_id": rid,
                "f_r_hz": f_r,
                "q_tls0": _meas_dict(fit.q_tls0),
                "q_other": _meas_dict(fit.q_other),
                "d_scale": _meas_dict(fit.d_scale),
                "beta1": _meas_dict(fit.beta1),
                "beta2": _meas_dict(fit.beta2),
                "a_qp": _meas_dict(fit.a_qp),
                "qp_frozen": fit.a_qp is None,
                "unreliable": list(fit.unreliable),
                "n_points": fit.n_points,
                "objective": "weighted least squares in log(Q_int)",
                "_fit": fit,
                "_points": converted,
            }
        except ResqfitError as exc:
            _fail(failures, "loss", rid, exc)
    return out


def _stage_kinetic(dataset: Dataset, config, s21_fits, failures) -> dict:
    out: dict = {}
    gfits = {}
    for geometry, rel in sorted(dataset.gfactor_tables.items()):
        try:
            samples, _ = load_gfactor_table(dataset.path(rel))
            l_g = _geometry_l_g(dataset, geometry)
            fit = fit_g_factor(samples, l_g)
            gfits[geometry] = {
                "g": _meas_dict(fit.g),
                "intercept_h": fit.intercept,
            }
        except ResqfitError as exc:
            _fail(failures, "kinetic", f"gfactor:{geometry}", exc)
    if gfits:
        out["g_factor_fits"] = gfits

    points = []
    point_rows = []
    for rid, res in sorted(dataset.resonators.items()):
        rec = res.record
        if None in (rec.f_r_sim, rec.f_r_meas, rec.l_g, rec.g_factor):
            continue
        try:
            lk = sheet_lk_from_resonator(
                rec, f_sim_sigma=config.f_sim_fractional_sigma * rec.f_r_sim
            )
            points.append((rec.thickness_um * 1e-6, lk))
            point_rows.append(
                {
                    "resonator_id": rid,
                    "thickness_um": rec.thickness_um,
                    "l_k_sq_h": lk.value,
                    "l_k_sq_sigma_h": lk.sigma,
                }
            )
        except ResqfitError as exc:
            _fail(failures, "kinetic", rid, exc)
    out["sheet_inductance_points"] = point_rows

    lam_fit = None
    if len(points) >= 3:
        try:
            lam_fit = fit_lambda(points)
            out["lambda_fit"] = {
                "lambda_m": lam_fit.lam.value,
                "lambda_sigma_m": lam_fit.lam.sigma,
                "l_bulk_h_per_sq": lam_fit.l_bulk,
                "n_points": len(lam_fit.points),
                "note": (
                    "finite-thickness corrections to the geometry factor are "
                    "neglected; thin-film values may be overestimated"
                ),
            }
            out["_lambda_fit"] = lam_fit
        except ResqfitError as exc:
            _fail(failures, "kinetic", "lambda_fit", exc)

    material = dataset.material
    if material.get("t_c_k") and material.get("rho_n_ohm_m"):
        t_c = float(material["t_c_k"])
        delta0 = delta0_from_tc(t_c)
        delta0_sigma = delta0 / t_c * float(material.get("t_c_sigma_k", 0.0))
        dirty = lambda_dirty_sigma(
            float(material["rho_n_ohm_m"]),
            delta0,
            float(material.get("rho_n_sigma_ohm_m", 0.0)),
            delta0_sigma,
        )
        out["lambda_dirty_m"] = dirty.value
        out["lambda_dirty_sigma_m"] = dirty.sigma

    # Superfluid-response envelope from the lowest-power fit per resonator.
    if lam_fit is not None:
        env_points = []
        for rid, res in sorted(dataset.resonators.items()):
            cands = [
                f for f in s21_fits.values()
                if f["resonator_id"] == rid and not f["nonlinearity_flagged"]
            ]
            if not cands:
                continue
            best = min(cands, key=lambda f: (f["power_dbm"] is None, f["power_dbm"]))
            env_points.append((sigma2(2.0 * math.pi * best["f_r_hz"], lam_fit.lam.value),
                               best["q_int"]))
        if len(env_points) >= 3:
            kappa = fit_kappa_envelope(env_points)
            out["kappa_envelope_ohm_m"] = kappa.value
            out["kappa_envelope_sigma_ohm_m"] = kappa.sigma
    return out


def _geometry_l_g(dataset: Dataset, geometry: str) -> float:
    for res in dataset.resonators.values():
        if res.geometry == geometry and res.record.l_g is not None:
            return res.record.l_g
    raise ValidationError(f"no resonator supplies l_g for geometry {geometry!r}")


def _stage_surface(dataset: Dataset, config, loss_fits, failures) -> dict:
    out: dict = {}
    points = []
    used = []
    for rid, res in sorted(dataset.resonators.items()):
        p_ms = res.record.p_ms
        if p_ms is None:
            continue
        q_tls0 = None
        if rid in loss_fits:
            fit = loss_fits[rid]["_fit"]
            if "q_tls0" not in fit.unreliable:
                q_tls0 = fit.q_tls0
        elif res.record.q_tls0 is not None:
            q_tls0 = res.record.q_tls0
        if q_tls0 is None:
            continue
        points.append((p_ms, q_tls0))
        used.append(rid)
    if len(points) >= 2:
        try:
            fit = fit_tan_delta(points)
            out["tan_delta"] = {
                "value": fit.tan_delta.value,
                "sigma": fit.tan_delta.sigma,
                "n_points": len(fit.points),
                "n_excluded": len(fit.excluded),
                "resonator_ids": used,
                "weighting": "inverse variance of 1/Q_TLS0",
            }
            out["_tan_fit"] = fit
            if config.qubit_p_ms:
                out["surface_limited_q_at_qubit_p_ms"] = surface_limited_q(
                    config.qubit_p_ms, fit.tan_delta.value
                )
        except ResqfitError as exc:
            _fail(failures, "surface", "tan_delta", exc)

    if dataset.xps:
        try:
            xps = XpsInput(
                i_ox=float(dataset.xps["i_ox"]),
                i_m=float(dataset.xps["i_m"]),
                lambda_eff=float(dataset.xps["lambda_eff_m"]),
                n_m=float(dataset.xps["n_m_per_m3"]),
                n_ox=float(dataset.xps["n_ox_per_m3"]),
            )
            out["oxide_thickness_m"] = oxide_thickness(xps)
        except (ResqfitError, KeyError, ValueError) as exc:
            _fail(failures, "surface", "xps", exc)
    return out


def _stage_qubits(dataset: Dataset, config, failures) -> dict:
    out: dict = {}
    for qid, q in sorted(dataset.qubits.items()):
        if not q.decay_log:
            continue
        try:
            entries, _ = load_decay_log(dataset.path(q.decay_log))
            records = []
            for ts, trace in entries:
                try:
                    fit = fit_ramsey(trace) if trace.kind == "T2R" else fit_exp_decay(trace)
                    records.append(FitRecord(ts, trace.kind, fit))
                except ResqfitError as exc:
                    _fail(failures, "qubit", f"{qid}@{ts}", exc)
            if not records:
                raise ValidationError("no trace in the log could be fitted")
            stats = build_stats(records, config.pair_window_s, f_q=q.record.f_q)
            entry = {
                "qubit_id": qid,
                "f_q_hz": q.record.f_q,
                "e_j_over_e_c": q.record.e_j_over_e_c,
                "n_rejected": stats.n_rejected,
                "rejection_rule": "fits with sigma(T) >= T are excluded",
            }
            for name, series in (
                ("t1", stats.t1), ("t2r", stats.t2r), ("t2e", stats.t2e), ("t_phi", stats.t_phi),
            ):
                if series is None:
                    continue
                entry[f"{name}_mean_s"] = series.mean
                entry[f"{name}_sd_s"] = series.sd
                entry[f"{name}_count"] = series.count
            if stats.q_bar is not None:
                entry["q_bar"] = stats.q_bar.value
                entry["q_bar_sigma"] = stats.q_bar.sigma
            entry["_stats"] = stats
            out[str(qid)] = entry
        except ResqfitError as exc:
            _fail(failures, "qubit", qid, exc)
    return out


def _write_tables(outdir: Path, report: dict) -> None:
    tables = outdir / "tables"
    tables.mkdir(parents=True, exist_ok=True)

    def write_csv(name, header, rows):
        lines = [",".join(header)]
        lines += [",".join("" if v is None else repr(v) if isinstance(v, float) else str(v)
                           for v in row) for row in rows]
        (tables / name).write_text("\n".join(lines) + "\n")

    s21_rows = [
        (rel, f["resonator_id"], f["power_dbm"], f["temperature_k"], f["f_r_hz"],
         f["q_l"], f["q_c_mag"], f["phi_rad"], f["q_int"], f["sigmas"].get("q_int"),
         f["nonlinearity_flagged"])
        for rel, f in sorted(report["s21_fits"].items())
    ]
    write_csv(
        "resonance_fits.csv",
        ("trace", "resonator_id", "power_dbm", "temperature_k", "f_r_hz",
         "q_l", "q_c_mag", "phi_rad", "q_int", "q_int_sigma", "nonlinearity_flagged"),
        s21_rows,
    )

    loss_rows = [
        (rid, f["f_r_hz"], f["q_tls0"].get("value"), f["q_tls0"].get("sigma"),
         f["q_other"].get("value"), f["q_other"].get("sigma"),
         ";".join(f["unreliable"]))
        for rid, f in sorted(report["loss_fits"].items())
    ]
    write_csv(
        "loss_fits.csv",
        ("resonator_id", "f_r_hz", "q_tls0", "q_tls0_sigma", "q_other", "q_other_sigma",
         "unreliable"),
        loss_rows,
    )

    kin = report["kinetic"]
    write_csv(
        "sheet_inductance.csv",
        ("resonator_id", "thickness_um", "l_k_sq_h", "l_k_sq_sigma_h"),
        [(r["resonator_id"], r["thickness_um"], r["l_k_sq_h"], r["l_k_sq_sigma_h"])
         for r in kin.get("sheet_inductance_points", [])],
    )

    qubit_rows = []
    for qid, q in sorted(report["qubits"].items(), key=lambda kv: int(kv[0])):
        qubit_rows.append(
            (qid, q["f_q_hz"], q.get("t1_mean_s"), q.get("t1_sd_s"), q.get("t1_count"),
             q.get("t2r_mean_s"), q.get("t2r_sd_s"), q.get("t2r_count"),
             q.get("t2e_mean_s"), q.get("t2e_sd_s"), q.get("t2e_count"),
             q.get("t_phi_mean_s"), q.get("t_phi_sd_s"), q.get("t_phi_count"),
             q.get("q_bar"), q.get("q_bar_sigma"))
        )
    write_csv(
        "qubit_stats.csv",
        ("qubit_id", "f_q_hz", "t1_mean_s", "t1_sd_s", "t1_count",
         "t2r_mean_s", "t2r_sd_s", "t2r_count", "t2e_mean_s", "t2e_sd_s", "t2e_count",
         "t_phi_mean_s", "t_phi_sd_s", "t_phi_count", "q_bar", "q_bar_sigma"),
        qubit_rows,
    )


def _write_figures(outdir: Path, report: dict, failures) -> list[str]:
    figdir = outdir / "figures"
    written: list[str] = []
    for rel, f in sorted(report["s21_fits"].items()):
        name = f"s21_{Path(rel).stem}.png"
        try:
            plots.plot_s21_fit(f["_trace"], f["_fit"], figdir / name, title=f["resonator_id"])
            written.append(name)
        except Exception as exc:  # pragma: no cover - rendering problems
            _fail(failures, "figures", name, exc)
    for rid, f in sorted(report["loss_fits"].items()):
        name = f"loss_{rid}.png"
        try:
            plots.plot_loss_grid(f["_points"], f["_fit"], figdir / name, title=rid)
            written.append(name)
        except Exception as exc:  # pragma: no cover
            _fail(failures, "figures", name, exc)
    if "_lambda_fit" in report["kinetic"]:
        try:
            plots.plot_lambda_fit(report["kinetic"]["_lambda_fit"], figdir / "lambda_fit.png")
            written.append("lambda_fit.png")
        except Exception as exc:  # pragma: no cover
            _fail(failures, "figures", "lambda_fit.png", exc)
    if "_tan_fit" in report["surface"]:
        try:
            plots.plot_tan_delta(report["surface"]["_tan_fit"], figdir / "tan_delta.png")
            written.append("tan_delta.png")
        except Exception as exc:  # pragma: no cover
            _fail(failures, "figures", "tan_delta.png", exc)
    for qid, q in sorted(report["qubits"].items(), key=lambda kv: int(kv[0])):
        name = f"qubit_{qid}.png"
        try:
            plots.plot_decay_series(q["_stats"], figdir / name, title=f"qubit {qid}")
            written.append(name)
        except Exception as exc:  # pragma: no cover
            _fail(failures, "figures", name, exc)
    return written


def _strip_private(obj):
    if isinstance(obj, dict):
        return {k: _strip_private(v) for k, v in obj.items() if not k.startswith("_")}
    if isinstance(obj, list):
        return [_strip_private(v) for v in obj]
    if isinstance(obj, tuple):
        return [_strip_private(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def _summary_lines(report: dict) -> list[str]:
    lines = ["analysis summary", "================", ""]
    n_fits = len(report["s21_fits"])
    flagged = sum(1 for f in report["s21_fits"].values() if f["nonlinearity_flagged"])
    lines.append(f"transmission fits: {n_fits} traces, {flagged} flagged nonlinear")
    lines.append("  (nonlinearity screen: residual + phase-monotonicity stand-in)")
    for rid, f in sorted(report["loss_fits"].items()):
        q0 = f["q_tls0"]
        qo = f["q_other"]
        mark = lambda name: " [unreliable]" if name in f["unreliable"] else ""
        lines.append(
            f"loss {rid}: Q_TLS0 = {q0.get('value', 0):.3g} +- {q0.get('sigma', 0):.2g}"
            f"{mark('q_tls0')}, Q_other = {qo.get('value', 0):.3g} +- {qo.get('sigma', 0):.2g}"
            f"{mark('q_other')}"
        )
    kin = report["kinetic"]
    if "lambda_fit" in kin:
        lam = kin["lambda_fit"]
        lines.append(
            f"penetration depth: {lam['lambda_m'] * 1e6:.3f} +- "
            f"{lam['lambda_sigma_m'] * 1e6:.3f} um "
            f"(bulk sheet inductance {lam['l_bulk_h_per_sq'] * 1e12:.2f} pH/sq)"
        )
    if "lambda_dirty_m" in kin:
        lines.append(f"dirty-limit estimate: {kin['lambda_dirty_m'] * 1e6:.2f} um")
    if "kappa_envelope_ohm_m" in kin:
        lines.append(f"Q_int vs sigma_2 envelope slope: {kin['kappa_envelope_ohm_m']:.3g} ohm m")
    surf = report["surface"]
    if "tan_delta" in surf:
        td = surf["tan_delta"]
        lines.append(
            f"surface loss tangent: {td['value']:.3g} +- {td['sigma']:.2g} "
            f"({td['n_points']} resonators, {td['n_excluded']} excluded)"
        )
    if "oxide_thickness_m" in surf:
        lines.append(f"oxide thickness: {surf['oxide_thickness_m'] * 1e9:.2f} nm")
    for qid, q in sorted(report["qubits"].items(), key=lambda kv: int(kv[0])):
        t1 = q.get("t1_mean_s")
        qbar = q.get("q_bar")
        if t1 is not None and qbar is not None:
            lines.append(
                f"qubit {qid}: T1 = {t1 * 1e6:.0f} us (N={q.get('t1_count')}), "
                f"Q_bar = {qbar:.3g}"
            )
    if report["failures"]:
        lines.append("")
        lines.append(f"failures ({len(report['failures'])}):")
        for f in report["failures"]:
            lines.append(f"  [{f['stage']}] {f['id']}: {f['error']}")
    return lines


def run_pipeline(dataset: Dataset, config: PipelineConfig, output_dir) -> PipelineResult:
    """Run all stages over the dataset and write the report bundle."""
    problems = dataset.validate()
    if problems:
        raise ValidationError("; ".join(problems))
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    failures: list[dict] = []

    s21_fits = _stage_s21(dataset, failures)
    loss_fits = _stage_loss(dataset, failures)
    kinetic = _stage_kinetic(dataset, config, s21_fits, failures)
    surface = _stage_surface(dataset, config, loss_fits, failures)
    qubits = _stage_qubits(dataset, config, failures)

    report = {
        "config": {
            "seed": config.seed,
            "figures": config.figures,
            "f_sim_fractional_sigma": config.f_sim_fractional_sigma,
            "pair_window_s": config.pair_window_s,
            "qubit_p_ms": config.qubit_p_ms,
        },
        "dataset": {
            "root": dataset.root.name,
            "n_films": len(dataset.films),
            "n_resonators": len(dataset.resonators),
            "n_qubits": len(dataset.qubits),
        },
        "s21_fits": s21_fits,
        "loss_fits": loss_fits,
        "kinetic": kinetic,
        "surface": surface,
        "qubits": qubits,
        "failures": failures,
    }

    _write_tables(outdir, report)
    if config.figures:
        report["figures"] = _write_figures(outdir, report, failures)
    public = _strip_private(report)
    write_json(public, outdir / "report.json")
    (outdir / "summary.txt").write_text("\n".join(_summary_lines(report)) + "\n")
    return PipelineResult(report=public, failures=failures)
