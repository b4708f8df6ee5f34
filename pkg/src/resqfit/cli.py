"""Command-line interface.

Each subcommand takes --input/--output (--config where relevant) and exits
0 on success, 1 on validation problems, 2 on fit failures, and 3 on I/O
or parse errors.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click

from . import dataio
from .core import Measurement
from .errors import DataFormatError, DomainError, FitError, ValidationError
from .kinetic import fit_lambda
from .loss import fit_loss_grid
from .pipeline import PipelineConfig, run_pipeline
from .qubit import FitRecord, build_stats, fit_exp_decay, fit_ramsey
from .s21 import fit_s21, nonlinearity_screen, plan_hpd
from .surface import fit_tan_delta
from .synth import write_synthetic_dataset

EXIT_VALIDATION = 1
EXIT_FIT = 2
EXIT_IO = 3


def _run(action) -> None:
    try:
        action()
    except (ValidationError, DomainError) as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except FitError as exc:
        click.echo(f"fit error: {exc}", err=True)
        sys.exit(EXIT_FIT)
    except (DataFormatError, OSError) as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(EXIT_IO)


def _load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_dict(json.loads(Path(path).read_text()))


def _measurement_json(m: Measurement) -> dict:
    return {"value": m.value, "sigma": m.sigma}


@click.group()
def main() -> None:
    """Resonator and qubit measurement analysis."""


@main.command()
@click.option("--input", "input_", type=click.Path(), default=None, help="Dataset root.")
def validate(input_):
    """Check a dataset directory: files exist, parse, and satisfy invariants."""

    def action():
        root = dataio.resolve_dataset_root(input_)
        dataset = dataio.Dataset.load(root)
        problems = dataset.validate()
        for p in problems:
            click.echo(p)
        if problems:
            raise ValidationError(f"{len(problems)} problem(s) found")
        click.echo(
            f"ok: {len(dataset.films)} films, {len(dataset.resonators)} resonators, "
            f"{len(dataset.qubits)} qubits"
        )

    _run(action)


@main.command("plan-hpd")
@click.option("--f-r", type=float, required=True, help="Resonance seed [Hz].")
@click.option("--q-l", type=float, required=True, help="Loaded-Q seed.")
@click.option("--points", type=int, default=251, show_default=True)
@click.option("--span", type=float, default=15.0, show_default=True,
              help="Sweep span in linewidths.")
@click.option("--output", type=click.Path(), required=True)
def plan_hpd_cmd(f_r, q_l, points, span, output):
    """Write a homophasal sweep plan as a one-column frequency table."""

    def action():
        plan = plan_hpd(f_r, q_l, points, span)
        lines = ["freq_hz"] + [repr(float(f)) for f in plan.freqs]
        Path(output).write_text("\n".join(lines) + "\n")
        click.echo(f"wrote {len(plan)} points to {output}")

    _run(action)


@main.command("fit-s21")
@click.option("--input", "input_", type=click.Path(exists=True), required=True,
              help="Trace file.")
@click.option("--output", type=click.Path(), required=True, help="Fit result JSON.")
def fit_s21_cmd(input_, output):
    """Fit one transmission trace to the hanger model."""

    def action():
        trace = dataio.load_trace(input_)
        fit = fit_s21(trace)
        screen = nonlinearity_screen(trace, fit)
        dataio.write_json(
            {
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
            },
            output,
        )
        click.echo(f"Q_int = {fit.q_int:.4g} +- {fit.sigmas['q_int']:.2g}")

    _run(action)


@main.command("fit-loss")
@click.option("--input", "input_", type=click.Path(exists=True), required=True,
              help="Loss-grid file.")
@click.option("--output", type=click.Path(), required=True)
def fit_loss_cmd(input_, output):
    """Fit a Q_int(photon number, temperature) grid to the loss model."""

    def action():
        points, meta = dataio.load_grid(input_)
        fit = fit_loss_grid(points, 2.0 * math.pi * meta["f_r_hz"], meta["delta0_j"])
        dataio.write_json(
            {
                "resonator_id": meta["resonator_id"],
                "q_tls0": _measurement_json(fit.q_tls0),
                "q_other": _measurement_json(fit.q_other),
                "d_scale": _measurement_json(fit.d_scale),
                "beta1": _measurement_json(fit.beta1),
                "beta2": _measurement_json(fit.beta2),
                "a_qp": None if fit.a_qp is None else _measurement_json(fit.a_qp),
                "unreliable": list(fit.unreliable),
            },
            output,
        )
        click.echo(
            f"Q_TLS0 = {fit.q_tls0.value:.4g} +- {fit.q_tls0.sigma:.2g}; "
            f"Q_other = {fit.q_other.value:.4g} +- {fit.q_other.sigma:.2g}"
            + (f"; unreliable: {', '.join(fit.unreliable)}" if fit.unreliable else "")
        )

    _run(action)


@main.command("fit-lambda")
@click.option("--input", "input_", type=click.Path(exists=True), required=True,
              help="Sheet-inductance points file.")
@click.option("--output", type=click.Path(), required=True)
def fit_lambda_cmd(input_, output):
    """Fit the penetration depth to sheet-inductance-versus-thickness points."""

    def action():
        points = dataio.load_lk_points(input_)
        fit = fit_lambda(points)
        dataio.write_json(
            {
                "lambda_m": fit.lam.value,
                "lambda_sigma_m": fit.lam.sigma,
                "l_bulk_h_per_sq": fit.l_bulk,
                "n_points": len(fit.points),
            },
            output,
        )
        click.echo(f"lambda = {fit.lam.value * 1e6:.3f} +- {fit.lam.sigma * 1e6:.3f} um")

    _run(action)


@main.command("fit-tandelta")
@click.option("--input", "input_", type=click.Path(exists=True), required=True,
              help="Participation/Q_TLS0 points file.")
@click.option("--output", type=click.Path(), required=True)
def fit_tandelta_cmd(input_, output):
    """Regress 1/Q_TLS0 against p_MS for the surface loss tangent."""

    def action():
        points = dataio.load_tandelta_points(input_)
        fit = fit_tan_delta(points)
        dataio.write_json(
            {
                "tan_delta": fit.tan_delta.value,
                "tan_delta_sigma": fit.tan_delta.sigma,
                "n_points": len(fit.points),
                "n_excluded": len(fit.excluded),
            },
            output,
        )
        click.echo(f"tan delta = {fit.tan_delta.value:.3g} +- {fit.tan_delta.sigma:.2g}")

    _run(action)


@main.command("fit-qubit")
@click.option("--input", "input_", type=click.Path(exists=True), required=True,
              help="Decay log file.")
@click.option("--output", type=click.Path(), required=True)
@click.option("--pair-window", type=float, default=200.0, show_default=True,
              help="Pairing window for the dephasing series [s].")
def fit_qubit_cmd(input_, output, pair_window):
    """Fit every trace in a decay log and aggregate coherence statistics."""

    def action():
        entries, meta = dataio.load_decay_log(input_)
        records = []
        skipped = 0
        for ts, trace in entries:
            try:
                fit = fit_ramsey(trace) if trace.kind == "T2R" else fit_exp_decay(trace)
                records.append(FitRecord(ts, trace.kind, fit))
            except (FitError, DomainError):
                skipped += 1
        if not records:
            raise FitError("no trace in the log could be fitted")
        stats = build_stats(records, pair_window, f_q=meta.get("f_q_hz"))
        out = {"qubit_id": meta.get("qubit_id"), "n_unfittable": skipped,
               "n_rejected": stats.n_rejected}
        for name, series in (
            ("t1", stats.t1), ("t2r", stats.t2r), ("t2e", stats.t2e), ("t_phi", stats.t_phi),
        ):
            if series is None:
                continue
            out[f"{name}_mean_s"] = series.mean
            out[f"{name}_sd_s"] = series.sd
            out[f"{name}_count"] = series.count
        if stats.q_bar is not None:
            out["q_bar"] = stats.q_bar.value
            out["q_bar_sigma"] = stats.q_bar.sigma
        dataio.write_json(out, output)
        if stats.t1 is not None:
            click.echo(f"T1 = {stats.t1.mean * 1e6:.1f} us (N={stats.t1.count})")

    _run(action)


@main.command()
@click.option("--output", type=click.Path(), required=True, help="Dataset directory to create.")
@click.option("--seed", type=int, default=12345, show_default=True)
def synth(output, seed):
    """Generate a complete synthetic dataset from known ground truth."""

    def action():
        write_synthetic_dataset(output, seed=seed)
        click.echo(f"synthetic dataset written to {output}")

    _run(action)


@main.command()
@click.option("--input", "input_", type=click.Path(), default=None, help="Dataset root.")
@click.option("--output", type=click.Path(), required=True, help="Report directory.")
@click.option("--config", "config_", type=click.Path(exists=True), default=None)
@click.option("--figures/--no-figures", default=None,
              help="Override the config's figure rendering switch.")
def pipeline(input_, output, config_, figures):
    """Run the full analysis pipeline and write the report bundle."""

    def action():
        root = dataio.resolve_dataset_root(input_)
        dataset = dataio.Dataset.load(root)
        config = _load_config(config_)
        if config_ is None and (root / "config.json").exists():
            config = _load_config(root / "config.json")
        if figures is not None:
            from dataclasses import replace

            config = replace(config, figures=figures)
        result = run_pipeline(dataset, config, output)
        click.echo((Path(output) / "summary.txt").read_text().rstrip())
        if result.failures:
            raise FitError(f"{len(result.failures)} record(s) failed; see report.json")

    _run(action)


if __name__ == "__main__":
    main()
