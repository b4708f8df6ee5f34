"""Report figures, rendered straight to PNG files.

Uses Figure + Agg canvases directly (no pyplot) so rendering is
headless-safe, free of global state, and byte-deterministic for a given
matplotlib version.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .kinetic import coth_sheet_inductance
from .loss import q_total
from .s21 import s21_model

__all__ = [
    "plot_decay_series",
    "plot_lambda_fit",
    "plot_loss_grid",
    "plot_s21_fit",
    "plot_tan_delta",
]

DPI = 150


def _new_figure(width=6.0, height=4.5) -> Figure:
    fig = Figure(figsize=(width, height))
    FigureCanvasAgg(fig)
    return fig


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=DPI, bbox_inches="tight", metadata={"Software": None})
    return path


def plot_s21_fit(trace, fit, path, title: str = "") -> Path:
    """Complex-plane circle and magnitude-vs-frequency panels with the
    fitted model overlaid."""
    fig = _new_figure(9.0, 4.0)
    ax_circ, ax_mag = fig.subplots(1, 2)
    model = s21_model(trace.freq, *fit.params)
    ax_circ.plot(trace.s21.real, trace.s21.imag, ".", ms=3, color="#30508c", label="data")
    ax_circ.plot(model.real, model.imag, "-", lw=1.2, color="#c23b22", label="fit")
    ax_circ.set_xlabel("Re S21")
    ax_circ.set_ylabel("Im S21")
    ax_circ.set_aspect("equal", adjustable="datalim")
    ax_circ.legend(loc="best", fontsize=8)

    f_ghz = trace.freq / 1e9
    ax_mag.plot(f_ghz, np.abs(trace.s21), ".", ms=3, color="#30508c")
    ax_mag.plot(f_ghz, np.abs(model), "-", lw=1.2, color="#c23b22")
    ax_mag.set_xlabel("frequency (GHz)")
    ax_mag.set_ylabel("|S21|")
    label = f"Q_int = {fit.q_int:.3g}"
    ax_mag.set_title(label, fontsize=9)
    if title:
        fig.suptitle(title, fontsize=10)
    return _save(fig, path)


def plot_loss_grid(points, fit, path, title: str = "") -> Path:
    """Q_int versus photon number, one curve per temperature."""
    fig = _new_figure()
    ax = fig.subplots()
    temps = sorted({p.temperature_k for p in points})
    cmap = [f"C{i}" for i in range(10)]
    for i, temp in enumerate(temps):
        sel = [p for p in points if p.temperature_k == temp]
        nb = np.array([p.nbar for p in sel])
        q = np.array([p.q_int.value for p in sel])
        sig = np.array([p.q_int.sigma for p in sel])
        color = cmap[i % len(cmap)]
        ax.errorbar(nb, q, yerr=sig, fmt="o", ms=3.5, color=color,
                    label=f"{temp * 1e3:.0f} mK")
        grid = np.logspace(math.log10(nb.min()), math.log10(nb.max()), 120)
        ax.plot(grid, q_total(grid, temp, fit), "-", lw=1.0, color=color)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("mean photon number")
    ax.set_ylabel("Q_int")
    ax.legend(fontsize=7, ncol=2)
    if title:
        ax.set_title(title, fontsize=10)
    return _save(fig, path)


def plot_lambda_fit(lam_fit, path, title: str = "") -> Path:
    """Sheet inductance versus thickness with the coth law and bulk limit."""
    fig = _new_figure()
    ax = fig.subplots()
    t = np.array([p[0] for p in lam_fit.points])
    lk = np.array([p[1].value for p in lam_fit.points])
    sig = np.array([p[1].sigma for p in lam_fit.points])
    ax.errorbar(t * 1e6, lk * 1e12, yerr=sig * 1e12, fmt="o", ms=4, color="#30508c")
    grid = np.logspace(math.log10(t.min() * 0.7), math.log10(t.max() * 1.5), 200)
    ax.plot(grid * 1e6, coth_sheet_inductance(grid, lam_fit.lam.value) * 1e12,
            "-", color="#c23b22",
            label=f"lambda = {lam_fit.lam.value * 1e6:.2f} um")
    ax.axhline(lam_fit.l_bulk * 1e12, ls="--", color="0.4", lw=1.0, label="bulk limit")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("film thickness (um)")
    ax.set_ylabel("sheet kinetic inductance (pH/sq)")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    return _save(fig, path)


def plot_tan_delta(tan_fit, path, title: str = "") -> Path:
    """Q_TLS0 versus participation ratio with the single-loss-tangent line."""
    fig = _new_figure()
    ax = fig.subplots()
    p = np.array([q[0] for q in tan_fit.points])
    q_val = np.array([q[1].value for q in tan_fit.points])
    q_sig = np.array([q[1].sigma for q in tan_fit.points])
    ax.errorbar(p, q_val, yerr=q_sig, fmt="o", ms=4, color="#30508c")
    grid = np.logspace(math.log10(p.min() * 0.7), math.log10(p.max() * 1.5), 100)
    tan = tan_fit.tan_delta.value
    ax.plot(grid, 1.0 / (grid * tan), "-", color="#7a3f9d",
            label=f"tan delta = {tan:.2e}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("p_MS")
    ax.set_ylabel("Q_TLS0")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    return _save(fig, path)


def plot_decay_series(stats, path, title: str = "") -> Path:
    """Coherence time series with the per-metric means."""
    fig = _new_figure(7.0, 4.0)
    ax = fig.subplots()
    styles = {"T1": "#e07b39", "T2R": "#2a9d8f", "T2E": "#30508c"}
    for label, series in (("T1", stats.t1), ("T2R", stats.t2r), ("T2E", stats.t2e)):
        if series is None or not series.count:
            continue
        t_h = np.array(series.timestamps) / 3600.0
        vals = np.array(series.values) * 1e6
        ax.plot(t_h, vals, "o", ms=3.5, color=styles[label], label=label)
        ax.axhline(series.mean * 1e6, ls="--", lw=1.0, color=styles[label])
    ax.set_xlabel("time (h)")
    ax.set_ylabel("decay time (us)")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    return _save(fig, path)
