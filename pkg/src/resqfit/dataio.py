"""File formats and the dataset registry.

Traces, decay logs, and grids are comma-separated text with one comment
line of ``key=value`` metadata and a unit-suffixed column header.
Registries and reports are JSON with unit-suffixed keys, written
canonically (sorted keys, repr floats) so that write(load(x)) is
byte-identical for files this module produced.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ComplexTrace, Measurement, QubitRecord, ResonatorRecord, validate_trace
from .errors import DataFormatError, DomainError, ValidationError
from .loss import LossGridPoint
from .qubit import DecayTrace

__all__ = [
    "Dataset",
    "DatasetQubit",
    "DatasetResonator",
    "ENV_DATA_ROOT",
    "load_attenuation",
    "load_decay_log",
    "load_gfactor_table",
    "load_grid",
    "load_lk_points",
    "load_tandelta_points",
    "load_trace",
    "save_attenuation",
    "save_decay_log",
    "save_lk_points",
    "save_tandelta_points",
    "save_gfactor_table",
    "save_grid",
    "save_trace",
    "resolve_dataset_root",
    "write_json",
]

ENV_DATA_ROOT = "RESQFIT_DATA_ROOT"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _meta_line(meta: dict) -> str:
    parts = [f"{k}={_fmt(v)}" for k, v in meta.items() if v is not None]
    return "# " + " ".join(parts)


def _parse_meta(line: str, path, lineno: int) -> dict[str, str]:
    out: dict[str, str] = {}
    for token in line.lstrip("#").split():
        if "=" not in token:
            raise DataFormatError(f"{path}:{lineno}: bad metadata token {token!r}")
        key, _, val = token.partition("=")
        out[key] = val
    return out


def _read_table(path, expected_columns: tuple[str, ...]):
    """Parse a delimited file into (meta, list of row tuples)."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    meta: dict[str, str] = {}
    rows: list[tuple] = []
    header_seen = False
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            meta.update(_parse_meta(text, path, lineno))
            continue
        if not header_seen:
            cols = tuple(c.strip() for c in text.split(","))
            if cols != expected_columns:
                raise DataFormatError(
                    f"{path}:{lineno}: expected header {','.join(expected_columns)!r}, "
                    f"got {text!r}"
                )
            header_seen = True
            continue
        fields = text.split(",")
        if len(fields) != len(expected_columns):
            raise DataFormatError(
                f"{path}:{lineno}: expected {len(expected_columns)} fields, got {len(fields)}"
            )
        rows.append((fields, lineno))
    if not header_seen:
        raise DataFormatError(f"{path}: missing column header")
    return meta, rows


def _parse_float(token: str, path, lineno: int, column: str) -> float:
    token = token.strip()
    try:
        return float(token)
    except ValueError as exc:
        raise DataFormatError(f"{path}:{lineno}: bad {column} value {token!r}") from exc


# ---------------------------------------------------------------------------
# traces

TRACE_COLUMNS = ("freq_hz", "s21_re", "s21_im")


def save_trace(trace: ComplexTrace, path) -> None:
    meta = {"power_dbm": trace.power_dbm, "temperature_k": trace.temperature_k}
    lines = []
    if any(v is not None for v in meta.values()):
        lines.append(_meta_line(meta))
    lines.append(",".join(TRACE_COLUMNS))
    for f, z in zip(trace.freq, trace.s21):
        lines.append(f"{_fmt(float(f))},{_fmt(float(z.real))},{_fmt(float(z.imag))}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace(path) -> ComplexTrace:
    """Load a trace file, enforcing the ComplexTrace invariants."""
    meta, rows = _read_table(path, TRACE_COLUMNS)
    freq = np.empty(len(rows))
    s21 = np.empty(len(rows), dtype=complex)
    for i, (fields, lineno) in enumerate(rows):
        freq[i] = _parse_float(fields[0], path, lineno, "freq_hz")
        re = _parse_float(fields[1], path, lineno, "s21_re")
        im = _parse_float(fields[2], path, lineno, "s21_im")
        s21[i] = complex(re, im)
    trace = ComplexTrace(
        freq,
        s21,
        power_dbm=float(meta["power_dbm"]) if "power_dbm" in meta else None,
        temperature_k=float(meta["temperature_k"]) if "temperature_k" in meta else None,
    )
    report = validate_trace(trace)
    if not report.ok:
        raise ValidationError(f"{path}: {report.findings[0].message}")
    return trace


# ---------------------------------------------------------------------------
# loss grids

GRID_COLUMNS = ("nbar", "temperature_k", "q_int", "q_int_sigma", "source_power_dbm")


def save_grid(
    points, path, *, resonator_id: str, f_r_hz: float, delta0_j: float,
    q_l: float | None = None, q_c_mag: float | None = None,
) -> None:
    lines = [
        _meta_line(
            {
                "resonator_id": resonator_id,
                "f_r_hz": f_r_hz,
                "delta0_j": delta0_j,
                "q_l": q_l,
                "q_c_mag": q_c_mag,
            }
        )
    ]
    lines.append(",".join(GRID_COLUMNS))
    for p in points:
        lines.append(
            ",".join(
                [
                    _fmt(float(p.nbar)),
                    _fmt(float(p.temperature_k)),
                    _fmt(float(p.q_int.value)),
                    _fmt(float(p.q_int.sigma)),
                    _fmt(None if p.source_power_dbm is None else float(p.source_power_dbm)),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_grid(path):
    """Returns (points, meta) with meta holding resonator_id/f_r_hz/delta0_j."""
    meta, rows = _read_table(path, GRID_COLUMNS)
    for key in ("f_r_hz", "delta0_j"):
        if key not in meta:
            raise DataFormatError(f"{path}: missing {key} in the metadata header")
    points = []
    for fields, lineno in rows:
        dbm = fields[4].strip()
        try:
            points.append(
                LossGridPoint(
                    nbar=_parse_float(fields[0], path, lineno, "nbar"),
                    temperature_k=_parse_float(fields[1], path, lineno, "temperature_k"),
                    q_int=Measurement(
                        _parse_float(fields[2], path, lineno, "q_int"),
                        _parse_float(fields[3], path, lineno, "q_int_sigma"),
                    ),
                    source_power_dbm=None if not dbm else float(dbm),
                )
            )
        except DomainError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    parsed = {
        "resonator_id": meta.get("resonator_id", ""),
        "f_r_hz": float(meta["f_r_hz"]),
        "delta0_j": float(meta["delta0_j"]),
        "q_l": float(meta["q_l"]) if "q_l" in meta else None,
        "q_c_mag": float(meta["q_c_mag"]) if "q_c_mag" in meta else None,
    }
    return points, parsed


# ---------------------------------------------------------------------------
# decay logs

DECAY_COLUMNS = ("timestamp_s", "kind", "delay_s", "p_e", "detuning_hz")


def save_decay_log(entries, path, *, qubit_id: int, f_q_hz: float) -> None:
    """``entries`` holds (timestamp, DecayTrace) pairs."""
    lines = [_meta_line({"qubit_id": qubit_id, "f_q_hz": f_q_hz})]
    lines.append(",".join(DECAY_COLUMNS))
    for ts, trace in entries:
        hint = "" if trace.detuning_hint is None else _fmt(float(trace.detuning_hint))
        for d, p in zip(trace.delays, trace.p_e):
            lines.append(f"{_fmt(float(ts))},{trace.kind},{_fmt(float(d))},{_fmt(float(p))},{hint}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_decay_log(path):
    """Returns (entries, meta): grouped (timestamp, DecayTrace) pairs."""
    meta, rows = _read_table(path, DECAY_COLUMNS)
    groups: list[tuple[float, str, str, list[float], list[float]]] = []
    for fields, lineno in rows:
        ts = _parse_float(fields[0], path, lineno, "timestamp_s")
        kind = fields[1].strip()
        delay = _parse_float(fields[2], path, lineno, "delay_s")
        p_e = _parse_float(fields[3], path, lineno, "p_e")
        hint = fields[4].strip()
        if groups and groups[-1][0] == ts and groups[-1][1] == kind:
            groups[-1][3].append(delay)
            groups[-1][4].append(p_e)
        else:
            groups.append((ts, kind, hint, [delay], [p_e]))
    entries = []
    for ts, kind, hint, delays, p_es in groups:
        try:
            trace = DecayTrace(
                np.array(delays), np.array(p_es), kind,
                detuning_hint=float(hint) if hint else None,
            )
        except DomainError as exc:
            raise DataFormatError(f"{path}: trace at t={ts}: {exc}") from exc
        entries.append((ts, trace))
    parsed = {
        "qubit_id": int(meta["qubit_id"]) if "qubit_id" in meta else None,
        "f_q_hz": float(meta["f_q_hz"]) if "f_q_hz" in meta else None,
    }
    return entries, parsed


# ---------------------------------------------------------------------------
# attenuation and simulation tables

ATTEN_COLUMNS = ("freq_hz", "atten_db")


def save_attenuation(freq_hz, atten_db, path) -> None:
    lines = [",".join(ATTEN_COLUMNS)]
    for f, a in zip(freq_hz, atten_db):
        lines.append(f"{_fmt(float(f))},{_fmt(float(a))}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_attenuation(path):
    _, rows = _read_table(path, ATTEN_COLUMNS)
    freq = np.array([_parse_float(f[0], path, ln, "freq_hz") for f, ln in rows])
    att = np.array([_parse_float(f[1], path, ln, "atten_db") for f, ln in rows])
    return freq, att


LK_COLUMNS = ("thickness_m", "l_k_sq_h", "l_k_sq_sigma_h")


def save_lk_points(points, path) -> None:
    """``points`` holds (thickness [m], Measurement of L_ksq) pairs."""
    lines = [",".join(LK_COLUMNS)]
    for t, m in points:
        lines.append(f"{_fmt(float(t))},{_fmt(float(m.value))},{_fmt(float(m.sigma))}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_lk_points(path):
    _, rows = _read_table(path, LK_COLUMNS)
    return [
        (
            _parse_float(f[0], path, ln, "thickness_m"),
            Measurement(
                _parse_float(f[1], path, ln, "l_k_sq_h"),
                _parse_float(f[2], path, ln, "l_k_sq_sigma_h"),
            ),
        )
        for f, ln in rows
    ]


TANDELTA_COLUMNS = ("p_ms", "q_tls0", "q_tls0_sigma")


def save_tandelta_points(points, path) -> None:
    lines = [",".join(TANDELTA_COLUMNS)]
    for p, m in points:
        lines.append(f"{_fmt(float(p))},{_fmt(float(m.value))},{_fmt(float(m.sigma))}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_tandelta_points(path):
    _, rows = _read_table(path, TANDELTA_COLUMNS)
    return [
        (
            _parse_float(f[0], path, ln, "p_ms"),
            Measurement(
                _parse_float(f[1], path, ln, "q_tls0"),
                _parse_float(f[2], path, ln, "q_tls0_sigma"),
            ),
        )
        for f, ln in rows
    ]


GFACTOR_COLUMNS = ("l_s_h", "l_tot_h")


def save_gfactor_table(samples, path, *, geometry: str) -> None:
    lines = [_meta_line({"geometry": geometry}), ",".join(GFACTOR_COLUMNS)]
    for ls, lt in samples:
        lines.append(f"{_fmt(float(ls))},{_fmt(float(lt))}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_gfactor_table(path):
    meta, rows = _read_table(path, GFACTOR_COLUMNS)
    samples = [
        (_parse_float(f[0], path, ln, "l_s_h"), _parse_float(f[1], path, ln, "l_tot_h"))
        for f, ln in rows
    ]
    return samples, meta.get("geometry", "")


# ---------------------------------------------------------------------------
# JSON registries


def write_json(obj, path) -> None:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc


def _measurement_from(obj: dict, key: str) -> Measurement | None:
    if obj.get(key) is None:
        return None
    return Measurement(float(obj[key]), float(obj.get(f"{key}_sigma", 0.0)))


@dataclass(frozen=True)
class DatasetResonator:
    record: ResonatorRecord
    traces: tuple[str, ...] = ()
    grid: str | None = None
    geometry: str | None = None


@dataclass(frozen=True)
class DatasetQubit:
    record: QubitRecord
    decay_log: str | None = None


@dataclass
class Dataset:
    """A measurement-campaign directory: registries plus data files."""

    root: Path
    films: dict[str, float]  # film id -> thickness [um]
    resonators: dict[str, DatasetResonator]
    qubits: dict[int, DatasetQubit]
    attenuation: tuple[np.ndarray, np.ndarray] | None
    material: dict  # t_c_k, rho_n_ohm_m and their sigmas
    xps: dict | None
    gfactor_tables: dict[str, str] = field(default_factory=dict)  # geometry -> path

    @classmethod
    def load(cls, root) -> "Dataset":
        root = Path(root)
        if not root.is_dir():
            raise ValidationError(f"dataset root {root} is not a directory")

        films: dict[str, float] = {}
        films_path = root / "films.json"
        if films_path.exists():
            for row in _read_json(films_path).get("films", []):
                fid = str(row["id"])
                if fid in films:
                    raise ValidationError(f"duplicate film id {fid!r}")
                films[fid] = float(row["thickness_um"])

        resonators: dict[str, DatasetResonator] = {}
        res_path = root / "resonators.json"
        if res_path.exists():
            for row in _read_json(res_path).get("resonators", []):
                rid = str(row["id"])
                if rid in resonators:
                    raise ValidationError(f"duplicate resonator id {rid!r}")
                try:
                    record = ResonatorRecord(
                        id=rid,
                        kind=str(row["kind"]),
                        gap_um=float(row["gap_um"]),
                        thickness_um=float(row["thickness_um"]),
                        f_r_sim=_opt_float(row, "f_r_sim_hz"),
                        f_r_meas=_opt_float(row, "f_r_meas_hz"),
                        l_g=_opt_float(row, "l_g_h"),
                        g_factor=_opt_float(row, "g_factor"),
                        p_ms=_opt_float(row, "p_ms"),
                        p_ma=_opt_float(row, "p_ma"),
                        p_sa=_opt_float(row, "p_sa"),
                        q_c_mag=_opt_float(row, "q_c_mag"),
                        q_tls0=_measurement_from(row, "q_tls0"),
                        q_other=_measurement_from(row, "q_other"),
                    )
                except DomainError as exc:
                    raise ValidationError(f"resonators.json: {exc}") from exc
                resonators[rid] = DatasetResonator(
                    record=record,
                    traces=tuple(row.get("traces", ())),
                    grid=row.get("grid"),
                    geometry=row.get("geometry"),
                )

        qubits: dict[int, DatasetQubit] = {}
        qubits_path = root / "qubits.json"
        if qubits_path.exists():
            for row in _read_json(qubits_path).get("qubits", []):
                qid = int(row["id"])
                if qid in qubits:
                    raise ValidationError(f"duplicate qubit id {qid}")
                try:
                    record = QubitRecord(
                        id=qid,
                        f_q=float(row["f_q_hz"]),
                        f_r=float(row["f_r_hz"]),
                        chi_mag=float(row.get("chi_mag_hz", 0.0)),
                        kappa_r=float(row.get("kappa_r_hz", 0.0)),
                        e_c_over_h=float(row["e_c_over_h_hz"]),
                    )
                except DomainError as exc:
                    raise ValidationError(f"qubits.json: {exc}") from exc
                qubits[qid] = DatasetQubit(record=record, decay_log=row.get("decay_log"))

        attenuation = None
        atten_path = root / "attenuation.csv"
        if atten_path.exists():
            attenuation = load_attenuation(atten_path)

        material = {}
        material_path = root / "material.json"
        if material_path.exists():
            material = _read_json(material_path)

        xps = None
        xps_path = root / "xps.json"
        if xps_path.exists():
            xps = _read_json(xps_path)

        gdir = root / "gfactor"
        gtables: dict[str, str] = {}
        if gdir.is_dir():
            for p in sorted(gdir.glob("*.csv")):
                _, geometry = load_gfactor_table(p)
                gtables[geometry or p.stem] = str(p.relative_to(root))

        return cls(
            root=root,
            films=films,
            resonators=resonators,
            qubits=qubits,
            attenuation=attenuation,
            material=material,
            xps=xps,
            gfactor_tables=gtables,
        )

    def validate(self) -> list[str]:
        """Check every referenced file exists and parses; returns problems."""
        problems: list[str] = []
        if not self.films and not self.resonators and not self.qubits:
            problems.append("dataset is empty: no films, resonators, or qubits")
        for rid, res in sorted(self.resonators.items()):
            for rel in res.traces:
                problems.extend(self._check_file(rel, load_trace, f"resonator {rid} trace"))
            if res.grid:
                problems.extend(self._check_file(res.grid, load_grid, f"resonator {rid} grid"))
        for qid, q in sorted(self.qubits.items()):
            if q.decay_log:
                problems.extend(self._check_file(q.decay_log, load_decay_log, f"qubit {qid} log"))
        return problems

    def _check_file(self, rel: str, loader, label: str) -> list[str]:
        path = self.root / rel
        if not path.exists():
            return [f"{label}: missing file {rel}"]
        try:
            loader(path)
        except Exception as exc:  # parse or invariant errors
            return [f"{label}: {exc}"]
        return []

    def path(self, rel: str) -> Path:
        return self.root / rel


def _opt_float(row: dict, key: str) -> float | None:
    value = row.get(key)
    return None if value is None else float(value)


def resolve_dataset_root(cli_value) -> Path:
    """CLI --input falls back to the environment override."""
    if cli_value:
        return Path(cli_value)
    env = os.environ.get(ENV_DATA_ROOT)
    if env:
        return Path(env)
    raise ValidationError(f"no dataset root given and {ENV_DATA_ROOT} is not set")
