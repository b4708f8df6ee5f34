import json

import numpy as np
import pytest

from resqfit.core import ComplexTrace, Measurement
from resqfit.dataio import (
    Dataset,
    load_attenuation,
    load_decay_log,
    load_gfactor_table,
    load_grid,
    load_lk_points,
    load_tandelta_points,
    load_trace,
    save_attenuation,
    save_decay_log,
    save_gfactor_table,
    save_grid,
    save_lk_points,
    save_tandelta_points,
    save_trace,
    write_json,
)
from resqfit.errors import DataFormatError, ValidationError
from resqfit.loss import LossGridPoint
from resqfit.qubit import DecayTrace
from resqfit.synth import write_synthetic_dataset


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    write_synthetic_dataset(root, seed=77)
    return root


# ---------------------------------------------------------------------------
# traces


def test_trace_round_trip(tmp_path):
    freq = np.linspace(4e9, 4.1e9, 64)
    z = np.exp(1j * np.linspace(0, 1, 64)) * 0.9
    trace = ComplexTrace(freq, z, power_dbm=-85.0, temperature_k=0.011)
    path = tmp_path / "trace.csv"
    save_trace(trace, path)
    loaded = load_trace(path)
    assert np.array_equal(loaded.freq, trace.freq)
    assert np.array_equal(loaded.s21, trace.s21)
    assert loaded.power_dbm == -85.0
    assert loaded.temperature_k == 0.011


def test_trace_write_load_write_byte_identical(tmp_path):
    freq = np.linspace(4e9, 4.1e9, 32)
    trace = ComplexTrace(freq, np.ones(32, dtype=complex) * (0.5 + 0.1j), power_dbm=-80.0)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    save_trace(trace, p1)
    save_trace(load_trace(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_trace_three_column_header(tmp_path):
    path = tmp_path / "t.csv"
    rows = "\n".join(f"{4e9 + i * 1e5!r},{1.0!r},{0.0!r}" for i in range(10))
    path.write_text("freq_hz,s21_re,s21_im\n" + rows + "\n")
    trace = load_trace(path)
    assert len(trace) == 10
    assert trace.power_dbm is None


def test_trace_shuffled_rows_rejected(tmp_path):
    path = tmp_path / "t.csv"
    lines = ["freq_hz,s21_re,s21_im"]
    freqs = [4e9, 4.2e9, 4.1e9] + [4.3e9 + i * 1e6 for i in range(7)]
    lines += [f"{f!r},1.0,0.0" for f in freqs]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValidationError, match="increasing"):
        load_trace(path)


def test_trace_malformed_row_reports_line(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("freq_hz,s21_re,s21_im\n4e9,1.0,0.0\n4.1e9,oops,0.0\n")
    with pytest.raises(DataFormatError, match=r":3"):
        load_trace(path)


def test_trace_wrong_header_rejected(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("freq,re,im\n4e9,1.0,0.0\n")
    with pytest.raises(DataFormatError, match="header"):
        load_trace(path)


def test_trace_missing_field_count(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("freq_hz,s21_re,s21_im\n4e9,1.0\n")
    with pytest.raises(DataFormatError, match="fields"):
        load_trace(path)


# ---------------------------------------------------------------------------
# grids, logs, tables


def test_grid_round_trip(tmp_path):
    points = [
        LossGridPoint(10.0 ** k, 0.02 * (k + 1), Measurement(1e6 + k, 1e4), -90.0 + k)
        for k in range(5)
    ]
    path = tmp_path / "grid.csv"
    save_grid(points, path, resonator_id="R1", f_r_hz=5e9, delta0_j=1.7e-23,
              q_l=1e5, q_c_mag=2e5)
    loaded, meta = load_grid(path)
    assert meta["resonator_id"] == "R1"
    assert meta["f_r_hz"] == 5e9
    assert meta["q_l"] == 1e5
    assert [p.nbar for p in loaded] == [p.nbar for p in points]
    assert [p.q_int.value for p in loaded] == [p.q_int.value for p in points]


def test_decay_log_round_trip(tmp_path):
    delays = np.logspace(-6, -3, 12)
    entries = [
        (0.0, DecayTrace(delays, np.exp(-delays / 1e-4), "T1")),
        (60.0, DecayTrace(delays, np.exp(-delays / 2e-4), "T2E")),
        (120.0, DecayTrace(np.linspace(1e-6, 1e-3, 40),
                           0.5 + 0.5 * np.cos(np.linspace(0, 20, 40)), "T2R",
                           detuning_hint=1.7e4)),
    ]
    path = tmp_path / "log.csv"
    save_decay_log(entries, path, qubit_id=2, f_q_hz=2.736e9)
    loaded, meta = load_decay_log(path)
    assert meta == {"qubit_id": 2, "f_q_hz": 2.736e9}
    assert len(loaded) == 3
    for (ts0, tr0), (ts1, tr1) in zip(entries, loaded):
        assert ts0 == ts1
        assert tr0.kind == tr1.kind
        assert np.array_equal(tr0.p_e, tr1.p_e)
    assert loaded[2][1].detuning_hint == 1.7e4
    assert loaded[0][1].detuning_hint is None


def test_attenuation_round_trip(tmp_path):
    path = tmp_path / "att.csv"
    save_attenuation([1e9, 2e9, 3e9], [60.0, 62.0, 66.0], path)
    freq, att = load_attenuation(path)
    assert list(freq) == [1e9, 2e9, 3e9]
    assert list(att) == [60.0, 62.0, 66.0]


def test_gfactor_round_trip(tmp_path):
    path = tmp_path / "g.csv"
    save_gfactor_table([(1e-12, 9e-9), (2e-12, 10e-9)], path, geometry="CPW-8")
    samples, geometry = load_gfactor_table(path)
    assert geometry == "CPW-8"
    assert samples == [(1e-12, 9e-9), (2e-12, 10e-9)]


def test_point_tables_round_trip(tmp_path):
    lk = [(0.021e-6, Measurement(2.5e-10, 1e-11)), (2e-6, Measurement(2.3e-12, 1e-13))]
    save_lk_points(lk, tmp_path / "lk.csv")
    assert load_lk_points(tmp_path / "lk.csv") == lk

    td = [(1.3e-4, Measurement(4.8e6, 1e5)), (2e-3, Measurement(3.2e5, 2e4))]
    save_tandelta_points(td, tmp_path / "td.csv")
    assert load_tandelta_points(tmp_path / "td.csv") == td


def test_registry_json_canonical_round_trip(dataset_dir):
    raw = (dataset_dir / "resonators.json").read_bytes()
    obj = json.loads(raw)
    write_json(obj, dataset_dir / "rewritten.json")
    assert (dataset_dir / "rewritten.json").read_bytes() == raw


# ---------------------------------------------------------------------------
# dataset registry


def test_dataset_loads_and_validates(dataset_dir):
    dataset = Dataset.load(dataset_dir)
    assert len(dataset.films) == 8
    assert len(dataset.resonators) == 64
    assert len(dataset.qubits) == 2
    assert dataset.attenuation is not None
    assert dataset.xps is not None
    assert dataset.validate() == []


def test_dataset_missing_file_reported(tmp_path):
    write_synthetic_dataset(tmp_path, seed=3)
    victim = next((tmp_path / "traces").glob("*.csv"))
    victim.unlink()
    problems = Dataset.load(tmp_path).validate()
    assert any("missing file" in p for p in problems)


def test_dataset_duplicate_ids_rejected(tmp_path):
    write_json = __import__("resqfit.dataio", fromlist=["write_json"]).write_json
    write_json({"films": [{"id": "F1", "thickness_um": 0.1},
                          {"id": "F1", "thickness_um": 0.2}]}, tmp_path / "films.json")
    with pytest.raises(ValidationError, match="duplicate"):
        Dataset.load(tmp_path)


def test_dataset_empty_directory(tmp_path):
    dataset = Dataset.load(tmp_path)
    problems = dataset.validate()
    assert any("empty" in p for p in problems)


def test_dataset_bad_registry_value(tmp_path):
    from resqfit.dataio import write_json as wj

    wj({"resonators": [{"id": "R", "kind": "CPW", "gap_um": 2.0, "thickness_um": 0.1,
                        "f_r_sim_hz": 5e9, "f_r_meas_hz": 6e9}]},
       tmp_path / "resonators.json")
    with pytest.raises(ValidationError):
        Dataset.load(tmp_path)
