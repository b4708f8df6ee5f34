import json
import math

import pytest

from resqfit.dataio import Dataset
from resqfit.errors import ValidationError
from resqfit.pipeline import PipelineConfig, run_pipeline
from resqfit.synth import write_synthetic_dataset

TRUE_LAMBDA = 1.78e-6
TRUE_TAN_DELTA = 1.6e-3


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe_data")
    write_synthetic_dataset(root, seed=12345)
    return root


@pytest.fixture(scope="module")
def report(dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe_out")
    dataset = Dataset.load(dataset_dir)
    result = run_pipeline(dataset, PipelineConfig(figures=True, qubit_p_ms=1.3e-4), out)
    return result, out


def test_pipeline_completes_without_failures(report):
    result, _ = report
    assert result.failures == []


def test_pipeline_recovers_lambda(report):
    result, _ = report
    lam = result.report["kinetic"]["lambda_fit"]
    err = abs(lam["lambda_m"] - TRUE_LAMBDA)
    assert err < max(3 * lam["lambda_sigma_m"], 0.01 * TRUE_LAMBDA)


def test_pipeline_recovers_tan_delta(report):
    result, _ = report
    td = result.report["surface"]["tan_delta"]
    assert td["value"] == pytest.approx(TRUE_TAN_DELTA, rel=0.05)
    assert result.report["surface"]["oxide_thickness_m"] == pytest.approx(2.9e-9, abs=0.05e-9)
    assert result.report["surface"]["surface_limited_q_at_qubit_p_ms"] > 1e6


def test_pipeline_loss_fits_match_registry(report, dataset_dir):
    result, _ = report
    registry = json.loads((dataset_dir / "resonators.json").read_text())
    truth = {row["id"]: row["q_tls0"] for row in registry["resonators"]}
    for rid, fit in result.report["loss_fits"].items():
        q0 = fit["q_tls0"]
        assert abs(q0["value"] - truth[rid]) <= 3 * q0["sigma"]


def test_pipeline_qubit_stats(report):
    result, _ = report
    q1 = result.report["qubits"]["1"]
    assert q1["t1_mean_s"] == pytest.approx(585e-6, rel=0.1)
    assert q1["t1_count"] == 5
    assert q1["t_phi_count"] >= 4
    assert q1["q_bar"] == pytest.approx(2 * math.pi * 2.736e9 * q1["t1_mean_s"], rel=1e-9)


def test_pipeline_outputs_bundle(report):
    _, out = report
    assert (out / "report.json").exists()
    assert (out / "summary.txt").exists()
    for table in ("resonance_fits.csv", "loss_fits.csv", "sheet_inductance.csv",
                  "qubit_stats.csv"):
        assert (out / "tables" / table).exists()
    figures = sorted(p.name for p in (out / "figures").glob("*.png"))
    assert "lambda_fit.png" in figures
    assert "tan_delta.png" in figures
    assert any(name.startswith("s21_") for name in figures)
    assert any(name.startswith("loss_") for name in figures)
    assert any(name.startswith("qubit_") for name in figures)


def test_pipeline_report_is_json_clean(report):
    result, out = report
    payload = json.loads((out / "report.json").read_text())
    assert payload["dataset"]["n_resonators"] == 64
    assert not any(k.startswith("_") for k in payload)


def test_pipeline_isolates_missing_attenuation(dataset_dir, tmp_path):
    import shutil

    broken = tmp_path / "no_atten"
    shutil.copytree(dataset_dir, broken)
    (broken / "attenuation.csv").unlink()
    dataset = Dataset.load(broken)
    result = run_pipeline(dataset, PipelineConfig(figures=False), tmp_path / "out")
    loss_failures = [f for f in result.failures if f["stage"] == "loss"]
    assert len(loss_failures) == 2  # both grids fail, nothing else does
    assert all("attenuation" in f["error"] for f in loss_failures)
    assert result.report["loss_fits"] == {}
    assert "lambda_fit" in result.report["kinetic"]  # other stages completed
    assert result.report["qubits"]


def test_pipeline_rejects_empty_dataset(tmp_path):
    dataset = Dataset.load(tmp_path)
    with pytest.raises(ValidationError, match="empty"):
        run_pipeline(dataset, PipelineConfig(), tmp_path / "out")
