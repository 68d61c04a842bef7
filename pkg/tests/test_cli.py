import json

import numpy as np
import pytest

from mlrd_toolkit import __version__
from mlrd_toolkit.app.cli import derive_run_id, main
from mlrd_toolkit.app.io import read_path_binary, read_path_csv
from mlrd_toolkit.app.schemas import load_config, parse_config
from mlrd_toolkit.common.logging_utils import get_run_id, set_run_id

LINEAR = {
    "kind": "linear_lrd",
    "dimension": 2,
    "memory": {"values": [0.4, 0.2]},
    "a_plus": [[1.0, 0.0], [0.0, 1.0]],
    "a_minus": [[1.0, 0.0], [0.0, 1.0]],
}


def _write_config(tmp_path, name="config.json", **fields):
    path = tmp_path / name
    path.write_text(json.dumps(fields), encoding="utf-8")
    return path


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    summary = _stdout_json(capsys)
    assert summary["passed"] is True
    assert {r["name"] for r in summary["results"]} >= {"matalg", "hermite", "limits"}


def test_verify_clt_writes_report(tmp_path, capsys):
    cfg = _write_config(tmp_path, experiment="clt", kind="white_noise", dimension=2, n=64, replications=200, seed=3)
    out = tmp_path / "out"
    code = main(["verify-clt", "--config", str(cfg), "--out", str(out), "--format", "both"])
    assert code in (0, 1)
    summary = _stdout_json(capsys)
    assert (out / "clt_report.json").is_file()
    assert (out / "clt_report.timing.json").is_file()
    assert (out / "clt_summary.csv").is_file()
    report = json.loads((out / "clt_report.json").read_text())
    assert report["digest"] == summary["digest"]
    assert report["version"] == __version__
    assert (code == 0) == report["passed"]


def test_report_bytes_do_not_depend_on_threads(tmp_path, capsys):
    cfg = _write_config(tmp_path, **LINEAR, n=64, replications=200, seed=8)
    for threads in ("1", "3"):
        main(["verify-clt", "--config", str(cfg), "--out", str(tmp_path / threads), "--threads", threads])
    capsys.readouterr()
    first = (tmp_path / "1" / "clt_report.json").read_bytes()
    assert first == (tmp_path / "3" / "clt_report.json").read_bytes()


def test_seed_flag_overrides_config(tmp_path, capsys):
    cfg = _write_config(tmp_path, kind="white_noise", dimension=1, n=16, replications=100, seed=1)
    main(["verify-clt", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "42"])
    capsys.readouterr()
    report = json.loads((tmp_path / "a" / "clt_report.json").read_text())
    assert report["config"]["seed"] == 42


def test_ordering_violation_exit_code(configs_dir, tmp_path, capsys):
    code = main(["verify-clt", "--config", str(configs_dir / "bad_ordering.json"), "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    payload = json.loads(err)
    assert payload["error"] == "ordering_violation"
    assert payload["details"]["ordering"] is False


def test_missing_config(tmp_path, capsys):
    assert main(["gamma", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 2
    assert "configuration_error" in capsys.readouterr().err
    assert main(["gamma", "--out", str(tmp_path)]) == 2


def test_gamma_outputs(configs_dir, tmp_path, capsys):
    code = main(["gamma", "--config", str(configs_dir / "clt_linear.json"), "--out", str(tmp_path), "--format", "both"])
    assert code == 0
    payload = json.loads((tmp_path / "gamma.json").read_text())
    assert len(payload["gamma"]) == 17
    assert payload["conditions"]["ordering"] is True
    assert "R" in payload
    lines = (tmp_path / "gamma.csv").read_text().splitlines()
    assert lines[0] == "lag,row,col,value"
    assert len(lines) == 1 + 17 * 4


def test_gamma_reports_failed_conditions(configs_dir, tmp_path, capsys):
    code = main(["gamma", "--config", str(configs_dir / "bad_ordering.json"), "--out", str(tmp_path)])
    assert code == 1
    payload = json.loads((tmp_path / "gamma.json").read_text())
    assert payload["conditions"]["ordering"] is False
    assert "R" not in payload


def test_simulate_writes_mlrdpath(tmp_path, capsys):
    cfg = _write_config(tmp_path, **LINEAR, n=64, seed=5)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path), "--format", "both"]) == 0
    values = read_path_binary(tmp_path / "path.mlrdpath")
    assert values.shape == (64, 2)
    assert len((tmp_path / "path.csv").read_text().splitlines()) == 64
    np.testing.assert_array_equal(read_path_csv(tmp_path / "path.csv"), values)
    meta = json.loads((tmp_path / "path_meta.json").read_text())
    assert meta["generator"] == "fft_linear_filter"
    assert meta["truncation"] == 640


def test_normalize_outputs(tmp_path, capsys):
    cfg = _write_config(tmp_path, kind="gaussian_diagonal", dimension=2, memory={"values": [0.2, 0.1]},
                        r_diag=[0.5, 0.5], n=64)
    assert main(["normalize", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "normalizers.json").read_text())
    sigma_inv = np.asarray(payload["sigma_inv"])
    sigma_sq = np.asarray(payload["sigma_sq"])
    np.testing.assert_allclose(sigma_inv @ sigma_sq @ sigma_inv, np.eye(2), atol=1e-10)
    assert "B_inv_n" in payload
    assert "A_inv_n" in payload


def test_hermite_outputs(tmp_path, capsys):
    cfg = _write_config(tmp_path, kind="white_noise", dimension=1, subordination={"functions": ["cube"], "l_max": 4})
    assert main(["hermite", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "hermite.json").read_text())
    assert payload["rank"] == 1
    np.testing.assert_allclose(payload["coefficients"][0], [0.0, 3.0, 0.0, 1.0, 0.0], atol=1e-10)


def test_help_lists_config_keys(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "tolerances.covariance" in out
    assert "memory.values" in out
    assert "verify-subordination" in out


def test_run_id_is_deterministic():
    config = parse_config({"kind": "white_noise", "dimension": 1, "seed": 4})
    assert derive_run_id(config) == derive_run_id(config.with_overrides(threads=8))
    assert derive_run_id(config) != derive_run_id(config.with_overrides(seed=5))
    assert len(derive_run_id(config)) == 12


def test_summary_carries_run_id_and_restores_the_caller(tmp_path, capsys):
    cfg = _write_config(tmp_path, **LINEAR, n=32, seed=2)
    set_run_id("outer")
    try:
        assert main(["gamma", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        summary = _stdout_json(capsys)
        expected = derive_run_id(load_config(cfg).with_overrides(seed=None, threads=None))
        assert summary["run_id"] == expected
        assert get_run_id() == "outer"
    finally:
        set_run_id(None)


@pytest.mark.slow
def test_verify_clt_fixture_exit_zero(configs_dir, tmp_path, capsys):
    assert main(["verify-clt", "--config", str(configs_dir / "clt_white_noise.json"), "--out", str(tmp_path)]) == 0
