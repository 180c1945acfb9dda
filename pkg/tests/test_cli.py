import csv
import filecmp
import io
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from xtalk import cli, config, experiments

ROOT = Path(__file__).resolve().parents[1]
PKG_CONFIGS = ROOT / "src" / "xtalk" / "configs"
CONFIGS = ROOT / "configs"


def _load(name):
    return json.loads((CONFIGS / name).read_text())


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_repo_configs_match_packaged_configs():
    names = sorted(p.name for p in PKG_CONFIGS.glob("*.json"))
    assert names == sorted(p.name for p in CONFIGS.glob("*.json"))
    match, mismatch, errors = filecmp.cmpfiles(PKG_CONFIGS, CONFIGS, names, shallow=False)
    assert not mismatch and not errors


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.name)
def test_bundled_configs_validate(path):
    config.load(path)


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d.pop("device"), "device"),
    (lambda d: d.pop("schema_version"), "schema_version"),
    (lambda d: d.update(schema_version=2), "schema_version"),
    (lambda d: d.update(colour="red"), "colour"),
    (lambda d: d["protocol"].update(bogus=1), "protocol.bogus"),
    (lambda d: d["device"].update(n_qubits=0), "device.n_qubits"),
    (lambda d: d["protocol"].update(tau=-1.0), "protocol.tau"),
    (lambda d: d["protocol"].update(sequence="XY8"), "protocol.sequence"),
    (lambda d: d.update(seed=-3), "seed"),
])
def test_schema_errors_name_the_field(mutate, where):
    data = _load("check_crxy4.json")
    mutate(data)
    with pytest.raises(config.ConfigError) as err:
        config.validate(data)
    assert err.value.path == where


def test_semantic_errors_name_the_field():
    data = _load("check_crxy4.json")
    data["device"] = {"n_qubits": 2, "edges": [[0, 0, 1.0]]}
    with pytest.raises(config.ConfigError) as err:
        config.validate(data)
    assert err.value.path == "device.edges"
    data["device"] = {"n_qubits": 2, "edges": [[0, 1, 1.0]], "chain_J": 1.0}
    with pytest.raises(config.ConfigError) as err:
        config.validate(data)
    assert err.value.path == "device"
    data["device"] = {"n_qubits": 2, "chain_J": 1.0}
    data["noise"] = [{"i": 4, "spectrum": {"kind": "white", "s0": 1.0}}]
    with pytest.raises(config.ConfigError) as err:
        config.validate(data)
    assert err.value.path == "noise.0.i"


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(config.ConfigError, match="invalid JSON"):
        config.load(bad)


def test_check_pass_writes_bundle(tmp_path, capsys):
    out = tmp_path / "out"
    code, stdout, _ = _run(["check", "--config", str(CONFIGS / "check_crxy4.json"), "--out", str(out)], capsys)
    assert code == 0
    assert "verdict: PASS" in stdout
    manifest = json.loads((out / "manifest.json").read_text())
    summary_text = (out / "summary.json").read_text()
    summary = json.loads(summary_text)
    assert summary_text == cli.dumps(summary)
    assert summary["verdict"] == "PASS"
    assert manifest["verdict"] == "PASS"
    for key in ("version", "seeds", "config_sha256", "started_utc", "files", "backend", "threads"):
        assert key in manifest
    assert set(manifest["files"]) == {"summary.json", "data/chi.csv", "data/schedule.csv"}
    raw = (out / "data" / "chi.csv").read_bytes()
    assert b"\r\n" in raw and b"\n" not in raw.replace(b"\r\n", b"")
    rows = list(csv.reader(io.StringIO(raw.decode(), newline="")))
    assert len({len(r) for r in rows}) == 1


def test_check_fail_exit_code(tmp_path, capsys):
    code, _, _ = _run(["check", "--config", str(CONFIGS / "check_xy4.json"), "--out", str(tmp_path),
                       "--quiet"], capsys)
    assert code == 2


def test_config_error_exit_code(tmp_path, capsys):
    data = _load("check_crxy4.json")
    del data["device"]
    code, _, err = _run(["check", "--config", str(_write(tmp_path, data)), "--out", str(tmp_path / "o")], capsys)
    assert code == 1
    assert "config error at device:" in err


def test_experiment_mismatch(tmp_path, capsys):
    code, _, err = _run(["qns-demo", "--config", str(CONFIGS / "check_crxy4.json"),
                         "--out", str(tmp_path)], capsys)
    assert code == 1
    assert "at experiment:" in err


def test_missing_config_file(tmp_path, capsys):
    code, _, err = _run(["check", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)], capsys)
    assert code == 1


def test_seed_override_and_threads(tmp_path, capsys):
    out = tmp_path / "o"
    code, stdout, _ = _run(["cumulant-validate", "--config", str(CONFIGS / "cumulant_validate.json"),
                            "--out", str(out), "--seed", "17", "--threads", "2", "--quiet"], capsys)
    assert code == 0 and stdout == ""
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["master"] == 17
    assert manifest["threads"] == 2
    assert json.loads((out / "summary.json").read_text())["config"]["seed"] == 17


def test_thread_resolution(monkeypatch):
    monkeypatch.delenv("XTALK_THREADS", raising=False)
    assert experiments.resolve_threads(0) == (os.cpu_count() or 1)
    assert experiments.resolve_threads(None) == (os.cpu_count() or 1)
    monkeypatch.setenv("XTALK_THREADS", "3")
    assert experiments.resolve_threads(None) == 3
    assert experiments.resolve_threads(5) == 5
    with pytest.raises(ValueError):
        experiments.resolve_threads(-1)


def test_outputs_repeat_byte_for_byte(tmp_path, capsys):
    cfg = str(CONFIGS / "check_crxy4.json")
    for name, threads in (("a", "1"), ("b", "4")):
        assert _run(["check", "--config", cfg, "--out", str(tmp_path / name), "--threads", threads,
                     "--quiet"], capsys)[0] == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    for p in (a / "data").iterdir():
        assert p.read_bytes() == (b / "data" / p.name).read_bytes()


def test_report_on_bundle(tmp_path, capsys):
    out = tmp_path / "o"
    _run(["check", "--config", str(CONFIGS / "check_crxy4.json"), "--out", str(out), "--quiet"], capsys)
    code, stdout, _ = _run(["report", str(out), "--out", str(tmp_path / "r.txt")], capsys)
    assert code == 0
    assert "CR-XY4" in stdout and "missing artifacts" not in stdout
    assert (tmp_path / "r.txt").read_text().strip() == stdout.strip()


def test_report_on_empty_bundle(tmp_path, capsys):
    code, stdout, _ = _run(["report", str(tmp_path)], capsys)
    assert code == 0
    assert "missing artifacts: manifest.json, summary.json, data/*.csv" in stdout


def test_report_on_partial_bundle(tmp_path, capsys):
    out = tmp_path / "o"
    _run(["check", "--config", str(CONFIGS / "check_crxy4.json"), "--out", str(out), "--quiet"], capsys)
    (out / "manifest.json").unlink()
    code, stdout, _ = _run(["report", str(out)], capsys)
    assert code == 0
    assert "missing artifacts: manifest.json" in stdout


def test_report_on_missing_directory(tmp_path, capsys):
    code, _, err = _run(["report", str(tmp_path / "absent")], capsys)
    assert code == 1 and "does not exist" in err


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "xtalk.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("check", "dd-compare", "qns-demo", "cumulant-validate", "report"):
        assert cmd in out.stdout
