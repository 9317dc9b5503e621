import json
import subprocess
import sys

import pytest

from wormhole_waves.cli import ConfigError, expand_sweep, main, resolve_config, sweep


def _manifest(path):
    return json.loads((path / "manifest.json").read_text())


def test_harmonic_command(tmp_path, golden_harmonic):
    out = tmp_path / "h"
    assert main(["harmonic", "--ell", "1", "--n", "1", "--output", str(out)]) == 0
    man = _manifest(out)
    gold = next(r for r in golden_harmonic if (r["ell"], r["n"]) == (1, 1))
    assert man["results"]["alpha"] == pytest.approx(gold["alpha"], rel=1e-12)
    assert man["config_hash"] and (out / "harmonic.csv").is_file()
    assert set(man["versions"]) >= {"numpy", "scipy", "wormhole_waves"}


def test_even_grid_is_rejected_without_artifacts(tmp_path):
    out = tmp_path / "bad"
    assert main(["harmonic", "--grid-n", "4096", "--output", str(out)]) == 2
    assert not out.exists()


def test_config_file_and_unknown_keys(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('command = "harmonic"\nell = 2\nn = 1\ngrid_n = 1201\n')
    out = tmp_path / "o"
    assert main(["harmonic", "--config", str(cfg), "--output", str(out)]) == 0
    assert _manifest(out)["config"]["ell"] == 2
    cfg.write_text('ell = 2\nbogus = 1\n')
    assert main(["harmonic", "--config", str(cfg), "--output", str(tmp_path / "p")]) == 2
    cfg.write_text('command = "evolve"\n')
    assert main(["harmonic", "--config", str(cfg), "--output", str(tmp_path / "q")]) == 2


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"ell": 3, "T": 7.0}))
    merged = resolve_config("evolve", json.loads(cfg.read_text()), {"T": 9.0})
    assert merged["ell"] == 3 and merged["T"] == 9.0
    with pytest.raises(ConfigError):
        resolve_config("evolve", {"flow": "sideways"})


def test_env_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("WORMHOLE_OUTPUT_ROOT", str(tmp_path))
    assert main(["harmonic", "--grid-n", "1201"]) == 0
    dirs = list(tmp_path.glob("harmonic-*"))
    assert len(dirs) == 1 and _manifest(dirs[0])["config_hash"] in dirs[0].name


def test_deterministic_artifacts(tmp_path):
    args = ["certify", "--samples", "1", "--T", "5", "--grid-n", "513", "--seed", "7"]
    assert main(args + ["--output", str(tmp_path / "a")]) == 0
    assert main(args + ["--output", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "certify.csv").read_bytes()
    assert a == (tmp_path / "b" / "certify.csv").read_bytes()


def test_evolve_and_converge_commands(tmp_path):
    out = tmp_path / "e"
    assert main(["evolve", "--flow", "free", "--grid-n", "513", "--T", "2",
                 "--state-format", "binary", "--output", str(out)]) == 0
    man = _manifest(out)
    assert man["results"]["relative_energy_drift"] < 1e-6
    assert "final.bin" in man["files"] and "energy.csv" in man["files"]
    out = tmp_path / "c"
    assert main(["converge", "--flow", "psi", "--ell", "1", "--n", "1", "--output", str(out)]) == 0
    assert 3.5 <= _manifest(out)["results"]["order"] <= 4.5


def test_numerical_failure_exit_code(tmp_path):
    out = tmp_path / "small"
    # the light cone of the data leaves a tiny grid: rejected before any step
    code = main(["evolve", "--flow", "free", "--grid-x", "1.0", "--grid-n", "65", "--T", "20",
                 "--output", str(out)])
    assert code == 2 and not out.exists()


def test_sweep(tmp_path):
    spec = {"product": {"command": "harmonic", "ell": [1, 2], "n": [1], "grid_n": 1201}}
    code, rows = sweep(spec, tmp_path, jobs=2)
    assert code == 0 and len(rows) == 2
    assert (tmp_path / "sweep.csv").read_text().count("\n") == 3
    code, rows = sweep({"runs": []}, tmp_path / "empty")
    assert code == 0 and rows == []
    with pytest.raises(ConfigError):
        sweep({"runs": [{"command": "harmonic", "output": "x"},
                        {"command": "harmonic", "ell": 2, "output": "x"}]}, tmp_path)
    with pytest.raises(ConfigError):
        expand_sweep({"rnus": []})


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "wormhole_waves.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "harmonic" in res.stdout
