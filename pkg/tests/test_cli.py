import json
import os
import re
import subprocess
import sys

import numpy as np
import pytest

from phcdiode import __version__
from phcdiode.cli import main
from phcdiode.devicecfg import load_preset, write_config
from phcdiode.opfinder import find_resonant_bias


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _rows(path):
    lines = path.read_text().splitlines()
    return lines[0], [list(map(float, l.split(","))) for l in lines[1:]]


def test_find_resonance_prints_bias(capsys):
    code, out, _ = run(["find-resonance", "--vcav", "2.2"], capsys)
    assert code == 0
    assert "V_QD = 1.630 V" in out


def test_sweep_cavity_endpoints(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code, _, _ = run(["sweep-cavity", "--vmin", -1.0, "--vmax", 2.3, "--steps", 34, "--out", out], capsys)
    assert code == 0
    header, rows = _rows(out)
    assert header == "V,lambda_S_nm,lambda_AS_nm,lambda_X_nm,detuning_nm"
    assert rows[0][1] == pytest.approx(1257.7, abs=0.05) and rows[0][2] == pytest.approx(1186.5, abs=0.05)
    assert rows[-1][1] == pytest.approx(1242.3, abs=0.05) and rows[-1][2] == pytest.approx(1205.1, abs=0.05)
    manifest = json.loads((tmp_path / "sweep.csv.manifest.json").read_text())
    assert manifest["command"] == "sweep-cavity"
    assert manifest["tool_version"] == __version__
    assert manifest["config"] == "preset:paper_device"
    assert manifest["outputs"] == [str(out)]
    assert manifest["seed"] is None
    assert manifest["wall_time_s"] >= 0


def test_sweep_single_step(tmp_path, capsys):
    out = tmp_path / "one.csv"
    assert run(["sweep-cavity", "--steps", 1, "--vmin", 1.0, "--out", out], capsys)[0] == 0
    assert len(_rows(out)[1]) == 1


def test_sweep_with_spectra(tmp_path, capsys):
    out = tmp_path / "sw.csv"
    code, _, _ = run(["sweep-cavity", "--steps", 3, "--out", out, "--spectra-dir", tmp_path / "spec"], capsys)
    assert code == 0
    files = sorted((tmp_path / "spec").glob("*.csv"))
    assert len(files) == 3
    assert files[0].read_text().startswith("wavelength_nm,intensity\n")


def test_sweep_pull_in_flagged(tmp_path, capsys):
    out = tmp_path / "pi.csv"
    code, _, err = run(["sweep-cavity", "--vmin", -2.0, "--vmax", 2.3, "--steps", 4, "--out", out], capsys)
    assert code == 0
    assert "pull-in" in err
    _, rows = _rows(out)
    assert np.isnan(rows[0][1]) and not np.isnan(rows[-1][1])


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "absent.json"
    code, _, err = run(["sweep-cavity", "--config", missing, "--out", tmp_path / "x.csv"], capsys)
    assert code == 2
    assert str(missing) in err


def test_invalid_config_exit_2(tmp_path, capsys):
    d = load_preset().to_dict()
    d["detector"]["efficiency"] = 1.2
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(d))
    code, _, err = run(["find-resonance", "--vcav", "2.2", "--config", cfg], capsys)
    assert code == 2
    assert "detector.efficiency" in err


def test_config_from_env(tmp_path, capsys, monkeypatch):
    p = load_preset().replace(emitter={"V_res": 1700.0})
    cfg = tmp_path / "dev.json"
    write_config(p, cfg)
    monkeypatch.setenv("PHCDIODE_CONFIG", str(cfg))
    code, out, _ = run(["find-resonance", "--vcav", "2.2"], capsys)
    expected = find_resonant_bias(p, 2.2).V_QD
    assert abs(expected - 1.630) > 0.05
    assert code == 0 and f"V_QD = {expected:.3f} V" in out


def test_seed_rules(tmp_path, capsys):
    assert run(["sweep-cavity", "--out", tmp_path / "a.csv", "--seed", 1], capsys)[0] == 2
    assert run(["find-resonance", "--vcav", 2.2, "--seed", 1], capsys)[0] == 2
    assert run(["hbt", "--duration", 0.001, "--out", tmp_path / "g.csv"], capsys)[0] == 2
    assert run(["decay-trace", "--vqd", 1.5, "--out", tmp_path / "d.csv"], capsys)[0] == 2


def test_no_crossing_exit_1(capsys):
    code, _, err = run(["find-resonance", "--vcav", "2.2", "--vmax", "1.5"], capsys)
    assert code == 1 and "no resonance crossing" in err


def test_hbt_fit_pipeline_and_determinism(tmp_path, capsys):
    g = tmp_path / "g2.csv"
    args = ["hbt", "--duration", 0.05, "--seed", 7, "--out", g, "--tags-out", tmp_path / "tags.bin"]
    assert run(args, capsys)[0] == 0
    first = g.read_bytes(), (tmp_path / "tags.bin").read_bytes()
    assert run(args, capsys)[0] == 0
    assert (g.read_bytes(), (tmp_path / "tags.bin").read_bytes()) == first
    assert g.read_text().splitlines()[0] == "tau_ps,g2,sigma,counts"

    fit = tmp_path / "fit.json"
    code, out, _ = run(["fit-g2", "--in", g, "--out", fit], capsys)
    assert code == 0
    rep = json.loads(fit.read_text())
    assert rep["converged"] is True
    assert set(rep["params"]) == {"A", "tau_t"}
    assert "g2(0)" in out


def test_hbt_json_format_feeds_fit(tmp_path, capsys):
    g = tmp_path / "g2.json"
    assert run(["hbt", "--duration", 0.02, "--seed", 1, "--out", g, "--format", "json"], capsys)[0] == 0
    assert set(json.loads(g.read_text())) == {"tau_ps", "g2", "sigma", "counts"}
    assert run(["fit-g2", "--in", g, "--out", tmp_path / "f.json"], capsys)[0] == 0


def test_fit_g2_failure_exit_1(tmp_path, capsys):
    tau = 16.0 * np.arange(-50, 51)
    g = tmp_path / "flat.csv"
    g.write_text("tau_ps,g2,sigma,counts\n" + "".join(f"{t},1,0.01,100\n" for t in tau))
    code, out, _ = run(["fit-g2", "--in", g, "--out", tmp_path / "f.json"], capsys)
    assert code == 1
    diag = json.loads(out)
    assert diag["diagnostic"]["converged"] is False


def test_fit_g2_missing_input(tmp_path, capsys):
    assert run(["fit-g2", "--in", tmp_path / "none.csv", "--out", tmp_path / "f.json"], capsys)[0] == 2


def test_nine_significant_digits(tmp_path, capsys):
    out = tmp_path / "s.csv"
    run(["sweep-qd", "--steps", 5, "--out", out], capsys)
    for line in out.read_text().splitlines()[1:]:
        for field in line.split(","):
            digits = re.sub(r"[^0-9]", "", field.split("e")[0]).lstrip("0")
            assert len(digits) <= 9


COMMANDS = [
    ["sweep-cavity", "--steps", 5, "--out", "{d}/a.csv"],
    ["sweep-qd", "--steps", 5, "--out", "{d}/b.csv", "--format", "json"],
    ["spectrum", "--vcav", 2.2, "--vqd", 1.63, "--seed", 3, "--out", "{d}/c.csv"],
    ["hbt", "--duration", 0.01, "--seed", 4, "--out", "{d}/d.csv"],
    ["find-resonance", "--vcav", 2.2, "--out", "{d}/e.json"],
    ["map", "--vqd-grid", 1.5, 1.8, 4, "--out", "{d}/f.csv"],
    ["decay-trace", "--vqd", 1.5, "--pulses", 20000, "--seed", 5, "--out", "{d}/g.csv", "--fit-out", "{d}/g.json"],
]


@pytest.mark.parametrize("argv", COMMANDS, ids=[c[0] for c in COMMANDS])
def test_replay_reproduces(tmp_path, capsys, argv):
    argv = [str(a).format(d=tmp_path) for a in argv]
    assert run(argv, capsys)[0] == 0
    out = argv[argv.index("--out") + 1]
    manifest = out + ".manifest.json"
    before = {o: open(o, "rb").read() for o in json.loads(open(manifest).read())["outputs"]}
    for o in before:
        os.remove(o)
    code, out_text, _ = run(["replay", manifest], capsys)
    assert code == 0 and "bit-exactly" in out_text
    assert {o: open(o, "rb").read() for o in before} == before


def test_replay_fit_g2(tmp_path, capsys):
    g = tmp_path / "g.csv"
    run(["hbt", "--duration", 0.01, "--seed", 2, "--out", g], capsys)
    run(["fit-g2", "--in", g, "--out", tmp_path / "f.json"], capsys)
    assert run(["replay", tmp_path / "f.json.manifest.json"], capsys)[0] == 0


def test_replay_detects_mismatch(tmp_path, capsys):
    out = tmp_path / "a.csv"
    run(["sweep-cavity", "--steps", 3, "--out", out], capsys)
    m = tmp_path / "a.csv.manifest.json"
    d = json.loads(m.read_text())
    d["sha256"][str(out)] = "0" * 64
    m.write_text(json.dumps(d))
    assert run(["replay", m], capsys)[0] == 1
    assert run(["replay", tmp_path / "none.json"], capsys)[0] == 2


def test_usage_error(capsys):
    assert run([], capsys)[0] == 2
    assert run(["no-such-command"], capsys)[0] == 2


def test_entry_point_subprocess():
    res = subprocess.run([sys.executable, "-m", "phcdiode.cli", "find-resonance", "--vcav", "2.2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "1.630 V" in res.stdout
