import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dressedlaser.cli import format_csv, main, match_peaks, parse_config, read_spectrum
from dressedlaser.engine import NumericalError
from dressedlaser.params import ConfigError


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def small(preset="fig-low-pump", points=201, **numerics):
    return {"model": {"preset": preset}, "numerics": {"grid": {"nu_min": -15.0, "nu_max": 15.0, "points": points}, **numerics}}


def test_run_preset_writes_contract_files(tmp_path):
    cfg = write(tmp_path, {"model": {"preset": "fig-low-pump"}})
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert names == {"cavity.csv", "fluor_lower.csv", "stats.json", "ladder.json", "manifest.json"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["preset"] == "fig-low-pump"
    assert "cos^2(phi)" in manifest["interpretation"]
    assert manifest["n_max"] >= 1 and manifest["tail_mass"] < 1e-12
    assert set(manifest["timings"]) >= {"steady_state", "spectra", "total"}
    for name in ("stats.json", "ladder.json"):
        doc = json.loads((out / name).read_text())
        assert doc["manifest"] == "manifest.json" and doc["config_hash"] == manifest["config_hash"]


def test_csv_format(tmp_path):
    cfg = write(tmp_path, small(points=101))
    out = tmp_path / "out"
    main(["run", cfg, "--out", str(out)])
    raw = (out / "cavity.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "nu,value"
    assert len(lines) == 102
    for line in lines[1:]:
        x, y = line.split(",")
        assert len(y.lstrip("-").replace(".", "").split("e")[0].lstrip("0")) <= 12
        assert math.isfinite(float(x)) and math.isfinite(float(y))


def test_csv_refuses_non_finite():
    with pytest.raises(NumericalError):
        format_csv(np.array([0.0, 1.0]), np.array([1.0, np.nan]))
    assert format_csv(np.array([0.1]), np.array([1 / 3])) == "nu,value\n0.1,0.333333333333\n"


def test_runs_are_byte_identical(tmp_path, monkeypatch):
    cfg = write(tmp_path, small(points=151))
    main(["run", cfg, "--out", str(tmp_path / "a")])
    monkeypatch.setenv("DRESSEDLASER_THREADS", "3")
    main(["run", cfg, "--out", str(tmp_path / "b")])
    for name in ("cavity.csv", "fluor_lower.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bad_thread_setting(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DRESSEDLASER_THREADS", "many")
    assert main(["run", write(tmp_path, small()), "--out", str(tmp_path / "o")]) == 2
    assert "DRESSEDLASER_THREADS" in capsys.readouterr().err


def test_oracle_flag(tmp_path):
    doc = {"model": {"gamma": 1.0, "kappa": 0.05, "g": 5.0, "phi": math.acos(math.sqrt(0.6))},
           "numerics": {"n_max": 6, "grid": {"nu_min": -15.0, "nu_max": 15.0, "points": 41}}}
    out = tmp_path / "o"
    assert main(["run", write(tmp_path, doc), "--out", str(out), "--oracle"]) == 0
    for kind in ("cavity", "fluor_lower", "fluor_central", "fluor_upper"):
        assert read_spectrum(str(out / f"oracle_{kind}.csv")).nu.size == 41
    report = json.loads((out / "oracle_report.json").read_text())
    assert report["cavity"]["max_relative_deviation"] < 1e-8
    assert report["fluor_lower"]["max_relative_deviation"] < 1e-8
    assert "oracle_report.json" in json.loads((out / "manifest.json").read_text())["files"]


def test_oracle_refuses_large_cutoff(tmp_path, capsys):
    doc = small(preset="fig-high-pump", points=21)
    assert main(["run", write(tmp_path, doc), "--out", str(tmp_path / "o"), "--oracle"]) == 3
    assert "n_max" in capsys.readouterr().err


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"model": {"kappa": -1}}, "kappa"),
        ({"model": {"kapa": 1.0}}, "model.kapa"),
        ({"extra": {}}, "extra"),
        ({"model": {"preset": "fig-nothing"}}, "model.preset"),
        ({"model": {"g": "five"}}, "model.g"),
        ({"model": {"band_flags": {"u_minus": 1}}}, "model.band_flags.u_minus"),
        ({"numerics": {"n_max": 2.5}}, "numerics.n_max"),
        ({"numerics": {"grid": {"nu_min": 1.0, "nu_max": 0.0}}}, "numerics.grid"),
        ({"numerics": {"method": "lu"}}, "numerics.method"),
        ({"model": {"phi": 2.0}}, "model.phi"),
    ],
)
def test_config_errors_exit_2_and_name_the_field(tmp_path, capsys, doc, field):
    assert main(["run", write(tmp_path, doc)]) == 2
    assert field in capsys.readouterr().err


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "x.json"
    path.write_text("{model: ")
    assert main(["run", str(path)]) == 2
    assert "invalid JSON" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    doc = {"model": {"preset": "fig-high-pump", "kappa": 0.0, "band_flags": {"u_minus": False}}}
    assert main(["run", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 3
    assert "numerical error" in capsys.readouterr().err


def test_preset_overrides_and_resolution():
    rc = parse_config({"model": {"preset": "fig-moderate-pump-bandgap", "kappa": 0.1}})
    assert rc.model.kappa == 0.1
    assert rc.model.band_flags.u_minus is False
    assert math.cos(rc.model.phi_override) ** 2 == pytest.approx(0.1)
    assert rc.raw["numerics"]["grid"] == {"nu_min": -15.0, "nu_max": 15.0, "points": 2001}
    with pytest.raises(ConfigError):
        parse_config({"model": {"gamma_plus_scale": -1.0}})


def test_sweep_over_pump_presets(tmp_path):
    cfg = write(tmp_path, {"model": {"preset": "fig-low-pump"}})
    out = tmp_path / "sw"
    values = "fig-low-pump,fig-moderate-pump,fig-strong-pump,fig-high-pump"
    assert main(["sweep", cfg, "--axis", "phi", "--values", values, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    counts = [e["peak_count"] for e in summary["entries"]]
    assert counts[0] == 2 and counts[1] > 2 and counts[2] > 2 and counts[3] == 1
    assert summary["partial_failure"] is False
    high = summary["entries"][3]
    assert abs(high["dominant_nu"]) < 0.02 and high["dominant_fwhm"] < 0.05
    assert (out / "phi=fig-high-pump" / "manifest.json").exists()


def test_sweep_band_gap_is_multipeaked_at_lowest_pump(tmp_path):
    cfg = write(tmp_path, {"model": {"preset": "fig-low-pump-bandgap"}})
    out = tmp_path / "sw"
    assert main(["sweep", cfg, "--axis", "phi", "--values", "fig-low-pump-bandgap", "--out", str(out)]) == 0
    entry = json.loads((out / "summary.json").read_text())["entries"][0]
    assert entry["peak_count"] > 2


def test_sweep_records_failures(tmp_path):
    cfg = write(tmp_path, small(points=51))
    out = tmp_path / "sw"
    assert main(["sweep", cfg, "--axis", "kappa", "--values", "0.05,-1", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["partial_failure"] is True
    assert "kappa" in summary["entries"][1]["error"]
    assert main(["sweep", cfg, "--axis", "kappa", "--values=-1,-2", "--out", str(out)]) == 3


def test_sweep_detuning_and_pump_scale(tmp_path):
    cfg = write(tmp_path, small(points=51))
    out = tmp_path / "sw"
    assert main(["sweep", cfg, "--axis", "delta_a", "--values=-5,5", "--out", str(out)]) == 0
    entries = json.loads((out / "summary.json").read_text())["entries"]
    assert all(e["ok"] for e in entries)
    manifest = json.loads((out / "delta_a=5" / "manifest.json").read_text())
    assert manifest["config"]["model"]["phi"] is None
    assert manifest["frame"]["big_omega"] == pytest.approx(0.5 * math.hypot(40.0, 5.0))
    assert main(["sweep", cfg, "--axis", "gamma_plus_scale", "--values", "0,2", "--out", str(out)]) == 0
    entries = json.loads((out / "summary.json").read_text())["entries"]
    assert abs(entries[0]["mean_n"]) < 1e-14


@pytest.mark.parametrize("args", [["--axis", "kappa", "--values", ""], ["--axis", "kappa", "--values", " , "],
                                  ["--axis", "omega0", "--values", "1"], ["--axis", "g", "--values", "inf"]])
def test_sweep_argument_errors(tmp_path, args):
    assert main(["sweep", write(tmp_path, small()), *args, "--out", str(tmp_path / "x")]) == 2


def _run(tmp_path, preset, name):
    out = tmp_path / name
    main(["run", write(tmp_path, {"model": {"preset": preset}}, f"{name}.json"), "--out", str(out)])
    return out


def test_peaks_low_pump_doublet(tmp_path, capsys):
    out = _run(tmp_path, "fig-low-pump", "low")
    capsys.readouterr()
    assert main(["peaks", str(out / "cavity.csv"), str(out / "ladder.json"), "--tol", "1.5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert len(report["matched"]) == 2 and not report["unmatched"]
    for row in report["matched"]:
        assert row["label"] == "vacuum Rabi doublet"
        # line overlap pulls the maxima slightly inwards of +-g1
        assert 0.5 < row["offset_steps"] < 1.5


def test_peaks_band_gap_moderate_pump(tmp_path, capsys):
    out = _run(tmp_path, "fig-moderate-pump-bandgap", "bg")
    capsys.readouterr()
    assert main(["peaks", str(out / "cavity.csv"), str(out / "ladder.json")]) == 0
    report = json.loads(capsys.readouterr().out)
    inner = [r for r in report["matched"] if r["kind"] == "inner"]
    assert len(inner) >= 4 and not report["unmatched"]
    assert all(r["offset_steps"] < 1.0 for r in report["matched"])


def test_peaks_lasing_line(tmp_path, capsys):
    out = _run(tmp_path, "fig-high-pump", "hi")
    capsys.readouterr()
    assert main(["peaks", str(out / "cavity.csv"), str(out / "ladder.json"), "--out", str(tmp_path / "r.json")]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert [r["label"] for r in report["matched"]] == ["lasing line"]


def test_peaks_rejects_mixed_runs(tmp_path, capsys):
    a = _run(tmp_path, "fig-low-pump", "a")
    b = _run(tmp_path, "fig-high-pump", "b")
    assert main(["peaks", str(a / "cavity.csv"), str(b / "ladder.json")]) == 2
    assert "different runs" in capsys.readouterr().err


def test_match_peaks_reports_unmatched():
    nu = np.linspace(-3, 3, 601)
    values = 1.0 / (1.0 + ((nu - 1.7) / 0.05) ** 2)
    from dressedlaser.spectra import Spectrum

    ladder = {"peaks": [{"nu": 1.0, "kind": "inner", "n": 0}, {"nu": -1.0, "kind": "inner", "n": 0}]}
    report = match_peaks(Spectrum(nu, values, "cavity"), ladder)
    assert not report["matched"] and report["unmatched"][0]["offset_steps"] == pytest.approx(70.0, abs=0.5)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "dressedlaser", "presets"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "fig-low-pump" in res.stdout.split()
