import csv
import json
from importlib.resources import files

import numpy as np
import pytest

from unitary_networks import cli
from unitary_networks import config as cfg

CONFIGS = files("unitary_networks") / "configs"
GRID_STEP_512 = 2 * np.pi / 512


def config_path(name):
    return str(CONFIGS / f"{name}.json")


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(tmp_path, *argv, out="out"):
    target = tmp_path / out
    code = cli.main([*argv, "--out", str(target)])
    summary = target / "summary.json"
    return code, (json.loads(summary.read_text()) if summary.exists() else None), target


def bad_bb(r3):
    L = 8
    r = [0.6] * L
    r[3] = r3
    return {"schema_version": 1, "model": {"kind": "bb", "L": L, "r": r, "t": [0.8] * L,
                                           "theta": 0.0, "nu": 0.0, "gamma": 0.0}}


def test_every_bundled_config_validates():
    names = sorted(p.name for p in CONFIGS.iterdir() if p.name.endswith(".json"))
    assert len(names) >= 11
    for name in names:
        doc = cfg.load(str(CONFIGS / name))
        assert doc["description"].startswith(("criterion ", "criteria "))


def test_verify_cc_qw(tmp_path):
    code, summary, out = run(tmp_path, "verify", "--relation", "cc-qw", "--config", config_path("ac03_cc_pi4"))
    assert code == 0
    assert summary["pass"]
    for rep in summary["results"]["instances"]:
        assert set(rep) >= {"relation", "dimension", "residual", "norm_kind", "pass"}
        assert rep["residual"] < 1e-13
    assert (out / "config.json").exists()
    assert (out / "verify.csv").exists()


def test_bands_hadamard(tmp_path):
    code, summary, out = run(tmp_path, "bands", "--config", config_path("ac02_hadamard_bands"))
    assert code == 0
    tau = np.sort(summary["results"]["tau_M"])
    np.testing.assert_allclose(tau, np.pi / 4 * np.array([1, 3, 5, 7]), atol=GRID_STEP_512)
    assert summary["results"]["delta"]["pass"]
    assert summary["results"]["delta"]["c_delta"] > 0
    with open(out / "bands.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "phase0", "phase1", "grad0", "grad1"]
    assert len(rows) == 513


def test_summary_embeds_hash_and_tolerances(tmp_path):
    code, summary, out = run(tmp_path, "tau", "--config", config_path("ac02_hadamard_bands"))
    assert code == 0
    doc = json.loads((out / "config.json").read_text())
    assert summary["config_hash"] == cfg.config_hash(doc)
    assert summary["tolerances"] == cfg.DEFAULT_TOLERANCES
    assert summary["command"] == "tau"


def test_runs_are_byte_identical(tmp_path):
    args = ("verify", "--config", config_path("ac05_qw_bb"))
    run(tmp_path, *args, out="a")
    run(tmp_path, *args, out="b")
    for name in ("summary.json", "verify.csv", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_malformed_bb_names_k(tmp_path, capsys):
    path = write_config(tmp_path, bad_bb(np.sqrt(1.2 - 0.8**2)))  # r^2 + t^2 = 1.2 at k = 3
    code, summary, _ = run(tmp_path, "build", "--config", path)
    assert code == 2
    assert summary is None
    err = capsys.readouterr().err
    assert "model.r[3]" in err
    assert "k = 3" in err


def test_schema_errors(tmp_path, capsys):
    doc = json.loads((CONFIGS / "ac02_hadamard_bands.json").read_text())
    cases = [
        ({**doc, "schema_version": 99}, "schema_version"),
        ({**doc, "extra": 1}, "extra"),
        ({**doc, "model": {**doc["model"], "L": 12.5}}, "model.L"),
        ({**doc, "model": {**doc["model"], "coin": "nonsense"}}, "model.coin"),
    ]
    for i, (bad, field) in enumerate(cases):
        code, _, _ = run(tmp_path, "bands", "--config", write_config(tmp_path, bad, f"bad{i}.json"), out=f"o{i}")
        assert code == 2
        assert field in capsys.readouterr().err


def test_bad_tolerance_override(tmp_path):
    code, _, _ = run(tmp_path, "bands", "--config", config_path("ac02_hadamard_bands"), "--tolerance", "gap=abc")
    assert code == 2
    code, _, _ = run(tmp_path, "bands", "--config", config_path("ac02_hadamard_bands"), "--tolerance", "nosuch=1")
    assert code == 2


def test_overrides_reach_the_run(tmp_path):
    code, summary, out = run(tmp_path, "bands", "--config", config_path("ac02_hadamard_bands"), "--grid", "256",
                             "--tolerance", "gap=1e-7")
    assert code == 0
    assert summary["results"]["N"] == 256
    assert summary["tolerances"]["gap"] == 1e-7
    assert json.loads((out / "config.json").read_text())["bands"]["N"] == 256


def test_wrap_violation_is_numerical_failure(tmp_path, capsys):
    doc = json.loads((CONFIGS / "ac10_hadamard_spreading.json").read_text())
    path = write_config(tmp_path, doc)
    code, summary, _ = run(tmp_path, "evolve", "--config", path, "--truncation", "64")
    assert code == 3
    assert "numerical failure [evolve/dynamics]" in capsys.readouterr().err
    assert summary["pass"] is False
    assert "WrapError" in summary["results"]["error"]


def test_evolve_and_spectrum_outputs(tmp_path):
    path = config_path("ac10_hadamard_spreading")
    code, summary, out = run(tmp_path, "evolve", "--config", path, out="ev")
    assert code == 0
    assert 1.95 <= summary["results"]["spreading_exponent"] <= 2.0
    with open(out / "trajectory.csv") as fh:
        assert next(csv.reader(fh))[:2] == ["t", "mean_x1"]
    code, summary, out = run(tmp_path, "spectrum", "--config", path, out="sp")
    assert code == 0
    assert summary["results"]["mass"] == pytest.approx(1.0)
    assert (out / "spectrum.csv").exists()


def test_build_reports_fourier_deviation(tmp_path):
    code, summary, out = run(tmp_path, "build", "--config", config_path("ac01_fourier_hadamard"),
                             "--truncation", "64")
    assert code == 0
    assert summary["results"]["fourier_deviation"] < 1e-10
    assert (out / "operator.csv").exists()


def test_cmv_verify(tmp_path):
    code, summary, _ = run(tmp_path, "verify", "--config", config_path("ac11_cmv_roundtrip"))
    assert code == 0
    assert summary["pass"]


def test_stability_small(tmp_path):
    doc = json.loads((CONFIGS / "ac09_stability_defect.json").read_text())
    doc["stability"] = {**doc["stability"], "L": [64, 128]}
    code, summary, out = run(tmp_path, "stability", "--config", write_config(tmp_path, doc))
    assert code == 0
    assert summary["results"]["stable"]
    assert (out / "counts.csv").exists()


def test_mourre_exclude_cut(tmp_path):
    doc = json.loads((CONFIGS / "ac08_mourre_hadamard.json").read_text())
    doc["mourre"] = {**doc["mourre"], "L": [128, 256], "exclude": "cut"}
    code, summary, out = run(tmp_path, "mourre", "--config", write_config(tmp_path, doc))
    assert code == 0
    for rep in summary["results"]["sizes"]:
        assert set(rep) >= {"c_delta", "lambda_min", "margin", "pass"}
        assert rep["excluded"] == 2
    assert (out / "commutator_spectrum.csv").exists()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(["--version"])
    assert err.value.code == 0
    assert "0.1.0" in capsys.readouterr().out
