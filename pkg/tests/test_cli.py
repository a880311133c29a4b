import json
import subprocess
import sys

import numpy as np
import pytest

from thermal_spectra.basis import BasisSet
from thermal_spectra.cli import ConfigError, compare, main, parse_config
from thermal_spectra.oracle import SpectrumResult, reference_spectrum
from thermal_spectra.hamiltonian import Potential
from thermal_spectra.outputs import read_csv

SMALL_QVI = ["--set", "trainer.max_steps=200", "--set", "trainer.n_states=3",
             "--set", 'basis={"family": "hermite", "size": 6}', "--set", "grid.n=101"]


def test_qvi_defaults():
    cfg = parse_config("qvi")
    assert cfg.basis == {"family": "fourier", "size": 40, "half_width": 10.0}
    assert cfg.trainer["c_perp"] == 1e3 and cfg.trainer["learning_rate"] == 1e-3
    assert cfg.make_qvi().basis == BasisSet("fourier", 40, 10.0)


def test_qml_defaults():
    cfg = parse_config("qml")
    q = cfg.make_qml()
    assert q.batch_size == 500 and q.c_perp == 1e2 and q.p_perp == 1e-6
    assert q.learning_rate == 1e-3 and q.flow_learning_rate == 1e-5
    s = cfg.make_sampler_settings()
    assert (s.n_walkers, s.burn_in, s.thin) == (1000, 500, 20)
    assert parse_config("sample").make_sampler_settings().thin == 1


def test_unknown_key_exit_code(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"command": "qvi", "trainer": {"learning_rte": 0.1}}))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "learning_rte" in capsys.readouterr().err
    assert main(["qvi", "--set", "trainer.learning_rte=0.1"]) == 2
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config("lattice", overrides=["sampler.walkers=4"])


def test_invalid_values_are_config_errors():
    with pytest.raises(ConfigError):
        parse_config("qvi", overrides=["trainer.temperature=-1"])
    with pytest.raises(ConfigError):
        parse_config("compare")
    with pytest.raises(ConfigError, match="not found"):
        parse_config(path="/nonexistent/cfg.json")


def test_entry_point_exit_codes(tmp_path):
    run = [sys.executable, "-m", "thermal_spectra.cli"]
    bad = subprocess.run(run + ["qml", "--set", "trainer.batch=5"], capture_output=True, text=True)
    assert bad.returncode == 2 and "trainer.batch" in bad.stderr


def test_oracle_outputs(tmp_path):
    out = tmp_path / "oracle"
    assert main(["oracle", "--out", str(out), "--set", "grid.n=201"]) == 0
    spec = json.loads((out / "spectrum.json").read_text())
    ev = np.array(spec["eigenvalues"])
    assert len(ev) == 10 and np.all(np.diff(ev) > 0)
    ref = json.loads((out / "reference.json").read_text())
    assert ref["big_m"] == 120 and ref["config_hash"] == spec["config_hash"]
    header, data = read_csv(out / "wavefunctions.csv")
    assert header[0] == "x" and data.shape == (201, 11)
    # every output file carries the config hash
    for p in out.iterdir():
        assert spec["config_hash"] in p.read_text()


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["qvi", "--seed", "3", "--out", str(a)] + SMALL_QVI) == 0
    assert main(["qvi", "--seed", "3", "--out", str(b)] + SMALL_QVI) == 0
    for name in ("wavefunctions.csv", "coefficients.csv", "training_log.csv", "spectrum.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c = tmp_path / "c"
    main(["qvi", "--seed", "4", "--out", str(c)] + SMALL_QVI)
    assert (a / "coefficients.csv").read_bytes() != (c / "coefficients.csv").read_bytes()


def test_sample_bank_feeds_qml(tmp_path):
    s = tmp_path / "s"
    assert main(["sample", "--out", str(s), "--set", "sampler.n_samples=1000", "--set", "sampler.burn_in=50",
                 "--set", "sampler.n_slices=8"]) == 0
    meta = json.loads((s / "sample.json").read_text())
    assert meta["kind"] == "endpoints" and meta["shape"][1] == 2
    q = tmp_path / "q"
    assert main(["qml", "--out", str(q), "--set", f"sampler.bank=\"{s / 'endpoints.bin'}\"",
                 "--set", "trainer.max_steps=20", "--set", "trainer.n_states=2", "--set", "trainer.basis_size=4",
                 "--set", "grid.n=51"]) == 0
    assert json.loads((q / "spectrum.json").read_text())["method"] == "qml"


def test_failure_marks_partial(tmp_path):
    out = tmp_path / "fail"
    code = main(["compare", "--out", str(out), "--set", 'compare.a="missing_a.json"',
                 "--set", 'compare.b="missing_b.json"'])
    assert code == 1
    assert (out / "config.json.partial").exists()
    assert not (out / "config.json").exists()


def test_compare_examples():
    ref = reference_spectrum(Potential("harmonic"), big_m=40)
    same = compare(ref, ref)
    assert max(same["frac_gap_diff"]) == 0.0 and max(same["l2"]) == 0.0
    flipped = SpectrumResult(ref.eigenvalues, -ref.eigenvectors, ref.basis)
    report = compare(ref, flipped)
    assert max(report["l2"]) < 1e-20 and set(report["sign"]) == {-1.0}
    shifted = SpectrumResult(ref.eigenvalues + 2.0, ref.eigenvectors, ref.basis)
    assert max(compare(ref, shifted)["frac_gap_diff"]) < 1e-12


def test_compare_command(tmp_path):
    a = tmp_path / "a"
    main(["qvi", "--out", str(a)] + SMALL_QVI)
    out = tmp_path / "cmp"
    spec = a / "spectrum.json"
    assert main(["compare", "--out", str(out), "--set", f'compare.a="{spec}"', "--set", f'compare.b="{spec}"']) == 0
    header, data = read_csv(out / "compare.csv")
    assert header == ["n", "gap_a", "gap_b", "frac_gap_diff", "l2"]
    np.testing.assert_array_equal(data[:, 4], 0.0)
