import json

import pytest

from gsflow import cli


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_ground_state_outputs(tmp_path):
    out = tmp_path / "gs"
    assert cli.main(["ground-state", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["center_value"] == pytest.approx(4.191682954446769, rel=1e-12)
    assert rep["decay_band"]["band_max"] / rep["decay_band"]["band_min"] <= 1.5
    first = (out / "profile.csv").read_text().splitlines()
    assert any(line == f"# config_hash={rep['config_hash']}" for line in first[:20])


def test_one_dimensional_ground_state_records_closed_form_error(tmp_path):
    cfg = write(tmp_path, "c.ini", "[model]\na0 = 1\nterms = 1:3\ndimension = 1\n")
    assert cli.main(["ground-state", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["sup_error_vs_closed_form"] <= 1e-6


def test_outputs_are_deterministic(tmp_path):
    for k in (1, 2):
        assert cli.main(["fit", "--out", str(tmp_path / f"r{k}"), "--seed", "7"]) == 0
    a = (tmp_path / "r1" / "fit.json").read_bytes()
    assert a == (tmp_path / "r2" / "fit.json").read_bytes()
    assert cli.main(["fit", "--out", str(tmp_path / "r3"), "--seed", "8"]) == 0
    other = json.loads((tmp_path / "r3" / "fit.json").read_text())
    assert other["config_hash"] != json.loads(a)["config_hash"]


def test_fit_recovers_weights(tmp_path):
    assert cli.main(["fit", "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert sorted(fit["weights"]) == pytest.approx([0.8, 1.2], abs=1e-8)


def test_flow_writes_log_and_fits(tmp_path):
    assert cli.main(["flow", "--out", str(tmp_path)]) == 0
    log = (tmp_path / "log.csv").read_text().splitlines()
    assert log[0].startswith("# config_hash=") and log[1].startswith("t,J,dissipation")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["spectral_guard"]["nondegenerate"]
    fits = json.loads((tmp_path / "fits.json").read_text())["fits"]
    assert len(fits) >= 2


def test_separate_and_spectrum(tmp_path):
    assert cli.main(["separate", "--out", str(tmp_path / "s")]) == 0
    cert = json.loads((tmp_path / "s" / "certificate.json").read_text())
    assert cert["verified"] and cert["y_index"] != 4
    assert cli.main(["spectrum", "--out", str(tmp_path / "q")]) == 0
    spec = json.loads((tmp_path / "q" / "spectrum.json").read_text())
    assert spec["n_negative"] == 1 and spec["coercivity_constant"] > 0


def test_verify_subset_passes(tmp_path, capsys):
    cfg = write(tmp_path, "v.ini", "[verify]\ncriteria = 2 10\n")
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    assert "2/2 criteria passed" in capsys.readouterr().out


def test_verify_names_failing_criterion(tmp_path):
    cfg = write(tmp_path, "v.ini", "[verify]\ncriteria = 3\n")
    assert cli.main(["verify", "--config", cfg, "--out", str(tmp_path / "v")]) == 1
    res = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert res["failed"] == ["dissipation identity"]


@pytest.mark.parametrize("cmd, text", [
    ("verify", "[verify]\ncriteria =\n"),
    ("verify", "[verify]\ncriteria = 42\n"),
    ("ground-state", "[model]\na0 = 1\nterms = 0:2\ndimension = 3\n"),
    ("ground-state", "[model]\na0 = 1\nterms = 1:2\n"),
    ("spectrum", "[model]\nterms = 1:2\ndimension = 3\n[grid]\nR = 20\nh = -1\n"),
    ("fit", "not an ini file"),
])
def test_config_errors_exit_with_two(tmp_path, cmd, text):
    cfg = write(tmp_path, "bad.ini", text)
    assert cli.main([cmd, "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_usage_errors_exit_with_two():
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit", "--seed", "-1"])
    assert exc.value.code == 2


def test_every_subcommand_ships_a_config():
    for name in cli.SUBCOMMANDS:
        assert cli.default_config_text(name).strip()
