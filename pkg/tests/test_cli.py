import json
import time

import numpy as np
import pytest

from rfsps import analytic, cli


def _csv(path):
    lines = [ln for ln in open(path) if not ln.startswith("#")]
    return np.genfromtxt(lines, delimiter=",", names=True)


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def test_sweep_filtered(tmp_path):
    assert run(tmp_path, "sweep", "gN_filtered", "--axis", "Gamma=1,1/3") == 0
    d = _csv(tmp_path / "sweep_gN_filtered.csv")
    assert d["g2"] == pytest.approx([0.25, 0.5625], abs=1e-12)
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["outputs"] == ["sweep_gN_filtered.csv"] and m["argv"][0] == "sweep"


def test_sweep_compensation(tmp_path):
    assert run(tmp_path, "sweep", "compensation", "--axis", "Gamma=0.2") == 0
    d = _csv(tmp_path / "sweep_compensation.csv")
    assert (float(d["f_minus"]), float(d["f_plus"])) == pytest.approx((1.18350, 2.81650), abs=5e-6)


@pytest.mark.parametrize("quantity, axis", [
    ("gN_homodyne", "f_prime=0:1.5:4"), ("rates", "omega_sigma=1e-3:1e-2:3:log"),
    ("spectrum", "omega=-5:5:201"), ("g2tau", "tau=0:10:11")])
def test_other_sweeps(tmp_path, quantity, axis):
    assert run(tmp_path, "sweep", quantity, "--axis", axis) == 0
    assert (tmp_path / f"sweep_{quantity}.csv").exists()


@pytest.mark.parametrize("axis", ["Gamma=", "Gamma", "Gamma=1:2", "Gamma=a,b"])
def test_malformed_axis(tmp_path, axis, capsys):
    assert run(tmp_path, "sweep", "gN_filtered", "--axis", axis) == 2
    err = capsys.readouterr().err
    assert "empty grid" in err or "malformed" in err


def test_usage_errors(tmp_path):
    assert run(tmp_path, "figure", "9") == 2
    assert cli.main(["bogus"]) == 2
    assert run(tmp_path, "sweep", "gN_filtered", "--axis", "tau=1,2") == 2


def test_figure_2b_components_sum(tmp_path):
    assert run(tmp_path, "figure", "2b") == 0
    d = _csv(tmp_path / "fig2b.csv")
    total = d["base"] + d["I0"] + d["I1"] + d["I2"]
    assert np.max(np.abs(total - d["g2"])) < 1e-12


def test_figure_2a(tmp_path):
    assert run(tmp_path, "figure", "2a") == 0
    d = _csv(tmp_path / "fig2a.csv")
    assert np.all(d["g2"] == 0)
    assert (d["I0"][0], d["I2"][0]) == pytest.approx((1, -2), abs=1e-3)


def test_figure_3c(tmp_path):
    assert run(tmp_path, "figure", "3c") == 0
    d = _csv(tmp_path / "fig3c.csv")
    assert d["g2_plain"][0] == pytest.approx(0.69, abs=5e-3)
    assert d["g2_compensated"][0] <= 1e-3


def test_figure_3a_quick(tmp_path):
    assert run(tmp_path, "figure", "3a", "--quick") == 0
    d = _csv(tmp_path / "fig3a.csv")
    assert len(d) == 15 * 100


def test_figure_4(tmp_path):
    assert run(tmp_path, "figure", "4") == 0
    d = _csv(tmp_path / "fig4.csv")
    assert np.max(d["g2_compensated"]) < 1e-12
    assert np.all(np.diff(d["rate_compensated"]) > 0)


def test_spectrum_and_config(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("omega_sigma = 0.5\n")
    assert run(tmp_path, "spectrum", "--config", str(cfg)) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["config"]["params"]["omega_sigma"] == 0.5
    assert run(tmp_path, "spectrum", "--config", str(cfg), "--omega-sigma", "0.1") == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["config"]["params"]["omega_sigma"] == 0.1


def test_trajectories_and_replay(tmp_path):
    args = ["trajectories", "--omega-sigma", "0.05", "--clicks", "500", "--batches", "2", "--seed", "9"]
    with pytest.warns(UserWarning):
        assert run(tmp_path / "a", *args) == 0
    first = (tmp_path / "a" / "clicks.csv").read_bytes()
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["seeds"] == [9, 10] and len(m["durations"]) == 2
    (tmp_path / "a" / "clicks.csv").unlink()
    with pytest.warns(UserWarning):
        assert cli.main(["replay", str(tmp_path / "a" / "manifest.json")]) == 0
    assert (tmp_path / "a" / "clicks.csv").read_bytes() == first


def test_verify_quick(tmp_path, capsys):
    t0 = time.perf_counter()
    assert run(tmp_path, "verify", "--quick") == 0
    assert time.perf_counter() - t0 < 10
    out = capsys.readouterr().out
    assert out.count("PASS") == 10 and "A11" not in out


def test_verify_detects_injected_fault(tmp_path, monkeypatch, capsys):
    real = analytic.g2_homodyne

    def flipped(gamma_sigma, Gamma, f_prime):  # sign of the numerator's laser term flipped
        s = gamma_sigma + Gamma
        num = 4 * gamma_sigma + (4 - f_prime) * f_prime * s
        return (num / ((2 - f_prime) ** 2 * s)) ** 2

    monkeypatch.setattr(analytic, "g2_homodyne", flipped)
    assert run(tmp_path, "verify", "--quick", "--only", "A2") == 1
    assert "A2 FAIL" in capsys.readouterr().out
    assert real(1.0, 0.2, 0.0) == pytest.approx(25 / 36)


def test_verify_rejects_unknown_criterion(tmp_path):
    assert run(tmp_path, "verify", "--only", "A1,A99") == 2
