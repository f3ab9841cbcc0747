import csv
import json

import numpy as np
import pytest

from semiprop import GridSpec, gaussian_packet, write_wavefunction
from semiprop.cli import main
from semiprop.experiments import (ConfigError, ExperimentConfig, fit_rate, flow_check, parse_config,
                                  run_sweep, statphase_check)

FREE_INI = """
[model]
name = free
[sweep]
hbar = 0.2 0.1
t = 1.0
points = 0.3:0.2, -0.5:0.1
methods = vanvleck closed_form
max_error = 1e-8
"""


def _cfg(text, seed=0):
    return ExperimentConfig.from_sections(parse_config(text), seed=seed)


def test_unknown_key_and_section_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[sweep]\nhbarr = 0.1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[swep]\nhbar = 0.1\n")


def test_malformed_value_rejected():
    with pytest.raises(ConfigError):
        parse_config("[sweep]\npoints = 0.3\n")
    with pytest.raises(ConfigError):
        parse_config("[sweep]\norder = two\n")


@pytest.mark.parametrize("body", [
    "hbar = 0.1 0.2\nt = 1",           # not decreasing
    "hbar = 1.5\nt = 1",               # outside (0, 1]
    "hbar = 0.1\nt = 1\nmethods = wkb",
    "hbar = 0.1\nehrenfest_c = -1",
    "hbar = 0.1\nt = 1\nehrenfest_c = 0.5",
    "hbar = 0.1",                      # no time given
])
def test_invalid_sweep_configs(body):
    with pytest.raises(ConfigError):
        _cfg("[sweep]\n" + body + "\n")


def test_defaults_fill_missing_keys():
    sec = parse_config("")
    assert sec["reference"]["steps"] == 4000
    assert sec["sweep"]["methods"] == ["vanvleck", "closed_form"]


def test_fit_rate_recovers_slope():
    h = np.array([0.2, 0.1, 0.05, 0.025])
    noise = np.array([1.02, 0.97, 1.01, 0.99])
    fit = fit_rate(h, 3 * h ** 1.5 * noise, 1e-14)
    assert fit.status == "fit" and fit.n_used == 4
    assert fit.order == pytest.approx(1.5, abs=0.05)
    assert fit.ci_low <= 1.5 <= fit.ci_high


def test_fit_rate_exact_and_insufficient():
    h = [0.2, 0.1, 0.05]
    assert fit_rate(h, [1e-15, 2e-15, 1e-15], 1e-14).status == "exact"
    assert fit_rate(h, [1e-3, 1e-15, 1e-15], 1e-14).status == "insufficient"


def test_free_sweep_is_exact():
    rows, summary = run_sweep(_cfg(FREE_INI))
    assert summary["pass"] and summary["failed_cells"] == 0
    vv = [r for r in rows if r["method"] == "vanvleck"]
    assert len(vv) == 4
    assert max(r["rel_error"] for r in vv) < 1e-10
    assert summary["fits"][0]["rate"] == "exact"


def test_inverted_oscillator_ehrenfest_sweep():
    cfg = _cfg("""
[model]
name = inverted_harmonic
[sweep]
hbar = 0.1 0.05 0.025
ehrenfest_c = 0.25
points = 0.3:0.2
methods = vanvleck closed_form
max_error = 1e-8
""")
    assert cfg.time_list(0.05)[0] == pytest.approx(0.25 * np.log(20))
    rows, summary = run_sweep(cfg)
    assert summary["pass"]
    for r in rows:
        if r["method"] == "vanvleck":
            assert r["rel_error"] < 1e-8
            assert r["ehrenfest_margin"] is not None


def test_quartic_sweep_against_split_step():
    cfg = _cfg("""
[model]
name = quartic
params = 0.1
[sweep]
hbar = 0.1 0.05
t = 2
points = 0.0:0.2
methods = vanvleck split_step
""")
    rows, summary = run_sweep(cfg)
    vv = [r for r in rows if r["method"] == "vanvleck"]
    assert all(r["status"] == "ok" and r["reference"] == "split_step" for r in vv)
    assert vv[1]["rel_error"] < vv[0]["rel_error"] < 0.1
    assert vv[0]["n_branches"] >= 1


def test_cell_errors_are_recorded_not_raised():
    # closed form does not exist for the quartic model
    rows, summary = run_sweep(_cfg("""
[model]
name = quartic
params = 0.1
[sweep]
hbar = 0.1
t = 1
methods = vanvleck closed_form
"""))
    cf = [r for r in rows if r["method"] == "closed_form"][0]
    assert "no closed form" in cf["status"]
    assert summary["failed_cells"] == 1


def test_threads_do_not_change_results():
    cfg = _cfg(FREE_INI)
    a, _ = run_sweep(cfg, threads=1)
    b, _ = run_sweep(cfg, threads=2)
    assert a == b


def test_statphase_rejects_inadmissible_parameters():
    with pytest.raises(ValueError):
        statphase_check(0.2, 0.0, 0.0, ks=(1,), hbars=[0.1, 0.05])


def test_flow_check_passes():
    rows, summary = flow_check(n_traj=8, seed=1)
    assert summary["pass"]
    assert len(rows) == 8
    assert {r["model"] for r in rows} == {"free", "harmonic", "inverted_harmonic", "quartic"}


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_cli_sweep_outputs_and_rerun(tmp_path):
    cfg = _write(tmp_path, "free.ini", FREE_INI)
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["sweep", "--config", str(cfg), "--out", str(out), "--seed", "7"]) == 0
        outs.append(out)
    for name in ("sweep.csv", "sweep.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    with open(outs[0] / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 2 * 2
    summary = json.loads((outs[0] / "sweep.json").read_text())
    assert summary["seed"] == 7 and summary["pass"]
    assert "command sweep" in (outs[0] / "run.log").read_text()


def test_cli_vanvleck_and_hk_kernel(tmp_path):
    cfg = _write(tmp_path, "h.ini", """
[model]
name = harmonic
[sweep]
hbar = 0.2 0.1
t = 1.0
points = 0.3:0.2
methods = closed_form
""")
    assert main(["vanvleck", "--config", str(cfg), "--out", str(tmp_path / "vv")]) == 0
    assert main(["hk-kernel", "--config", str(cfg), "--out", str(tmp_path / "hk")]) == 0
    s = json.loads((tmp_path / "hk" / "hk-kernel.json").read_text())
    assert s["methods"] == ["hk", "closed_form"]
    assert max(s["fits"][0]["max_rel_error"]) < 1e-4


def test_cli_bad_config_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.ini", "[sweep]\nfoo = 1\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert "unknown key" in (tmp_path / "o" / "run.log").read_text()


def test_cli_flow_check(tmp_path):
    cfg = _write(tmp_path, "f.ini", "[flow]\nn_traj = 4\nt_max = 2\n")
    assert main(["flow-check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "flow.json").read_text())["pass"]


def test_cli_statphase_check(tmp_path):
    cfg = _write(tmp_path, "s.ini", "[statphase]\nk = 1 2\n")
    assert main(["statphase-check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "statphase.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2 * 7


def test_cli_propagate(tmp_path):
    grid = GridSpec.from_bounds(-8, 8, 256, 0.1)
    wf = tmp_path / "psi0.dat"
    write_wavefunction(gaussian_packet(grid, -1.0, 0.5), wf)
    cfg = _write(tmp_path, "p.ini", f"""
[model]
name = harmonic
[propagate]
input = {wf}
t = 1.0
method = hk split_step
steps = 500
""")
    assert main(["propagate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    s = json.loads((tmp_path / "o" / "propagate.json").read_text())
    assert s["relative_l2_difference"] < 1e-3
    assert (tmp_path / "o" / "psi_hk.dat").exists()
    assert main(["propagate", "--out", str(tmp_path / "o2")]) == 2
