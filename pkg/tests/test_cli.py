import json
import subprocess
import sys

import numpy as np
import pytest

from fuio import cases
from fuio.cli import main


@pytest.fixture
def files(tmp_path):
    def put(name, obj):
        p = tmp_path / name
        p.write_text(json.dumps(obj))
        return str(p)

    out = {
        "mimo": put("mimo.json", cases.mimo_system_dict()),
        "kernel": put("kernel.json", cases.kernel_system_dict()),
        "ltv": put("ltv.json", cases.ltv_system_dict()),
        "dir": tmp_path,
    }
    scen = cases.mimo_scenario_dict()
    scen["system"] = "mimo.json"
    out["mimo_scen"] = put("mimo_scen.json", scen)
    osc = dict(scen, t_final=10.0)
    osc.pop("z0")
    out["oracle_scen"] = put("oracle_scen.json", osc)
    ls = cases.ltv_scenario_dict()
    ls["system"] = "ltv.json"
    ls["t_final"] = 5.0
    out["ltv_scen"] = put("ltv_scen.json", ls)
    out["put"] = put
    return out


def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_check_mimo(files, capsys):
    code, out, _ = run(["check", files["mimo"], "--json"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["r"] == [3, 3] and rep["rank_N"] == rep["rank_B"] == 1 and rep["feasible"]


def test_check_structural_override_flag(files, capsys):
    code, out, _ = run(["check", files["mimo"], "--r-override", "4,3", "--json"], capsys)
    assert code == 0 and json.loads(out)["r"] == [4, 3]
    code, _, err = run(["check", files["mimo"], "--r-override", "5,3"], capsys)
    assert code == 2 and "exceeds" in err


def test_check_ltv(files, capsys):
    code, out, _ = run(["check", files["ltv"], "--json"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["beta"] == 3
    assert abs(rep["frozen_margin"] - 0.382) <= 0.01


def test_check_decoupling_failure(files, capsys):
    # two inputs but the single output only sees one combination of them
    bad = files["put"]("bad.json", {"type": "lti", "A": np.zeros((3, 3)).tolist(),
                                    "B": np.eye(3)[:, :2].tolist(), "C": [[1.0, 1.0, 0.0]]})
    code, out, _ = run(["check", bad], capsys)
    assert code == 2
    assert "rank(N)" in out and "NOT feasible" in out


def test_synth_and_sim(files, capsys, tmp_path):
    obs = str(tmp_path / "obs.json")
    code, out, _ = run(["synth", files["mimo"], "--poles", "-4,-5,-6,-7,-8", "-o", obs], capsys)
    assert code == 0 and "achieved spectrum" in out
    d = json.loads(open(obs).read())
    assert np.abs(np.array(d["G"]) - cases.MIMO_G_PUBLISHED).max() <= 1e-12
    assert np.abs(np.array(d["M"]) - cases.MIMO_M_PUBLISHED).max() <= 1e-12
    for key in ("F", "L", "Q", "Gamma", "Theta", "r", "poles"):
        assert key in d

    csv1, csv2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    code, out, _ = run(["sim", obs, files["mimo_scen"], "--csv", csv1, "--json"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["final_error_norm"] <= 1e-3
    run(["sim", obs, files["mimo_scen"], "--csv", csv2], capsys)
    a, b = open(csv1).read(), open(csv2).read()
    assert a == b
    assert a.splitlines()[0] == "t,x1,x2,x3,x4,x5,xbar1,xbar2,xbar3,err1,err2,err3"


def test_synth_is_deterministic(files, capsys):
    _, out1, _ = run(["synth", files["mimo"], "--poles", "-4,-5,-6,-7,-8", "--json"], capsys)
    _, out2, _ = run(["synth", files["mimo"], "--poles", "-4,-5,-6,-7,-8", "--json"], capsys)
    assert out1 == out2


def test_synth_kernel_reduced(files, capsys):
    code, out, _ = run(["synth", files["kernel"], "--mode", "reduced", "--poles", "-1,-4,-5,-6",
                        "--json"], capsys)
    Q = np.array(json.loads(out)["observer"]["Q"])
    assert code == 0 and Q.shape == (1, 4)
    assert abs(abs(Q[0] @ np.array([1, -1, 0, 0])) / np.sqrt(2) - 1) < 1e-9


def test_synth_errors(files, capsys):
    code, _, err = run(["synth", files["mimo"], "--poles", "-4,-4,-6,-7,-8"], capsys)
    assert code == 2 and "repeated" in err
    code, _, _ = run(["synth", files["mimo"]], capsys)
    assert code == 1
    code, _, _ = run(["synth", files["mimo"], "--poles", "a,b"], capsys)
    assert code == 1
    code, _, err = run(["synth", files["kernel"], "--poles", "-2,-4,-5,-6"], capsys)
    assert code == 2 and "-1" in err


def test_complex_poles(files, capsys):
    code, out, _ = run(["synth", files["mimo"], "--poles", "-4+1j,-4-1j,-6,-7,-8", "--json"], capsys)
    assert code == 0
    assert json.loads(out)["report"]["spectrum_error"] < 1e-6


def test_ltv_synth_and_sim(files, capsys, tmp_path):
    obs = str(tmp_path / "ltv_obs.json")
    assert run(["synth", files["ltv"], "-o", obs], capsys)[0] == 0
    csv = str(tmp_path / "ltv.csv")
    code, out, _ = run(["sim", obs, files["ltv_scen"], "--csv", csv, "--json"], capsys)
    assert code == 0
    lines = open(csv).read().splitlines()
    assert lines[0] == "t,x1,x2,x3,x4,xbar1,xbar2,xbar3,err1,err2,err3"
    assert len(lines) == 5001 + 1


def test_oracle_compare_and_negative_control(files, capsys, tmp_path):
    obs = str(tmp_path / "obs.json")
    run(["synth", files["mimo"], "--poles", "-4,-5,-6,-7,-8", "-o", obs], capsys)
    code, out, _ = run(["oracle-compare", files["mimo"], obs, files["oracle_scen"], "--json"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["max_deviation"] <= 1e-6 and rep["dt"] == 1e-4

    d = json.loads(open(obs).read())
    d["Q"] = [[1, 0, 0, 0, 0], [0, 1, 0, 0, 0], [0, 0, 0, 1, 0]]
    bad = files["put"]("bad_obs.json", d)
    code, out, _ = run(["oracle-compare", files["mimo"], bad, files["oracle_scen"], "--dt", "1e-3",
                        "--json"], capsys)
    assert code != 0 and json.loads(out)["max_deviation"] > 1e-3


@pytest.mark.parametrize("name", ["paper-mimo", "paper-ltv", "bilinear"])
def test_demos(name, capsys, tmp_path):
    csv = str(tmp_path / f"{name}.csv")
    code, out, _ = run(["demo", name, "--json", "--csv", csv, "--t-final", "3"], capsys)
    assert code == 0
    assert json.loads(out)["demo"] == name
    assert open(csv).readline().startswith("t,x1,")


def test_usage_errors(files, capsys):
    assert run([], capsys)[0] == 1
    assert run(["bogus"], capsys)[0] == 1
    assert run(["demo", "nope"], capsys)[0] == 1
    assert run(["check", str(files["dir"] / "missing.json")], capsys)[0] == 1
    assert run(["sim", files["mimo"], files["mimo_scen"], "--dt", "0"], capsys)[0] == 1
    bad = files["put"]("badexpr.json", dict(cases.mimo_scenario_dict(), f=["sin(t"], system="mimo.json"))
    obs = str(files["dir"] / "o.json")
    run(["synth", files["mimo"], "--poles", "-4,-5,-6,-7,-8", "-o", obs], capsys)
    code, _, err = run(["sim", obs, bad], capsys)
    assert code == 1 and "offset" in err


def test_numerical_failure_exit(files, capsys):
    obs = str(files["dir"] / "o.json")
    run(["synth", files["mimo"], "--poles", "-4,-5,-6,-7,-8", "-o", obs], capsys)
    scen = files["put"]("div.json", dict(cases.mimo_scenario_dict(), f=["1/(t-0.5)"], system="mimo.json"))
    code, _, err = run(["sim", obs, scen], capsys)
    assert code == 3 and "t=" in err


def test_console_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "fuio", "check", files["mimo"]],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "feasible" in proc.stdout
