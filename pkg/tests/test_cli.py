import json
from importlib import resources

import pytest

from ecpchart.cli import main

JUICE = str(resources.files("ecpchart").joinpath("data/orange_juice.csv"))


def _cfg(tmp_path, text):
    path = tmp_path / "c.toml"
    path.write_text(text)
    return str(path)


FAST = "p0 = 0.2\nlambda = 0.2\nn = 10\nreplicates = 1001\nvariants = ['true']\n[pi]\npi = 0.95\n"


def test_calibrate_writes_limits_and_manifest(tmp_path):
    out, man = tmp_path / "o.json", tmp_path / "m.json"
    assert main(["calibrate", _cfg(tmp_path, FAST), "--out", str(out), "--manifest", str(man)]) == 0
    doc = json.loads(out.read_text())
    assert doc["results"][0]["calibration"]["converged"]
    m = json.loads(man.read_text())
    assert m["M"] == 1001 and len(m["config_digest"]) == 64 and "elapsed_seconds" in m


def test_calibrate_nonconvergence_exit(tmp_path):
    cfg = _cfg(tmp_path, FAST.replace("variants", "l_bounds = [0.01, 0.2]\nvariants"))
    assert main(["calibrate", cfg, "--out", str(tmp_path / "o.json")]) == 4


def test_arl_with_fixed_l(tmp_path, capsys):
    cfg = _cfg(tmp_path, FAST.replace("variants", "L = 2.5\nvariants"))
    assert main(["arl", cfg, "--delta", "0,0.5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("variant,delta") and len(lines) == 3


@pytest.mark.parametrize("argv,code", [
    (["arl", "CFG", "--delta", ","], 2),
    (["arl", "CFG"], 2),
    (["simulate", "--table", "9"], 2),
    (["simulate", "--table", "1", "--cells", "n=7"], 2),
    (["calibrate", "CFG", "--threads", "0"], 2),
    (["nosuch"], 2),
    (["calibrate", "missing.toml"], 3),
    (["simulate", "--table", "1", "--cells", "k=3"], 3),
])
def test_exit_codes(tmp_path, argv, code):
    cfg = _cfg(tmp_path, FAST.replace("variants", "L = 2.5\nvariants"))
    argv = [cfg if a == "CFG" else str(tmp_path / a) if a.endswith(".toml") else a for a in argv]
    assert main(argv) == code


@pytest.mark.parametrize("body", ["p0 = 0.05\nlambda = 0\nn = 5\n", "p0 = 0.05\nlambda = 0.1\nn = 5\npi = 0.5\n"])
def test_invalid_config_exit(tmp_path, body):
    assert main(["calibrate", _cfg(tmp_path, body)]) == 3


def test_bad_data_exit(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("time,n,nonconforming\n1,5,9\n")
    assert main(["monitor", str(data), _cfg(tmp_path, FAST.replace("variants", "L = 2.5\nvariants"))]) == 3


def test_monitor_signal_exit_and_render(tmp_path):
    cfg = _cfg(tmp_path, "p0_star = 0.111\nlambda = 0.2\nn = 50\nL = 2.0\n[pi]\npi = 0.95\n")
    svg = tmp_path / "c.svg"
    code = main(["monitor", JUICE, cfg, "--out", str(tmp_path / "c.csv"), "--render", str(svg)])
    assert code == 5
    assert svg.read_text().lstrip().startswith("<?xml")


def test_estimate_pi(tmp_path, capsys):
    v = tmp_path / "v.csv"
    v.write_text("true,observed,count\n1,1,95\n1,0,5\n0,1,2\n0,0,98\n")
    assert main(["estimate-pi", str(v)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["pi11"] == pytest.approx(0.95) and doc["pi10"] == pytest.approx(0.02)


def test_juice_false_alarm_at_third_in_control_point(tmp_path):
    cfg = _cfg(tmp_path, "p0_star = 0.111\nlambda = 0.2\nn = 50\nstream = 'latent'\n[pi]\npi = 0.95\n")
    out = tmp_path / "c.csv"
    assert main(["monitor", JUICE, cfg, "--phase", "IC", "--out", str(out)]) == 5
    flagged = [line.split(",")[0] for line in out.read_text().splitlines()
               if not line.startswith("#") and line.endswith(",1")]
    assert flagged == ["33"]
