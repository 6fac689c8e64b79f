import csv
import json
import math

import pytest

from ebgkit import cli
from ebgkit.runner import Scenario, ScenarioError, default_scenario_dict, write_csv

SMALL = {
    "name": "small",
    "seed": 7,
    "spaces": [
        {"name": "H2xR2", "factors": [{"dim": 2, "curvature": -1}, {"dim": 2, "curvature": 0}]},
        {"name": "R4", "factors": [{"dim": 4, "curvature": 0}]},
    ],
    "t_grid": {"start": 0.0, "stop": 3.0, "points": 301},
    "jacobi": {"trials": 20, "operator_directions": 1},
    "random_spectra": {"count": 2, "samples": 128},
    "asymptotics": {"points": 6},
}


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(SMALL))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(x) for x in r] for r in rows[1:]]


def test_bounds_writes_csv(scenario_file, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["bounds", "--scenario", str(scenario_file), "--out", str(out)]) == 0
    header, rows = read_csv(out / "H2xR2.csv")
    assert header[:5] == ["t", "volume", "ebg", "bg", "hr"]
    assert all(math.isfinite(x) for r in rows for x in r)
    assert all(r[1] <= r[2] * (1 + 1e-9) and r[2] <= r[3] * (1 + 1e-9) for r in rows)
    # flat space: all three columns are the Euclidean ball
    _, flat = read_csv(out / "R4.csv")
    for t, vol, ebg, bg, *_ in flat:
        eu = math.pi**2 / 2 * t**4
        assert vol == pytest.approx(eu, rel=1e-12, abs=1e-300)
        assert ebg == pytest.approx(eu, rel=1e-12, abs=1e-300)
        assert bg == pytest.approx(eu, rel=1e-12, abs=1e-300)
    report = json.loads((out / "report.json").read_text())
    names = [e["name"] for e in report["entries"]]
    assert names == sorted(names)
    assert "bounds/H2xR2/additive-gap" in names


def test_csv_has_17_digits(tmp_path):
    write_csv(tmp_path / "x.csv", {"t": [0.1], "v": [1 / 3]})
    raw = (tmp_path / "x.csv").read_bytes()
    assert b"0.33333333333333331" in raw and raw.endswith(b"\r\n")
    with pytest.raises(ValueError):
        write_csv(tmp_path / "y.csv", {"t": [float("nan")]})


def test_series_subcommand(scenario_file, tmp_path):
    out = tmp_path / "s"
    assert cli.main(["series", "--scenario", str(scenario_file), "--out", str(out)]) == 0
    doc = json.loads((out / "series.json").read_text())
    series = doc["H2xR2"]["series"]
    assert (series["volume"]["c2"], series["volume"]["c4"]) == ("1/18", "1/720")
    assert (series["eBG"]["c2"], series["eBG"]["c4"]) == ("1/18", "13/6480")
    assert (series["BG"]["c2"], series["BG"]["c4"]) == ("1/9", "13/2160")


def test_asymptotics_subcommand(scenario_file, tmp_path):
    out = tmp_path / "a"
    assert cli.main(["asymptotics", "--scenario", str(scenario_file), "--out", str(out)]) == 0
    header, rows = read_csv(out / "asymptotics.csv")
    assert header == ["t", "ebg_over_bg", "beam_ratio"] and len(rows) == 6


def test_jacobi_lab_injected_pair_is_skipped(scenario_file, tmp_path):
    out = tmp_path / "j"
    code = cli.main(["jacobi-lab", "--scenario", str(scenario_file), "--out", str(out),
                     "--inject-reversed-pair"])
    assert code == 0
    entries = {e["name"]: e for e in json.loads((out / "report.json").read_text())["entries"]}
    injected = entries["jacobi/monotonicity-injected-reversed"]
    assert injected["pass"] is None and "precondition not met" in injected["diagnostic"]


def test_verify_is_deterministic(scenario_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["verify", "--scenario", str(scenario_file), "--out", str(a)]) == 0
    assert cli.main(["verify", "--scenario", str(scenario_file), "--out", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_seed_override_changes_report(scenario_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["jacobi-lab", "--scenario", str(scenario_file), "--out", str(a)])
    cli.main(["jacobi-lab", "--scenario", str(scenario_file), "--out", str(b), "--seed", "99"])
    ra = json.loads((a / "report.json").read_text())
    rb = json.loads((b / "report.json").read_text())
    assert ra["seed"] == 7 and rb["seed"] == 99


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["bounds", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
    assert "not valid JSON" in capsys.readouterr().err
    assert cli.main(["bounds", "--scenario", str(tmp_path / "missing.json")]) == 2
    bad.write_text(json.dumps({"spaces": [{"factors": [{"dim": 1, "curvature": 2}]}]}))
    assert cli.main(["bounds", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        cli.main(["bounds", "--seed", "-3"])


def test_scenario_validation():
    raw = default_scenario_dict()
    with pytest.raises(ScenarioError):
        Scenario.from_dict({**raw, "t_grid": {"start": -1, "stop": 1, "points": 5}})
    with pytest.raises(ScenarioError):
        Scenario.from_dict({**raw, "t_grid": {"start": 0, "stop": 1, "points": 1}})
    with pytest.raises(ScenarioError):
        Scenario.from_dict({**raw, "seed": -1})
    with pytest.raises(ScenarioError):
        Scenario.from_dict({**raw, "quadrature": {"mode": "trapezoid"}})
    assert Scenario.from_dict(raw, seed=5).seed == 5
