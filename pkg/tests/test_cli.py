import csv
import io
import json
import subprocess
import sys

import pytest

from routechoice import synth
from routechoice.cli import main
from routechoice.dataset import load_flights
from routechoice.geo import load_zones, route_charges, weight_factor, zone_distance_profile

CONFIG = {"training_airacs": ["1601", "1602", "1603"], "testing_airacs": ["1604", "1605"],
          "matching": "centroid"}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small synthetic dataset and a trained bundle on disk."""
    root = tmp_path_factory.mktemp("cli")
    spec = synth.scenario("stationary")
    for p in spec["periods"]:
        p["n_flights"] = 500
    (root / "spec.json").write_text(json.dumps(spec))
    assert main(["synth", "--spec", str(root / "spec.json"), "--seed", "2", "--out", str(root / "data")]) == 0
    (root / "config.json").write_text(json.dumps(CONFIG))
    d = root / "data"
    assert main(["train", "--flights", str(d / "flights.jsonl"), "--zones", str(d / "zones.json"),
                 "--cask", str(d / "cask.csv"), "--config", str(root / "config.json"),
                 "--out", str(root / "model")]) == 0
    return root


def _data_args(root):
    d = root / "data"
    return ["--flights", str(d / "flights.jsonl"), "--zones", str(d / "zones.json")]


def test_synth_outputs(workspace):
    names = sorted(p.name for p in (workspace / "data").iterdir())
    assert names == ["cask.csv", "flights.jsonl", "labels.csv", "run_manifest.json", "zones.json"]
    m = json.loads((workspace / "data" / "run_manifest.json").read_text())
    assert m["command"] == "synth" and m["seeds"] == {"seed": 2}
    assert m["inputs"]["spec"]["sha256"]


def test_train_outputs(workspace):
    names = sorted(p.name for p in (workspace / "model").iterdir())
    assert names == ["bundle.json", "route_properties.csv", "run_manifest.json", "training.csv"]
    header = (workspace / "model" / "training.csv").read_text().splitlines()[0]
    assert header == ("segment,n_flights,airline,avg_arrival_time,routes_considered,"
                      "actual_probability_vector,norm_of_error,model")


@pytest.mark.parametrize("command", ["validate", "test"])
def test_report_commands(workspace, command):
    out = workspace / command
    assert main([command, "--bundle", str(workspace / "model" / "bundle.json"), *_data_args(workspace),
                 "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["pearson"]) == {"total", "class0", "class1", "class2", "class3",
                                       "early", "midday", "late"}
    rows = list(csv.DictReader(io.StringIO((out / "report.csv").read_text())))
    total = [r for r in rows if r["group"] == "total"]
    assert sum(int(r["actual"]) for r in total) == summary["group_sizes"]["total"]


def test_cluster_and_segment(workspace):
    d = workspace / "data"
    assert main(["cluster", *_data_args(workspace), "--airacs", "1601", "--out", str(workspace / "cl")]) == 0
    rows = (workspace / "cl" / "flight_routes.csv").read_text().splitlines()
    assert rows[0] == "flight_id,route"
    assert main(["segment", "--flights", str(d / "flights.jsonl"), "--cask", str(d / "cask.csv"),
                 "--seed", "1", "--out", str(workspace / "seg")]) == 0
    seg = json.loads((workspace / "seg" / "segmentation.json").read_text())
    assert len(seg["times"]["centroids"]) == 4


def test_charges_matches_library(workspace, capsys):
    assert main(["charges", *_data_args(workspace), "--airac", "1601"]) == 0
    out = capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(out)))
    flights = load_flights(workspace / "data" / "flights.jsonl")
    zones = load_zones(workspace / "data" / "zones.json")
    assert len(rows) == len(flights)
    for f, row in list(zip(flights, rows))[:20]:
        br = route_charges(zone_distance_profile(f.trajectory, zones), zones, weight_factor(f.aircraft_mtow), "1601")
        assert float(row["total_eur"]) == pytest.approx(br.total, abs=1e-4)
        assert sum(float(row[z]) for z in zones.ids) == pytest.approx(br.total, abs=1e-3)


def test_charges_to_file(workspace):
    out = workspace / "ch" / "charges.csv"
    assert main(["charges", *_data_args(workspace), "--airac", "1601", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.parent.iterdir()) == ["charges.csv", "run_manifest.json"]


def test_bad_airac_exit_1(workspace, capsys):
    assert main(["charges", *_data_args(workspace), "--airac", "1699"]) == 1
    assert "error:" in capsys.readouterr().err


def test_bad_flights_exit_1_without_outputs(workspace, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"flight_id": "X"}\n')
    out = tmp_path / "out"
    code = main(["train", "--flights", str(bad), "--zones", str(workspace / "data" / "zones.json"),
                 "--cask", str(workspace / "data" / "cask.csv"), "--config", str(workspace / "config.json"),
                 "--out", str(out)])
    assert code == 1
    assert not out.exists()


def test_bad_config_exit_1(workspace, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**CONFIG, "model": "probit"}))
    d = workspace / "data"
    code = main(["train", *_data_args(workspace), "--cask", str(d / "cask.csv"), "--config", str(cfg),
                 "--out", str(tmp_path / "o")])
    assert code == 1


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--seed", "1", "--out", "x"])
    assert exc.value.code == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "routechoice.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("routechoice")
