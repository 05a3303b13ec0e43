#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
import json

import pytest

from .cli import *
from .test_helper import matches_schema


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_open_loop_step_response(capsys, tmp_path):
    code, out = _run(capsys, "step-response", "--preset", "mica2", "--out", str(tmp_path), "--svg")
    assert code == EXIT_OK
    metrics = json.loads(out)
    assert metrics["dc_gain"] == pytest.approx(0.8117, abs=1e-3)
    assert 0.3 <= metrics["rise_time_s"] <= 0.5
    assert (tmp_path / "open_loop_step.csv").read_text().startswith("t,input,output,doutput\n")
    assert (tmp_path / "open_loop_step.svg").read_text().lstrip().startswith("<?xml")


def test_output_is_byte_identical(capsys, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    _, out_first = _run(capsys, "step-response", "--out", str(first), "--svg", "--t-end", "5")
    _, out_second = _run(capsys, "step-response", "--out", str(second), "--svg", "--t-end", "5")
    assert out_first == out_second
    for name in ("open_loop_step.csv", "open_loop_step.svg"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_closed_loop_step_response(capsys, tmp_path):
    code, out = _run(capsys, "step-response", "--closed-loop", "--out", str(tmp_path))
    assert code == EXIT_OK
    metrics = json.loads(out)
    assert metrics["dc_gain"] == pytest.approx(1.0, abs=1e-3)
    assert metrics["rise_time_s"] < 0.1
    assert (tmp_path / "closed_loop_step.csv").exists()


def test_step_response_not_settled(capsys, tmp_path):
    code, _ = _run(capsys, "step-response", "--plant", "1,0.01,1", "--dt", "0.01", "--t-end", "20",
                   "--out", str(tmp_path))
    assert code == EXIT_NOT_SETTLED
    assert (tmp_path / "open_loop_step.csv").exists()


def test_tune_from_ultimate_values(capsys):
    code, out = _run(capsys, "tune", "--ku", "33.727", "--tu", "3.90176")
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["kp"] == pytest.approx(20.2366, abs=5e-4)
    assert report["ki"] == pytest.approx(10.3729, abs=5e-4)
    assert report["kd"] == pytest.approx(9.8699, abs=5e-4)
    assert report["sample_period_s"] is None


def test_tune_csv(capsys):
    code, out = _run(capsys, "tune", "--ku", "10", "--tu", "2", "--format", "csv")
    assert code == EXIT_OK
    header, values = out.splitlines()
    assert header == "ku,tu_s,kp,ki,kd,sample_period_s"
    numbers = values.split(",")
    assert [float(v) for v in numbers[:5]] == pytest.approx([10.0, 2.0, 6.0, 6.0, 1.5])
    assert numbers[5] == ""


def test_tune_needs_both_values(capsys):
    code, _ = _run(capsys, "tune", "--ku", "33.727")
    assert code == EXIT_USAGE


def test_tune_search(capsys):
    code, out = _run(capsys, "tune", "--search", "--sample-period", "0.05")
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["ku"] > 0.0 and report["tu_s"] > 0.0
    assert report["sample_period_s"] == 0.05


def test_tune_search_failure(capsys):
    code, _ = _run(capsys, "tune", "--search", "--gain-hi", "0.1")
    assert code == EXIT_SEARCH_FAILED


def test_stability_exit_codes(capsys):
    code, out = _run(capsys, "stability", "--poly", "1,1,-1,-1")
    assert code == EXIT_UNSTABLE
    assert "unstable: 1 sign changes" in out
    code, _ = _run(capsys, "stability", "--poly", "1,0,1")
    assert code == EXIT_MARGINAL
    code, _ = _run(capsys, "stability", "--poly", "1,3,3,1")
    assert code == EXIT_OK


def test_stability_of_closed_loop(capsys):
    code, out = _run(capsys, "stability", "--closed-loop", "--format", "json")
    assert code == EXIT_OK
    verdict = json.loads(out)
    assert verdict["status"] == "stable"
    assert len(verdict["first_column"]) == 4


def test_stability_csv(capsys):
    code, out = _run(capsys, "stability", "--poly", "1,2,3", "--format", "csv")
    assert code == EXIT_OK
    assert out.splitlines()[0] == "row,c1,c2"


def test_energy(capsys):
    code, out = _run(capsys, "energy", "--distance", "100")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["transmit_J"] == pytest.approx(1.44e-4, rel=1e-9)
    assert data["branch"] == "multipath"
    assert data["threshold_distance_m"] == pytest.approx(87.706, abs=1e-3)


def test_energy_default_distance(capsys):
    code, out = _run(capsys, "energy")
    assert code == EXIT_OK
    assert json.loads(out)["total_J"] == pytest.approx(0.09216, abs=1e-5)


def test_simulate(capsys, tmp_path):
    code, out = _run(capsys, "simulate", "--t-end", "5", "--out", str(tmp_path), "--svg")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["cycles"] == 1
    assert data["periodic"] is None
    assert (tmp_path / "node_trace.csv").read_text().startswith("t,mode,residual_J,harvested_J,consumed_J,z_m\n")
    assert (tmp_path / "node_trace.svg").exists()


def test_simulate_passive(capsys, tmp_path):
    code, _ = _run(capsys, "simulate", "--no-controller", "--t-end", "2", "--out", str(tmp_path))
    assert code == EXIT_OK
    assert (tmp_path / "node_trace_passive.csv").exists()


def test_simulate_livelock(capsys, tmp_path):
    code, _ = _run(capsys, "simulate", "--preset", "mica2-full", "--t-end", "5", "--out", str(tmp_path))
    assert code == EXIT_LIVELOCK


def test_sweep(capsys):
    code, out = _run(capsys, "sweep", "--damping", "0.1,0.2", "--t-end", "2")
    assert code == EXIT_OK
    results = json.loads(out)
    assert [r["electrical_damping_Ns_per_m"] for r in results] == [0.1, 0.2]


def test_show_preset(capsys):
    code, out = _run(capsys, "show-preset", "--preset", "mica2-full")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["name"] == "mica2-full"
    assert data["energy"]["alpha"] == 1.0


def test_explain(capsys):
    code, out = _run(capsys, "explain")
    assert code == EXIT_OK
    assert "kd" in out


def test_report(capsys, tmp_path):
    scenario = tmp_path / "short.json"
    scenario.write_text(json.dumps({"preset": "mica2", "sim": {"node_t_end_s": 2.0}}))
    code, out = _run(capsys, "report", "--scenario", str(scenario), "--out", str(tmp_path))
    assert code == EXIT_OK
    report = tmp_path / "report.md"
    assert out.strip() == str(report)
    text = report.read_text()
    assert "Closed-loop Routh table" in text
    assert "Ziegler-Nichols tuning" in text


def test_bad_scenario_file(capsys, tmp_path):
    code, _ = _run(capsys, "energy", "--scenario", str(tmp_path / "missing.json"))
    assert code == EXIT_USAGE


def test_unknown_command():
    with pytest.raises(SystemExit) as e:
        main(["levitate"])
    assert e.value.code == 2


def test_critically_damped_plant_from_flag(capsys, tmp_path):
    code, out = _run(capsys, "step-response", "--plant", "1,2,1", "--out", str(tmp_path))
    assert code == EXIT_OK
    metrics = json.loads(out)
    assert metrics["percent_overshoot"] == 0.0
    assert metrics["dc_gain"] == pytest.approx(1.0, rel=1e-6)


def test_energy_just_past_crossover(capsys):
    code, out = _run(capsys, "energy", "--distance", "87.706")
    assert code == EXIT_OK
    assert json.loads(out)["branch"] == "multipath"


def test_zero_polynomial_is_a_usage_error(capsys):
    code, _ = _run(capsys, "stability", "--poly", "0,0")
    assert code == EXIT_USAGE


def test_simulate_zero_duration(capsys, tmp_path):
    code, out = _run(capsys, "simulate", "--t-end", "0", "--out", str(tmp_path))
    assert code == EXIT_OK
    assert json.loads(out)["cycles"] == 0
    assert len((tmp_path / "node_trace.csv").read_text().splitlines()) == 2


def test_json_outputs_match_schemas(capsys, tmp_path):
    for argv, schema in ((["step-response", "--out", str(tmp_path)], "step_metrics"),
                         (["tune", "--ku", "33.727", "--tu", "3.90176"], "tuning"),
                         (["stability", "--closed-loop", "--format", "json"], "stability"),
                         (["energy", "--distance", "50"], "energy"),
                         (["simulate", "--t-end", "5", "--out", str(tmp_path)], "node_summary")):
        code, out = _run(capsys, *argv)
        assert code == EXIT_OK
        assert matches_schema(json.loads(out), schema)
