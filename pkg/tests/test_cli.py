import csv
import json
from pathlib import Path

import numpy as np
import pytest

from gscr.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC, EXIT_OK, main
from gscr.config import ConfigError, load_case
from gscr.devices import build_ibr, case_ibr_params
from gscr.scheduler import TelemetrySample, write_telemetry
from gscr.synthesis import interval_edges
from gscr.vecfit import sample_response, write_frequency_scan



def run(tmp_path, *argv):
    return main(["--out", str(tmp_path), *argv])


def read(tmp_path, name):
    return json.loads((tmp_path / name).read_text())


def bundled_json():
    from importlib.resources import files
    return json.loads(files("gscr.cases").joinpath("ieee39.json").read_text())


def write_schedule(path, gaps=()):
    ivs = []
    for i, (lo, hi) in enumerate(interval_edges(4)):
        gains = {} if i in gaps else {"k_acps": 1.0, "k_acis": 5.0, "k_pllps": 30.0,
                                      "k_pllis": 7000.0}
        ivs.append({"lo": lo, "hi": hi, "certified": i not in gaps, **gains})
    path.write_text(json.dumps({"m": 4, "intervals": ivs}))
    return path


def write_tel(path, iqs, n=9, k=9):
    case = load_case()
    samples = []
    for t, q in enumerate(iqs):
        oc = case.operating_condition(1.0, q)
        samples.append(TelemetrySample.make(0.1 * t, oc.p_e, oc.i_qs))
    write_telemetry(path, samples)
    return path


def test_gscr_rated(tmp_path, capsys):
    assert run(tmp_path, "gscr") == EXIT_OK
    rec = read(tmp_path, "gscr.json")
    assert rec["gscr"] == pytest.approx(1.68248, abs=1e-6)
    assert json.loads(capsys.readouterr().out)["gscr"] == rec["gscr"]


def test_gscr_sweep_rows_decrease(tmp_path):
    assert run(tmp_path, "gscr", "--sweep", "0.5:1.0:11") == EXIT_OK
    with open(tmp_path / "gscr_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 11
    g = [float(r["gscr"]) for r in rows]
    assert all(b < a for a, b in zip(g, g[1:]))
    # gSCR is inversely proportional to the uniform loading factor
    assert g[0] == pytest.approx(2 * g[-1], rel=1e-9)


def test_csv_format(tmp_path, capsys):
    assert run(tmp_path, "--format", "csv", "gscr") == EXIT_OK
    text = (tmp_path / "gscr.csv").read_text()
    assert text.splitlines()[0] == "key,value"
    assert "gscr," in text
    assert capsys.readouterr().out == text


def test_flags_after_subcommand(tmp_path):
    assert main(["gscr", "--out", str(tmp_path), "--format", "csv"]) == EXIT_OK
    assert (tmp_path / "gscr.csv").exists()


def test_bad_sweep(tmp_path):
    assert run(tmp_path, "gscr", "--sweep", "1:0.5:3") == EXIT_CONFIG


def test_cgscr_without_statcoms(tmp_path):
    assert run(tmp_path, "cgscr", "--no-statcom") == EXIT_OK
    rec = read(tmp_path, "cgscr.json")
    assert rec["cgscr"] == pytest.approx(1.94, abs=0.2)
    assert rec["no_statcom"] is True


def test_cgscr_iq_sweep_needs_statcoms(tmp_path):
    assert run(tmp_path, "cgscr", "--no-statcom", "--iq-sweep", "3") == EXIT_CONFIG


def test_cgscr_iq_sweep(tmp_path):
    assert run(tmp_path, "cgscr", "--iq-sweep", "3") == EXIT_OK
    with open(tmp_path / "cgscr_iq.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["iq_sigma"]) for r in rows] == [-1.0, 0.0, 1.0]
    assert all(float(r["cgscr"]) > 0 for r in rows)


def test_subsystems_ranked(tmp_path):
    assert run(tmp_path, "subsystems") == EXIT_OK
    subs = read(tmp_path, "subsystems.json")["subsystems"]
    z = [s["damping_ratio"] for s in subs]
    assert z == sorted(z)
    assert {s["ibr"] for s in subs} <= set(range(1, 10))


def test_malformed_config_names_branch(tmp_path, capsys):
    data = bundled_json()
    data["network"]["branches"][0]["to"] = "NOWHERE"
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(data))
    assert run(tmp_path, "--config", str(cfg), "gscr") == EXIT_CONFIG
    assert "NOWHERE" in capsys.readouterr().err


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("network"),
    lambda d: d["network"].__setitem__("tau", "ten"),
    lambda d: d.__setitem__("schema_version", 99),
])
def test_schema_errors(tmp_path, mutate):
    data = bundled_json()
    mutate(data)
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(data))
    with pytest.raises(ConfigError):
        load_case(cfg)
    assert run(tmp_path, "--config", str(cfg), "gscr") == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert run(tmp_path, "--config", str(tmp_path / "nope.json"), "gscr") == EXIT_CONFIG


def test_dispatch_replay(tmp_path):
    sched = write_schedule(tmp_path / "s.json")
    tel = write_tel(tmp_path / "t.csv", [-0.9, -0.241, -0.241, 0.19, 0.8])
    assert run(tmp_path, "dispatch-replay", "--schedule", str(sched),
               "--telemetry", str(tel)) == EXIT_OK
    rec = read(tmp_path, "dispatch.json")
    assert rec["intervals"] == [1, 2, 3, 4]
    assert len((tmp_path / "decisions.jsonl").read_text().splitlines()) == 5


def test_dispatch_gap_is_infeasible(tmp_path):
    sched = write_schedule(tmp_path / "s.json", gaps=(2,))
    tel = write_tel(tmp_path / "t.csv", [-0.241, 0.19])
    assert run(tmp_path, "dispatch-replay", "--schedule", str(sched),
               "--telemetry", str(tel)) == EXIT_INFEASIBLE
    rec = read(tmp_path, "dispatch_error.json")
    assert rec["sample_index"] == 1
    assert rec["last_safe"]["interval"] == 2


def test_dispatch_bad_telemetry(tmp_path):
    sched = write_schedule(tmp_path / "s.json")
    (tmp_path / "t.csv").write_text("nonsense\n1,2\n")
    assert run(tmp_path, "dispatch-replay", "--schedule", str(sched),
               "--telemetry", str(tmp_path / "t.csv")) == EXIT_CONFIG


def test_simulate_writes_trace_and_manifest(tmp_path):
    assert run(tmp_path, "simulate", "--reference-gains", "--iq", "0.19",
               "--horizon", "2", "--dt", "5e-4") == EXIT_OK
    summary = read(tmp_path, "simulation_summary.json")
    manifest = read(tmp_path, "simulation_manifest.json")
    assert summary["eigen_stable"] is False
    assert manifest["inputs"]["iq"] == 0.19
    assert manifest["dt"] == 5e-4
    lines = (tmp_path / "simulation.csv").read_text().splitlines()
    assert len(lines) == 4002
    assert lines[0].split(",")[0] == "time"


def test_simulate_bad_dt(tmp_path):
    assert run(tmp_path, "simulate", "--dt", "0.01", "--horizon", "1") == EXIT_NUMERIC


def test_fit(tmp_path):
    model = build_ibr(case_ibr_params(1))
    scan = tmp_path / "scan.csv"
    write_frequency_scan(scan, sample_response(model, np.logspace(0, 4, 120)))
    assert run(tmp_path, "fit", "--scan", str(scan), "--order",
               str(model.realization.n_states)) == EXIT_OK
    rec = read(tmp_path, "fit.json")
    assert rec["max_rel_error"] < 1e-4
    assert run(tmp_path, "fit", "--scan", str(scan), "--order", "0") == EXIT_NUMERIC
    assert read(tmp_path, "fit_error.json")["max_rel_error"] > 1e-4


def test_fit_missing_scan(tmp_path):
    assert run(tmp_path, "fit", "--scan", str(tmp_path / "x.csv"), "--order", "2") == EXIT_CONFIG


def test_synthesize_single_interval(tmp_path):
    code = run(tmp_path, "--seed", "3", "synthesize", "--m", "1", "--no-verify")
    rec = read(tmp_path, "synthesize_m1.json")
    assert code == (EXIT_OK if rec["outcome"] == "full" else EXIT_INFEASIBLE)
    sched = json.loads((tmp_path / "schedule_m1.json").read_text())
    assert sched["m"] == 1
    assert round(rec["gscr"], 2) == 1.68


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["--out", str(d), "cgscr", "--iq", "-0.241"]) == EXIT_OK
    assert (a / "cgscr.json").read_text() == (b / "cgscr.json").read_text()
