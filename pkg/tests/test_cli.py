import json
from pathlib import Path

import pytest

from sensebid.cli import main
from sensebid.configio import ConfigError, load_config
from sensebid.experiment import (
    experiment_config_from_raw,
    run_experiment,
    suite_config_from_raw,
)
from sensebid.runio import SchemaError, load_run_document, replay_run

RUN_CONFIG = """\
mechanism: sos
seed: 4242
replications: 3
scenario:
  region_width: 40.0
  region_height: 40.0
  task_count: 30
  sensing_radius: 9.0
  cost_low: 1.0
  cost_high: 10.0
  deadline: 32
  arrival_rate: 0.6
params:
  required_service: [4, 8]
  blowup: 6
  shrink: 2
  initial_threshold: 1
"""

VERIFY_CONFIG = """\
suite:
  battery:
    count: 6
    seed: 5
    n_max: 8
    deadlines: [8, 16]
  grid_points: 9
  submodular_trials: 300
"""


@pytest.fixture
def run_config(tmp_path):
    path = tmp_path / "experiment.yaml"
    path.write_text(RUN_CONFIG)
    return path


def read_bytes_map(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
    }


def test_run_writes_tables(run_config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(run_config), "--out", str(out)]) == 0
    for name in ("runs.csv", "decisions.csv", "stages.csv", "summary.csv"):
        assert (out / name).exists(), name
    runs = (out / "runs.csv").read_text().splitlines()
    assert len(runs) == 1 + 3 * 2  # header + reps x R values
    header = runs[0].split(",")
    assert header[0] == "schema_version"


def test_run_repeats_byte_identical(run_config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(run_config), "--out", str(out1), "--format", "json"]) == 0
    assert main(["run", "--config", str(run_config), "--out", str(out2), "--format", "json"]) == 0
    assert read_bytes_map(out1) == read_bytes_map(out2)


def test_run_seed_override_changes_results(run_config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(run_config), "--out", str(out1)]) == 0
    assert main(["run", "--config", str(run_config), "--out", str(out2), "--seed", "77"]) == 0
    assert (out1 / "runs.csv").read_bytes() != (out2 / "runs.csv").read_bytes()


def test_replay_roundtrip_and_tamper(run_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(run_config), "--out", str(out), "--format", "json"]) == 0
    trace = next((out / "runs").glob("*.json"))
    assert main(["replay", str(trace)]) == 0

    doc = json.loads(trace.read_text())
    # tamper with exactly one recorded payment cell
    row = None
    for candidate in doc["outcome"]["decisions"]:
        if candidate[5] == "true":
            row = candidate
            break
    assert row is not None, "expected at least one accept in the fixture"
    row[6] = "0.000001"
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(doc))
    assert main(["replay", str(tampered)]) == 1
    printed = capsys.readouterr().out
    assert "1 differing rows" in printed


def test_replay_rejects_truncated_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": "sensebid.run.v1", "run_id": "x"')
    assert main(["replay", str(bad)]) == 2
    bad2 = tmp_path / "bad2.json"
    bad2.write_text('{"schema": "other"}')
    assert main(["replay", str(bad2)]) == 2
    assert main(["replay", str(tmp_path / "missing.json")]) == 2


def test_verify_suite_passes_and_writes_report(tmp_path):
    cfg = tmp_path / "verify.yaml"
    cfg.write_text(VERIFY_CONFIG)
    out = tmp_path / "report"
    code = main(["verify", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    report = json.loads((out / "verify_report.json").read_text())
    assert report["passed"] is True
    names = {c["name"] for c in report["checks"]}
    assert "sos_truthfulness" in names and "submodularity" in names


def test_verify_literal_rule_fails_when_expected_truthful(tmp_path):
    cfg = tmp_path / "verify.yaml"
    cfg.write_text(
        VERIFY_CONFIG
        + "  oms:\n    payment_rule: literal\n    expect_truthful: true\n"
        + "  checks: [oms_truthfulness, oms_individual_rationality]\n"
    )
    code = main(["verify", "--config", str(cfg)])
    assert code == 1


def test_verify_literal_rule_advisory_when_not_expected(tmp_path):
    cfg = tmp_path / "verify.yaml"
    cfg.write_text(
        VERIFY_CONFIG
        + "  oms:\n    payment_rule: literal\n    expect_truthful: false\n"
        + "  checks: [oms_truthfulness, oms_individual_rationality]\n"
    )
    code = main(["verify", "--config", str(cfg)])
    assert code == 0


def test_config_errors_exit_two(tmp_path):
    missing = tmp_path / "missing.yaml"
    assert main(["run", "--config", str(missing), "--out", str(tmp_path / "o")]) == 2

    bad = tmp_path / "bad.yaml"
    bad.write_text("mechanism: sos\nscenario: {deadline: [}\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2

    wrong = tmp_path / "wrong.yaml"
    wrong.write_text("mechanism: frobnicate\nparams: {required_service: 4}\n")
    assert main(["run", "--config", str(wrong), "--out", str(tmp_path / "o")]) == 2


def test_config_error_messages_are_line_anchored(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("mechanism: sos\nreplications: nope\nparams:\n  required_service: 4\n")
    raw = load_config(path)
    with pytest.raises(ConfigError) as err:
        experiment_config_from_raw(raw)
    assert f"{path}:2" in str(err.value)


def test_gen_emits_scenario_fixture(run_config, tmp_path):
    out = tmp_path / "fixture.json"
    assert main(["gen", "--config", str(run_config), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == "sensebid.scenario.v1"
    assert doc["users"]


def test_gen_accepts_bare_scenario_config(tmp_path):
    cfg = tmp_path / "scenario.yaml"
    cfg.write_text(
        "seed: 9\nscenario:\n  task_count: 10\n  deadline: 10\n  arrival_rate: 1.0\n"
        "  region_width: 20.0\n  region_height: 20.0\n  sensing_radius: 5.0\n"
    )
    out = tmp_path / "fixture.json"
    assert main(["gen", "--config", str(cfg), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["users"]) == 10


def test_summary_rows_match_recomputation_from_run_rows(run_config):
    raw = load_config(run_config)
    cfg = experiment_config_from_raw(raw)
    result = run_experiment(cfg)
    by_r = {}
    for rec in result.records:
        by_r.setdefault(rec.required_service, []).append(rec)
    for row in result.summary_rows:
        required = float(row[2])
        group = [recs for r, recs in by_r.items() if float(r) == required][0]
        payments = [g.total_payment_micro / 1e6 for g in group]
        assert float(row[4]) == pytest.approx(sum(payments) / len(payments), abs=5e-7)
        assert int(row[3]) == len(group)


def test_workers_do_not_change_results(run_config):
    raw = load_config(run_config)
    cfg = experiment_config_from_raw(raw)
    import dataclasses

    serial = run_experiment(cfg)
    parallel = run_experiment(dataclasses.replace(cfg, workers=2))
    assert serial.run_rows() == parallel.run_rows()
    assert serial.summary_rows == parallel.summary_rows
