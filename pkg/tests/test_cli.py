from __future__ import annotations

import json

import pytest

from teescrow.cli import main

UNIT = 10**18

SMALL = {
    "value_of_result": 100,
    "payment": 10,
    "compute_cost": 3,
    "threshold": 5,
    "initial_balance": 1000,
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_scenario_default_json(capsys):
    code, out, _ = run_cli(capsys, "scenario", "--format", "json")
    assert code == 0
    obj = json.loads(out)
    assert obj["requestorPayoff"] == 90 * UNIT
    assert obj["nodePayoff"] == 7 * UNIT
    assert obj["receivedValidResult"] is True
    assert obj["infoFlowViolations"] == []


def test_scenario_with_config_and_strategies(capsys, config_file):
    code, out, _ = run_cli(
        capsys, "scenario", "--config", config_file,
        "--requestor", "no-confirm", "--format", "json")
    assert code == 0
    obj = json.loads(out)
    assert obj["requestorPayoff"] == 85
    assert obj["nodePayoff"] == -3
    assert obj["lockedInContract"] == 15


def test_scenario_table_format(capsys, config_file):
    code, out, _ = run_cli(capsys, "scenario", "--config", config_file)
    assert code == 0
    assert "requestorPayoff" in out
    assert "90" in out


def test_scenario_output_stable_for_fixed_seed(capsys, config_file):
    _, first, _ = run_cli(capsys, "scenario", "--config", config_file,
                          "--seed", "5", "--format", "json")
    _, second, _ = run_cli(capsys, "scenario", "--config", config_file,
                           "--seed", "5", "--format", "json")
    assert first == second


def test_scenario_export_and_inspect_roundtrip(capsys, tmp_path, config_file):
    trace_file = str(tmp_path / "trace.jsonl")
    code, _, _ = run_cli(capsys, "scenario", "--config", config_file,
                         "--node", "compute-no-deliver",
                         "--export-trace", trace_file)
    assert code == 0
    code, out, _ = run_cli(capsys, "inspect", "--trace", trace_file,
                           "--format", "json")
    assert code == 0
    obj = json.loads(out)
    assert obj["reconstructionOk"] is True
    assert obj["requestorPayoff"] == -15


def test_inspect_rejects_edited_trace(capsys, tmp_path, config_file):
    trace_file = tmp_path / "trace.jsonl"
    run_cli(capsys, "scenario", "--config", config_file,
            "--export-trace", str(trace_file))
    lines = trace_file.read_text().splitlines()
    doctored = []
    for line in lines:
        record = json.loads(line)
        if record.get("type") == "outcome":
            record["requestorPayoff"] += 1
        doctored.append(json.dumps(record, sort_keys=True,
                                   separators=(",", ":")))
    trace_file.write_text("\n".join(doctored) + "\n")
    code, out, _ = run_cli(capsys, "inspect", "--trace", str(trace_file),
                           "--format", "json")
    assert code == 1
    assert json.loads(out)["reconstructionOk"] is False


def test_inspect_missing_file(capsys):
    code, _, err = run_cli(capsys, "inspect", "--trace", "/no/such/file")
    assert code == 2
    assert "file not found" in err


def test_payoffs_json_all_nine_cells(capsys, config_file):
    code, out, _ = run_cli(capsys, "payoffs", "--config", config_file,
                           "--format", "json")
    assert code == 0
    obj = json.loads(out)
    assert len(obj["cells"]) == 9
    assert obj["cells"]["honest/honest"]["requestorPayoff"] == 90
    assert obj["cells"]["honest/claim-only"]["nodePayoff"] == -5


def test_payoffs_grid_file(capsys, tmp_path):
    other = dict(SMALL, payment=20)
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps([SMALL, other]))
    code, out, _ = run_cli(capsys, "payoffs", "--grid", str(grid),
                           "--format", "json")
    assert code == 0
    # One JSON document per grid entry.
    docs = json.loads("[" + out.replace("}\n{", "},\n{") + "]")
    assert len(docs) == 2


def test_payoffs_degenerate_config_exits_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(SMALL, value_of_result=10)))
    code, _, err = run_cli(capsys, "payoffs", "--config", str(bad))
    assert code == 2
    assert "config error" in err


def test_gas_table_has_published_total(capsys):
    code, out, _ = run_cli(capsys, "gas", "--tier", "standard")
    assert code == 0
    assert "582159" in out


def test_gas_json_per_function(capsys):
    code, out, _ = run_cli(capsys, "gas", "--tier", "slow", "--format", "json")
    assert code == 0
    obj = json.loads(out)
    assert obj["perFunctionGas"]["submitTask"] == 277880
    assert obj["tier"] == "slow"


def test_latency_json(capsys):
    code, out, _ = run_cli(capsys, "latency", "--tier", "fast",
                           "--format", "json")
    assert code == 0
    obj = json.loads(out)
    assert obj["onChainSeconds"] == 480


def test_unknown_strategy_is_usage_error(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["scenario", "--requestor", "vigilante"])
    assert excinfo.value.code == 2


def test_missing_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2


def test_config_file_unknown_key_exits_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(SMALL, fee=1)))
    code, _, err = run_cli(capsys, "scenario", "--config", str(bad))
    assert code == 2
    assert "config error" in err
