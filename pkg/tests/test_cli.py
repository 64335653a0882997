import csv
import json
import subprocess
import sys

import pytest

from eepolitex.cli import main


def test_run_writes_ledger_and_manifest(tmp_path, capsys):
    out = tmp_path / "run.csv"
    assert main(["run", "--env", "deepsea:N=2", "--agent", "ee-politex", "--T", "5000",
                 "--seed", "1", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 5001
    man = json.loads((tmp_path / "run.csv.manifest.json").read_text())
    assert man["experiment"]["seed"] == 1 and man["summary"]["T"] == 5000
    printed = json.loads(capsys.readouterr().out)
    assert abs(printed["decomposition_residual"]) <= 1e-9 * 5000


def test_run_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"env": "chain:p=0.5", "agent": "uniform", "T": 300, "seed": 9}))
    out = tmp_path / "r.csv"
    assert main(["run", "--config", str(cfg), "--T", "200", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 201
    man = json.loads((tmp_path / "r.csv.manifest.json").read_text())
    assert man["experiment"]["seed"] == 9


def test_set_passes_agent_config(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["run", "--env", "random:S=3,A=2,seed=0", "--agent", "ee-politex", "--T", "2000",
                 "--set", "eta=0", "--out", str(out)]) == 0
    man = json.loads((tmp_path / "r.csv.manifest.json").read_text())
    assert man["experiment"]["agent_config"] == {"eta": 0}


def test_exact_reports_chain_lambda(capsys):
    assert main(["exact", "--env", "chain:p=1.0", "--policy", "uniform"]) == 0
    assert json.loads(capsys.readouterr().out)["lambda"] == pytest.approx(0.5)


def test_exact_optimal_deepsea(capsys):
    assert main(["exact", "--env", "deepsea:N=2", "--policy", "optimal"]) == 0
    assert json.loads(capsys.readouterr().out)["lambda"] == pytest.approx(-1.5, abs=1e-8)


def test_sweep_and_summary(tmp_path):
    out, summ = tmp_path / "s.csv", tmp_path / "agg.csv"
    assert main(["sweep", "--envs", "chain:p=0.5", "random:S=3,A=2,seed=1", "--agents", "uniform",
                 "ee-politex", "--seeds", "2", "--T", "1000", "--out", str(out),
                 "--summary", str(summ)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 8 and all(not r["error"] for r in rows)
    assert len(list(csv.DictReader(summ.open()))) == 4


def test_bench_row_count(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["deepsea-bench", "--seeds", "2", "--sizes", "2", "3", "--T", "2000",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4 * 2 * 2
    assert {r["agent"] for r in rows} == {"politex-lspe", "politex-lsmc", "ee-politex-first", "rlsvi"}
    assert len(capsys.readouterr().out.strip().splitlines()) == 4 * 2


def test_bench_visit_mode_flag(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["deepsea-bench", "--seeds", "1", "--sizes", "2", "--T", "1000",
                 "--all-visit-modes", "--out", str(out)]) == 0
    assert len(list(csv.DictReader(out.open()))) == 6


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--env", "maze:N=3", "--agent", "uniform", "--T", "10"],
        ["run", "--env", "chain:p=0.5", "--agent", "uniform", "--T", "10", "--set", "nokey"],
        ["run", "--env", "chain:p=0.5", "--agent", "uniform", "--T", "10", "--set", "bogus=1"],
        ["exact", "--env", "chain:p=0.5", "--policy", "clever"],
    ],
)
def test_bad_input_exits_with_code_two(argv, tmp_path, capsys):
    assert main(argv + (["--out", str(tmp_path / "x")] if argv[0] == "run" else [])) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_malformed_config_file(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_module_entry_point_reruns_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.csv"
        subprocess.run(
            [sys.executable, "-m", "eepolitex", "run", "--env", "deepsea:N=3", "--agent", "rlsvi",
             "--T", "3000", "--seed", "4", "--out", str(out)],
            check=True, capture_output=True,
        )
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
