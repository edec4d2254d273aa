import csv
import json
import math

import pytest

from glblowup.cli import main
from glblowup.lab import (ExperimentConfig, cell_violations, config_from_mapping, load_config,
                          load_record, report, run_experiment, theta_sweep)
from glblowup._validation import ValidationError

LEVINE = {
    "experiment": {"name": "levine", "variant": "GL",
                   "criteria": "blowup_upper_bound, global_lower_bound, kaplan"},
    "params": {"alpha": "2", "gamma": "0", "theta": "0"},
    "initial": {"family": "gaussian", "c": "2"},
    "grid": {"kind": "periodic1d", "dim": "1", "extent": "20", "n": "1024"},
    "controls": {"dt0": "1e-3", "t_budget": "2"},
}


def _cfg(tmp_path, **over):
    m = json.loads(json.dumps(LEVINE))
    m["experiment"]["out"] = str(tmp_path / "out")
    for sec, vals in over.items():
        m[sec].update(vals)
    return config_from_mapping(m)


def _write_ini(path, mapping):
    lines = []
    for sec, vals in mapping.items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in vals.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_config_validation(tmp_path):
    with pytest.raises(ValidationError):
        _cfg(tmp_path, params={"theta": ""})
    with pytest.raises(ValidationError):
        _cfg(tmp_path, params={"theta": "2.0"})
    with pytest.raises(ValidationError):
        _cfg(tmp_path, controls={"bogus": "1"})
    with pytest.raises(ValidationError):
        _cfg(tmp_path, experiment={"criteria": "levine"})
    with pytest.raises(ValidationError):
        load_config(tmp_path / "missing.ini")


def test_ini_and_json_agree(tmp_path):
    ini = _write_ini(tmp_path / "c.ini", LEVINE)
    js = tmp_path / "c.json"
    js.write_text(json.dumps(LEVINE))
    assert load_config(ini).config_hash() == load_config(js).config_hash()


def test_hash_ignores_out_and_cells(tmp_path):
    a = _cfg(tmp_path)
    b = ExperimentConfig(**{**a.__dict__, "out": "elsewhere"})
    assert a.config_hash() == b.config_hash()
    c = _cfg(tmp_path, params={"theta": "0, 0.5"}, experiment={"replicates": "2"})
    assert [x[0] for x in c.cells()] == [0, 1, 2, 3]


def test_levine_cell_and_idempotence(tmp_path):
    cfg = _cfg(tmp_path)
    rec = run_experiment(cfg)
    cell = rec.cells[0]
    ub = [v for v in cell["criteria"] if v["name"] == "blowup_upper_bound"][0]
    assert ub["t_upper"] == pytest.approx(0.6036, abs=5e-4)
    assert cell["blowup"]["blew_up"]
    assert cell["blowup"]["t_bracket"][1] <= ub["t_upper"]
    assert not rec.violations
    again = run_experiment(cfg)
    assert again.cells == rec.cells
    res = report([load_record(cfg.out)], cfg.out)
    assert res["violations"] == [] and res["failed"] == []
    rows = list(csv.DictReader(open(res["summary"])))
    assert len(rows) == 1 and rows[0]["t_upper_source"] in ("kaplan", "blowup_upper_bound")


def test_outputs_deterministic(tmp_path):
    outs = []
    for k in range(2):
        cfg = _cfg(tmp_path, experiment={"out": str(tmp_path / f"o{k}")},
                   controls={"t_budget": "0.3"})
        report([run_experiment(cfg)], cfg.out)
        rows = list(csv.DictReader(open(tmp_path / f"o{k}" / "summary.csv")))
        for r in rows:
            r.pop("wall_time")
        outs.append((rows, (tmp_path / f"o{k}" / "long.csv").read_bytes(),
                     (tmp_path / f"o{k}" / "verdicts.jsonl").read_bytes()))
    assert outs[0] == outs[1]


def test_gamma_negative_global_marked_before_solve(tmp_path):
    cfg = _cfg(tmp_path, params={"gamma": "-60", "theta": "0.3"},
               experiment={"criteria": "global_lower_bound"})
    cell = run_experiment(cfg).cells[0]
    assert cell["status"] == "global_certificate" and cell["blowup"] is None


def test_failed_cell_recorded(tmp_path):
    cfg = _cfg(tmp_path, initial={"family": "scaled_ground_state"},
               params={"alpha": "5"}, grid={"kind": "radial", "dim": "3", "n": "64"})
    rec = run_experiment(cfg)
    assert rec.cells[0]["status"] == "failed" and rec.cells[0]["skip_reason"]
    assert report([rec], cfg.out)["failed"] == [0]


def test_violation_arithmetic():
    cell = {"index": 0, "blowup": {"blew_up": True, "t_bracket": [0.5, 0.6]},
            "criteria": [{"name": "u", "t_upper": 0.4, "t_lower": None},
                         {"name": "l", "t_upper": None, "t_lower": 0.7},
                         {"name": "g", "t_upper": None, "t_lower": "inf"}]}
    kinds = sorted(v["kind"] for v in cell_violations(cell))
    assert kinds == ["global", "lower", "upper"]
    ok = {"index": 0, "blowup": {"blew_up": True, "t_bracket": [0.5, 0.6]},
          "criteria": [{"name": "u", "t_upper": 0.7, "t_lower": 0.1}]}
    assert cell_violations(ok) == []


def test_theta_sweep_table(tmp_path):
    cfg = _cfg(tmp_path, params={"theta": "0, 0.6"})
    rec, table = theta_sweep(cfg)
    assert len(table.rows) == 2
    ct = table.column("cos_theta_T")
    assert all(math.isfinite(x) for x in ct)
    assert 1 <= table.scaling_ratio() < 10


# -- CLI --------------------------------------------------------------------

def test_cli_sweep_report_criteria_evolve(tmp_path, capsys):
    ini = _write_ini(tmp_path / "c.ini", {**LEVINE, "controls": {"dt0": "1e-3",
                                                                  "t_budget": "1"}})
    out = str(tmp_path / "cli")
    assert main(["sweep", "--config", str(ini), "--out", out]) == 0
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["violations"] == 0
    assert main(["report", "--out", out]) == 0
    assert main(["criteria", "--config", str(ini), "--out", out]) == 0
    lines = [json.loads(x) for x in open(tmp_path / "cli" / "verdicts.jsonl")]
    assert {x["name"] for x in lines} == {"blowup_upper_bound", "global_lower_bound", "kaplan"}
    assert main(["evolve", "--config", str(ini), "--out", out, "--cell", "0"]) == 0
    assert (tmp_path / "cli" / "evolve_0000" / "trajectory.json").exists()


def test_cli_groundstate_and_ckn(tmp_path, capsys):
    assert main(["groundstate", "--out", str(tmp_path / "gs")]) == 0
    meta = json.loads(capsys.readouterr().out)
    assert meta["eta0"] == pytest.approx(math.sqrt(2), rel=1e-8)
    assert main(["ckn", "--out", str(tmp_path / "ckn"), "--count", "4"]) == 0


def test_cli_validation_errors(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "nope.ini")]) == 2
    assert main(["report", "--out", str(tmp_path)]) == 2
    ini = _write_ini(tmp_path / "c.ini", LEVINE)
    assert main(["sweep", "--config", str(ini), "--cell", "7", "--out",
                 str(tmp_path / "x")]) == 2
    assert main(["sweep", "--config", str(ini), "--jobs", "0"]) == 2


def test_cli_violation_exit_code(tmp_path):
    cfg = _cfg(tmp_path)
    run_experiment(cfg)
    p = tmp_path / "out" / "cells" / "cell_0000.json"
    cell = json.loads(p.read_text())
    cell["violations"] = [{"cell": 0, "criterion": "x", "kind": "upper"}]
    p.write_text(json.dumps(cell))
    assert main(["report", "--out", cfg.out]) == 4
    cell["violations"], cell["status"] = [], "failed"
    p.write_text(json.dumps(cell))
    assert main(["report", "--out", cfg.out]) == 3
