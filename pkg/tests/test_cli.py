from __future__ import annotations

import csv
import itertools
import json

import numpy as np
import pytest

from mfhpo.archive import Archive
from mfhpo.cli import main, mean_ranks, normalized_regret
from mfhpo.optimizer import hb_batch_sizes


def run_cli(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_regret_examples():
    assert normalized_regret([2.0], (2.0, 4.0))[0] == 0.0
    assert normalized_regret([4.0], (2.0, 4.0))[0] == 1.0
    assert normalized_regret([3.0], (2.0, 4.0))[0] == 0.5
    with pytest.raises(ValueError):
        normalized_regret([3.0], (2.0, 2.0))


def test_ranks_examples():
    assert mean_ranks({"i1": {"a": 1, "b": 2}, "i2": {"a": 0, "b": 5}}) == {"a": 1.0, "b": 2.0}
    assert mean_ranks({"i1": {"a": 1, "b": 1}}) == {"a": 1.5, "b": 1.5}
    with pytest.raises(ValueError, match="i2"):
        mean_ranks({"i1": {"a": 1, "b": 2}, "i2": {"a": 1}})


def test_ranks_brute_force():
    table = {"i1": {"a": 3.0, "b": 1.0, "c": 2.0}, "i2": {"a": 1.0, "b": 1.0, "c": 0.5}}

    def brute(row):
        # rank = 1 + #strictly better + half of #ties among the others
        return {k: 1 + sum(row[o] < row[k] for o in row) + 0.5 * sum(row[o] == row[k] for o in row if o != k)
                for k in row}

    expected = {k: np.mean([brute(r)[k] for r in table.values()]) for k in "abc"}
    assert mean_ranks(table) == pytest.approx(expected)
    assert expected == {"a": 2.75, "b": 1.75, "c": 1.5}


def test_run_rs_and_determinism(tmp_path, capsys):
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    args = ["run", "--preset", "RS", "--scenario", "numeric7", "--instance", 0, "--seed", 1, "--budget-mult", 1]
    assert run_cli(args + ["--out", out1], capsys)[0] == 0
    assert run_cli(args + ["--out", out2], capsys)[0] == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert all(r.fidelity == 1.0 for r in Archive.from_jsonl(out1.read_text()))


def test_run_hb_manifest_schedule_and_replay(tmp_path, capsys):
    out = tmp_path / "hb.jsonl"
    assert run_cli(["run", "--preset", "HB", "--seed", 2, "--budget-mult", 3, "--out", out], capsys)[0] == 0
    manifest = json.loads((tmp_path / "hb.manifest.json").read_text())
    spec = manifest["spec"]
    s = manifest["schedule"]["s"]
    assert manifest["schedule"]["mu"] == hb_batch_sizes(spec["mu"], s, spec["eta_surv"], spec["eta_fid"])
    replay = tmp_path / "replay.jsonl"
    assert run_cli(["run", "--manifest", tmp_path / "hb.manifest.json", "--out", replay], capsys)[0] == 0
    assert replay.read_bytes() == out.read_bytes()


def test_run_config_file(tmp_path, capsys):
    cfg = tmp_path / "mine.cfg"
    cfg.write_text("mu = 8\neta_fid = 2\neta_surv = 2\nrho_0 = 0.5\nrho_1 = 0.5\nns0_0 = 4\nns0_1 = 4\n")
    assert run_cli(["run", cfg, "--budget-mult", 1, "--out", tmp_path / "x.jsonl"], capsys)[0] == 0


def test_run_errors_are_json(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("eta_fid = 0.5\n")
    code, _, err = run_cli(["run", bad, "--out", tmp_path / "x.jsonl"], capsys)
    assert code != 0 and json.loads(err)["error"] == "config"
    code, _, err = run_cli(["run", "--out", tmp_path / "x.jsonl"], capsys)
    assert code != 0 and json.loads(err)["error"] == "usage"
    code, _, err = run_cli(["run", tmp_path / "missing.cfg"], capsys)
    assert code != 0 and json.loads(err)["error"] == "io"


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_sweep_counts_monotone_and_reproducible(tmp_path, capsys):
    args = ["sweep", "RS", "HB", "--scenario", "mixed-hier", "--seeds", 3, "--budget-mult", 1]
    code, out, _ = run_cli(args + ["--out-dir", tmp_path / "s1"], capsys)
    assert code == 0
    archives = list((tmp_path / "s1" / "archives").glob("*.jsonl"))
    # mixed-hier has 4 test instances by default
    rows = read_rows(tmp_path / "s1" / "summary.csv")
    cells = {(r["spec"], r["instance"], r["seed"]) for r in rows}
    assert len(archives) == len(cells) == 2 * 4 * 3
    per_budget = {}
    for r in rows:
        per_budget.setdefault(r["budget"], 0)
        per_budget[r["budget"]] += 1
    assert set(per_budget.values()) <= {24}
    for _, grp in itertools.groupby(rows, key=lambda r: (r["spec"], r["instance"], r["seed"])):
        vals = [float(r["best_so_far"]) for r in grp]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
    run_cli(args + ["--out-dir", tmp_path / "s2"], capsys)
    assert (tmp_path / "s1" / "summary.csv").read_bytes() == (tmp_path / "s2" / "summary.csv").read_bytes()

    code, out, _ = run_cli(["ranks", tmp_path / "s1" / "summary.csv"], capsys)
    assert code == 0
    table = list(csv.DictReader(out.splitlines()))
    assert {r["spec"] for r in table} == {"RS", "HB"}
    assert sum(float(r["final"]) for r in table) == pytest.approx(3.0)


def test_sweep_flags_failed_cells(tmp_path, capsys):
    bad = tmp_path / "broken.cfg"
    bad.write_text("mu = 0\n")
    code, out, _ = run_cli(["sweep", "RS", bad, "--scenario", "categorical", "--seeds", 1, "--budget-mult", 0.5,
                            "--out-dir", tmp_path / "s"], capsys)
    assert code == 0 and json.loads(out)["failed"] == 1
    rows = read_rows(tmp_path / "s" / "summary.csv")
    assert {r["status"] for r in rows if r["spec"] == "broken"} == {"failed"}
    assert {r["status"] for r in rows if r["spec"] == "RS"} == {"ok"}


def test_regret_command(tmp_path, capsys):
    out = tmp_path / "a.jsonl"
    run_cli(["run", "--preset", "HB", "--budget-mult", 2, "--out", out], capsys)
    code, text, _ = run_cli(["regret", out], capsys)
    assert code == 0
    reg = [float(r["regret"]) for r in csv.DictReader(text.splitlines())]
    assert all(a >= b for a, b in zip(reg, reg[1:]))
    assert reg[-1] >= 0


def test_tune_command(tmp_path, capsys):
    code, out, _ = run_cli(["tune", "--variant", "g3", "--method", "random", "--n-evals", 2, "--budget-mult", 0.5,
                            "--out", tmp_path / "meta.jsonl"], capsys)
    assert code == 0 and json.loads(out)["evaluations"] == 2
    assert (tmp_path / "meta.best.cfg").exists()
