"""Command-line entry point: ``run``, ``sweep``, ``tune``, ``ranks``, ``regret``.

Seed derivation: a run with integer seed ``k`` splits ``SeedSequence(k)`` into
a sampling stream and an evaluation-seed stream. ``sweep --seed g`` gives its
``i``-th repetition the run seed ``derive_seed(g, i)``, shared by every spec
and instance so comparisons are paired. Scenario instances come from
``--master-seed``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .archive import Archive
from .baselines import PRESETS, preset
from .metaopt import VARIANTS, meta_archive_to_jsonl, meta_space, restrict, tune
from .objectives import SCENARIOS, make_scenario
from .optimizer import OptimizerSpec, SpaceMismatchError, SpecError, run, schedule

log = logging.getLogger(__name__)

N_CHECKPOINTS = 64
GRID_START = 0.1
RANK_BUDGETS = (1.0, 100.0)
SUMMARY_FIELDS = ("spec", "instance", "seed", "status", "budget", "best_so_far", "regret")


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def derive_seed(*path: int) -> int:
    return int(np.random.SeedSequence(list(path)).generate_state(1)[0])


# ----------------------------------------------------------------------
# analysis helpers


def normalized_regret(trajectory: Sequence[float], refs: tuple[float, float]) -> np.ndarray:
    """Map best-so-far costs so that ``min_overall -> 0`` and ``rs_full_median -> 1``."""
    min_overall, median = refs
    if not median > min_overall:
        raise ValueError("rs_full_median must exceed min_overall")
    y = np.asarray(trajectory, dtype=float)
    return (y - min_overall) / (median - min_overall)


def budget_grid(budget: float, n: int = N_CHECKPOINTS, start: float = GRID_START) -> np.ndarray:
    return np.geomspace(start, budget, n)


def spent_budget(archive: Archive) -> np.ndarray:
    """Cumulative full-evaluation units after each record."""
    return np.cumsum(archive.fidelities())


def best_so_far(archive: Archive, grid: np.ndarray) -> np.ndarray:
    """Best full-fidelity cost available once each grid budget has been spent (inf before any)."""
    spent = spent_budget(archive)
    cost = np.where(archive.fidelities() >= 1.0, archive.costs(), np.inf)
    running = np.minimum.accumulate(cost) if len(cost) else cost
    out = np.full(len(grid), np.inf)
    # the last record completed within each budget
    idx = np.searchsorted(spent, grid, side="right") - 1
    ok = idx >= 0
    out[ok] = running[idx[ok]]
    return out


def mean_ranks(table: dict[str, dict[str, float]]) -> dict[str, float]:
    """Mean rank per algorithm; ``table[instance][algorithm]`` holds a cost, lower is better."""
    from scipy.stats import rankdata

    if not table:
        raise ValueError("empty table")
    algos = None
    offenders = []
    for inst, row in table.items():
        if algos is None:
            algos = sorted(row)
        elif sorted(row) != algos:
            offenders.append(inst)
    if offenders:
        raise ValueError(f"algorithm sets differ on instances: {sorted(offenders)}")
    total = np.zeros(len(algos))
    for row in table.values():
        total += rankdata([row[a] for a in algos], method="average")
    return {a: float(v) for a, v in zip(algos, total / len(table))}


# ----------------------------------------------------------------------
# spec resolution


def load_spec(path: str) -> OptimizerSpec:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise CliError("io", str(e)) from e
    try:
        if text.lstrip().startswith("{"):
            return OptimizerSpec.from_dict(json.loads(text))
        return OptimizerSpec.from_text(text)
    except (SpecError, ValueError, TypeError) as e:
        raise CliError("config", str(e)) from e


def resolve_spec(name_or_path: str, objective, budget: float) -> tuple[str, OptimizerSpec]:
    if name_or_path in PRESETS:
        return name_or_path, preset(name_or_path, r_min=objective.r_min, budget=budget)
    return Path(name_or_path).stem, load_spec(name_or_path).replace(budget=budget)


def _instance(scenario: str, index: int, master_seed: int):
    try:
        inst = make_scenario(scenario, master_seed=master_seed)
    except ValueError as e:
        raise CliError("config", str(e)) from e
    if not 0 <= index < len(inst.instances):
        raise CliError("config", f"instance {index} out of range 0..{len(inst.instances) - 1}")
    return inst.instances[index]


def _versions() -> dict:
    import scipy
    import sklearn

    return {"mfhpo": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "sklearn": sklearn.__version__}


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise CliError("io", str(e)) from e


# ----------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    sources = [args.config is not None, args.preset is not None, args.manifest is not None]
    if sum(sources) != 1:
        raise CliError("usage", "give exactly one of a config file, --preset or --manifest")
    if args.manifest:
        try:
            m = json.loads(Path(args.manifest).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise CliError("io", str(e)) from e
        scenario, index, master_seed, seed = m["scenario"], m["instance"], m["master_seed"], m["seed"]
        obj = _instance(scenario, index, master_seed)
        try:
            spec = OptimizerSpec.from_dict(m["spec"])
        except (SpecError, TypeError) as e:
            raise CliError("config", str(e)) from e
        budget_mult = m["budget_mult"]
    else:
        scenario, index, master_seed, seed = args.scenario, args.instance, args.master_seed, args.seed
        obj = _instance(scenario, index, master_seed)
        budget_mult = args.budget_mult
        _, spec = resolve_spec(args.preset or args.config, obj, budget_mult * obj.dim)
    try:
        archive = run(spec, obj, seed)
    except SpaceMismatchError as e:
        raise CliError("space_mismatch", str(e)) from e
    out = Path(args.out)
    _write(out, archive.to_jsonl())
    manifest = {
        "scenario": scenario,
        "instance": index,
        "master_seed": master_seed,
        "seed": seed,
        "budget_mult": budget_mult,
        "spec": spec.to_dict(),
        "schedule": schedule(spec, obj.r_min),
        "references": dict(zip(("best_known", "random_median"), obj.references())),
        "n_records": len(archive),
        "versions": _versions(),
    }
    _write(out.with_suffix(".manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    best = archive.incumbent()
    print(json.dumps({"archive": str(out), "n_records": len(archive), "best_cost": best.cost if best else None}))
    return 0


def _sweep_cell(cell):
    _, spec_arg, scenario, master_seed, index, seed, budget_mult = cell
    obj = make_scenario(scenario, master_seed=master_seed).instances[index]
    try:
        name, spec = resolve_spec(spec_arg, obj, budget_mult * obj.dim)
        archive = run(spec, obj, seed)
    except Exception as e:  # noqa: BLE001 - failed cells are flagged, not fatal
        return None, f"{type(e).__name__}: {e}"
    return archive.to_jsonl(), None


def cmd_sweep(args) -> int:
    inst = make_scenario(args.scenario, master_seed=args.master_seed)
    test = inst.test if inst.test else list(range(len(inst.instances)))
    names = [s if s in PRESETS else Path(s).stem for s in args.specs]
    if len(set(names)) != len(names):
        raise CliError("config", "spec names must be distinct")
    seeds = [derive_seed(args.seed, i) for i in range(args.seeds)]
    cells = [(n, s, args.scenario, args.master_seed, i, sd, args.budget_mult)
             for n, s in zip(names, args.specs) for i in test for sd in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]

    out = Path(args.out_dir)
    archives: dict[tuple, Archive | None] = {}
    for cell, (text, err) in zip(cells, results):
        name, i, sd = cell[0], cell[4], cell[5]
        key = (name, i, sd)
        if err is not None:
            log.warning("cell %s failed: %s", key, err)
            archives[key] = None
            continue
        _write(out / "archives" / f"{name}_{i}_{sd}.jsonl", text)
        archives[key] = Archive.from_jsonl(text)

    # min_overall per instance: reference optimum or anything better seen in the sweep
    refs = {}
    for i in test:
        best, median = inst.instances[i].references()
        seen = [a.best(True).cost for (n, j, s), a in archives.items() if j == i and a and a.best(True)]
        refs[i] = (min([best] + seen), median)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for (name, i, sd), a in archives.items():
        d = inst.instances[i].dim
        grid = budget_grid(args.budget_mult * d)
        if a is None:
            for x in grid:
                w.writerow((name, i, sd, "failed", repr(float(x)), "", ""))
            continue
        traj = best_so_far(a, grid)
        reg = normalized_regret(traj, refs[i])
        for x, y, g in zip(grid, traj, reg):
            w.writerow((name, i, sd, "ok", repr(float(x)), repr(float(y)), repr(float(g))))
    _write(out / "summary.csv", buf.getvalue())
    manifest = {"scenario": args.scenario, "master_seed": args.master_seed, "specs": list(args.specs),
                "seeds": seeds, "instances": test, "budget_mult": args.budget_mult,
                "references": {str(i): list(r) for i, r in refs.items()}, "versions": _versions()}
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    n_failed = sum(a is None for a in archives.values())
    print(json.dumps({"summary": str(out / "summary.csv"), "cells": len(cells), "failed": n_failed}))
    return 0


def read_summary(path: str) -> list[dict]:
    try:
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise CliError("io", str(e)) from e
    for r in rows:
        for k in ("budget", "best_so_far", "regret"):
            r[k] = float(r[k]) if r[k] != "" else math.nan
        r["instance"] = int(r["instance"])
    return rows


def rank_table(rows: list[dict], budget: float | None) -> dict[str, dict[str, float]]:
    """Seed-mean best-so-far per (instance, spec) at the last checkpoint within ``budget``."""
    cells: dict[tuple, dict[str, list]] = {}
    for r in rows:
        cells.setdefault((r["instance"], r["spec"]), {}).setdefault(r["seed"], []).append(r)
    table: dict[str, dict[str, float]] = {}
    for (inst, spec), by_seed in cells.items():
        vals = []
        for seed_rows in by_seed.values():
            seed_rows.sort(key=lambda r: r["budget"])
            within = [r for r in seed_rows if budget is None or r["budget"] <= budget * (1 + 1e-9)]
            v = within[-1]["best_so_far"] if within else math.inf
            vals.append(math.inf if math.isnan(v) else v)
        table.setdefault(str(inst), {})[spec] = float(np.mean(vals))
    return table


def cmd_ranks(args) -> int:
    rows = [r for p in args.summaries for r in read_summary(p)]
    if not rows:
        raise CliError("config", "no summary rows")
    final = max(r["budget"] for r in rows)
    columns = [("budget_" + f"{b:g}", b) for b in RANK_BUDGETS if b <= final * (1 + 1e-9)] + [("final", None)]
    result = {}
    for label, b in columns:
        try:
            result[label] = mean_ranks(rank_table(rows, b))
        except ValueError as e:
            raise CliError("config", str(e)) from e
    algos = sorted(next(iter(result.values())))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["spec"] + [c for c, _ in columns])
    for a in algos:
        w.writerow([a] + [repr(result[c][a]) for c, _ in columns])
    return 0


def cmd_regret(args) -> int:
    obj = _instance(args.scenario, args.instance, args.master_seed)
    try:
        archive = Archive.from_jsonl(Path(args.archive).read_text())
    except OSError as e:
        raise CliError("io", str(e)) from e
    best, median = obj.references()
    if args.min_overall is not None:
        best = args.min_overall
    spent = float(spent_budget(archive)[-1]) if len(archive) else GRID_START
    grid = budget_grid(max(spent, GRID_START * 1.0001))
    traj = best_so_far(archive, grid)
    try:
        reg = normalized_regret(traj, (best, median))
    except ValueError as e:
        raise CliError("config", str(e)) from e
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("budget", "best_so_far", "regret"))
    for x, y, g in zip(grid, traj, reg):
        w.writerow((repr(float(x)), repr(float(y)), repr(float(g))))
    return 0


def cmd_tune(args) -> int:
    inst = make_scenario(args.scenario, master_seed=args.master_seed)
    train = inst.train_instances or inst.instances
    ms = meta_space()
    base = load_spec(args.base) if args.base else None
    if args.variant != "gamma_star":
        ms = restrict(ms, args.variant, base)
    best, records = tune(ms, train, args.n_evals, args.method, args.seed, args.budget_mult, repeats=args.repeats)
    out = Path(args.out)
    _write(out, meta_archive_to_jsonl(records))
    _write(out.with_suffix(".best.cfg"), best.to_text())
    agg = min(r.aggregate for r in records)
    print(json.dumps({"meta_archive": str(out), "evaluations": len(records), "best_aggregate": agg}))
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfhpo", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, instance=True):
        sp.add_argument("--scenario", choices=SCENARIOS, default="numeric7")
        sp.add_argument("--master-seed", type=int, default=0)
        if instance:
            sp.add_argument("--instance", type=int, default=0)

    r = sub.add_parser("run", help="run one optimization")
    r.add_argument("config", nargs="?", help="optimizer config file (key = value lines or JSON)")
    r.add_argument("--preset", choices=PRESETS)
    r.add_argument("--manifest", help="re-run exactly what a manifest describes")
    scenario_args(r)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--budget-mult", type=float, default=30.0)
    r.add_argument("--out", default="archive.jsonl")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="specs x test instances x seeds")
    s.add_argument("specs", nargs="+", help="preset names or config files")
    scenario_args(s, instance=False)
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--budget-mult", type=float, default=30.0)
    s.add_argument("--out-dir", default="sweep")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("tune", help="meta-optimize the optimizer configuration")
    scenario_args(t, instance=False)
    t.add_argument("--variant", choices=VARIANTS, default="gamma_star")
    t.add_argument("--base", help="config file substituted into by g1, g4..g7")
    t.add_argument("--method", choices=("random", "bo_lcb"), default="bo_lcb")
    t.add_argument("--n-evals", type=int, default=20)
    t.add_argument("--repeats", type=int, default=1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--budget-mult", type=float, default=30.0)
    t.add_argument("--out", default="meta_archive.jsonl")
    t.set_defaults(func=cmd_tune)

    k = sub.add_parser("ranks", help="mean ranks from sweep summaries")
    k.add_argument("summaries", nargs="+")
    k.set_defaults(func=cmd_ranks)

    g = sub.add_parser("regret", help="normalized regret curve of one archive")
    g.add_argument("archive")
    scenario_args(g)
    g.add_argument("--min-overall", type=float)
    g.set_defaults(func=cmd_regret)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as e:
        print(json.dumps({"error": e.kind, "message": str(e)}), file=sys.stderr)
        return 2 if e.kind == "usage" else 1


if __name__ == "__main__":
    sys.exit(main())
