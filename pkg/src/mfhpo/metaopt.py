"""Meta-optimization: tuning the optimizer's own configuration over instances.

A :class:`MetaSearchSpace` splits the optimizer fields into free parameters
(a :class:`ParamSpace` searched on transformed scales), fixed values and
equality ties. ``tune`` searches it by random sampling or by a random-forest
lower-confidence-bound loop with a uniform proposal every third iteration.
"""
from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .optimizer import ETA_FID_MIN, OptimizerSpec, run
from .param_space import ParamSpace, categorical, continuous, integer
from .surrogate import ForestModel

VARIANTS = ("gamma_star", "g1", "g2", "g3", "g4", "g5", "g6", "g7")
SUBSTITUTION_VARIANTS = ("g1", "g4", "g5", "g6", "g7")
KAPPA = 1.0
N_CANDIDATES = 1000
RANDOM_EVERY = 3


def full_space() -> ParamSpace:
    """All tunable optimizer fields with their search scales."""
    return ParamSpace([
        integer("mu", 2, 200, "log"),
        categorical("batch_method", ("equal", "HB")),
        continuous("eta_fid", ETA_FID_MIN, 16.0, "loglog"),
        continuous("eta_surv", 1.0, math.inf, "reciprocal"),
        categorical("filter_method", ("tournament", "progressive")),
        categorical("generator", ("uniform", "KDE")),
        categorical("surrogate", ("KNN1", "KKNN7", "TPE", "RF")),
        integer("n_trn_0", 1, 10, "log"),
        integer("n_trn_1", 1, 10, "log"),
        continuous("ns0_0", 1.0, 1000.0, "log"),
        continuous("ns0_1", 1.0, 1000.0, "log"),
        continuous("ns1_0", 1.0, 1000.0, "log"),
        continuous("ns1_1", 1.0, 1000.0, "log"),
        continuous("rho_0", 0.0, 1.0),
        continuous("rho_1", 0.0, 1.0),
        categorical("filter_mb", (True, False)),
        categorical("rho_random", (True, False)),
    ])


@dataclass(frozen=True)
class MetaSearchSpace:
    """Free parameters plus fixings and ties.

    ``ties`` maps a target name to the name whose value it copies.
    ``budget_factor`` scales the inner-run budget.
    """

    space: ParamSpace
    fixed: dict = field(default_factory=dict)
    ties: dict = field(default_factory=dict)
    budget_factor: float = 1.0
    variant: str = "gamma_star"

    @property
    def dim(self) -> int:
        return self.space.dim

    def complete(self, values: dict) -> dict:
        """Full parameter dict from values of the free parameters."""
        out = dict(values)
        out.update(self.fixed)
        for target, source in self.ties.items():
            out[target] = out[source]
        return out

    def sample(self, n: int, rng: np.random.Generator) -> list[dict]:
        if self.space.dim == 0:
            return [self.complete({}) for _ in range(n)]
        return [self.complete(c.values) for c in self.space.decode_many(self.space.sample_encoded(n, rng))]

    def to_spec(self, values: dict, budget: float = 1.0) -> OptimizerSpec:
        return OptimizerSpec.from_dict({**self.complete(values), "budget": budget})

    def satisfies(self, values: dict) -> bool:
        """Whether a full parameter dict honours the fixings and ties."""
        if any(values.get(k) != v for k, v in self.fixed.items()):
            return False
        return all(values.get(t) == values.get(s) for t, s in self.ties.items())


def meta_space() -> MetaSearchSpace:
    return MetaSearchSpace(full_space())


def _drop(space: ParamSpace, names) -> ParamSpace:
    names = set(names)
    return ParamSpace([p for p in space.params if p.name not in names])


def restrict(ms: MetaSearchSpace, variant: str, base: OptimizerSpec | dict | None = None) -> MetaSearchSpace:
    """Apply one named design restriction.

    For the substitution variants (``g1`` and ``g4`` to ``g7``) a ``base``
    configuration may be given. Every parameter not named by the
    restriction is then fixed to its base value. ``g4`` leaves only the
    surrogate free so it can be swept.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    fixed: dict[str, Any] = {}
    ties: dict[str, str] = {}
    factor = 1.0
    free_keep: set[str] = set()
    if variant == "g1":
        fixed["eta_fid"] = math.inf
    elif variant == "g2":
        ties = {"n_trn_1": "n_trn_0", "ns0_1": "ns0_0", "ns1_1": "ns1_0", "rho_1": "rho_0"}
    elif variant == "g3":
        fixed = {"filter_method": "tournament", "n_trn_0": 1, "n_trn_1": 1}
        ties = {"ns0_1": "ns0_0", "ns1_0": "ns0_0", "ns1_1": "ns0_0", "rho_1": "rho_0"}
    elif variant == "g4":
        fixed["batch_method"] = "equal"
        free_keep = {"surrogate"}
    elif variant == "g5":
        fixed = {"batch_method": "equal", "rho_0": 0.0, "rho_1": 0.0}
    elif variant == "g6":
        fixed = {"batch_method": "equal", "rho_0": 0.0, "rho_1": 0.0, "generator": "uniform"}
    elif variant == "g7":
        fixed = {"batch_method": "equal", "mu": 32}
        factor = 4.0
    if base is not None and variant in SUBSTITUTION_VARIANTS:
        b = base.to_dict() if isinstance(base, OptimizerSpec) else dict(base)
        for p in ms.space.params:
            if p.name not in fixed and p.name not in ties and p.name not in free_keep:
                fixed[p.name] = b[p.name]
    # an earlier restriction's fixings stay in force unless overridden here
    merged_fixed = {**ms.fixed, **fixed}
    merged_ties = {t: s for t, s in {**ms.ties, **ties}.items() if t not in merged_fixed}
    # a tie whose source is fixed becomes a fixing
    for t, s in list(merged_ties.items()):
        if s in merged_fixed:
            merged_fixed[t] = merged_fixed[s]
            del merged_ties[t]
    space = _drop(ms.space, set(merged_fixed) | set(merged_ties))
    return MetaSearchSpace(space, merged_fixed, merged_ties, ms.budget_factor * factor, variant)


# ----------------------------------------------------------------------
# meta objective


@dataclass
class MetaEvalResult:
    gamma: OptimizerSpec
    per_instance: list[float]
    raw_costs: list[float]
    aggregate: float
    wallclock: float


def final_cost(archive, objective) -> float:
    """Best full-fidelity cost of a run; exact cost of the incumbent if none exists."""
    rec = archive.best(at_full_fidelity=True)
    if rec is not None:
        return rec.cost
    rec = archive.incumbent()
    if rec is None:
        return math.inf
    return objective.true_cost(rec.config)


def normalize(cost: float, best: float, median: float) -> float:
    if not median > best:
        raise ValueError("degenerate normalization references")
    return (cost - best) / (median - best)


def meta_objective(gamma: OptimizerSpec, train: Sequence, budget_mult: float = 30.0, seed: int = 0,
                   budget_factor: float = 1.0) -> MetaEvalResult:
    """Run ``gamma`` once per instance with budget ``budget_mult * d`` and average normalized costs.

    ``train`` is a list of objectives or an ``InstanceSet`` (its training part).
    """
    instances = train.train_instances if hasattr(train, "train_instances") else list(train)
    if not instances:
        raise ValueError("no training instances")
    t0 = time.perf_counter()
    norm, raw = [], []
    for i, obj in enumerate(instances):
        spec = gamma.replace(budget=budget_mult * obj.dim * budget_factor)
        arch = run(spec, obj, np.random.SeedSequence([seed, i]))
        c = final_cost(arch, obj)
        best, median = obj.references()
        raw.append(c)
        norm.append(normalize(c, best, median))
    return MetaEvalResult(gamma, norm, raw, float(np.mean(norm)), time.perf_counter() - t0)


# ----------------------------------------------------------------------
# tuning


@dataclass
class MetaRecord:
    params: dict
    aggregate: float
    per_instance: list = field(default_factory=list)
    origin: str = "random"
    repeat: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def meta_archive_to_jsonl(records: Sequence[MetaRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in records)


def meta_archive_from_jsonl(text: str) -> list[MetaRecord]:
    return [MetaRecord(**json.loads(line)) for line in text.splitlines() if line.strip()]


def initial_design_size(dim: int, n: int) -> int:
    return max(1, min(2 * dim + 1, n // 2))


def _tune_once(ms: MetaSearchSpace, evaluate: Callable[[dict], tuple[float, list]], n: int,
               method: str, rng: np.random.Generator, repeat: int) -> list[MetaRecord]:
    records: list[MetaRecord] = []

    def add(values: dict, origin: str) -> None:
        agg, per = evaluate(ms.complete(values))
        records.append(MetaRecord(ms.complete(values), float(agg), list(per), origin, repeat))

    free = ms.space
    if method == "random" or free.dim == 0:
        for v in ms.sample(n, rng):
            add({k: v[k] for k in free.names}, "random")
        return records

    n_init = initial_design_size(free.dim, n)
    X = free.sample_encoded(n_init, rng)
    for row in X:
        add(free.decode(row).values, "init")
    X = list(X)
    for it in range(1, n - n_init + 1):
        if it % RANDOM_EVERY == 0:
            row = free.sample_encoded(1, rng)[0]
            origin = "random"
        else:
            y = np.array([r.aggregate for r in records])
            ok = np.isfinite(y)
            if not ok.all():
                y[~ok] = y[ok].max() if ok.any() else 0.0
            model = ForestModel(free, True, len(y), np.array(X), y, int(rng.integers(2**31 - 1)))
            cand = free.sample_encoded(N_CANDIDATES, rng)
            mean, spread = model.predict_with_spread(cand)
            row = cand[int(np.argmin(mean - KAPPA * spread))]
            origin = "bo"
        X.append(row)
        add(free.decode(row).values, origin)
    return records


def tune(ms: MetaSearchSpace, train=None, n_meta_evals: int = 20, method: str = "bo_lcb", seed: int = 0,
         budget_mult: float = 30.0, evaluate: Callable[[dict], float | tuple] | None = None,
         repeats: int = 1) -> tuple[Any, list[MetaRecord]]:
    """Search the meta-space; returns the best configuration and the pooled meta-archive.

    Without ``evaluate`` each point becomes an :class:`OptimizerSpec` scored by
    :func:`meta_objective` on ``train`` and the first return value is that spec.
    A custom ``evaluate`` receives the full parameter dict and returns a
    scalar (or ``(aggregate, per_instance)``); the first return value is
    then the best parameter dict.
    """
    if method not in ("random", "bo_lcb"):
        raise ValueError(f"unknown tuning method {method!r}")
    if n_meta_evals < 1 or repeats < 1:
        raise ValueError("need n_meta_evals >= 1 and repeats >= 1")
    as_spec = evaluate is None
    if as_spec:
        if train is None:
            raise ValueError("train instances are required without a custom evaluate")

        def evaluate(values: dict):
            res = meta_objective(OptimizerSpec.from_dict(values), train, budget_mult, seed,
                                 budget_factor=ms.budget_factor)
            return res.aggregate, res.per_instance

    def wrapped(values: dict):
        out = evaluate(values)
        return out if isinstance(out, tuple) else (float(out), [])

    records: list[MetaRecord] = []
    for k, ss in enumerate(np.random.SeedSequence(seed).spawn(repeats)):
        records += _tune_once(ms, wrapped, n_meta_evals, method, np.random.default_rng(ss), k)
    best = min(range(len(records)), key=lambda i: (records[i].aggregate, i))
    params = records[best].params
    return (OptimizerSpec.from_dict(params) if as_spec else params), records


def toy_landscape(values: dict) -> float:
    """Smooth 2-D test surface on ``x, y`` in [0, 1] with its minimum 0 at (0.7, 0.3)."""
    x, y = values["x"], values["y"]
    return float((x - 0.7) ** 2 + 2.0 * (y - 0.3) ** 2 + 0.1 * (1 - math.cos(8 * math.pi * (x - 0.7))))


def toy_space() -> MetaSearchSpace:
    return MetaSearchSpace(ParamSpace([continuous("x", 0.0, 1.0), continuous("y", 0.0, 1.0)]), variant="toy")
