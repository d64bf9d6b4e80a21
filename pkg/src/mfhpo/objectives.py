"""Synthetic multifidelity objectives.

Every objective has the form::

    cost(config, r) = f(config) + (1 - r) * bias(config) + sigma0 * sqrt((1 - r) / r) * eps

with ``bias >= 0`` (low fidelity is pessimistic on average) and standard
normal ``eps`` drawn from the evaluation seed. At ``r = 1`` the cost is exact.

Three scenario families are provided:

``numeric7``
    7 continuous axes, shifted/rotated quadratic plus a Rastrigin ripple.
``mixed-hier``
    38 axes: a 6-level selector gating 6 disjoint child blocks of continuous,
    integer and categorical parameters.
``categorical``
    34 categorical axes, 24 of them conditional, with a random main-effect
    table plus pairwise interactions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .param_space import Config, ParamSpace, categorical, continuous, integer

R_MIN = 1.0 / 32
SCENARIOS = ("numeric7", "mixed-hier", "categorical")
DEFAULT_INSTANCES = {"numeric7": (10, 8), "mixed-hier": (12, 8), "categorical": (1, 0)}


class FidelityError(ValueError):
    pass


@dataclass(eq=False)
class Objective:
    name: str
    space: ParamSpace
    f: Callable[[np.ndarray], np.ndarray]
    bias: Callable[[np.ndarray], np.ndarray]
    sigma0: float
    instance_seed: int
    r_min: float = R_MIN
    known_optimum: float | None = None
    _refs: tuple | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.space.dim

    def true_cost(self, c: Config) -> float:
        return float(self.f(self.space.encode(c)[None, :])[0])

    def evaluate(self, c: Config, r: float, seed: int) -> float:
        """Cost of ``c`` at fidelity ``r``; deterministic given ``seed``."""
        if not (self.r_min - 1e-12 <= r <= 1.0):
            raise FidelityError(f"fidelity {r} outside [{self.r_min}, 1]")
        u = self.space.encode(c)[None, :]
        cost = float(self.f(u)[0])
        if r < 1.0:
            eps = np.random.default_rng([self.instance_seed, int(seed) & 0xFFFFFFFF, int(seed) >> 32]).standard_normal()
            cost += (1.0 - r) * float(self.bias(u)[0]) + self.sigma0 * math.sqrt((1.0 - r) / r) * eps
        return cost

    def evaluate_encoded(self, U: np.ndarray) -> np.ndarray:
        """Exact full-fidelity costs for encoded rows."""
        return self.f(np.atleast_2d(U))

    def references(self, n: int = 1000, seed: int = 0) -> tuple[float, float]:
        """``(best_known, random_median)`` from ``n`` uniform full-fidelity evaluations.

        ``best_known`` is the declared optimum when there is one.
        """
        if self._refs is None or self._refs[0] != (n, seed):
            rng = np.random.default_rng([self.instance_seed, 7919, seed])
            y = self.evaluate_encoded(self.space.sample_encoded(n, rng))
            best = self.known_optimum if self.known_optimum is not None else float(y.min())
            self._refs = ((n, seed), (float(best), float(np.median(y))))
        return self._refs[1]


@dataclass
class InstanceSet:
    name: str
    instances: list[Objective]
    train: list[int]
    test: list[int]
    master_seed: int = 0

    def __post_init__(self) -> None:
        if set(self.train) & set(self.test):
            raise ValueError("training and test instances overlap")

    @property
    def train_instances(self) -> list[Objective]:
        return [self.instances[i] for i in self.train]

    @property
    def test_instances(self) -> list[Objective]:
        return [self.instances[i] for i in self.test]

    def manifest(self) -> dict:
        return {"scenario": self.name, "n_instances": len(self.instances), "master_seed": self.master_seed}


# ----------------------------------------------------------------------
# numeric7

def _numeric7_space() -> ParamSpace:
    return ParamSpace([
        continuous("batch_size", 16, 512, "log"),
        continuous("learning_rate", 1e-4, 1e-1, "log"),
        continuous("momentum", 0.1, 0.99),
        continuous("weight_decay", 1e-5, 1e-1, "log"),
        continuous("num_layers", 1, 5),
        continuous("max_units", 64, 1024, "log"),
        continuous("max_dropout", 0.0, 1.0),
    ])


def _rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def make_numeric7(seed: int, sigma0: float = 0.05) -> Objective:
    rng = np.random.default_rng([1, seed])
    space = _numeric7_space()
    d = space.dim
    center = rng.uniform(0.2, 0.8, d)
    rot = _rotation(rng, d)
    curv = rng.uniform(0.5, 2.0, d)
    ripple = 0.03
    base = rng.uniform(0.2, 0.5)
    bias_center = np.clip(center + rng.normal(0, 0.15, d), 0, 1)
    bias_curv = rng.uniform(0.2, 1.0, d)

    def f(U):
        z = (U - center) @ rot.T
        return base + (curv * z * z).sum(axis=1) + ripple * (1 - np.cos(6 * np.pi * z)).sum(axis=1)

    def bias(U):
        return 0.3 + (bias_curv * (U - bias_center) ** 2).sum(axis=1)

    return Objective("numeric7", space, f, bias, sigma0, seed, known_optimum=float(base))


# ----------------------------------------------------------------------
# mixed-hier

LEARNERS = ("knn", "glmnet", "rf", "rpart", "svm", "xgboost")
# (continuous, integer, categorical) children per learner; 1 + 37 = 38 axes
_BLOCKS = ((4, 2, 1), (4, 2, 1), (3, 2, 1), (3, 2, 1), (3, 2, 1), (3, 1, 1))


def _mixed_space() -> ParamSpace:
    srng = np.random.default_rng(20220101)
    params = [categorical("learner", LEARNERS)]
    for lrn, (nc, ni, nk) in zip(LEARNERS, _BLOCKS):
        cond = ("learner", {lrn})
        for i in range(nc):
            if srng.random() < 0.5:
                params.append(continuous(f"{lrn}.x{i}", 1e-4, 1e2, "log", cond))
            else:
                params.append(continuous(f"{lrn}.x{i}", 0.0, 1.0, "linear", cond))
        for i in range(ni):
            if srng.random() < 0.5:
                params.append(integer(f"{lrn}.n{i}", 1, 500, "log", cond))
            else:
                params.append(integer(f"{lrn}.n{i}", 2, 40, "linear", cond))
        for i in range(nk):
            params.append(categorical(f"{lrn}.c{i}", ("a", "b", "c"), cond))
    return ParamSpace(params)


def make_mixed_hier(seed: int, sigma0: float = 0.03) -> Objective:
    space = _mixed_space()
    rng = np.random.default_rng([2, seed])
    d = space.dim
    blocks = [[i for i, p in enumerate(space.params) if p.name.startswith(lrn + ".")] for lrn in LEARNERS]
    base = rng.uniform(0.1, 0.6, len(LEARNERS))
    center = np.zeros(d)
    curv = np.zeros(d)
    cat_effect = {}
    for i, p in enumerate(space.params):
        if i == 0:
            continue
        if p.kind == "continuous":
            center[i] = rng.uniform(0.15, 0.85)
        elif p.kind == "integer":
            # optimum sits on an integer so it is attainable
            center[i] = p.to_unit(int(rng.integers(p.lower, p.upper + 1)))
        if p.is_categorical:
            eff = rng.uniform(0.05, 0.3, p.n_levels)
            eff[rng.integers(p.n_levels)] = 0.0
            cat_effect[i] = eff
        else:
            curv[i] = rng.uniform(0.2, 1.0)
    bias_level = rng.uniform(0.1, 0.6, len(LEARNERS))
    bias_center = np.clip(center + rng.normal(0, 0.2, d), 0, 1)
    L = len(LEARNERS)

    def _learner(U):
        return np.floor(U[:, 0] * (L - 1) + 0.5).astype(int)

    def f(U):
        k = _learner(U)
        out = base[k].copy()
        act = U >= 0
        num = act & (curv > 0)
        out += np.where(num, curv * (U - center) ** 2, 0.0).sum(axis=1)
        for i, eff in cat_effect.items():
            on = act[:, i]
            if on.any():
                lvl = np.floor(U[on, i] * (len(eff) - 1) + 0.5).astype(int)
                out[on] += eff[lvl]
        return out

    def bias(U):
        k = _learner(U)
        act = (U >= 0) & (curv > 0)
        return bias_level[k] + np.where(act, 0.5 * (U - bias_center) ** 2, 0.0).sum(axis=1)

    return Objective("mixed-hier", space, f, bias, sigma0, seed, known_optimum=float(base.min()))


# ----------------------------------------------------------------------
# categorical

def _categorical_space() -> ParamSpace:
    srng = np.random.default_rng(20220202)
    n_roots, n_children = 10, 24
    params = []
    for i in range(n_roots):
        params.append(categorical(f"op{i}", tuple(f"v{j}" for j in range(int(srng.integers(3, 6))))))
    for i in range(n_children):
        parent = params[int(srng.integers(0, len(params)))]
        k = int(srng.integers(1, parent.n_levels))
        allowed = set(srng.choice(parent.levels, size=k, replace=False).tolist())
        params.append(categorical(f"edge{i}", tuple(f"v{j}" for j in range(int(srng.integers(2, 6)))),
                                  (parent.name, allowed)))
    return ParamSpace(params)


def make_categorical(seed: int, sigma0: float = 0.02, n_pairs: int = 40) -> Objective:
    space = _categorical_space()
    rng = np.random.default_rng([3, seed])
    d = space.dim
    levels = [p.n_levels for p in space.params]
    main = [rng.uniform(0.0, 0.1, L) for L in levels]
    pairs = []
    for _ in range(n_pairs):
        a, b = rng.choice(d, size=2, replace=False)
        pairs.append((int(a), int(b), rng.normal(0.0, 0.03, (levels[a], levels[b]))))
    bias_main = [rng.uniform(0.0, 0.05, L) for L in levels]
    base = float(rng.uniform(0.1, 0.3))

    def _codes(U):
        return [np.where(U[:, i] >= 0, np.floor(U[:, i] * (L - 1) + 0.5), -1).astype(int)
                for i, L in enumerate(levels)]

    def f(U):
        c = _codes(U)
        out = np.full(len(U), base)
        for i, tab in enumerate(main):
            on = c[i] >= 0
            out[on] += tab[c[i][on]]
        for a, b, tab in pairs:
            on = (c[a] >= 0) & (c[b] >= 0)
            out[on] += tab[c[a][on], c[b][on]]
        return out

    def bias(U):
        c = _codes(U)
        out = np.full(len(U), 0.2)
        for i, tab in enumerate(bias_main):
            on = c[i] >= 0
            out[on] += tab[c[i][on]]
        return out

    return Objective("categorical", space, f, bias, sigma0, seed)


_MAKERS = {"numeric7": make_numeric7, "mixed-hier": make_mixed_hier, "categorical": make_categorical}


def make_scenario(name: str, n_instances: int | None = None, master_seed: int = 0,
                  n_train: int | None = None) -> InstanceSet:
    """Build a scenario's instances and their train/test split."""
    if name not in _MAKERS:
        raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    default_n, default_train = DEFAULT_INSTANCES[name]
    if n_instances is None:
        n_instances = default_n
        n_train = default_train if n_train is None else n_train
    if n_train is None:
        n_train = 0 if n_instances < 2 else max(1, round(n_instances * default_train / default_n))
    if n_instances < 1 or not 0 <= n_train < n_instances:
        raise ValueError("need at least one test instance")
    ss = np.random.SeedSequence(master_seed)
    seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(n_instances)]
    instances = [_MAKERS[name](s) for s in seeds]
    return InstanceSet(name, instances, list(range(n_train)), list(range(n_train, n_instances)), master_seed)
