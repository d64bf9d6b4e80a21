"""The configurable multifidelity optimizer main loop.

A run repeatedly samples a batch of configurations at a low fidelity, keeps
the best ``1/eta_surv`` fraction while multiplying the fidelity by
``eta_fid``, and starts a new batch once a batch reaches full fidelity. The
``HB`` batch method cycles through brackets with different starting fidelities
and budget-equalized batch sizes; the ``equal`` method uses a single bracket
and refills each stage back to the original batch size.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable

import numpy as np

from .archive import Archive, EvalRecord
from .param_space import Config, ParamSpace, strip_comment
from .sampler import FILTER_METHODS, GENERATORS, SampleSpec, round_half_up, sample
from .surrogate import KINDS as SURROGATE_KINDS

log = logging.getLogger(__name__)

BATCH_METHODS = ("equal", "HB")
ETA_FID_MIN = 2 ** 0.25


class SpecError(ValueError):
    """Invalid optimizer configuration."""


class SpaceMismatchError(ValueError):
    """The objective's search space differs from the expected one."""


@dataclass(frozen=True)
class OptimizerSpec:
    """Full configuration of the optimizer.

    Time-varying parameters are given by their values at ``t = 0`` and
    ``t = 1`` (suffixes ``_0`` / ``_1``). ``eta_fid = inf`` means a single
    fidelity stage (all evaluations at full fidelity); ``eta_surv = inf``
    keeps one survivor per stage.
    """

    mu: int = 32
    batch_method: str = "equal"
    eta_fid: float = 3.0
    eta_surv: float = 3.0
    filter_method: str = "tournament"
    generator: str = "uniform"
    surrogate: str = "KNN1"
    filter_mb: bool = True
    rho_random: bool = False
    n_trn_0: int = 1
    n_trn_1: int = 1
    ns0_0: float = 1.0
    ns0_1: float = 1.0
    ns1_0: float = 1.0
    ns1_1: float = 1.0
    rho_0: float = 1.0
    rho_1: float = 1.0
    budget: float = 30.0
    refill: bool = True

    def __post_init__(self) -> None:
        def need(ok: bool, msg: str) -> None:
            if not ok:
                raise SpecError(msg)

        need(isinstance(self.mu, (int, np.integer)) and self.mu >= 1, "mu must be an integer >= 1")
        need(self.batch_method in BATCH_METHODS, f"batch_method must be one of {BATCH_METHODS}")
        need(self.eta_fid >= ETA_FID_MIN - 1e-12, "eta_fid must be >= 2^(1/4)")
        need(self.eta_surv >= 1.0, "eta_surv must be >= 1")
        need(self.filter_method in FILTER_METHODS, f"filter_method must be one of {FILTER_METHODS}")
        need(self.generator in GENERATORS, f"generator must be one of {GENERATORS}")
        need(self.surrogate in SURROGATE_KINDS, f"surrogate must be one of {SURROGATE_KINDS}")
        for name in ("n_trn_0", "n_trn_1"):
            v = getattr(self, name)
            need(isinstance(v, (int, np.integer)) and 1 <= v <= 10, f"{name} must be in 1..10")
        for name in ("ns0_0", "ns0_1", "ns1_0", "ns1_1"):
            need(1.0 <= getattr(self, name) <= 1000.0, f"{name} must be in [1, 1000]")
        for name in ("rho_0", "rho_1"):
            need(0.0 <= getattr(self, name) <= 1.0, f"{name} must be in [0, 1]")
        need(self.budget > 0 and math.isfinite(self.budget), "budget must be positive and finite")

    def replace(self, **changes: Any) -> "OptimizerSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerSpec":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise SpecError(f"unknown fields: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            default = known[k].default
            if isinstance(default, bool):
                if not isinstance(v, bool):
                    raise SpecError(f"{k} must be a boolean")
            elif isinstance(default, int):
                if isinstance(v, float) and v.is_integer():
                    v = int(v)
            elif isinstance(default, float) and isinstance(v, (int, float)) and not isinstance(v, bool):
                v = float(v)
            kw[k] = v
        return cls(**kw)

    # declarative "key = value" file format ----------------------------

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            lines.append(f"{k} = {_format_value(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "OptimizerSpec":
        return cls.from_dict(parse_kv(text))


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    return str(v)


def parse_kv(text: str) -> dict:
    """Parse ``key = value`` lines; values are JSON scalars, bare words or ``inf``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if val in ("inf", "+inf", "Infinity"):
            out[key] = math.inf
        elif val in ("-inf", "-Infinity"):
            out[key] = -math.inf
        else:
            try:
                out[key] = json.loads(val)
            except json.JSONDecodeError:
                out[key] = val
    return out


# ----------------------------------------------------------------------
# schedule arithmetic


def stage_count(eta_fid: float, r_min: float) -> int:
    """Number of fidelity stages ``floor(-log_eta(r_min)) + 1``."""
    if not 0.0 < r_min <= 1.0:
        raise ValueError("r_min must lie in (0, 1]")
    if eta_fid <= 1.0:
        raise ValueError("eta_fid must exceed 1")
    if math.isinf(eta_fid) or r_min == 1.0:
        return 1
    # guard against log-ratio rounding just below an integer
    return int(math.floor(-math.log(r_min) / math.log(eta_fid) + 1e-9)) + 1


def select_count(n: int, eta_surv: float) -> int:
    """Survivor count ``round(n / eta_surv)``, at least one."""
    if n < 1:
        raise ValueError("empty batch")
    return max(1, round_half_up(n / eta_surv))


def select_top(costs: Iterable[float], eta_surv: float) -> list[int]:
    """Positions of the survivors: the lowest costs, ties to the earlier position."""
    costs = list(costs)
    k = select_count(len(costs), eta_surv)
    return sorted(range(len(costs)), key=lambda i: (costs[i], i))[:k]


def _relative_bracket_cost(b: int, s: int, eta_surv: float, eta_fid: float) -> float:
    # cost of bracket b per initial configuration, without rounding
    return sum(eta_fid ** (b - s + j) * eta_surv ** (-j) for j in range(s - b + 1))


def hb_batch_sizes(mu1: int, s: int, eta_surv: float, eta_fid: float) -> list[int]:
    """Initial batch size per bracket, equalizing the budget spent per bracket.

    ``mu(b) = ceil(mu1 * K(1) / K(b))`` with ``K(b)`` the unrounded cost of
    bracket ``b`` per initial configuration. For ``eta_surv == eta_fid == eta``
    and ``mu1 = eta^(s-1)`` this is Hyperband's ``ceil(s eta^(s-b) / (s-b+1))``.
    """
    if s < 1 or mu1 < 1:
        raise ValueError("need s >= 1 and mu1 >= 1")
    if s == 1:
        return [mu1]
    k1 = _relative_bracket_cost(1, s, eta_surv, eta_fid)
    out = [mu1]
    for b in range(2, s + 1):
        x = mu1 * k1 / _relative_bracket_cost(b, s, eta_surv, eta_fid)
        out.append(max(1, math.ceil(x - 1e-9)))
    return out


def hb_stage_sizes(mu_b: int, n_stages: int, eta_surv: float) -> list[int]:
    """Stage sizes of one bracket as produced by repeated survivor selection."""
    sizes = [mu_b]
    for _ in range(n_stages - 1):
        sizes.append(select_count(sizes[-1], eta_surv))
    return sizes


def interpolate_param(v0: float, v1: float, t: float, mode: str = "linear") -> float:
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if mode == "linear":
        return v0 + t * (v1 - v0)
    if mode == "geometric":
        if v0 <= 0 or v1 <= 0:
            raise ValueError("geometric interpolation needs positive endpoints")
        if v0 == v1:
            return v0
        return v0 ** (1.0 - t) * v1 ** t
    raise ValueError(f"unknown interpolation mode {mode!r}")


def sample_spec_at(spec: OptimizerSpec, t: float) -> SampleSpec:
    """Materialize the time-varying sampling parameters at budget fraction ``t``."""
    t = min(max(t, 0.0), 1.0)
    return SampleSpec(
        filter_method=spec.filter_method,
        rho=min(1.0, max(0.0, interpolate_param(spec.rho_0, spec.rho_1, t, "linear"))),
        ns0=min(1000.0, max(1.0, interpolate_param(spec.ns0_0, spec.ns0_1, t, "geometric"))),
        ns1=min(1000.0, max(1.0, interpolate_param(spec.ns1_0, spec.ns1_1, t, "geometric"))),
        n_trn=min(10, max(1, round_half_up(interpolate_param(spec.n_trn_0, spec.n_trn_1, t, "geometric")))),
        rho_random=spec.rho_random,
        surrogate=spec.surrogate,
        filter_mb=spec.filter_mb,
        generator=spec.generator,
    )


def schedule(spec: OptimizerSpec, r_min: float) -> dict:
    """Static description of the fidelity schedule (brackets, sizes, fidelities)."""
    s = stage_count(spec.eta_fid, r_min)
    if spec.batch_method == "HB":
        mus = hb_batch_sizes(spec.mu, s, spec.eta_surv, spec.eta_fid)
        brackets = []
        for b, mu_b in enumerate(mus, 1):
            fids = [_fidelity(spec.eta_fid, s - b - j) for j in range(s - b + 1)]
            brackets.append({
                "bracket": b,
                "mu": mu_b,
                "fidelities": fids,
                "stage_sizes": hb_stage_sizes(mu_b, len(fids), spec.eta_surv),
            })
    else:
        mus = [spec.mu]
        fids = [_fidelity(spec.eta_fid, s - 1 - j) for j in range(s)]
        sizes = [spec.mu] * s if spec.refill else hb_stage_sizes(spec.mu, s, spec.eta_surv)
        brackets = [{"bracket": 1, "mu": spec.mu, "fidelities": fids, "stage_sizes": sizes}]
    return {"s": s, "mu": mus, "brackets": brackets}


def _fidelity(eta_fid: float, exponent: int) -> float:
    # r = eta_fid ** -exponent, computed directly so grid values are exact powers
    if exponent == 0:
        return 1.0
    return float(eta_fid ** (-exponent))


# ----------------------------------------------------------------------
# main loop


def run(
    spec: OptimizerSpec,
    objective,
    seed: int | np.random.SeedSequence = 0,
    *,
    space: ParamSpace | None = None,
    failure_cost: float = 1e10,
    seed_tag: str | None = None,
    map_fn: Callable = map,
) -> Archive:
    """Run the optimizer until the budget fraction ``t`` reaches 1.

    Sampling randomness and per-evaluation seeds come from two independent
    child streams of ``seed``. ``map_fn`` may dispatch the evaluations of one
    stage concurrently; results are appended in batch order regardless.
    """
    if space is not None and space != objective.space:
        raise SpaceMismatchError("optimizer space does not match the objective's space")
    r_min = objective.r_min
    if not 0.0 < r_min <= 1.0:
        raise SpecError("objective r_min must lie in (0, 1]")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    sample_ss, eval_ss = ss.spawn(2)
    rng = np.random.default_rng(sample_ss)
    eval_rng = np.random.default_rng(eval_ss)
    tag = str(seed) if seed_tag is None else seed_tag
    obj_space = objective.space

    s = stage_count(spec.eta_fid, r_min)
    mus = hb_batch_sizes(spec.mu, s, spec.eta_surv, spec.eta_fid) if spec.batch_method == "HB" else [spec.mu]

    archive = Archive()
    spent = 0.0  # in full-evaluation units
    b = 1
    level = 0  # r = eta_fid ** -level; level 0 is full fidelity
    batch: list[Config] = []
    costs: list[float] = []
    batch_id = -1
    bracket = 1
    stage = 0

    def evaluate(args):
        c, r, eval_seed = args
        try:
            y = float(objective.evaluate(c, r, eval_seed))
        except Exception as e:  # noqa: BLE001 - any objective failure is penalized
            log.warning("evaluation failed (%s); recording penalty cost", e)
            return failure_cost
        return y if not math.isnan(y) else failure_cost

    while spent < spec.budget:
        t = spent / spec.budget
        if level == 0:
            level = s - b
            r = _fidelity(spec.eta_fid, level)
            bracket = b
            mu_b = mus[b - 1] if spec.batch_method == "HB" else spec.mu
            batch = sample(archive, mu_b, r, sample_spec_at(spec, t), obj_space, rng)
            batch_id += 1
            stage = 0
            if spec.batch_method == "HB":
                b = (b % s) + 1
        else:
            level -= 1
            r = _fidelity(spec.eta_fid, level)
            keep = select_top(costs, spec.eta_surv)
            batch = [batch[i] for i in keep]
            stage += 1
            if spec.batch_method == "equal" and spec.refill:
                batch = batch + sample(archive, spec.mu - len(batch), r, sample_spec_at(spec, t), obj_space, rng)
        eval_seeds = eval_rng.integers(0, 2**63 - 1, size=len(batch))
        costs = list(map_fn(evaluate, [(c, r, int(sd)) for c, sd in zip(batch, eval_seeds)]))
        for c, y in zip(batch, costs):
            archive.append(EvalRecord(c, r, y, t, batch_id, bracket, stage, tag))
        spent += r * len(batch)
    return archive
