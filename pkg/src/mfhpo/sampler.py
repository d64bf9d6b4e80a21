"""Candidate generation: generating distributions and surrogate-filtered sampling.

Everything here works on encoded rows internally; configurations are decoded
only for the points that are actually returned.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .archive import Archive
from .kde import ProductKDE
from .param_space import Config, ParamSpace
from .surrogate import KINDS as SURROGATE_KINDS
from .surrogate import GOOD_FRACTION, InductionError, induce

log = logging.getLogger(__name__)

FILTER_METHODS = ("tournament", "progressive")
GENERATORS = ("uniform", "KDE")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SampleSpec:
    filter_method: str = "tournament"
    rho: float = 1.0
    ns0: float = 1.0
    ns1: float = 1.0
    n_trn: int = 1
    rho_random: bool = False
    surrogate: str = "KNN1"
    filter_mb: bool = True
    generator: str = "uniform"
    good_fraction: float = GOOD_FRACTION
    min_good: int | None = None

    def __post_init__(self) -> None:
        if self.filter_method not in FILTER_METHODS:
            raise ValueError(f"unknown filter_method {self.filter_method!r}")
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generating distribution {self.generator!r}")
        if self.surrogate not in SURROGATE_KINDS:
            raise ValueError(f"unknown surrogate {self.surrogate!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if not (1.0 <= self.ns0 <= 1000.0 and 1.0 <= self.ns1 <= 1000.0):
            raise ValueError("filtering rates must lie in [1, 1000]")
        if not (1 <= self.n_trn <= 10):
            raise ValueError("n_trn must lie in {1, ..., 10}")


def interleave_count(mu: int, rho: float, rho_random: bool, rng: np.random.Generator) -> int:
    """How many of ``mu`` points are drawn without surrogate filtering."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if rho_random and 0.0 < rho < 1.0:
        return int(rng.binomial(mu, rho))
    return min(mu, round_half_up(rho * mu))


def ns_schedule(ns0: float, ns1: float, n: int) -> list[int]:
    """Per-position filtering rates, geometrically interpolated between the endpoints."""
    if n < 1:
        raise ValueError("n must be >= 1")
    # interpolate in log space so that the sequence is exactly monotone
    la, lb = math.log(ns0), math.log(ns1)
    if n == 1:
        return [max(1, _round_tol(math.exp((la + lb) / 2)))]
    return [max(1, _round_tol(math.exp(la + (i - 1) / (n - 1) * (lb - la)))) for i in range(1, n + 1)]


def _round_tol(x: float) -> int:
    # half-up rounding that is not thrown off by one-ulp errors at .5
    return int(math.floor(x + 0.5 + 1e-9))


def top_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` lowest scores, ties to the earlier index."""
    return np.argsort(scores, kind="stable")[:k]


def progressive_select(scores: np.ndarray, prefixes: list[int]) -> list[int]:
    """Pick, for each prefix length, the best not-yet-selected pool entry within it."""
    work = np.array(scores, dtype=float)
    taken = np.zeros(len(work), dtype=bool)
    out = []
    for p in prefixes:
        cand = np.flatnonzero(~taken[:p])
        if cand.size == 0:
            raise ValueError(f"prefix {p} holds no unselected point")
        # first minimum wins ties
        j = int(cand[np.argmin(work[cand])])
        taken[j] = True
        out.append(j)
    return out


# ----------------------------------------------------------------------
# generating distributions

Generator = Callable[[int, np.random.Generator], np.ndarray]


def generating_distribution(
    kind: str,
    archive: Archive,
    space: ParamSpace,
    good_fraction: float = GOOD_FRACTION,
    min_good: int | None = None,
) -> Generator:
    """Return ``draw(n, rng) -> encoded rows``.

    The KDE distribution is fitted to the good points of the archive and falls
    back to uniform sampling while fewer than ``min_good`` distinct configs
    have been evaluated.
    """
    if kind == "uniform":
        return space.sample_encoded
    if kind != "KDE":
        raise ValueError(f"unknown generating distribution {kind!r}")
    if min_good is None:
        min_good = space.dim + 1
    if len(archive) == 0 or archive.n_distinct() < min_good:
        return space.sample_encoded
    good_idx, _ = archive.split_indices(good_fraction, min_good)
    kde = ProductKDE(
        archive.encoded(space)[good_idx],
        space.is_categorical,
        np.array([p.n_levels for p in space.params]),
    )

    def draw(n: int, rng: np.random.Generator) -> np.ndarray:
        if n == 0:
            return np.empty((0, space.dim))
        raw = kde.sample(n, rng)
        # values for children that the sampled parents newly activate
        fill = _fill_all_axes(space, n, rng) if (raw < 0).any() else None
        return space.resolve_activity(raw, fill)

    return draw


def _fill_all_axes(space: ParamSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    X = np.empty((n, space.dim))
    for i, p in enumerate(space.params):
        X[:, i] = p.sample_unit(n, rng)
    return X


# ----------------------------------------------------------------------
# filtered sampling


def _surrogate_scorer(archive, space, spec: SampleSpec, r, rng):
    seed = int(rng.integers(2**31 - 1)) if spec.surrogate == "RF" else 0
    try:
        model = induce(
            spec.surrogate, archive, space, spec.filter_mb, seed,
            good_fraction=spec.good_fraction, min_good=spec.min_good,
        )
    except InductionError as e:
        log.debug("surrogate unavailable (%s); sampling unfiltered", e)
        return None
    return lambda X: model.predict(X, r)


def sample_tournament_encoded(archive, mu, r, spec: SampleSpec, space, rng) -> np.ndarray:
    draw = generating_distribution(spec.generator, archive, space, spec.good_fraction, spec.min_good)
    n_free = interleave_count(mu, spec.rho, spec.rho_random, rng)
    parts = [draw(n_free, rng)]
    remaining = mu - n_free
    if remaining > 0:
        score = _surrogate_scorer(archive, space, spec, r, rng)
        if score is None:
            parts.append(draw(remaining, rng))
        else:
            n_rounds = math.ceil(remaining / spec.n_trn)
            for ns in ns_schedule(spec.ns0, spec.ns1, n_rounds):
                cand = draw(spec.n_trn * ns, rng)
                keep = min(spec.n_trn, remaining)
                parts.append(cand[top_indices(score(cand), keep)])
                remaining -= keep
    return np.vstack(parts)


def sample_progressive_encoded(archive, mu, r, spec: SampleSpec, space, rng) -> np.ndarray:
    draw = generating_distribution(spec.generator, archive, space, spec.good_fraction, spec.min_good)
    n_free = interleave_count(mu, spec.rho, spec.rho_random, rng)
    parts = [draw(n_free, rng)]
    m = mu - n_free
    if m > 0:
        score = _surrogate_scorer(archive, space, spec, r, rng)
        if score is None:
            parts.append(draw(m, rng))
        else:
            pool = draw(m * max(math.ceil(spec.ns0), math.ceil(spec.ns1)), rng)
            scores = score(pool)
            prefixes = [min(len(pool), i * ns) for i, ns in enumerate(ns_schedule(spec.ns0, spec.ns1, m), 1)]
            parts.append(pool[progressive_select(scores, prefixes)])
    return np.vstack(parts)


def sample_encoded(archive, mu, r, spec: SampleSpec, space, rng) -> np.ndarray:
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0:
        return np.empty((0, space.dim))
    fn = sample_tournament_encoded if spec.filter_method == "tournament" else sample_progressive_encoded
    return fn(archive, mu, r, spec, space, rng)


def sample_tournament(archive: Archive, mu: int, r: float, spec: SampleSpec, space: ParamSpace,
                      rng: np.random.Generator) -> list[Config]:
    return space.decode_many(sample_tournament_encoded(archive, mu, r, spec, space, rng))


def sample_progressive(archive: Archive, mu: int, r: float, spec: SampleSpec, space: ParamSpace,
                       rng: np.random.Generator) -> list[Config]:
    return space.decode_many(sample_progressive_encoded(archive, mu, r, spec, space, rng))


def sample(archive: Archive, mu: int, r: float, spec: SampleSpec, space: ParamSpace,
           rng: np.random.Generator) -> list[Config]:
    """Dispatch on ``spec.filter_method``; returns exactly ``mu`` configs."""
    if mu == 0:
        return []
    return space.decode_many(sample_encoded(archive, mu, r, spec, space, rng))
