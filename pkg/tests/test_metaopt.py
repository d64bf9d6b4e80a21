from __future__ import annotations

import math

import numpy as np
import pytest

from mfhpo.baselines import preset
from mfhpo.metaopt import (
    VARIANTS, full_space, initial_design_size, meta_archive_from_jsonl, meta_archive_to_jsonl, meta_objective,
    meta_space, restrict, tune,
)
from mfhpo.objectives import make_scenario
from mfhpo.optimizer import OptimizerSpec, stage_count


@pytest.fixture(scope="module")
def numeric7():
    return make_scenario("numeric7")


def test_single_instance_aggregate(numeric7):
    obj = numeric7.train_instances[0]
    res = meta_objective(preset("RS", r_min=obj.r_min), [obj], budget_mult=2, seed=4)
    assert res.aggregate == res.per_instance[0]
    best, median = obj.references()
    assert res.per_instance[0] == pytest.approx((res.raw_costs[0] - best) / (median - best))


def test_meta_objective_deterministic(numeric7):
    g = preset("RS", r_min=1 / 32)
    a = meta_objective(g, numeric7, budget_mult=1, seed=7)
    b = meta_objective(g, numeric7, budget_mult=1, seed=7)
    assert a.per_instance == b.per_instance and a.aggregate == b.aggregate
    assert a.aggregate == pytest.approx(np.mean(a.per_instance))


def test_random_n1_returns_single_point(numeric7):
    calls = []

    def ev(v):
        calls.append(v)
        return 1.0

    best, recs = tune(meta_space(), n_meta_evals=1, method="random", seed=0, evaluate=ev)
    assert len(recs) == 1 and best == calls[0]


def test_bo_degenerate_constant_costs():
    best, recs = tune(meta_space(), n_meta_evals=12, method="bo_lcb", seed=1, evaluate=lambda v: 0.5)
    assert len(recs) == 12
    OptimizerSpec.from_dict(best)
    assert [r.origin for r in recs].count("random") >= 1


def test_initial_design_size():
    assert initial_design_size(17, 100) == 35
    assert initial_design_size(17, 20) == 10
    assert initial_design_size(2, 1) == 1


def test_scale_and_range():
    space = full_space()
    assert space["mu"].scale == "log" and space["eta_fid"].scale == "loglog"
    assert space["eta_surv"].scale == "reciprocal" and math.isinf(space["eta_surv"].upper)
    for v in meta_space().sample(200, np.random.default_rng(0)):
        spec = OptimizerSpec.from_dict(v)
        assert 2 <= spec.mu <= 200 and 2 ** 0.25 - 1e-12 <= spec.eta_fid <= 16
        assert spec.eta_surv >= 1 and 1 <= spec.n_trn_0 <= 10


@pytest.mark.parametrize("variant", VARIANTS)
def test_restriction_masks_hold(variant):
    base = OptimizerSpec(mu=20, batch_method="HB", eta_fid=3, eta_surv=2, rho_0=0.4, rho_1=0.1)
    ms = restrict(meta_space(), variant, base if variant in ("g4", "g5", "g6", "g7") else None)
    for v in ms.sample(100, np.random.default_rng(1)):
        assert ms.satisfies(v)
        OptimizerSpec.from_dict(v)
    again = restrict(ms, variant, base if variant in ("g4", "g5", "g6", "g7") else None)
    assert again.fixed == ms.fixed and again.ties == ms.ties and again.space == ms.space


def test_restriction_examples():
    g1 = restrict(meta_space(), "g1")
    assert math.isinf(g1.fixed["eta_fid"]) and stage_count(g1.fixed["eta_fid"], 1 / 32) == 1
    g5 = restrict(meta_space(), "g5")
    assert g5.fixed["batch_method"] == "equal" and g5.fixed["rho_0"] == g5.fixed["rho_1"] == 0
    g6 = restrict(meta_space(), "g6")
    assert g6.fixed["generator"] == "uniform" and g6.fixed["rho_0"] == 0
    g7 = restrict(meta_space(), "g7")
    assert g7.fixed["mu"] == 32 and g7.budget_factor == 4
    g3 = restrict(meta_space(), "g3")
    v = g3.sample(1, np.random.default_rng(0))[0]
    assert v["filter_method"] == "tournament" and v["n_trn_0"] == v["n_trn_1"] == 1
    assert v["ns0_0"] == v["ns0_1"] == v["ns1_0"] == v["ns1_1"] and v["rho_0"] == v["rho_1"]
    g2 = restrict(meta_space(), "g2")
    v = g2.sample(1, np.random.default_rng(0))[0]
    assert v["n_trn_0"] == v["n_trn_1"] and v["ns0_0"] == v["ns0_1"] and v["ns1_0"] == v["ns1_1"]


def test_g4_sweeps_surrogate_only():
    base = preset("HB")
    ms = restrict(meta_space(), "g4", base)
    assert ms.space.names == ["surrogate"]
    with pytest.raises(ValueError):
        restrict(meta_space(), "g9")


def test_tune_end_to_end_and_archive_roundtrip(numeric7):
    ms = restrict(meta_space(), "g1", preset("HB", r_min=1 / 32))
    ms = restrict(ms, "g2")
    best, recs = tune(ms, [numeric7.train_instances[0]], n_meta_evals=2, method="random", seed=0, budget_mult=1)
    assert isinstance(best, OptimizerSpec)
    back = meta_archive_from_jsonl(meta_archive_to_jsonl(recs))
    assert [r.aggregate for r in back] == [r.aggregate for r in recs]


def test_repeats_are_pooled():
    best, recs = tune(meta_space(), n_meta_evals=3, method="random", seed=0, repeats=3,
                      evaluate=lambda v: v["rho_0"])
    assert len(recs) == 9 and {r.repeat for r in recs} == {0, 1, 2}
    assert best["rho_0"] == min(r.params["rho_0"] for r in recs)
