"""Acceptance checks, one test per criterion.

Each test asserts its own runtime limit. A pass/fail line per criterion is
printed in the terminal summary.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy.stats import binomtest

from mfhpo.archive import Archive
from mfhpo.baselines import expected_row, preset, table_row
from mfhpo.cli import best_so_far, budget_grid, normalized_regret
from mfhpo.metaopt import final_cost, meta_space, normalize, toy_landscape, toy_space, tune
from mfhpo.objectives import make_scenario
from mfhpo.optimizer import OptimizerSpec, hb_batch_sizes, run, schedule, stage_count
from mfhpo.param_space import sample_uniform
from mfhpo.sampler import SampleSpec, generating_distribution, ns_schedule, progressive_select, sample_tournament
from mfhpo.surrogate import samworth_weights

N_SEEDS = 30


@pytest.fixture(scope="module")
def numeric7():
    return make_scenario("numeric7")


class Timer:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.limit, f"took {self.elapsed:.1f} s, limit {self.limit} s"


def mean_regret(spec_for, instances, budget_mult, seed):
    vals = []
    for obj in instances:
        spec = spec_for(obj).replace(budget=budget_mult * obj.dim)
        arch = run(spec, obj, seed)
        vals.append(normalize(final_cost(arch, obj), *obj.references()))
    return float(np.mean(vals))


def sign_test(a, b):
    """One-sided sign test that ``a`` (lower is better) beats ``b``; ties dropped."""
    wins = sum(x < y for x, y in zip(a, b))
    losses = sum(x > y for x, y in zip(a, b))
    return wins, binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue


@pytest.mark.criterion(1, "Hyperband reduction")
def test_criterion_1_hyperband_reduction():
    with Timer(1.0):
        r_min = 1 / 27
        spec = OptimizerSpec(mu=27, batch_method="HB", eta_fid=3, eta_surv=3, rho_0=1, rho_1=1)
        sched = schedule(spec, r_min)
        s = sched["s"]
        assert s == 4 == math.floor(-math.log(r_min) / math.log(3) + 1e-9) + 1
        assert sched["mu"] == [27, 12, 6, 4]
        assert sched["mu"] == [math.ceil(s * 3 ** (s - b) / (s - b + 1)) for b in range(1, s + 1)]
        for b, br in enumerate(sched["brackets"], 1):
            assert br["fidelities"][0] == pytest.approx(3.0 ** (b - 4), rel=0, abs=0)
            assert br["fidelities"][-1] == 1.0
        assert hb_batch_sizes(27, 4, 3, 3) == [27, 12, 6, 4]


@pytest.mark.criterion(2, "algorithm-table field equality")
def test_criterion_2_table_rows():
    with Timer(1.0):
        for name in ("RS", "HB", "BOHB"):
            for eta, r_min in ((3, 1 / 27), (2, 1 / 32), (3, 1 / 32)):
                assert table_row(preset(name, eta=eta, r_min=r_min), r_min) == expected_row(name, eta, r_min)
        # the rows for eta=3, r_min=1/27 written out literally
        literal = {
            "RS": dict(mu="-", s=1, eta_surv="-", eta_fid="-", surrogate="-", rho=1.0, ns="-",
                       batch_method="-", generator="uniform"),
            "HB": dict(mu=(27, 12, 6, 4), s=4, eta_surv=3, eta_fid=3, surrogate="-", rho=1.0, ns="-",
                       batch_method="HB", generator="uniform"),
            "BOHB": dict(mu=(27, 12, 6, 4), s=4, eta_surv=3, eta_fid=3, surrogate="TPE", rho=1 / 3, ns=64.0,
                         batch_method="HB", generator="KDE"),
        }
        for name, row in literal.items():
            assert table_row(preset(name, eta=3, r_min=1 / 27), 1 / 27) == row


@pytest.mark.criterion(3, "budget conservation")
def test_criterion_3_budget_conservation(numeric7):
    obj = numeric7.test_instances[0]
    gammas = meta_space().sample(100, np.random.default_rng(2024))
    with Timer(120.0):
        for g in gammas:
            spec = OptimizerSpec.from_dict(g).replace(budget=2.0 * obj.dim)
            for seed in range(5):
                a = run(spec, obj, seed)
                t = [r.budget_at for r in a]
                assert all(x <= y for x, y in zip(t, t[1:]))
                last_stage = [r for r in a if r.budget_at == t[-1]]
                slack = last_stage[0].fidelity * len(last_stage)
                total = math.fsum(r.fidelity for r in a)
                B = spec.budget
                assert B - 1e-9 <= total <= B + slack + 1e-9


@pytest.mark.criterion(4, "multifidelity anytime advantage (HB vs s=1 and RS, budget 10d)")
def test_criterion_4_multifidelity_advantage(numeric7):
    test = numeric7.test_instances
    with Timer(600.0):
        hb = [mean_regret(lambda o: preset("HB", r_min=o.r_min), test, 10, s) for s in range(N_SEEDS)]
        g1 = [mean_regret(lambda o: preset("HB", r_min=o.r_min).replace(eta_fid=math.inf), test, 10, s)
              for s in range(N_SEEDS)]
        rs = [mean_regret(lambda o: preset("RS", r_min=o.r_min), test, 10, s) for s in range(N_SEEDS)]
    assert np.mean(hb) < np.mean(g1) and np.mean(hb) < np.mean(rs)
    w1, p1 = sign_test(hb, g1)
    w2, p2 = sign_test(hb, rs)
    print(f"HB vs s=1: {w1}/{N_SEEDS} wins p={p1:.4f}; HB vs RS: {w2}/{N_SEEDS} wins p={p2:.4f}")
    assert p1 < 0.05 and p2 < 0.05


@pytest.mark.criterion(5, "surrogate filtering helps (rho 0.3 KNN1 vs rho 1, budget 30d)")
def test_criterion_5_filtering_helps(numeric7):
    test = numeric7.test_instances
    base = OptimizerSpec(mu=32, batch_method="equal", eta_fid=3, eta_surv=3, surrogate="KNN1",
                         rho_0=0.3, rho_1=0.3, ns0_0=10, ns0_1=10, ns1_0=10, ns1_1=10)
    plain = base.replace(rho_0=1.0, rho_1=1.0, generator="uniform")
    with Timer(600.0):
        filt = [mean_regret(lambda o: base, test, 30, s) for s in range(N_SEEDS)]
        rand = [mean_regret(lambda o: plain, test, 30, s) for s in range(N_SEEDS)]
    assert np.mean(filt) < np.mean(rand)
    w, p = sign_test(filt, rand)
    print(f"filtered vs unfiltered: {w}/{N_SEEDS} wins p={p:.4f}")
    assert p < 0.05


@pytest.mark.criterion(6, "sampler oracles")
def test_criterion_6_sampler_oracles(numeric7):
    with Timer(1.0):
        assert ns_schedule(2, 32, 5) == [2, 4, 8, 16, 32]
        assert [i + 1 for i in progressive_select(np.array([9, 1, 5, 7, 2, 8.0]), [2, 4, 6])] == [2, 3, 5]
        obj = numeric7.test_instances[0]
        arch = Archive()
        from mfhpo.archive import EvalRecord

        for c in sample_uniform(obj.space, 20, np.random.default_rng(0)):
            arch.append(EvalRecord(c, 1.0, obj.true_cost(c)))
        for seed in range(5):
            for gen in ("uniform", "KDE"):
                spec = SampleSpec(rho=1.0, ns0=50, ns1=50, generator=gen, min_good=3)
                got = sample_tournament(arch, 9, 1.0, spec, obj.space, np.random.default_rng(seed))
                draw = generating_distribution(gen, arch, obj.space, min_good=3)
                ref = obj.space.decode_many(draw(9, np.random.default_rng(seed)))
                assert [c.key() for c in got] == [c.key() for c in ref]


@pytest.mark.criterion(7, "Samworth weights")
def test_criterion_7_samworth():
    with Timer(1.0):
        for d in (1, 2, 5, 10):
            w = samworth_weights(7, d)
            assert abs(w.sum() - 1.0) <= 1e-9
            assert all(a >= b for a, b in zip(w, w[1:]))
            assert (w >= 0).all()


@pytest.mark.criterion(8, "regret normalization")
def test_criterion_8_regret(numeric7):
    with Timer(1.0):
        assert normalized_regret([1.5, 3.5], (1.5, 3.5)).tolist() == [0.0, 1.0]
        assert normalized_regret([-2.0, 7.0], (-2.0, 7.0)).tolist() == [0.0, 1.0]
        obj = numeric7.test_instances[1]
        arch = run(preset("HB", r_min=obj.r_min, budget=3 * obj.dim), obj, 0)
        best, median = obj.references()
        curve = normalized_regret(best_so_far(arch, budget_grid(3 * obj.dim)), (best, median))
        finite = curve[np.isfinite(curve)]
        assert finite.size and (np.diff(curve[np.isfinite(curve)]) <= 0).all() and (finite >= 0).all()
        # infinities only before the first full-fidelity result
        assert np.isfinite(curve[np.argmax(np.isfinite(curve)):]).all()


@pytest.mark.criterion(9, "meta-tuning sanity (bo_lcb vs random, n=60)")
def test_criterion_9_meta_tuning():
    ms = toy_space()
    with Timer(900.0):
        bo = [min(r.aggregate for r in tune(ms, None, 60, "bo_lcb", s, evaluate=toy_landscape)[1])
              for s in range(10)]
        rnd = [min(r.aggregate for r in tune(ms, None, 60, "random", s, evaluate=toy_landscape)[1])
               for s in range(10)]
    print(f"median best: bo_lcb {np.median(bo):.5f}, random {np.median(rnd):.5f}")
    assert np.median(bo) < np.median(rnd)


@pytest.mark.criterion(10, "determinism")
def test_criterion_10_determinism():
    cases = [
        ("RS", "numeric7", 0), ("HB", "numeric7", 1), ("BOHB", "numeric7", 2), ("SH", "mixed-hier", 3),
        ("BOHB", "mixed-hier", 4), ("HB", "categorical", 5), ("BOHB", "categorical", 6),
    ]
    extra = OptimizerSpec(mu=10, eta_fid=2, eta_surv=2.5, filter_method="progressive", surrogate="RF",
                          rho_0=0.5, rho_1=0.1, ns0_0=3, ns1_1=20, filter_mb=False, generator="KDE")
    with Timer(60.0):
        for name, scen, seed in cases:
            obj = make_scenario(scen).test_instances[0]
            spec = preset(name, r_min=obj.r_min, budget=2 * obj.dim)
            assert run(spec, obj, seed).to_jsonl() == run(spec, obj, seed).to_jsonl()
        obj = make_scenario("mixed-hier").test_instances[0]
        spec = extra.replace(budget=obj.dim)
        assert run(spec, obj, 9).to_jsonl().encode() == run(spec, obj, 9).to_jsonl().encode()
