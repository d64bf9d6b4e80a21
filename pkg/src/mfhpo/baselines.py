"""Classic HPO algorithms expressed as optimizer configurations.

``RS``, ``SH``, ``HB`` and ``BOHB`` are plain :class:`OptimizerSpec` values;
nothing here changes the main loop.
"""
from __future__ import annotations

import math

from .optimizer import OptimizerSpec, hb_batch_sizes, stage_count

PRESETS = ("RS", "SH", "HB", "BOHB")

# BOHB's published defaults: random fraction 1/3, 64 candidates per accepted point
BOHB_RHO = 1.0 / 3.0
BOHB_NS = 64.0

NO_EFFECT = "-"
TABLE_COLUMNS = ("mu", "s", "eta_surv", "eta_fid", "surrogate", "rho", "ns", "batch_method", "generator")


def preset(name: str, eta: float = 3.0, r_min: float = 1.0 / 27, mu1: int | None = None,
           budget: float = 30.0) -> OptimizerSpec:
    """Build the named baseline; ``mu1`` defaults to ``eta^(s-1)`` for the bracketed ones."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    if name == "RS":
        return OptimizerSpec(
            mu=1 if mu1 is None else mu1,
            batch_method="equal",
            eta_fid=math.inf,
            eta_surv=1.0,
            generator="uniform",
            rho_0=1.0,
            rho_1=1.0,
            budget=budget,
        )
    s = stage_count(eta, r_min)
    if mu1 is None:
        mu1 = max(1, math.ceil(eta ** (s - 1) - 1e-9))
    common = dict(mu=mu1, eta_fid=eta, eta_surv=eta, budget=budget, generator="uniform", rho_0=1.0, rho_1=1.0)
    if name == "SH":
        return OptimizerSpec(batch_method="equal", refill=False, **common)
    hb = OptimizerSpec(batch_method="HB", **common)
    if name == "HB":
        return hb
    return hb.replace(
        generator="KDE",
        surrogate="TPE",
        rho_0=BOHB_RHO,
        rho_1=BOHB_RHO,
        rho_random=True,
        ns0_0=BOHB_NS,
        ns0_1=BOHB_NS,
        ns1_0=BOHB_NS,
        ns1_1=BOHB_NS,
    )


def _constant(v0, v1):
    return v0 if v0 == v1 else (v0, v1)


def table_row(spec: OptimizerSpec, r_min: float) -> dict:
    """Project a spec onto the algorithm-table columns.

    Settings that cannot influence the run are shown as ``"-"``: with a single
    stage there is no elimination or bracket structure, and with ``rho = 1``
    the surrogate and filtering rates are never consulted.
    """
    s = stage_count(spec.eta_fid, r_min)
    all_random = spec.rho_0 == 1.0 and spec.rho_1 == 1.0
    single = s == 1
    if single and all_random:
        mu = NO_EFFECT
    elif spec.batch_method == "HB":
        mu = tuple(hb_batch_sizes(spec.mu, s, spec.eta_surv, spec.eta_fid))
    else:
        mu = spec.mu
    ns = NO_EFFECT
    if not all_random:
        ns0 = _constant(spec.ns0_0, spec.ns0_1)
        ns1 = _constant(spec.ns1_0, spec.ns1_1)
        ns = ns0 if ns0 == ns1 else (ns0, ns1)
    return {
        "mu": mu,
        "s": s,
        "eta_surv": NO_EFFECT if single else spec.eta_surv,
        "eta_fid": NO_EFFECT if single else spec.eta_fid,
        "surrogate": NO_EFFECT if all_random else spec.surrogate,
        "rho": _constant(spec.rho_0, spec.rho_1),
        "ns": ns,
        "batch_method": NO_EFFECT if single else spec.batch_method,
        "generator": spec.generator,
    }


def expected_row(name: str, eta: float, r_min: float) -> dict:
    """The algorithm-table row written out by hand from the closed forms."""
    s = int(math.floor(-math.log(r_min) / math.log(eta) + 1e-9)) + 1
    hb_mu = tuple(math.ceil(s * eta ** (s - b) / (s - b + 1) - 1e-9) for b in range(1, s + 1))
    if name == "RS":
        return dict(mu=NO_EFFECT, s=1, eta_surv=NO_EFFECT, eta_fid=NO_EFFECT, surrogate=NO_EFFECT,
                    rho=1.0, ns=NO_EFFECT, batch_method=NO_EFFECT, generator="uniform")
    if name == "HB":
        return dict(mu=hb_mu, s=s, eta_surv=eta, eta_fid=eta, surrogate=NO_EFFECT,
                    rho=1.0, ns=NO_EFFECT, batch_method="HB", generator="uniform")
    if name == "BOHB":
        return dict(mu=hb_mu, s=s, eta_surv=eta, eta_fid=eta, surrogate="TPE",
                    rho=BOHB_RHO, ns=BOHB_NS, batch_method="HB", generator="KDE")
    raise ValueError(f"no table row for {name!r}")
