from __future__ import annotations

import dataclasses
import math

import pytest

from mfhpo.baselines import PRESETS, expected_row, preset, table_row
from mfhpo.objectives import make_numeric7
from mfhpo.optimizer import hb_batch_sizes, run, stage_count


def test_hb_preset_sizes():
    spec = preset("HB", eta=3, r_min=1 / 27)
    s = stage_count(spec.eta_fid, 1 / 27)
    assert s == 4
    assert hb_batch_sizes(spec.mu, s, spec.eta_surv, spec.eta_fid) == [27, 12, 6, 4]


def test_rs_preset_full_fidelity():
    obj = make_numeric7(0)
    a = run(preset("RS", r_min=obj.r_min, budget=15), obj, 0)
    assert len(a) == 15 and all(r.fidelity == 1.0 for r in a)


def test_bohb_differs_from_hb_only_in_model_fields():
    hb = dataclasses.asdict(preset("HB"))
    bohb = dataclasses.asdict(preset("BOHB"))
    changed = {k for k in hb if hb[k] != bohb[k]}
    assert changed <= {"generator", "surrogate", "rho_0", "rho_1", "rho_random",
                       "ns0_0", "ns0_1", "ns1_0", "ns1_1"}
    assert {"generator", "surrogate", "rho_0", "ns0_0"} <= changed


@pytest.mark.parametrize("name", ["RS", "HB", "BOHB"])
@pytest.mark.parametrize("eta,r_min", [(3, 1 / 27), (2, 1 / 32), (4, 1 / 32)])
def test_table_rows(name, eta, r_min):
    assert table_row(preset(name, eta=eta, r_min=r_min), r_min) == expected_row(name, eta, r_min)


def test_sh_single_bracket():
    spec = preset("SH", eta=3, r_min=1 / 27)
    assert spec.batch_method == "equal" and not spec.refill and spec.eta_fid == spec.eta_surv == 3


def test_unknown_preset():
    with pytest.raises(ValueError):
        preset("ASHA")
    assert set(PRESETS) == {"RS", "SH", "HB", "BOHB"}
    assert math.isinf(preset("RS").eta_fid)
