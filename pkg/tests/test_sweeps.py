import json

import numpy as np
import pytest

from uaad.core_io import LagConfig
from uaad.pipeline import UnsupervisedConfig
from uaad.sweeps import (ABLATION_RUNGS, SweepReport, corrupt_labels, removal_indices,
                         sweep_ablation, sweep_imbalance, sweep_self_leveraging, sweep_window)
from uaad.synth import SynthConfig

CFG = SynthConfig(C=6, duration=420.0, noise_power=40.0)
LAG = LagConfig(L_x=4, L_s=4, S=1, K=2)


def test_corrupt_labels_fraction(rng):
    truth = rng.uniform(size=200) < 0.7
    for p_i in (0.0, 0.3, 0.5, 1.0):
        out = corrupt_labels(truth, p_i, np.random.default_rng(1))
        assert np.mean(out == truth) == pytest.approx(p_i, abs=0.005)


def test_removal_indices(rng):
    truth = np.r_[np.ones(80, bool), np.zeros(20, bool)]
    keep = removal_indices(truth, 0.5, False, rng)
    assert truth[keep].sum() == 40 and (~truth[keep]).sum() == 20
    keep = removal_indices(truth, 0.5, True, rng)
    assert truth[keep].sum() == 40 and (~truth[keep]).sum() == 10
    assert removal_indices(truth, 0.0, True, rng).size == 100


def test_report_shape_check():
    with pytest.raises(ValueError):
        SweepReport("x", "a", [1, 2], [0], {"auc": np.zeros((1, 1))})


def test_singleton_grids():
    sl = sweep_self_leveraging(CFG, [0.9], [0], LAG)
    assert len(sl.axis) == 1 and sl.series["final"].shape == (1, 1)
    w = sweep_window(CFG, [10.0], [0], LAG, n_perm=50)
    assert len(w.axis) == 1 and w.mean("auc").shape == (1,)


def test_one_seed_ablation_gives_five_numbers():
    rep = sweep_ablation(CFG, [0], LAG)
    assert rep.axis == list(ABLATION_RUNGS)
    assert rep.series["auc"].shape == (5, 1)
    assert np.all((rep.series["auc"] >= 0) & (rep.series["auc"] <= 1))


def test_imbalance_zero_removal_identical():
    rep = sweep_imbalance(CFG, [0.0, 0.5], [0, 1], LAG)
    np.testing.assert_array_equal(rep.series["attended_removed"][0],
                                  rep.series["proportional_removed"][0])


def test_window_band_contains_half():
    rep = sweep_window(CFG, [5.0], [0], LAG, n_perm=200)
    assert rep.series["null_lo"][0, 0] < 0.5 < rep.series["null_hi"][0, 0]


def test_deterministic_bytes(tmp_path):
    a = sweep_window(CFG, [5.0, 10.0], [0, 1], LAG, n_perm=50)
    b = sweep_window(CFG, [5.0, 10.0], [0, 1], LAG, n_perm=50)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    a.write(tmp_path / "r")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["config_hash"] == a.config_hash
    head = (tmp_path / "r.csv").read_text().splitlines()[:3]
    assert head[0].startswith("# uaad ") and a.config_hash in head[1]
    assert head[2].startswith("tau,series,mean,std,median,seed_0,seed_1")


def test_summaries_per_axis_value():
    rep = SweepReport("k", "x", [1, 2, 3], [0, 1],
                      {"auc": np.array([[0.5, 0.7], [0.6, 0.6], [0.9, 0.7]])})
    np.testing.assert_allclose(rep.mean(), [0.6, 0.6, 0.8])
    np.testing.assert_allclose(rep.median("auc"), [0.6, 0.6, 0.8])
    assert len(rep.to_csv().splitlines()) == 2 + 1 + 3


def test_self_leveraging_uses_corrupted_start():
    rep = sweep_self_leveraging(CFG, [0.0, 1.0], [0], LAG, ucfg=
                                UnsupervisedConfig(final_discriminative=False, i_max=1))
    first = rep.series["first_iteration"][:, 0]
    assert first[1] > first[0]
