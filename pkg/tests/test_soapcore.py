import numpy as np
import pytest

from soapnas import cellspace as cs
from soapnas import soapcore as sc
from soapnas import supernet as sn
from soapnas import synthroute as sr
from soapnas.errors import BadConfig, InsufficientData
from soapnas.rng import root

SPACE = cs.SpaceConfig()


def rec(h, value, arch="2;1;", source="0"):
    return sc.PerfRecord(arch_hash=h, arch=arch, auc=value, source=source)


def make_sets(values_by_set):
    """values_by_set: list of dicts hash -> auc."""
    sets = []
    for sid, values in enumerate(values_by_set):
        sets.append(
            sc.CandidateSet(
                supernet_id=sid,
                records=[rec(h, v, source=str(sid)) for h, v in values.items()],
            )
        )
    return sets


def test_candidate_set_rejects_duplicates():
    with pytest.raises(BadConfig):
        sc.CandidateSet(supernet_id=0, records=[rec("a", 0.5), rec("a", 0.6)])


def test_merge_keeps_top_value_of_repeated_cells():
    sets = make_sets([{"a": 0.80, "b": 0.70}, {"a": 0.90, "c": 0.60}])
    merged = sc.merge_smoothed(sets)
    assert [r.arch_hash for r in merged.records] == ["a"]
    assert merged.records[0].auc == 0.90
    assert merged.records[0].source == sc.SMOOTHED_SOURCE
    assert merged.provenance["a"] == (0, 1)


def test_merge_singleton_flag():
    sets = make_sets([{"a": 0.80, "b": 0.70}, {"a": 0.90, "c": 0.60}])
    merged = sc.merge_smoothed(sets, include_singletons=True)
    assert [r.arch_hash for r in merged.records] == ["a", "b", "c"]
    assert merged.records[1].auc == 0.70


def test_merge_equal_values_across_all_sets():
    sets = make_sets([{"a": 0.8}, {"a": 0.8}, {"a": 0.8}])
    merged = sc.merge_smoothed(sets)
    assert merged.records[0].auc == 0.8
    assert merged.provenance["a"] == (0, 1, 2)


def test_merge_values_upper_bound_contributions():
    rng = root(1).child("m").generator()
    values_by_set = []
    for _ in range(4):
        values_by_set.append({h: float(rng.uniform(0.4, 1.0)) for h in "abcdef"})
    merged = sc.merge_smoothed(make_sets(values_by_set))
    for r in merged.records:
        for vals in values_by_set:
            if r.arch_hash in vals:
                assert r.auc >= vals[r.arch_hash] - 1e-15


def test_merge_idempotent_on_own_output():
    sets = make_sets([{"a": 0.8, "b": 0.7}, {"a": 0.9, "b": 0.6}])
    merged = sc.merge_smoothed(sets)
    again = sc.merge_smoothed(
        [sc.CandidateSet(supernet_id=0, records=merged.records)], include_singletons=True
    )
    assert [(r.arch_hash, r.auc) for r in again.records] == [
        (r.arch_hash, r.auc) for r in merged.records
    ]


def test_noise_model_basic_arithmetic():
    model = sc.estimate_noise_model([[0.9, 1.0]])
    assert abs(model.mean - 0.95) <= 1e-12
    assert abs(model.variance - 0.005) <= 1e-12


def test_noise_model_identical_values():
    model = sc.estimate_noise_model([[0.7, 0.7, 0.7], [0.9, 0.9]])
    assert model.variance == 0.0


def test_noise_model_shift_invariant_variance():
    groups = [[0.1, 0.3, 0.2], [0.5, 0.9]]
    shifted = [[v + 0.05 for v in g] for g in groups]
    a = sc.estimate_noise_model(groups)
    b = sc.estimate_noise_model(shifted)
    assert abs(a.variance - b.variance) <= 1e-12


def test_noise_model_insufficient_data():
    with pytest.raises(InsufficientData):
        sc.estimate_noise_model([])
    with pytest.raises(InsufficientData):
        sc.estimate_noise_model([[0.5], [0.6]])


def test_augment_identity_and_zero_variance():
    records = [rec("a", 0.8), rec("b", 0.6)]
    ds = sc.SmoothedDataset(records=records)
    noise = sc.NoiseModel(mean=0.7, variance=0.0, n_groups=1, n_samples=2)
    out = sc.augment(ds, 1, noise, root(0).child("a"))
    assert out == records
    out = sc.augment(ds, 3, noise, root(0).child("a"))
    assert len(out) == 6
    assert out[:2] == records
    by_hash = {r.arch_hash: r.auc for r in records}
    for extra in out[2:]:
        assert extra.auc == by_hash[extra.arch_hash]
        assert extra.source == sc.AUGMENTED_SOURCE


def test_augment_deterministic_and_bounded():
    records = [rec(h, v) for h, v in [("a", 0.95), ("b", 0.5), ("c", 0.05)]]
    ds = sc.SmoothedDataset(records=records)
    noise = sc.NoiseModel(mean=0.5, variance=0.04, n_groups=3, n_samples=9)
    out1 = sc.augment(ds, 7, noise, root(5).child("a"))
    out2 = sc.augment(ds, 7, noise, root(5).child("a"))
    assert out1 == out2
    assert len(out1) == 21
    assert out1[:3] == records
    assert all(0.0 <= r.auc <= 1.0 for r in out1)


def test_augment_preserves_mean_within_statistical_bound():
    # over 100 seeds the augmented mean stays within 4*sigma/sqrt(x*n) of
    # the original mean (clipping bias is negligible at these values)
    records = [rec(h, v) for h, v in [("a", 0.55), ("b", 0.5), ("c", 0.45), ("d", 0.6)]]
    ds = sc.SmoothedDataset(records=records)
    noise = sc.NoiseModel(mean=0.5, variance=0.0025, n_groups=4, n_samples=16)
    orig_mean = np.mean([r.auc for r in records])
    x = 7
    bound = 4 * np.sqrt(noise.variance) / np.sqrt(x * len(records))
    hits = 0
    for seed in range(100):
        out = sc.augment(ds, x, noise, root(seed).child("aug"))
        if abs(np.mean([r.auc for r in out]) - orig_mean) <= bound:
            hits += 1
    assert hits >= 99


def test_augment_bad_config():
    ds = sc.SmoothedDataset(records=[rec("a", 0.5)])
    noise = sc.NoiseModel(mean=0.5, variance=0.01, n_groups=1, n_samples=2)
    with pytest.raises(BadConfig):
        sc.augment(ds, 0, noise, root(0).child("a"))
    with pytest.raises(BadConfig):
        sc.augment(sc.SmoothedDataset(records=[]), 2, noise, root(0).child("a"))


def test_sample_plan_pool_size():
    plan = sc.SamplePlan(n_per_set=60, overlap=0.5)
    assert plan.pool_size == 30
    with pytest.raises(BadConfig):
        sc.SamplePlan(n_per_set=0, overlap=0.5)
    with pytest.raises(BadConfig):
        sc.SamplePlan(n_per_set=10, overlap=1.5)


@pytest.fixture(scope="module")
def tiny_setup():
    ds = sr.generate(seed=21, n_maps=40, height=12, width=12, hotspot_quantile=0.1)
    ds = sr.split(ds, (0.5, 0.25, 0.25), seed=21)
    macro = sn.MacroConfig(channels=8, n_cells=1, calibration_maps=4)
    nets = [sn.CellNetwork.build_supernet(SPACE, macro, seed=s) for s in (0, 1)]
    return ds, nets


def test_build_candidate_sets_full_overlap(tiny_setup):
    ds, nets = tiny_setup
    plan = sc.SamplePlan(n_per_set=5, overlap=1.0)
    sets = sc.build_candidate_sets(nets, ds, plan, root(2).child("sets"))
    assert len(sets) == 2
    hashes0 = {r.arch_hash for r in sets[0].records}
    hashes1 = {r.arch_hash for r in sets[1].records}
    assert hashes0 == hashes1
    assert len(hashes0) == 5
    # values come from different supernets, so they differ in general
    assert [r.source for r in sets[0].records] == ["0"] * 5


def test_build_candidate_sets_zero_overlap_and_pinned(tiny_setup):
    ds, nets = tiny_setup
    pinned = (cs.CellArchitecture(2, ((0, 1),), ()),)
    plan = sc.SamplePlan(n_per_set=4, overlap=0.5, pinned=pinned)
    sets = sc.build_candidate_sets(nets, ds, plan, root(3).child("sets"))
    pinned_hash = cs.arch_hash(pinned[0], SPACE)
    for cset in sets:
        assert pinned_hash in {r.arch_hash for r in cset.records}
        assert len(cset.records) == 4
    plan0 = sc.SamplePlan(n_per_set=4, overlap=0.0)
    sets0 = sc.build_candidate_sets(nets, ds, plan0, root(4).child("sets"))
    assert len(sets0[0].records) == 4


def test_build_candidate_sets_deterministic(tiny_setup):
    ds, nets = tiny_setup
    plan = sc.SamplePlan(n_per_set=3, overlap=0.5)
    a = sc.build_candidate_sets(nets, ds, plan, root(6).child("x"))
    b = sc.build_candidate_sets(nets, ds, plan, root(6).child("x"))
    assert a == b
