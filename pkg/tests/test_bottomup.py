import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bouth.bottomup import (ProcedureConfig, aggregate_level, driver_mask, propagate_up,
                            run_one_stage, run_two_stage, step_down, thresholds)
from bouth.metrics import TruthModel
from bouth.simulate import sample_leaf_ps
from bouth.stats import make_rng, stouffer_parent_p
from bouth.tree import build_complete, build_from_lineages, from_edges
from treegen import paired_tree, ragged_tree, random_tree, ref_bottom_up

MODES = ("unweighted", "weighted", "least_favorable")


def leaf_array(tree, values):
    p = np.full(tree.n_nodes, np.nan)
    p[tree.leaves] = values
    return p


# ------------------------------------------------------------------ thresholds


def test_threshold_hand_value():
    a = thresholds(4, 0, 0.05, 0.3)
    assert a[0] == pytest.approx(0.0125 / 1.0125, abs=1e-15)
    assert a[0] == pytest.approx(0.012346, abs=5e-7)


def test_threshold_cap():
    assert thresholds(1, 100, 0.05, 0.3)[0] == pytest.approx(0.3, abs=1e-15)


def test_threshold_weighted_hand_value():
    a = thresholds(6, 0, 0.06, 0.3, np.array([1, 1, 1, 1, 2, 3]))
    assert a[4] == pytest.approx(0.072 / 1.072, abs=1e-15)
    assert a[4] == pytest.approx(0.067164, abs=5e-7)


@settings(max_examples=200)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=30), st.integers(0, 50),
       st.floats(1e-4, 0.5), st.floats(0.01, 0.9))
def test_thresholds_ascending_and_capped(w, D, q, tau0):
    w = np.sort(np.array(w))
    for a in (thresholds(len(w), D, q, tau0), thresholds(len(w), D, q, tau0, w)):
        assert np.all(np.diff(a) >= -1e-15)
        assert np.all(a <= tau0 + 1e-15)
        assert np.all(a > 0)


def test_unit_weights_reduce_to_unweighted():
    for n, D in [(1, 0), (7, 3), (40, 0)]:
        assert np.allclose(thresholds(n, D, 0.04, 0.3, np.ones(n)), thresholds(n, D, 0.04, 0.3))


# ------------------------------------------------------------------ step-down


def test_step_down_examples():
    assert step_down([0.001, 0.002, 0.9], [0.01, 0.02, 0.03]) == 2
    assert step_down([0.5, 0.6], [0.01, 0.02]) == 0
    assert step_down([0.001, 0.002], [0.01, 0.02]) == 2
    # a later p below its threshold does not count after a failure
    assert step_down([0.001, 0.05, 0.001], [0.01, 0.02, 0.03]) == 1


def brute_step_down(ps, alpha):
    best = 0
    for k in range(len(ps) + 1):
        if all(ps[j] <= alpha[j] for j in range(k)) and (k == len(ps) or ps[k] > alpha[k]):
            best = k
    return best


def test_step_down_against_definition():
    alpha = thresholds(3, 0, 0.05, 0.3)
    for perm in itertools.permutations([0.005, 0.03, 0.001]):
        ps = sorted(perm)
        assert step_down(ps, alpha) == brute_step_down(ps, alpha)


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_step_down_property(ps):
    ps = sorted(ps)
    alpha = thresholds(len(ps), 0, 0.2, 0.3)
    assert step_down(ps, alpha) == brute_step_down(ps, alpha)


# ------------------------------------------------------------------ propagation and aggregation


def test_propagate_smallest_tree():
    t = build_complete(2, 2)
    det = np.zeros(3, dtype=bool)
    det[t.leaves] = True
    assert propagate_up(t, det).tolist() == [t.root]


def test_propagate_paired_tree_chain():
    t = paired_tree()
    det = np.zeros(t.n_nodes, dtype=bool)
    det[[t.index["N1,11"], t.index["N1,12"]]] = True
    assert [t.ids[i] for i in propagate_up(t, det)] == ["N2,6"]
    det[t.index["N2,6"]] = True
    det[t.index["N2,5"]] = True
    assert [t.ids[i] for i in propagate_up(t, det)] == ["N3,3"]
    for name in ("N3,1", "N3,2"):
        det[t.index[name]] = True
    assert {t.ids[i] for i in propagate_up(t, det)} == {"N3,3", "N4,1"}


def test_aggregate_examples():
    t = build_complete(2, 2)
    det = np.zeros(3, dtype=bool)
    adj = np.full(3, np.nan)
    adj[t.leaves] = (0.65 - 0.3) / 0.7
    assert aggregate_level(t, det, adj, 2)[t.root] == pytest.approx(0.5, abs=1e-12)
    star = from_edges([("r", None, 2), ("a", "r", 1)])
    adj = np.array([np.nan, 0.8])
    assert aggregate_level(star, np.zeros(2, dtype=bool), adj, 2)[0] == pytest.approx(0.8)
    det = np.zeros(3, dtype=bool)
    det[t.leaves] = True
    assert aggregate_level(t, det, adj, 2) == {}


# ------------------------------------------------------------------ one-stage runs


def test_all_null_large_ps():
    t = ragged_tree()
    res = run_one_stage(t, leaf_array(t, 0.99), ProcedureConfig(mode="least_favorable"))
    assert not res.state.detected.any()
    assert not res.reported.any()
    assert 0 < res.state.p_value[t.root] < 1
    _, _, pv = ref_bottom_up(t, leaf_array(t, 0.99), ProcedureConfig().level_targets(t), 0.3,
                             "least_favorable")
    assert res.state.p_value[t.root] == pytest.approx(pv[t.root], rel=1e-12)


def test_smallest_tree_propagation():
    t = build_complete(2, 2)
    p = leaf_array(t, 1e-6)
    res = run_one_stage(t, p, ProcedureConfig(q=0.1))
    assert res.reported.all()
    assert res.state.auto_detected[t.root]
    assert np.flatnonzero(res.driver).tolist() == [t.root]
    assert np.isnan(res.state.p_value[t.root])
    # without weights only the highest node decided by each test is reported
    un = run_one_stage(t, p, ProcedureConfig(q=0.1, mode="unweighted"))
    assert un.reported.sum() == 2 and un.reported[t.root]
    assert un.state.D_cum[0] == 2
    assert res.state.D_cum[0] == 3


def test_missing_leaf_p():
    t = build_complete(2, 2)
    p = leaf_array(t, 0.5)
    p[t.leaves[0]] = np.nan
    with pytest.raises(ValueError):
        run_one_stage(t, p, ProcedureConfig())
    p[t.leaves[0]] = 1.5
    with pytest.raises(ValueError):
        run_one_stage(t, p, ProcedureConfig())


def test_binary_c2_matches_reference():
    t = build_complete(2, 10)
    rng = make_rng(2024, 0)
    truth = TruthModel.from_drivers(t, np.sort(rng.choice(t.members(4), 10, replace=False)))
    p = sample_leaf_ps(t, truth, "beta", 4.0, make_rng(2024, 1))
    cfg = ProcedureConfig(q=0.10, mode="weighted")
    res = run_one_stage(t, p, cfg)
    det, rep, pv = ref_bottom_up(t, p, cfg.level_targets(t), 0.3, "weighted")
    assert set(np.flatnonzero(res.state.detected).tolist()) == det
    assert set(np.flatnonzero(res.reported).tolist()) == rep
    assert len(det) > 10
    for k, v in pv.items():
        assert res.state.p_value[k] == pytest.approx(v, rel=1e-9, abs=1e-14)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(MODES), st.booleans())
def test_random_trees_match_reference(seed, mode, complete):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, max_leaves=int(rng.integers(2, 30)), complete=complete)
    p = leaf_array(t, rng.random(len(t.leaves)) ** rng.choice([1, 4, 12]))
    cfg = ProcedureConfig(q=0.3, mode=mode)
    res = run_one_stage(t, p, cfg)
    det, rep, pv = ref_bottom_up(t, p, cfg.level_targets(t), 0.3, mode)
    assert set(np.flatnonzero(res.state.detected).tolist()) == det
    assert set(np.flatnonzero(res.reported).tolist()) == rep
    for k, v in pv.items():
        assert res.state.p_value[k] == pytest.approx(v, rel=1e-9, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(MODES))
def test_report_consistency(seed, mode):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, max_leaves=25)
    p = leaf_array(t, rng.random(len(t.leaves)) ** 6)
    res = run_one_stage(t, p, ProcedureConfig(q=0.3, mode=mode))
    st_ = res.state
    for i in np.flatnonzero(st_.auto_detected):
        assert all(st_.detected[c] for c in t.children[i])
        assert not st_.rejected[i]
    for i in np.flatnonzero(res.driver):
        assert not any(res.reported[a] for a in t.ancestors(i))
    assert np.all(np.diff(st_.D_cum) >= 0)
    assert np.array_equal(driver_mask(t, res.reported), res.driver)
    assert not (res.reported & ~st_.detected).any()
    for lev, a in st_.schedules.items():
        assert np.all(np.diff(a) >= -1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 10**6))
def test_level_one_detection_monotone(seed, which):
    rng = np.random.default_rng(seed)
    t = build_complete(int(rng.integers(2, 4)), int(rng.integers(2, 5)))
    p = leaf_array(t, rng.random(len(t.leaves)) ** 5)
    cfg = ProcedureConfig(q=0.3, mode="unweighted")
    before = run_one_stage(t, p, cfg).state
    leaf = t.leaves[which % len(t.leaves)]
    p2 = p.copy()
    p2[leaf] *= rng.random()
    after = run_one_stage(t, p2, cfg).state
    lost = before.rejected & (before.decided_at == 1) & ~(after.rejected & (after.decided_at == 1))
    assert not lost.any()


def test_config_validation():
    with pytest.raises(ValueError):
        ProcedureConfig(q=1.2)
    with pytest.raises(ValueError):
        ProcedureConfig(tau0=0)
    with pytest.raises(ValueError):
        ProcedureConfig(mode="other")
    with pytest.raises(ValueError):
        ProcedureConfig(mode="unweighted", two_stage=(0.05, 0.05))
    with pytest.raises(ValueError):
        ProcedureConfig(two_stage=(0.0, 0.05))
    t = build_complete(2, 4)
    q = ProcedureConfig(q=0.1).level_targets(t)
    assert q.sum() == pytest.approx(0.1)
    assert np.allclose(q, 0.1 * t.level_sizes / t.n_nodes)
    with pytest.raises(ValueError):
        ProcedureConfig(level_split=(0.1,)).level_targets(t)
    with pytest.raises(ValueError):
        run_one_stage(t, leaf_array(t, 0.5), ProcedureConfig(two_stage=(0.05, 0.05)))


# ------------------------------------------------------------------ two-stage


def test_two_stage_split_targets():
    t = build_complete(10, 4)
    q = ProcedureConfig(two_stage=(0.05, 0.05)).level_targets(t)
    assert q[0] == 0.05
    assert q[1:].sum() == pytest.approx(0.05)
    assert np.allclose(q[1:], 0.05 * t.level_sizes[1:] / t.level_sizes[1:].sum())


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_two_stage_matches_reference(seed):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, max_leaves=int(rng.integers(2, 30)))
    p = leaf_array(t, rng.random(len(t.leaves)) ** rng.choice([1, 6]))
    cfg = ProcedureConfig(two_stage=(0.1, 0.1))
    res = run_two_stage(t, p, cfg)
    det, rep, _ = ref_bottom_up(t, p, cfg.level_targets(t), 0.3, "weighted",
                                reset_after_leaves=True)
    assert set(np.flatnonzero(res.stage1 | res.stage2).tolist()) == rep
    assert not (res.stage1 & res.stage2).any()
    assert res.state.D_cum[0] == 0


def test_two_stage_null_leaves():
    t = build_complete(3, 3)
    p = leaf_array(t, 0.99)
    cfg = ProcedureConfig(two_stage=(0.05, 0.05))
    res = run_two_stage(t, p, cfg)
    assert not (res.stage1 | res.stage2).any()
    cut = res.state.schedules[1][0]
    assert res.state.alpha_cut[0] == cut
    for g in t.members(2):
        kids = [p[c] for c in t.children[g]]
        want = stouffer_parent_p([(x - cut) / (1 - cut) for x in kids])
        assert res.state.p_value[g] == pytest.approx(want, rel=1e-12)


def test_two_stage_singleton_taxa_go_to_stage_one():
    rows = [("solo", ["K", "P1", "C1"], 1e-8)]
    rows += [(f"o{i}", ["K", "P2", f"C{2 + i % 3}"], 0.05 + 0.03 * i) for i in range(30)]
    t, p = build_from_lineages(rows)
    res = run_two_stage(t, p, ProcedureConfig(two_stage=(0.05, 0.05)))
    s1 = {t.ids[i] for i in np.flatnonzero(res.stage1)}
    assert {"solo", "K;P1;C1", "K;P1"} <= s1
    assert not res.stage2.any()
    assert res.stage(1).driver[t.index["K;P1"]]
