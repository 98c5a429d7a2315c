import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bouth.bottomup import DetectionState, ProcedureConfig, run_one_stage
from bouth.metrics import (TruthModel, error_rates, false_fraction, pinpoint_rate, replay,
                           truth_conjunction, truth_global, truth_modified, weighted_jaccard)
from bouth.tree import build_complete
from treegen import paired_tree, random_tree


def names(t, mask):
    return {t.ids[i] for i in np.flatnonzero(mask)}


def test_truth_global_and_conjunction():
    t = paired_tree()
    truth = TruthModel.from_drivers(t, [t.index["N2,1"], t.index["N1,5"]])
    assert names(t, truth.associated_leaves) == {"N1,1", "N1,2", "N1,5"}
    g = truth_global(t, truth)
    assert names(t, g) == {"N1,1", "N1,2", "N1,5", "N2,1", "N2,3", "N3,1", "N3,2", "N4,1"}
    c = truth_conjunction(t, truth)
    assert names(t, c) == {"N1,1", "N1,2", "N1,5", "N2,1"}
    with pytest.raises(ValueError):
        TruthModel.from_drivers(t, [t.index["N2,1"], t.index["N1,1"]])


def test_modified_truth_paired_tree_narrative():
    # N2,1 associated and detected; N2,2 not associated is the only undetected child of N3,1
    t = paired_tree()
    truth = TruthModel.from_drivers(t, [t.index["N2,1"]])
    st_ = DetectionState.empty(t)
    for n in ("N1,1", "N1,2", "N2,1"):
        st_.detected[t.index[n]] = True
    st_.auto_detected[t.index["N2,1"]] = True
    st_.trigger[t.index["N2,1"]] = t.index["N1,2"]
    st_.p_value[t.leaves] = 0.5
    tested2 = [t.index[f"N2,{k}"] for k in range(2, 7)]
    st_.p_value[tested2] = 0.5
    st_.p_value[[t.index["N3,1"], t.index["N3,2"], t.index["N3,3"], t.index["N4,1"]]] = 0.5
    mod = truth_modified(t, truth, st_)
    assert not mod[t.index["N3,1"]]
    assert truth_global(t, truth)[t.index["N3,1"]]
    assert mod[t.index["N2,1"]]


def test_modified_equals_global_without_detections():
    t = build_complete(3, 4)
    rng = np.random.default_rng(1)
    truth = TruthModel.from_drivers(t, rng.choice(t.leaves, 7, replace=False))
    st_ = DetectionState.empty(t)
    st_.p_value[:] = 0.5
    assert np.array_equal(truth_modified(t, truth, st_), truth_global(t, truth))


def test_auto_detected_inherits_trigger():
    t = build_complete(2, 2)
    a, b = t.leaves
    truth = TruthModel.from_drivers(t, [a])
    st_ = replay(t, np.ones(3, dtype=bool), np.array([np.nan, 0.01, 0.02]))
    mod = truth_modified(t, truth, st_)
    # the second leaf completes the root; it is null, so the root counts as false
    trig = st_.trigger[t.root]
    assert trig == b
    assert mod[t.root] == mod[b] == False  # noqa: E712
    assert st_.weight[b] == 2 and st_.D_cum[0] == 3


def test_trace_shape_checked():
    t = build_complete(2, 2)
    truth = TruthModel.from_drivers(t, [t.root])
    with pytest.raises(ValueError):
        truth_modified(t, truth, DetectionState.empty(build_complete(2, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["unweighted", "weighted", "least_favorable"]))
def test_null_ordering(seed, mode):
    rng = np.random.default_rng(seed)
    t = random_tree(rng, max_leaves=25)
    k = int(rng.integers(1, 4))
    leaves = rng.choice(t.leaves, min(k, len(t.leaves)), replace=False)
    truth = TruthModel.from_drivers(t, leaves)
    p = np.full(t.n_nodes, np.nan)
    p[t.leaves] = rng.random(len(t.leaves)) ** 4
    p[leaves] = rng.random(len(leaves)) ** 20
    res = run_one_stage(t, p, ProcedureConfig(q=0.3, mode=mode))
    g, c = truth_global(t, truth), truth_conjunction(t, truth)
    m = truth_modified(t, truth, res.state)
    # non-null sets nest: conjunction inside modified inside global
    assert not (c & ~m).any()
    assert not (m & ~g).any()
    er = error_rates(t, truth, res.reported, res.state, weighted=False)
    assert er.FDR <= er.FAR + 1e-12 <= er.FDRc + 2e-12


def test_error_rates_edge_cases():
    t = build_complete(2, 3)
    truth = TruthModel.from_drivers(t, [t.members(2)[0]])
    st_ = replay(t, np.zeros(t.n_nodes, dtype=bool), np.full(t.n_nodes, 0.5))
    er = error_rates(t, truth, np.zeros(t.n_nodes, dtype=bool), st_)
    assert (er.FAR, er.FDR, er.FDRc) == (0.0, 0.0, 0.0)
    one = np.zeros(t.n_nodes, dtype=bool)
    one[t.members(2)[0]] = True
    assert false_fraction(one, truth_conjunction(t, truth)) == 0.0


def test_replay_weights_and_levels():
    t = paired_tree()
    det = np.zeros(t.n_nodes, dtype=bool)
    for n in ("N1,11", "N1,12", "N2,5", "N2,6", "N3,3"):
        det[t.index[n]] = True
    p = np.full(t.n_nodes, 0.5)
    st_ = replay(t, det, p)
    assert st_.auto_detected[t.index["N2,6"]]
    assert st_.auto_detected[t.index["N3,3"]]
    assert st_.rejected[t.index["N2,5"]]
    assert st_.weight[t.index["N2,5"]] == 2
    assert st_.d_star.tolist() == [2, 1, 0, 0]
    assert st_.D_cum.tolist() == [3, 5, 5, 5]


def test_jaccard():
    t = build_complete(2, 2)
    a, b = t.leaves
    full = np.ones(3, dtype=bool)
    only_a = np.zeros(3, dtype=bool)
    only_a[a] = True
    only_b = np.zeros(3, dtype=bool)
    only_b[b] = True
    empty = np.zeros(3, dtype=bool)
    assert weighted_jaccard(t, full, full) == 1.0
    assert weighted_jaccard(t, only_a, only_b) == 0.0
    assert weighted_jaccard(t, only_a, full) == 0.25
    assert weighted_jaccard(t, empty, empty) == 1.0


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_jaccard_symmetric(seed):
    rng = np.random.default_rng(seed)
    t = build_complete(3, 3)
    x, y = rng.random((2, t.n_nodes)) < 0.3
    assert weighted_jaccard(t, x, y) == weighted_jaccard(t, y, x)
    assert 0 <= weighted_jaccard(t, x, y) <= 1


def test_pinpoint():
    t = build_complete(2, 3)
    d = t.members(2)
    truth = TruthModel.from_drivers(t, d)
    det = np.zeros(t.n_nodes, dtype=bool)
    det[d] = True
    assert pinpoint_rate(t, det, truth) == 1.0
    det[t.root] = True
    assert pinpoint_rate(t, det, truth) == 0.0
    det[:] = False
    det[d[0]] = True
    assert pinpoint_rate(t, det, truth) == 0.5


def test_conjunction_truth_is_driver_subtrees():
    t = build_complete(3, 4)
    drivers = [t.members(3)[0], t.members(2)[5], t.leaves[-1]]
    truth = TruthModel.from_drivers(t, drivers)
    want = set()
    for d in drivers:
        want |= {d, *t.descendants(d)}
    assert set(np.flatnonzero(truth_conjunction(t, truth)).tolist()) == want
