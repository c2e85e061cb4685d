import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ifseg.data import one_hot
from ifseg.metrics import ConfusionCounts, accuracy, confusion, dice, iou, report, soft_dice

from conftest import set_oracle


masks = st.integers(1, 5).flatmap(
    lambda c: st.tuples(st.just(c), st.integers(1, 6), st.integers(1, 6)).flatmap(
        lambda t: st.tuples(
            st.just(t[0]),
            arrays(np.int64, (t[1], t[2]), elements=st.integers(0, t[0] - 1)),
            arrays(np.int64, (t[1], t[2]), elements=st.integers(0, t[0] - 1)),
        )))


# ---------------------------------------------------------------- examples


def test_confusion_hand_count():
    cm = confusion(np.array([[0, 1], [1, 1]]), np.array([[0, 0], [1, 1]]), 2)
    np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])
    assert accuracy(cm) == 0.75
    assert cm.num_pixels == 4


def test_confusion_perfect_and_empty_class():
    m = np.array([[0, 1], [2, 2]])
    cm = confusion(m, m, 4)
    assert np.count_nonzero(cm.counts - np.diag(np.diag(cm.counts))) == 0
    np.testing.assert_array_equal(cm.counts[3], 0)
    assert accuracy(cm) == 1.0


def test_confusion_rejects_bad_inputs():
    with pytest.raises(ValueError, match="shape"):
        confusion(np.zeros((2, 2)), np.zeros((2, 3)), 2)
    with pytest.raises(ValueError, match="labels"):
        confusion(np.array([2]), np.array([0]), 2)
    with pytest.raises(ValueError, match="empty"):
        accuracy(ConfusionCounts.empty(3))


def test_all_wrong_two_class():
    cm = confusion(np.array([1, 0, 1]), np.array([0, 1, 0]), 2)
    assert accuracy(cm) == 0.0
    assert dice(cm, 0) == iou(cm, 0) == 0.0


def test_half_overlap():
    cm = confusion(np.array([1, 1, 0, 0]), np.array([0, 1, 1, 0]), 2)
    assert dice(cm, 1) == 0.5
    assert iou(cm, 1) == pytest.approx(1 / 3, abs=0)


def test_zero_over_zero_convention():
    cm = confusion(np.array([0, 0]), np.array([0, 0]), 3)
    assert dice(cm, 2) == iou(cm, 2) == 1.0
    cm = confusion(np.array([0, 2]), np.array([0, 0]), 3)
    assert dice(cm, 2) == iou(cm, 2) == 0.0


def test_report_aggregations():
    truth = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    pred = np.array([0, 1, 1, 1, 2, 0, 3, 3])
    r = report(confusion(pred, truth, 4), "train")
    d = [1 / 2, 4 / 5, 2 / 3, 1.0]
    j = [1 / 3, 2 / 3, 1 / 2, 1.0]
    np.testing.assert_allclose(r.dice_per_class, d, rtol=1e-15)
    np.testing.assert_allclose(r.iou_per_class, j, rtol=1e-15)
    assert r.dc == pytest.approx(np.mean(d)) and r.iou == pytest.approx(np.mean(j))
    assert r.dice_macro_excl_bg == pytest.approx(np.mean(d[1:]))
    # pooled foreground: tp 5, fp 1, fn 1
    assert r.dice_global_excl_bg == pytest.approx(10 / 12)
    assert r.iou_global_excl_bg == pytest.approx(5 / 7)
    assert r.ac == 0.75 and r.partition == "train"
    assert set(r.to_dict()) >= {"ac", "dice_per_class", "iou_macro_excl_bg", "partition"}


def test_counts_add():
    a = confusion(np.array([0, 1]), np.array([0, 0]), 2)
    b = confusion(np.array([1, 1]), np.array([1, 0]), 2)
    np.testing.assert_array_equal((a + b).counts, confusion(np.array([0, 1, 1, 1]), np.array([0, 0, 1, 0]), 2).counts)


# ---------------------------------------------------------------- oracle


def test_exhaustive_two_class_oracle():
    cases = 0
    for pred in itertools.product((0, 1), repeat=4):
        for truth in itertools.product((0, 1), repeat=4):
            cm = confusion(np.array(pred).reshape(2, 2), np.array(truth).reshape(2, 2), 2)
            for c in (0, 1):
                d, j, acc = set_oracle(pred, truth, c)
                assert dice(cm, c) == float(d)
                assert iou(cm, c) == float(j)
                assert accuracy(cm) == float(acc)
            cases += 1
    assert cases == 256


# ---------------------------------------------------------------- properties


@given(masks)
def test_dice_iou_identity_and_bounds(case):
    c, pred, truth = case
    cm = confusion(pred, truth, c)
    assert cm.num_pixels == pred.size and np.all(cm.counts >= 0)
    for k in range(c):
        tp = int(cm.counts[k, k])
        union = int(cm.counts[k].sum() + cm.counts[:, k].sum()) - tp
        jf = Fraction(1) if union == 0 else Fraction(tp, union)
        assert dice(cm, k) == float(2 * jf / (1 + jf))
        assert iou(cm, k) <= dice(cm, k)
    r = report(cm)
    for v in [r.ac, r.dc, r.iou, r.dice_macro_excl_bg, r.iou_macro_excl_bg, *r.dice_per_class, *r.iou_per_class]:
        assert 0.0 <= v <= 1.0


@given(masks, st.randoms(use_true_random=False))
def test_permutation_equivariance(case, rnd):
    c, pred, truth = case
    perm = np.array(rnd.sample(range(c), c))
    base = report(confusion(pred, truth, c))
    moved = report(confusion(perm[pred], perm[truth], c))
    assert moved.ac == base.ac
    for k in range(c):
        assert moved.dice_per_class[perm[k]] == base.dice_per_class[k]
        assert moved.iou_per_class[perm[k]] == base.iou_per_class[k]
    assert moved.dice_macro_incl_bg == pytest.approx(base.dice_macro_incl_bg, abs=1e-15)
    assert moved.iou_macro_incl_bg == pytest.approx(base.iou_macro_incl_bg, abs=1e-15)


# ---------------------------------------------------------------- soft dice


def test_soft_dice_perfect_and_uniform():
    t = one_hot(np.random.default_rng(0).integers(0, 4, (2, 5, 5)), 4)
    assert soft_dice(t, t) == 1.0
    # target covering all S pixels with one class: 2 (S/4) / (S/4 + S)
    single = one_hot(np.full((2, 5, 5), 2), 4)
    assert soft_dice(np.full(single.shape, 0.25), single) == pytest.approx(0.4, abs=1e-15)
    # general target: class c with S_c pixels scores 2 S_c / (S + 4 S_c)
    s, sc = 50, t.sum(axis=(0, 2, 3))
    expected = np.mean([2 * n / (s + 4 * n) for n in sc if n > 0])
    assert soft_dice(np.full(t.shape, 0.25), t) == pytest.approx(expected, abs=1e-15)


def test_soft_dice_matches_hard_on_one_hot():
    rng = np.random.default_rng(1)
    truth = rng.integers(0, 4, (1, 6, 6))
    pred = rng.integers(0, 4, (1, 6, 6))
    cm = confusion(pred, truth, 4)
    present = [k for k in range(4) if (truth == k).any()]
    expected = np.mean([dice(cm, k) for k in present])
    assert soft_dice(one_hot(pred, 4), one_hot(truth, 4)) == pytest.approx(expected, abs=1e-15)


def test_soft_dice_rejects_unnormalized():
    t = one_hot(np.zeros((1, 2, 2), dtype=int), 2)
    with pytest.raises(ValueError, match="normalized"):
        soft_dice(t * 0.9, t)
