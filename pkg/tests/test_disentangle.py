import math

import numpy as np
import pytest

from conftest import assert_close_grad, num_grad
from motioncodes.disentangle import (
    multipos_contrastive,
    mutual_info_loss,
    pool_style_embedding,
)
from motioncodes.errors import ConfigurationError, StructuralError, UndefinedResultError
from motioncodes.rvq import RvqStack, init_book_from_batch, residual_encode


def _oracle_contrastive(e, labels, tau):
    # straight transcription of the definition, python loops only
    b = len(labels)
    total, anchors = 0.0, 0
    for a in range(b):
        pos = [j for j in range(b) if j != a and labels[j] == labels[a]]
        if not pos:
            continue
        anchors += 1
        sims = [float(np.dot(e[a], e[j])) / tau for j in range(b) if j != a]
        others = [j for j in range(b) if j != a]
        mx = max(sims)
        lse = mx + math.log(sum(math.exp(s - mx) for s in sims))
        for p in pos:
            sp = float(np.dot(e[a], e[p])) / tau
            total += -(sp - lse) / len(pos)
    return total / anchors


def _oracle_mi(r, labels, codes, tau):
    m, x = r.shape[0], codes.shape[0]
    uniq = sorted(set(labels.tolist()))
    joint = np.zeros((x, len(uniq)))
    for b in range(m):
        d2 = [float(np.sum((r[b] - codes[i]) ** 2)) for i in range(x)]
        s = [-d / tau for d in d2]
        mx = max(s)
        z = sum(math.exp(v - mx) for v in s)
        for i in range(x):
            joint[i, uniq.index(labels[b])] += math.exp(s[i] - mx) / z / m
    pi = joint.sum(axis=1)
    pj = joint.sum(axis=0)
    total = 0.0
    for i in range(x):
        for j in range(len(uniq)):
            total += joint[i, j] * math.log(joint[i, j] / (pi[i] * pj[j]))
    return total


def test_pool_style_embedding():
    rng = np.random.default_rng(4)
    stack = RvqStack.create(3, 8, 4)
    for book in stack.books:
        init_book_from_batch(book, rng.normal(size=(50, 4)), rng)
    r0 = rng.normal(size=(5, 7, 4))
    trace = residual_encode(stack, r0, 2)
    pooled = pool_style_embedding(trace, 1)
    assert pooled.shape == (5, 4)
    assert np.allclose(pooled, trace.r[1].mean(axis=1))
    with pytest.raises(ConfigurationError):
        pool_style_embedding(trace, 3)


def test_contrastive_two_sharing_anchors_give_ln2():
    # equal similarities everywhere: each counted anchor pays log(2)
    e = np.zeros((3, 4))
    loss, grad = multipos_contrastive(e, np.array([0, 0, 1]), tau=0.1)
    assert loss == pytest.approx(math.log(2.0), abs=1e-12)
    assert np.allclose(grad, 0.0)  # symmetric optimum for identical embeddings


def test_contrastive_pair_is_zero():
    rng = np.random.default_rng(8)
    e = rng.normal(size=(2, 6))
    loss, _ = multipos_contrastive(e, np.array([3, 3]), tau=0.5)
    assert loss == pytest.approx(0.0, abs=1e-12)


def test_contrastive_matches_enumeration_oracle():
    rng = np.random.default_rng(11)
    e = rng.normal(size=(9, 5))
    labels = np.array([0, 1, 2, 0, 1, 2, 0, 1, 5])
    loss, _ = multipos_contrastive(e, labels, tau=0.1)
    assert loss == pytest.approx(_oracle_contrastive(e, labels, 0.1), abs=1e-9)


def test_contrastive_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    e = rng.normal(size=(6, 4))
    labels = np.array([0, 0, 1, 1, 1, 2])

    def f(x):
        return multipos_contrastive(x, labels, tau=0.25)[0]

    _, grad = multipos_contrastive(e, labels, tau=0.25)
    assert_close_grad(grad, num_grad(f, e))


def test_contrastive_batch_order_invariant():
    rng = np.random.default_rng(14)
    e = rng.normal(size=(7, 3))
    labels = np.array([0, 1, 0, 2, 1, 0, 2])
    loss, _ = multipos_contrastive(e, labels, tau=0.2)
    perm = rng.permutation(7)
    loss_p, _ = multipos_contrastive(e[perm], labels[perm], tau=0.2)
    assert loss_p == pytest.approx(loss, rel=1e-12)


def test_contrastive_all_singletons_raises():
    e = np.random.default_rng(0).normal(size=(4, 3))
    with pytest.raises(UndefinedResultError):
        multipos_contrastive(e, np.array([0, 1, 2, 3]), tau=0.1)
    with pytest.raises(ConfigurationError):
        multipos_contrastive(e, np.array([0, 0, 1, 1]), tau=0.0)
    with pytest.raises(StructuralError):
        multipos_contrastive(e, np.array([0, 0, 1]), tau=0.1)


def test_mi_identical_groups_is_zero():
    # both label groups present the same residual multiset: independence
    rng = np.random.default_rng(20)
    codes = rng.normal(size=(5, 3))
    group = rng.normal(size=(6, 3))
    r = np.concatenate([group, group], axis=0)
    labels = np.array([0] * 6 + [1] * 6)
    mi, grad_r, grad_c = mutual_info_loss(r, labels, codes, tau=1.0)
    assert abs(mi) < 1e-12
    assert np.max(np.abs(grad_r)) < 1e-9
    assert np.max(np.abs(grad_c)) < 1e-9


def test_mi_one_hot_reaches_log2():
    codes = np.array([[0.0, 0.0], [10.0, 10.0]])
    r = np.array([[0.0, 0.0], [0.1, -0.1], [10.0, 10.0], [9.9, 10.1]])
    labels = np.array([0, 0, 1, 1])
    mi, _, _ = mutual_info_loss(r, labels, codes, tau=1e-3)
    assert mi == pytest.approx(math.log(2.0), abs=1e-6)


def test_mi_matches_enumeration_oracle():
    rng = np.random.default_rng(21)
    codes = rng.normal(size=(6, 4))
    r = rng.normal(size=(15, 4))
    labels = rng.integers(0, 3, size=15)
    mi, _, _ = mutual_info_loss(r, labels, codes, tau=0.7)
    assert mi == pytest.approx(_oracle_mi(r, labels, codes, 0.7), abs=1e-9)
    assert mi >= -1e-12


def test_mi_gradients_match_finite_differences():
    rng = np.random.default_rng(22)
    codes = rng.normal(size=(4, 3))
    r = rng.normal(size=(10, 3))
    labels = rng.integers(0, 2, size=10)
    mi, grad_r, grad_c = mutual_info_loss(r, labels, codes, tau=1.0)

    def f_r(x):
        return mutual_info_loss(x, labels, codes, tau=1.0)[0]

    def f_c(x):
        return mutual_info_loss(r, labels, x, tau=1.0)[0]

    assert_close_grad(grad_r, num_grad(f_r, r))
    assert_close_grad(grad_c, num_grad(f_c, codes))


def test_mi_single_label_raises():
    rng = np.random.default_rng(23)
    with pytest.raises(UndefinedResultError):
        mutual_info_loss(
            rng.normal(size=(8, 3)), np.zeros(8, dtype=int), rng.normal(size=(5, 3)), tau=1.0
        )


def test_mi_sample_order_invariant():
    rng = np.random.default_rng(24)
    codes = rng.normal(size=(5, 3))
    r = rng.normal(size=(12, 3))
    labels = rng.integers(0, 3, size=12)
    mi, _, _ = mutual_info_loss(r, labels, codes, tau=0.5)
    perm = rng.permutation(12)
    mi_p, _, _ = mutual_info_loss(r[perm], labels[perm], codes, tau=0.5)
    assert mi_p == pytest.approx(mi, rel=1e-12)


def test_mi_joint_is_symmetric_in_its_axes():
    # information computed from the joint table equals the transposed version
    def info(p):
        pi = p.sum(axis=1, keepdims=True)
        pj = p.sum(axis=0, keepdims=True)
        mask = p > 0
        return float(np.sum(p[mask] * np.log((p / (pi * pj))[mask])))

    rng = np.random.default_rng(26)
    joint = rng.uniform(size=(5, 3))
    joint /= joint.sum()
    assert info(joint) == pytest.approx(info(joint.T), abs=1e-12)


def test_contrastive_relabeling_invariant():
    rng = np.random.default_rng(27)
    e = rng.normal(size=(6, 4))
    labels = np.array([0, 1, 0, 2, 1, 2])
    relabeled = np.array([7, 4, 7, 9, 4, 9])  # same partition, new alphabet
    a, _ = multipos_contrastive(e, labels, tau=0.3)
    b, _ = multipos_contrastive(e, relabeled, tau=0.3)
    assert a == b


def test_contrastive_decreases_when_positive_similarity_grows():
    base = np.array([[1.0, 0.0], [0.5, 0.1], [-0.3, 0.8]])
    labels = np.array([0, 0, 1])
    lo, _ = multipos_contrastive(base, labels, tau=0.5)
    pulled = base.copy()
    pulled[1] = [0.9, 0.02]  # move the positive toward the anchor
    hi, _ = multipos_contrastive(pulled, labels, tau=0.5)
    assert hi < lo


def test_contrastive_similarity_shift_invariance():
    # appending a shared constant coordinate shifts every pairwise
    # similarity by the same amount; softmax ignores the shift
    rng = np.random.default_rng(28)
    e = rng.normal(size=(5, 3))
    labels = np.array([0, 0, 1, 1, 0])
    a, _ = multipos_contrastive(e, labels, tau=0.2)
    shifted = np.concatenate([e, np.full((5, 1), 2.0)], axis=1)
    b, _ = multipos_contrastive(shifted, labels, tau=0.2)
    assert b == pytest.approx(a, rel=1e-10)


def test_mi_validation():
    rng = np.random.default_rng(25)
    with pytest.raises(ConfigurationError):
        mutual_info_loss(rng.normal(size=(4, 2)), np.zeros(4, int), rng.normal(size=(3, 2)), tau=-1.0)
    with pytest.raises(StructuralError):
        mutual_info_loss(rng.normal(size=(4, 2)), np.zeros(3, int), rng.normal(size=(3, 2)), tau=1.0)
    with pytest.raises(StructuralError):
        mutual_info_loss(rng.normal(size=(4, 2)), np.zeros(4, int), rng.normal(size=(3, 5)), tau=1.0)
