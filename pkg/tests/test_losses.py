"""Tests for the complementary-label losses and the correction rule."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from clarinet.losses import (
    UpdateMode,
    batch_class_priors,
    combined_classification_loss,
    complementary_loss_vector,
    nonnegative_correction_step,
    partition_by_complementary_label,
    per_class_complementary_loss,
    total_complementary_loss,
    true_label_loss,
)

@pytest.fixture(autouse=True, scope="module")
def _float64_default():
    # exact comparisons below need float64 throughout; restore afterwards
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)


def _random_batch(n, K, seed):
    rng = np.random.default_rng(seed)
    probs = torch.as_tensor(rng.dirichlet(np.ones(K), size=n))
    ybar = rng.integers(0, K, size=n)
    return probs, ybar


def test_partition_sizes():
    parts = partition_by_complementary_label(np.array([0, 1, 0, 2]), 3)
    assert [len(p) for p in parts] == [2, 1, 1]
    assert parts[0].tolist() == [0, 2]


def test_partition_degenerate_single_class():
    parts = partition_by_complementary_label(np.full(7, 1), 3)
    assert [len(p) for p in parts] == [0, 7, 0]


def test_partition_covers_batch():
    rng = np.random.default_rng(0)
    ybar = rng.integers(0, 10, size=128)
    parts = partition_by_complementary_label(ybar, 10)
    assert sum(len(p) for p in parts) == 128


def test_partition_rejects_bad_labels():
    with pytest.raises(ValueError):
        partition_by_complementary_label(np.array([0, 3]), 3)
    with pytest.raises(ValueError):
        partition_by_complementary_label(np.array([], dtype=int), 3)


def test_per_class_frozen_k2():
    # batch {p=[0.8, 0.2], ybar=0; p=[0.3, 0.7], ybar=1}: the class-0
    # component reduces to 0.5 * (-log 0.3), the class-1 component to
    # 0.5 * (-log 0.2).
    probs = torch.tensor([[0.8, 0.2], [0.3, 0.7]])
    parts = partition_by_complementary_label(np.array([0, 1]), 2)
    pi_bar = [0.5, 0.5]
    l0 = per_class_complementary_loss(probs, parts, pi_bar, 0)
    l1 = per_class_complementary_loss(probs, parts, pi_bar, 1)
    assert math.isclose(float(l0), 0.5 * -math.log(0.3), rel_tol=0, abs_tol=1e-12)
    assert math.isclose(float(l1), 0.5 * -math.log(0.2), rel_tol=0, abs_tol=1e-12)
    assert float(l0) == pytest.approx(0.6019864021629681, abs=1e-12)
    assert float(l1) == pytest.approx(0.8047189562170502, abs=1e-12)


def test_per_class_uniform_predictions_identity():
    """Uniform predictions give log(K) * (1 - (K-1) pi_bar_k) per class,
    so the K components always total log(K), the uniform predictor's true
    cross-entropy."""
    K, n = 5, 40
    probs = torch.full((n, K), 1.0 / K)
    rng = np.random.default_rng(1)
    ybar = rng.integers(0, K, size=n)
    parts = partition_by_complementary_label(ybar, K)
    pi_bar = batch_class_priors(parts, n)
    total = 0.0
    for k in range(K):
        got = float(per_class_complementary_loss(probs, parts, pi_bar, k))
        assert got == pytest.approx(math.log(K) * (1 - (K - 1) * pi_bar[k]), abs=1e-10)
        total += got
    assert total == pytest.approx(math.log(K), abs=1e-10)
    uniform_pi = np.full(K, 1.0 / K)
    for k in range(K):
        got = float(per_class_complementary_loss(probs, parts, uniform_pi, k))
        assert got == pytest.approx(math.log(K) / K, abs=1e-10)


def test_per_class_empty_subclass_contributes_zero():
    probs = torch.tensor([[0.5, 0.4, 0.1], [0.2, 0.3, 0.5]])
    parts = partition_by_complementary_label(np.array([0, 0]), 3)
    pi_bar = batch_class_priors(parts, 2)
    assert pi_bar[1] == pi_bar[2] == 0.0
    # with pi_bar_1 = 0 the first term vanishes; only class-0 rows remain
    expected = float((-torch.log(probs[:, 1])).mean())
    got = float(per_class_complementary_loss(probs, parts, pi_bar, 1))
    assert got == pytest.approx(expected, abs=1e-12)


def test_per_class_rejects_mismatches():
    probs = torch.rand(4, 3)
    parts = partition_by_complementary_label(np.array([0, 1, 2]), 3)
    with pytest.raises(ValueError):
        per_class_complementary_loss(probs, parts, [1 / 3] * 3, 0)
    with pytest.raises(ValueError):
        per_class_complementary_loss(probs[:3], parts, [0.5, 0.5], 0)


def test_total_frozen_k2_equals_true_cross_entropy():
    probs = torch.tensor([[0.8, 0.2], [0.3, 0.7]])
    per_class = complementary_loss_vector(probs, np.array([0, 1]), 2)
    total = float(total_complementary_loss(per_class))
    assert total == pytest.approx(1.4067053583800182, abs=1e-12)
    # ybar=0 hides true label 1 and vice versa
    true_ce = 0.5 * (-math.log(0.2) - math.log(0.3))
    assert total == pytest.approx(true_ce, abs=1e-12)


def test_total_zero_vector():
    assert float(total_complementary_loss(_vector([0.0, 0.0, 0.0]))) == 0.0


def test_total_matches_brute_force_transcription():
    """Direct nested-loop evaluation of the defining formula, K=4."""
    probs, ybar = _random_batch(32, 4, seed=7)
    per_class = complementary_loss_vector(probs, ybar, 4)
    p = probs.numpy()
    n, K = p.shape
    counts = np.bincount(ybar, minlength=K)
    pi = counts / n
    brute = np.zeros(K)
    for k in range(K):
        if counts[k]:
            brute[k] -= (K - 1) * (pi[k] / counts[k]) * sum(
                -math.log(max(p[i, k], 1e-12)) for i in range(n) if ybar[i] == k
            )
        for j in range(K):
            if counts[j]:
                brute[k] += (pi[j] / counts[j]) * sum(
                    -math.log(max(p[i, k], 1e-12)) for i in range(n) if ybar[i] == j
                )
    np.testing.assert_allclose(per_class.values.numpy(), brute, atol=1e-10)
    assert float(total_complementary_loss(per_class)) == pytest.approx(brute.sum(), abs=1e-10)


def test_k2_exactness_over_many_batches():
    """For two classes the batch loss equals the batch true cross-entropy,
    not just in expectation."""
    worst = 0.0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 64))
        probs = torch.as_tensor(rng.dirichlet(np.ones(2), size=n))
        y_true = rng.integers(0, 2, size=n)
        ybar = 1 - y_true
        total = float(total_complementary_loss(complementary_loss_vector(probs, ybar, 2)))
        true_ce = float(true_label_loss(probs, y_true))
        worst = max(worst, abs(total - true_ce))
    assert worst < 1e-9


def test_permutation_invariance():
    probs, ybar = _random_batch(50, 5, seed=3)
    base = complementary_loss_vector(probs, ybar, 5).values.numpy()
    perm = np.random.default_rng(4).permutation(50)
    permuted = complementary_loss_vector(probs[perm], ybar[perm], 5).values.numpy()
    np.testing.assert_allclose(base, permuted, atol=1e-12)


def _vector(values):
    from clarinet.losses import PerClassLossVector

    return PerClassLossVector(
        values=torch.as_tensor(values, dtype=torch.float64),
        batch_partition_sizes=np.ones(len(values), dtype=int),
    )


def test_correction_directive_examples():
    def directive(values):
        return nonnegative_correction_step(_vector(values))

    d = directive([0.2, 0.3])
    assert d.mode is UpdateMode.DESCEND_TOTAL and float(d.loss) == pytest.approx(0.5)
    d = directive([0.5, -0.2, -0.1])
    assert d.mode is UpdateMode.ASCEND_NEGATIVE and float(d.loss) == pytest.approx(-0.3)
    d = directive([-1.0, -2.0])
    assert d.mode is UpdateMode.ASCEND_NEGATIVE and float(d.loss) == pytest.approx(-3.0)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=8))
def test_correction_mode_iff_min_nonnegative(values):
    d = nonnegative_correction_step(_vector(values))
    if min(values) >= 0:
        assert d.mode is UpdateMode.DESCEND_TOTAL
        assert float(d.loss) == pytest.approx(sum(values), abs=1e-9)
    else:
        assert d.mode is UpdateMode.ASCEND_NEGATIVE
        assert float(d.loss) == pytest.approx(sum(v for v in values if v < 0), abs=1e-9)


def test_correction_keeps_gradient_graph():
    probs = torch.tensor([[0.9, 0.1], [0.8, 0.2]], requires_grad=True)
    d = nonnegative_correction_step(complementary_loss_vector(probs, np.array([0, 0]), 2))
    d.loss.backward()
    assert probs.grad is not None and torch.all(torch.isfinite(probs.grad))


def test_true_label_loss_examples():
    onehot = torch.tensor([[1.0, 0.0, 0.0]])
    assert float(true_label_loss(onehot, np.array([0]))) == pytest.approx(0.0, abs=1e-11)
    uniform = torch.full((3, 4), 0.25)
    assert float(true_label_loss(uniform, np.array([0, 1, 2]))) == pytest.approx(
        math.log(4), abs=1e-12
    )
    batch = torch.tensor([[0.2, 0.8], [0.3, 0.7]])
    got = float(true_label_loss(batch, np.array([1, 0])))
    assert got == pytest.approx((-math.log(0.8) - math.log(0.3)) / 2, abs=1e-12)
    assert got == pytest.approx(0.7135581778200728, abs=1e-12)


def test_true_label_loss_rejects_bad_input():
    with pytest.raises(ValueError):
        true_label_loss(torch.zeros(0, 3), np.array([], dtype=int))
    with pytest.raises(ValueError):
        true_label_loss(torch.rand(2, 3), np.array([0, 3]))
    with pytest.raises(ValueError):
        true_label_loss(torch.rand(2, 3), np.array([0]))


def test_combined_loss():
    assert float(combined_classification_loss(2.0, 1.0, 0.25)) == pytest.approx(1.25)
    assert float(combined_classification_loss(5.0, 1.5, 0.0)) == pytest.approx(1.5)
    assert float(combined_classification_loss(5.0, 1.5, 1.0)) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        combined_classification_loss(1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        combined_classification_loss(1.0, 1.0, -0.1)


def test_loss_gradient_matches_finite_differences():
    """Gradient through softmax logits agrees with central differences."""
    from clarinet.oracle import finite_difference_gradient_check

    rng = np.random.default_rng(11)
    for K in (2, 3, 5):
        n = 8
        logits0 = rng.normal(size=(n, K))
        ybar = rng.integers(0, K, size=n)

        def loss_of(flat):
            logits = torch.as_tensor(flat.reshape(n, K))
            probs = torch.softmax(logits, dim=1)
            return float(total_complementary_loss(complementary_loss_vector(probs, ybar, K)))

        logits = torch.as_tensor(logits0, dtype=torch.float64).requires_grad_(True)
        probs = torch.softmax(logits, dim=1)
        total = total_complementary_loss(complementary_loss_vector(probs, ybar, K))
        total.backward()
        err = finite_difference_gradient_check(
            loss_of, logits.grad.numpy().ravel(), logits0.ravel(), epsilon=1e-6
        )
        assert err < 1e-4
