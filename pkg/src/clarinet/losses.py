"""Complementary-label classification losses and the non-negative correction rule.

The complementary-label loss rewrites the ordinary classification risk in
terms of labels that name a class each example does NOT belong to. With
per-class empirical priors pi_bar the per-class component is

    L_k = -(K-1) * (pi_bar_k / n_k) * sum_{i: ybar_i = k} l(p_i, k)
          + sum_j (pi_bar_j / n_j) * sum_{i: ybar_i = j} l(p_i, k)

with l(p, k) = -log p_k, and the total loss is the sum over k. The total
is an unbiased estimate of the true-label cross-entropy risk, but the
individual components can go negative, which is the signal the correction
rule acts on: when any component is negative, training ascends the sum of
the negative parts instead of descending the total.
"""

import enum
from dataclasses import dataclass

import numpy as np
import torch

PROB_FLOOR = 1e-12


def _neg_log(p):
    # cross-entropy kernel; the floor keeps saturated outputs finite
    return -torch.log(torch.clamp(p, min=PROB_FLOOR))


def partition_by_complementary_label(ybar, num_classes):
    """Split batch indices into the K disjoint groups sharing a complementary label.

    Returns a list of index tensors; group k holds exactly the positions
    with ybar == k. Empty groups are permitted.
    """
    ybar = torch.as_tensor(ybar, dtype=torch.long)
    if ybar.ndim != 1 or ybar.numel() == 0:
        raise ValueError("batch of complementary labels must be a nonempty 1-D vector")
    if ybar.min() < 0 or ybar.max() >= num_classes:
        raise ValueError(
            f"complementary labels must lie in [0, {num_classes}), "
            f"got range [{ybar.min()}, {ybar.max()}]"
        )
    return [torch.nonzero(ybar == k, as_tuple=True)[0] for k in range(num_classes)]


def batch_class_priors(partition, n):
    """Empirical complementary-class priors pi_bar of a partitioned batch."""
    return np.array([len(idx) / n for idx in partition])


def per_class_complementary_loss(probs, partition, pi_bar, k):
    """One component of the complementary-label loss, for class k.

    ``probs`` are per-example class probabilities (rows in the simplex),
    ``partition`` the index groups from
    :func:`partition_by_complementary_label`, ``pi_bar`` the complementary
    class priors. Groups absent from the batch contribute zero to both
    terms, which keeps the estimator defined for small batches.
    """
    K = len(partition)
    if probs.ndim != 2 or probs.shape[1] != K:
        raise ValueError(f"probs must be (n, {K}), got {tuple(probs.shape)}")
    if len(pi_bar) != K:
        raise ValueError(f"pi_bar must have length {K}, got {len(pi_bar)}")
    n_total = sum(len(idx) for idx in partition)
    if n_total != probs.shape[0]:
        raise ValueError(
            f"partition covers {n_total} examples, predictions hold {probs.shape[0]}"
        )
    losses_k = _neg_log(probs[:, k])
    value = probs.new_zeros(())
    n_k = len(partition[k])
    if n_k:
        value = value - (K - 1) * (pi_bar[k] / n_k) * losses_k[partition[k]].sum()
    for j in range(K):
        n_j = len(partition[j])
        if n_j:
            value = value + (pi_bar[j] / n_j) * losses_k[partition[j]].sum()
    return value


@dataclass
class PerClassLossVector:
    """The K complementary-loss components of one batch.

    ``values`` keeps the autograd graph; entries may legitimately be
    negative. ``batch_partition_sizes`` records how many examples carried
    each complementary label.
    """

    values: torch.Tensor
    batch_partition_sizes: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 1:
            raise ValueError("per-class loss values must form a 1-D vector")
        if len(self.values) != len(self.batch_partition_sizes):
            raise ValueError("values and partition sizes disagree on K")
        if not torch.all(torch.isfinite(self.values)):
            raise ValueError("per-class loss values must be finite")


def complementary_loss_vector(probs, ybar, num_classes, pi_bar=None):
    """All K components of the complementary-label loss for one batch.

    ``pi_bar`` defaults to the batch-empirical priors, under which the
    total reduces to an unbiased per-example average.
    """
    partition = partition_by_complementary_label(ybar, num_classes)
    if pi_bar is None:
        pi_bar = batch_class_priors(partition, probs.shape[0])
    values = torch.stack(
        [per_class_complementary_loss(probs, partition, pi_bar, k) for k in range(num_classes)]
    )
    sizes = np.array([len(idx) for idx in partition])
    return PerClassLossVector(values=values, batch_partition_sizes=sizes)


def total_complementary_loss(per_class):
    """Sum of the K per-class components."""
    return per_class.values.sum()


class UpdateMode(enum.Enum):
    DESCEND_TOTAL = "descend_total"
    ASCEND_NEGATIVE = "ascend_negative"


@dataclass
class UpdateDirective:
    """What the classifier update should do with this batch.

    ``loss`` is the differentiable scalar the directive refers to: the
    total loss under DESCEND_TOTAL, the sum of the negative components
    under ASCEND_NEGATIVE (the trainer ascends it by stepping on its
    negation).
    """

    mode: UpdateMode
    loss: torch.Tensor


def nonnegative_correction_step(per_class):
    """Decide between descending the total and ascending the negative part.

    Descend the total only while every per-class component is still
    nonnegative; once any component dips below zero, ascend the sum of the
    negative components back toward zero instead of overfitting them.
    """
    values = per_class.values
    if values.min() >= 0:
        return UpdateDirective(UpdateMode.DESCEND_TOTAL, values.sum())
    return UpdateDirective(UpdateMode.ASCEND_NEGATIVE, torch.clamp(values, max=0).sum())


def true_label_loss(probs, y):
    """Mean cross-entropy of probability rows against true labels."""
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("true_label_loss needs a nonempty (n, K) probability batch")
    y = torch.as_tensor(y, dtype=torch.long)
    if y.ndim != 1 or len(y) != probs.shape[0]:
        raise ValueError("labels must be a vector aligned with the probability rows")
    if y.min() < 0 or y.max() >= probs.shape[1]:
        raise ValueError(f"labels must lie in [0, {probs.shape[1]})")
    return _neg_log(probs[torch.arange(len(y)), y]).mean()


def combined_classification_loss(true_loss, comp_loss, alpha):
    """Convex combination alpha * true_loss + (1 - alpha) * comp_loss."""
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * true_loss + (1 - alpha) * comp_loss
