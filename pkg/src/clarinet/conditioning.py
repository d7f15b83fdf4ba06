"""Prediction sharpening, entropy weighting, and the conditioned adversarial losses.

The domain discriminator does not see raw features: each example's feature
vector is conditioned on its (sharpened) class prediction through a
flattened outer product, and each example's contribution to the
adversarial loss is weighted by a confidence weight derived from the
prediction entropy. Low-entropy (confident) examples get weights near 2,
uncertain ones near 1, steering the domain alignment toward examples whose
predicted class structure is trustworthy.
"""

from dataclasses import dataclass

import torch

DISC_FLOOR = 1e-7

SOURCE_TRUE = "source_true"
SOURCE_COMP = "source_comp"
TARGET = "target"


def sharpen(f, temperature):
    """Temperature-sharpen probability rows: f_k^(1/l) renormalized.

    ``temperature`` below 1 concentrates mass on the argmax (approaching
    one-hot as it goes to 0); 1 is the identity. Rows are rescaled by their
    max before exponentiation so small temperatures stay finite.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    squeeze = f.ndim == 1
    rows = f.unsqueeze(0) if squeeze else f
    if rows.numel() == 0:
        raise ValueError("cannot sharpen an empty prediction batch")
    peak = rows.max(dim=1, keepdim=True).values
    if torch.any(peak <= 0):
        raise ValueError("prediction rows must contain positive mass")
    powered = (rows / peak) ** (1.0 / temperature)
    out = powered / powered.sum(dim=1, keepdim=True)
    return out.squeeze(0) if squeeze else out


def prediction_entropy(t):
    """Shannon entropy of probability rows, with 0 log 0 = 0."""
    squeeze = t.ndim == 1
    rows = t.unsqueeze(0) if squeeze else t
    plogp = torch.where(rows > 0, rows * torch.log(rows.clamp(min=1e-300)), rows.new_zeros(()))
    H = -plogp.sum(dim=1)
    return H.squeeze(0) if squeeze else H


def sample_weight(H):
    """Confidence weight 1 + exp(-H), in (1, 2] for H >= 0."""
    H = torch.as_tensor(H)
    if torch.any(H < 0):
        raise ValueError("entropy must be nonnegative")
    return 1.0 + torch.exp(-H)


def conditioned_feature(g, t):
    """Flattened outer product of features and (sharpened) predictions.

    For each example, joint[i*K + k] = g[i] * t[k]; row sums of the
    unflattened matrix recover g because t sums to 1.
    """
    squeeze = g.ndim == 1
    g_rows = g.unsqueeze(0) if squeeze else g
    t_rows = t.unsqueeze(0) if squeeze else t
    if g_rows.shape[1] == 0:
        raise ValueError("feature vectors must be nonempty")
    if g_rows.shape[0] != t_rows.shape[0]:
        raise ValueError("features and predictions disagree on batch size")
    joint = torch.einsum("ni,nk->nik", g_rows, t_rows).reshape(g_rows.shape[0], -1)
    return joint.squeeze(0) if squeeze else joint


@dataclass
class AdversarialBatchTerms:
    """One domain side's contribution to the adversarial loss.

    ``weights`` are the per-example confidence weights (detached by the
    caller), ``disc_outputs`` the discriminator's probability-of-source
    outputs, ``tag`` which side this is.
    """

    weights: torch.Tensor
    disc_outputs: torch.Tensor
    tag: str

    def __post_init__(self):
        if self.tag not in (SOURCE_TRUE, SOURCE_COMP, TARGET):
            raise ValueError(f"unknown domain tag {self.tag!r}")
        if self.weights.shape != self.disc_outputs.shape:
            raise ValueError("weights and discriminator outputs disagree on shape")

    def __len__(self):
        return self.weights.shape[0]


def _weighted_log_side(terms, of_one_minus):
    """One side's weighted mean of log D (or log(1-D)), clamped away from 0/1."""
    d = torch.clamp(terms.disc_outputs, min=DISC_FLOOR, max=1.0 - DISC_FLOOR)
    logs = torch.log(1.0 - d) if of_one_minus else torch.log(d)
    return (terms.weights * logs).sum() / terms.weights.sum()


def scattered_adversarial_loss_cc(source_terms, target_terms):
    """Weighted-mean adversarial loss: source side log D plus target side log(1-D)."""
    if len(source_terms) == 0 or len(target_terms) == 0:
        raise ValueError("both the source and target side must be nonempty")
    return _weighted_log_side(source_terms, False) + _weighted_log_side(target_terms, True)


def scattered_adversarial_loss_pc(true_source_terms, comp_source_terms, target_terms):
    """Three-sided adversarial loss; either source side may be absent.

    An absent (None or empty) source side contributes exactly zero, so the
    two-sided loss is recovered when only one source stream exists.
    """
    if target_terms is None or len(target_terms) == 0:
        raise ValueError("the target side must be nonempty")

    def present(terms):
        return terms is not None and len(terms) > 0

    if not present(true_source_terms) and not present(comp_source_terms):
        raise ValueError("at least one source side must be nonempty")
    loss = target_terms.disc_outputs.new_zeros(())
    if present(true_source_terms):
        loss = loss + _weighted_log_side(true_source_terms, False)
    if present(comp_source_terms):
        loss = loss + _weighted_log_side(comp_source_terms, False)
    return loss + _weighted_log_side(target_terms, True)
