"""Tests for model components, gradient reversal, and checkpointing."""

import numpy as np
import pytest
import torch
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from clarinet.models import (
    MLP,
    SMALL_CNN,
    ArchitectureConfig,
    ModelTriple,
    build_model_triple,
    gradient_reversal,
    load_checkpoint,
    parameter_count,
    predict,
    save_checkpoint,
)


def _mlp_cfg(**overrides):
    base = dict(kind=MLP, input_shape=(2,), num_classes=2,
                hidden_width=64, feature_dim=64, predictor_hidden=64)
    base.update(overrides)
    return ArchitectureConfig(**base)


def test_reversal_forward_identity():
    x = torch.tensor([1.0, 2.0], requires_grad=True)
    out = gradient_reversal(x, 0.5)
    np.testing.assert_array_equal(out.detach().numpy(), [1.0, 2.0])


def test_reversal_backward_flips_sign_exactly():
    x = torch.tensor([0.3, -0.7, 1.1], dtype=torch.float64, requires_grad=True)
    y = (gradient_reversal(x, 1.0) ** 2).sum()
    y.backward()
    plain = torch.tensor([0.3, -0.7, 1.1], dtype=torch.float64, requires_grad=True)
    (plain**2).sum().backward()
    assert torch.equal(x.grad, -plain.grad)


def test_reversal_scales_by_strength():
    for lam in (0.0, 0.25, 2.0):
        x = torch.tensor([0.4, 0.9], dtype=torch.float64, requires_grad=True)
        (gradient_reversal(x, lam) * torch.tensor([2.0, -3.0])).sum().backward()
        expected = -lam * torch.tensor([2.0, -3.0], dtype=torch.float64)
        assert torch.equal(x.grad, expected)


def test_reversal_rejects_negative_strength():
    with pytest.raises(ValueError):
        gradient_reversal(torch.zeros(2), -0.1)


def test_mlp_feature_extractor_parameter_count():
    # two dense layers: 2*64+64 weights-plus-bias, then 64*64+64
    model = build_model_triple(_mlp_cfg(), rng_seed=0)
    expected = (2 * 64 + 64) + (64 * 64 + 64)
    assert expected == 4352
    assert parameter_count(model.feature_extractor) == expected


def test_dimension_chain():
    cfg = _mlp_cfg(num_classes=3, feature_dim=16, predictor_hidden=8)
    model = build_model_triple(cfg, rng_seed=1)
    x = torch.randn(5, 2)
    features, probs = model.class_probabilities(x)
    assert features.shape == (5, 16)
    assert probs.shape == (5, 3)
    scores = model.discriminate(torch.randn(5, 16 * 3))
    assert scores.shape == (5,)
    assert torch.all((scores > 0) & (scores < 1))


def test_unconditioned_discriminator_reads_raw_features():
    cfg = _mlp_cfg(num_classes=3, feature_dim=16, conditioned=False)
    model = build_model_triple(cfg, rng_seed=1)
    assert cfg.discriminator_input_dim == 16
    assert model.discriminate(torch.randn(4, 16)).shape == (4,)


def test_same_seed_bit_identical_init():
    a = build_model_triple(_mlp_cfg(), rng_seed=7)
    b = build_model_triple(_mlp_cfg(), rng_seed=7)
    c = build_model_triple(_mlp_cfg(), rng_seed=8)
    for pa, pb in zip(a.classifier_parameters(), b.classifier_parameters()):
        assert torch.equal(pa, pb)
    assert any(
        not torch.equal(pa, pc)
        for pa, pc in zip(a.classifier_parameters(), c.classifier_parameters())
    )


def test_small_cnn_smoke():
    cfg = ArchitectureConfig(
        kind=SMALL_CNN, input_shape=(1, 28, 28), num_classes=10,
        feature_dim=500, predictor_hidden=128,
    )
    model = build_model_triple(cfg, rng_seed=3)
    features, probs = predict(model, np.zeros((2, 1, 28, 28)))
    assert features.shape == (2, 500)
    assert probs.shape == (2, 10)
    assert torch.all(torch.isfinite(features)) and torch.all(torch.isfinite(probs))


def test_predict_simplex_and_determinism():
    model = build_model_triple(_mlp_cfg(num_classes=4), rng_seed=5)
    x = np.random.default_rng(0).normal(size=(32, 2))
    _, probs = predict(model, x)
    np.testing.assert_allclose(probs.sum(dim=1).numpy(), 1.0, atol=1e-6)
    _, again = predict(model, x)
    assert torch.equal(probs, again)
    # duplicated rows produce duplicated outputs
    _, dup = predict(model, np.vstack([x[:1], x[:1]]))
    assert torch.equal(dup[0], dup[1])


def test_predict_rejects_shape_mismatch():
    model = build_model_triple(_mlp_cfg(), rng_seed=5)
    with pytest.raises(ValueError):
        predict(model, np.zeros((4, 3)))


def test_config_validation():
    with pytest.raises(ValueError):
        ArchitectureConfig(kind="resnet", input_shape=(2,), num_classes=2)
    with pytest.raises(ValueError):
        ArchitectureConfig(kind=MLP, input_shape=(1, 28, 28), num_classes=2)
    with pytest.raises(ValueError):
        ArchitectureConfig(kind=MLP, input_shape=(2,), num_classes=1)
    with pytest.raises(ValueError):
        ArchitectureConfig(kind=MLP, input_shape=(2,), num_classes=2, feature_dim=0)
    with pytest.raises(ValueError):
        ArchitectureConfig(kind=SMALL_CNN, input_shape=(1, 8, 8), num_classes=2)
    with pytest.raises(ValueError):
        ModelTriple(None, None, None, reversal_strength=-1.0,
                    config=_mlp_cfg(), rng_seed=0)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    model = build_model_triple(_mlp_cfg(num_classes=3), rng_seed=11,
                               reversal_strength=0.7)
    # perturb away from the seeded init so the restore is doing real work
    with torch.no_grad():
        for p in model.classifier_parameters():
            p.add_(torch.randn_like(p))
    path = tmp_path / "model.pt"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.config == model.config
    assert back.rng_seed == 11
    assert back.reversal_strength == 0.7
    for name in ("feature_extractor", "label_predictor", "domain_discriminator"):
        for pa, pb in zip(getattr(model, name).parameters(), getattr(back, name).parameters()):
            assert torch.equal(pa, pb)
    x = np.random.default_rng(1).normal(size=(8, 2))
    assert torch.equal(predict(model, x)[1], predict(back, x)[1])


def test_checkpoint_rejects_foreign_payload(tmp_path):
    path = tmp_path / "other.pt"
    torch.save({"format": "something-else"}, path)
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_end_to_end_gradient_matches_finite_differences():
    """Complementary loss through the label predictor and feature extractor
    agrees with central differences on every parameter, in 64-bit mode."""
    from clarinet.losses import complementary_loss_vector, total_complementary_loss
    from clarinet.oracle import finite_difference_gradient_check

    cfg = _mlp_cfg(num_classes=3, hidden_width=4, feature_dim=3, predictor_hidden=4)
    model = build_model_triple(cfg, rng_seed=2, dtype=torch.float64)
    rng = np.random.default_rng(9)
    x = torch.as_tensor(rng.normal(size=(8, 2)))
    ybar = rng.integers(0, 3, size=8)
    params = list(model.classifier_parameters())

    def loss_at(flat):
        with torch.no_grad():
            vector_to_parameters(torch.as_tensor(flat), params)
            _, probs = model.class_probabilities(x)
            return float(total_complementary_loss(complementary_loss_vector(probs, ybar, 3)))

    flat0 = parameters_to_vector(params).detach().numpy()
    _, probs = model.class_probabilities(x)
    loss = total_complementary_loss(complementary_loss_vector(probs, ybar, 3))
    grads = torch.autograd.grad(loss, params)
    analytic = np.concatenate([g.reshape(-1).numpy() for g in grads])
    err = finite_difference_gradient_check(loss_at, analytic, flat0, epsilon=1e-6)
    with torch.no_grad():
        vector_to_parameters(torch.as_tensor(flat0), params)
    assert err < 1e-4
