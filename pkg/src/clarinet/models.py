"""Differentiable model components and the gradient reversal mechanism.

A model triple bundles the feature extractor, the label predictor that
turns features into class probabilities, and the domain discriminator
that scores conditioned features as source-vs-target. The adversarial
game is wired through gradient reversal: the discriminator input path is
an identity forward but multiplies upstream gradients by a negative
constant on the way back, so one backward pass descends the
discriminator and ascends the feature path simultaneously.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


class _GradientReversal(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, strength):
        ctx.strength = strength
        return x.view_as(x)

    @staticmethod
    def backward(ctx, upstream):
        return -ctx.strength * upstream, None


def gradient_reversal(x, strength):
    """Identity forward; backward delivers -strength * upstream gradient."""
    if strength < 0:
        raise ValueError(f"reversal strength must be nonnegative, got {strength}")
    return _GradientReversal.apply(x, float(strength))


MLP = "mlp"
SMALL_CNN = "small_cnn"


@dataclass(frozen=True)
class ArchitectureConfig:
    """Declarative plan for one model triple.

    ``kind`` selects the feature extractor family: a two-layer dense
    extractor for vector inputs or a small two-conv-block network for
    single-digit-style images. The label predictor and domain
    discriminator share their dense structure (two hidden layers of
    ``predictor_hidden`` units); the discriminator reads the flattened
    feature-prediction outer product unless ``conditioned`` is off, in
    which case it reads raw features.
    """

    kind: str
    input_shape: tuple
    num_classes: int
    hidden_width: int = 64
    feature_dim: int = 64
    predictor_hidden: int = 64
    conditioned: bool = True

    def __post_init__(self):
        if self.kind not in (MLP, SMALL_CNN):
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        expected_rank = 1 if self.kind == MLP else 3
        if len(self.input_shape) != expected_rank:
            raise ValueError(
                f"{self.kind} expects input shape of rank {expected_rank}, "
                f"got {self.input_shape}"
            )
        for name in ("num_classes", "hidden_width", "feature_dim", "predictor_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.kind == SMALL_CNN:
            _, h, w = self.input_shape
            if _conv_plan_output(h) < 1 or _conv_plan_output(w) < 1:
                raise ValueError(
                    f"input {self.input_shape} too small for the conv plan"
                )

    @property
    def discriminator_input_dim(self):
        return self.feature_dim * self.num_classes if self.conditioned else self.feature_dim


def _conv_plan_output(side):
    # two (5x5 conv, 2x2 maxpool) blocks without padding
    return ((side - 4) // 2 - 4) // 2


def _build_feature_extractor(cfg):
    if cfg.kind == MLP:
        return nn.Sequential(
            nn.Linear(cfg.input_shape[0], cfg.hidden_width),
            nn.ReLU(),
            nn.Linear(cfg.hidden_width, cfg.feature_dim),
            nn.ReLU(),
        )
    channels, h, w = cfg.input_shape
    flat = 50 * _conv_plan_output(h) * _conv_plan_output(w)
    return nn.Sequential(
        nn.Conv2d(channels, 20, kernel_size=5),
        nn.MaxPool2d(2),
        nn.ReLU(),
        nn.Conv2d(20, 50, kernel_size=5),
        nn.MaxPool2d(2),
        nn.ReLU(),
        nn.Flatten(),
        nn.Linear(flat, cfg.feature_dim),
        nn.ReLU(),
    )


def _build_dense_head(in_dim, hidden, out_dim):
    return nn.Sequential(
        nn.Linear(in_dim, hidden),
        nn.ReLU(),
        nn.Linear(hidden, hidden),
        nn.ReLU(),
        nn.Linear(hidden, out_dim),
    )


@dataclass
class ModelTriple:
    """Feature extractor + label predictor + domain discriminator."""

    feature_extractor: nn.Module
    label_predictor: nn.Module
    domain_discriminator: nn.Module
    reversal_strength: float
    config: ArchitectureConfig
    rng_seed: int

    def __post_init__(self):
        if self.reversal_strength < 0:
            raise ValueError("reversal strength must be nonnegative")

    def classifier_parameters(self):
        yield from self.feature_extractor.parameters()
        yield from self.label_predictor.parameters()

    def class_probabilities(self, x):
        """Differentiable forward: (features, class probability rows)."""
        features = self.feature_extractor(x)
        probs = torch.softmax(self.label_predictor(features), dim=1)
        return features, probs

    def discriminate(self, conditioned):
        """Discriminator output squeezed to a per-example score in (0, 1)."""
        return torch.sigmoid(self.domain_discriminator(conditioned)).squeeze(1)


def build_model_triple(cfg, rng_seed, reversal_strength=1.0, dtype=torch.float32):
    """Deterministically initialize a model triple from its config and seed."""
    torch.manual_seed(int(rng_seed))
    triple = ModelTriple(
        feature_extractor=_build_feature_extractor(cfg).to(dtype),
        label_predictor=_build_dense_head(
            cfg.feature_dim, cfg.predictor_hidden, cfg.num_classes
        ).to(dtype),
        domain_discriminator=_build_dense_head(
            cfg.discriminator_input_dim, cfg.predictor_hidden, 1
        ).to(dtype),
        reversal_strength=reversal_strength,
        config=cfg,
        rng_seed=int(rng_seed),
    )
    return triple


def predict(model, x_batch):
    """Evaluation-mode forward: numpy/tensor batch -> (features, probabilities)."""
    dtype = next(model.feature_extractor.parameters()).dtype
    if isinstance(x_batch, torch.Tensor):
        x = x_batch.to(dtype)
    else:
        # plain np.array copy: immutable dataset arrays must not share storage
        x = torch.from_numpy(np.array(x_batch, dtype=torch.empty(0, dtype=dtype).numpy().dtype))
    expected = model.config.input_shape
    if tuple(x.shape[1:]) != expected:
        raise ValueError(f"batch shape {tuple(x.shape[1:])} does not match {expected}")
    with torch.no_grad():
        features, probs = model.class_probabilities(x)
    return features, probs


def parameter_count(module):
    return sum(p.numel() for p in module.parameters())


_CHECKPOINT_FORMAT = "model-triple-v1"


def save_checkpoint(model, path):
    """Serialize parameters, config, and seed to one self-describing file."""
    torch.save(
        {
            "format": _CHECKPOINT_FORMAT,
            "config": dataclasses.asdict(model.config),
            "rng_seed": model.rng_seed,
            "reversal_strength": model.reversal_strength,
            "dtype": str(next(model.feature_extractor.parameters()).dtype),
            "feature_extractor": model.feature_extractor.state_dict(),
            "label_predictor": model.label_predictor.state_dict(),
            "domain_discriminator": model.domain_discriminator.state_dict(),
        },
        path,
    )


def load_checkpoint(path):
    payload = torch.load(path, weights_only=False)
    if payload.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a model-triple checkpoint")
    cfg = ArchitectureConfig(**payload["config"])
    dtype = getattr(torch, payload["dtype"].removeprefix("torch."))
    model = build_model_triple(
        cfg, payload["rng_seed"], payload["reversal_strength"], dtype=dtype
    )
    model.feature_extractor.load_state_dict(payload["feature_extractor"])
    model.label_predictor.load_state_dict(payload["label_predictor"])
    model.domain_discriminator.load_state_dict(payload["domain_discriminator"])
    return model
