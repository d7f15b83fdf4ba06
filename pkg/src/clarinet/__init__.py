"""Adversarial domain adaptation from complementary-label source data.

The package trains a classifier on a source domain whose only supervision
is complementary labels (a class each example does NOT belong to) and
aligns it to an unlabeled target domain with a conditioned adversarial
game. Non-transfer and two-step pseudo-label baselines, brute-force
verification oracles, and a small CLI harness round it out.

The estimators (``ClarinetCC``, ``ClarinetPC``, ``GACClassifier``,
``TwoStepClassifier``) are the main entry points for library use; the
functional trainers underneath them expose the full metrics log and
ablation switches.
"""

from .conditioning import (
    SOURCE_COMP,
    SOURCE_TRUE,
    TARGET,
    AdversarialBatchTerms,
    conditioned_feature,
    prediction_entropy,
    sample_weight,
    scattered_adversarial_loss_cc,
    scattered_adversarial_loss_pc,
    sharpen,
)
from .datasets import (
    DomainPairSpec,
    ImageBatchSpec,
    load_digit_domain,
    load_idx,
    make_digit_pair,
    make_synthetic_pair,
    preprocess,
    save_idx,
)
from .estimators import ClarinetCC, ClarinetPC, GACClassifier, TwoStepClassifier
from .labels import (
    ComplementaryDataset,
    LabelSpace,
    TransitionMatrix,
    build_transition_matrix,
    complementary_to_true_posterior,
    generate_complementary_dataset,
    load_label_sidecar,
    save_label_sidecar,
    split_pc_dataset,
)
from .losses import (
    PerClassLossVector,
    UpdateDirective,
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
from .models import (
    ArchitectureConfig,
    ModelTriple,
    build_model_triple,
    gradient_reversal,
    load_checkpoint,
    parameter_count,
    predict,
    save_checkpoint,
)
from .oracle import (
    DiscreteToyProblem,
    MonteCarloCheck,
    complementary_loss_variance,
    exact_complementary_risk,
    exact_true_risk,
    finite_difference_gradient_check,
    monte_carlo_estimator_check,
    random_toy_problem,
)
from .trainers import (
    CE_ON_COMPLEMENTARY,
    NO_CONDITION,
    NO_SHARPEN,
    EpochRecord,
    MetricsLog,
    TrainConfig,
    evaluate,
    train_cc_uda,
    train_gac,
    train_pc_uda,
    train_pseudo_label_uda,
    two_step_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "AdversarialBatchTerms",
    "ArchitectureConfig",
    "CE_ON_COMPLEMENTARY",
    "ClarinetCC",
    "ClarinetPC",
    "ComplementaryDataset",
    "DiscreteToyProblem",
    "DomainPairSpec",
    "EpochRecord",
    "GACClassifier",
    "ImageBatchSpec",
    "LabelSpace",
    "MetricsLog",
    "ModelTriple",
    "MonteCarloCheck",
    "NO_CONDITION",
    "NO_SHARPEN",
    "PerClassLossVector",
    "SOURCE_COMP",
    "SOURCE_TRUE",
    "TARGET",
    "TrainConfig",
    "TransitionMatrix",
    "TwoStepClassifier",
    "UpdateDirective",
    "UpdateMode",
    "batch_class_priors",
    "build_model_triple",
    "build_transition_matrix",
    "combined_classification_loss",
    "complementary_loss_variance",
    "complementary_loss_vector",
    "complementary_to_true_posterior",
    "conditioned_feature",
    "evaluate",
    "exact_complementary_risk",
    "exact_true_risk",
    "finite_difference_gradient_check",
    "generate_complementary_dataset",
    "gradient_reversal",
    "load_checkpoint",
    "load_digit_domain",
    "load_idx",
    "load_label_sidecar",
    "make_digit_pair",
    "make_synthetic_pair",
    "monte_carlo_estimator_check",
    "nonnegative_correction_step",
    "parameter_count",
    "partition_by_complementary_label",
    "per_class_complementary_loss",
    "predict",
    "prediction_entropy",
    "preprocess",
    "random_toy_problem",
    "sample_weight",
    "save_checkpoint",
    "save_idx",
    "save_label_sidecar",
    "scattered_adversarial_loss_cc",
    "scattered_adversarial_loss_pc",
    "sharpen",
    "split_pc_dataset",
    "total_complementary_loss",
    "train_cc_uda",
    "train_gac",
    "train_pc_uda",
    "train_pseudo_label_uda",
    "true_label_loss",
    "two_step_pipeline",
    "__version__",
]
