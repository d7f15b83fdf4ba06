"""Scikit-learn style wrappers around the training procedures.

These classes follow the usual estimator conventions: hyperparameters are
stored verbatim in ``__init__``, all work happens in ``fit``, and fitted
state lands in trailing-underscore attributes (``model_``, ``metrics_``,
``classes_``). ``get_params``/``set_params``/``clone`` and the accuracy
``score`` come from the scikit-learn base classes, so the estimators fit
into pipelines and grid searches that do not need to know the labels are
complementary.

The y passed to ``fit`` is the complementary label vector except where a
method consumes true labels (the partially-true variant takes a mask that
says which entries are true labels).
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .labels import ComplementaryDataset, LabelSpace
from .models import MLP, SMALL_CNN, ArchitectureConfig, build_model_triple, predict
from .trainers import (
    NO_CONDITION,
    TrainConfig,
    train_cc_uda,
    train_gac,
    train_pc_uda,
    two_step_pipeline,
)


def _infer_num_classes(y, declared):
    if declared is not None:
        if declared < 2:
            raise ValueError("num_classes must be at least 2")
        return int(declared)
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("cannot infer the class count from an empty label vector")
    return max(int(y.max()) + 1, 2)


def _architecture_for(X, num_classes, hidden_width, feature_dim,
                      predictor_hidden, conditioned):
    X = np.asarray(X)
    if X.ndim == 2:
        kind, input_shape = MLP, (X.shape[1],)
    elif X.ndim == 4:
        kind, input_shape = SMALL_CNN, X.shape[1:]
    else:
        raise ValueError(
            f"X must be (n, features) or (n, channels, height, width), got shape {X.shape}"
        )
    return ArchitectureConfig(
        kind=kind, input_shape=input_shape, num_classes=num_classes,
        hidden_width=hidden_width, feature_dim=feature_dim,
        predictor_hidden=predictor_hidden, conditioned=conditioned,
    )


class _ComplementaryEstimatorBase(BaseEstimator, ClassifierMixin):
    def _train_config(self, **overrides):
        fields = dict(
            batch_size=self.batch_size,
            epochs=self.epochs,
            # irrelevant without a target stream; subclasses override
            adversarial_start_epoch=self.epochs,
            iterations_per_epoch=self.iterations_per_epoch,
            lr_classifier=self.lr_classifier,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            temperature=getattr(self, "temperature", 0.5),
            ablations=frozenset(self.ablations),
            seed=self.random_state,
            deterministic=self.deterministic,
            eval_every=self.eval_every,
        )
        fields.update(overrides)
        return TrainConfig(**fields)

    def _build_model(self, X, num_classes, reversal_strength=1.0):
        conditioned = NO_CONDITION not in frozenset(self.ablations)
        arch = _architecture_for(
            X, num_classes, self.hidden_width, self.feature_dim,
            self.predictor_hidden, conditioned,
        )
        return build_model_triple(arch, self.random_state, reversal_strength)

    def _complementary_dataset(self, X, ybar, num_classes, y_true_hidden=None):
        space = LabelSpace(num_classes=num_classes)
        return ComplementaryDataset(X, ybar, space, y_true_hidden=y_true_hidden)

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet; call fit first"
            )

    def predict_proba(self, X):
        """Class probability rows for each example."""
        self._check_fitted()
        _, probs = predict(self.model_, X)
        return probs.numpy()

    def predict(self, X):
        """Most probable class for each example."""
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]


class GACClassifier(_ComplementaryEstimatorBase):
    """Classifier trained on complementary labels only, no domain transfer.

    ``fit(X, y)`` takes complementary labels: each y[i] names a class the
    example is known not to belong to. The per-class complementary loss is
    minimized under the non-negative correction rule.
    """

    def __init__(self, num_classes=None, hidden_width=64, feature_dim=64,
                 predictor_hidden=64, batch_size=128, epochs=200,
                 iterations_per_epoch=None, lr_classifier=5e-5, momentum=0.9,
                 weight_decay=5e-5, ablations=(), random_state=1,
                 deterministic=False, eval_every=1):
        self.num_classes = num_classes
        self.hidden_width = hidden_width
        self.feature_dim = feature_dim
        self.predictor_hidden = predictor_hidden
        self.batch_size = batch_size
        self.epochs = epochs
        self.iterations_per_epoch = iterations_per_epoch
        self.lr_classifier = lr_classifier
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.ablations = ablations
        self.random_state = random_state
        self.deterministic = deterministic
        self.eval_every = eval_every

    def fit(self, X, y, y_true_hidden=None, eval_data=None):
        K = _infer_num_classes(y, self.num_classes)
        model = self._build_model(X, K)
        source = self._complementary_dataset(X, y, K, y_true_hidden)
        self.model_, self.metrics_ = train_gac(
            model, source, self._train_config(), eval_data=eval_data,
        )
        self.classes_ = np.arange(K)
        if np.asarray(X).ndim == 2:
            self.n_features_in_ = np.asarray(X).shape[1]
        return self


class _AdversarialEstimatorBase(_ComplementaryEstimatorBase):
    def _set_common(self, num_classes, hidden_width, feature_dim,
                    predictor_hidden, batch_size, epochs,
                    adversarial_start_epoch, iterations_per_epoch,
                    lr_classifier, lr_adversarial, momentum, weight_decay,
                    reversal_strength, temperature, ablations, random_state,
                    deterministic, eval_every):
        self.num_classes = num_classes
        self.hidden_width = hidden_width
        self.feature_dim = feature_dim
        self.predictor_hidden = predictor_hidden
        self.batch_size = batch_size
        self.epochs = epochs
        self.adversarial_start_epoch = adversarial_start_epoch
        self.iterations_per_epoch = iterations_per_epoch
        self.lr_classifier = lr_classifier
        self.lr_adversarial = lr_adversarial
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.reversal_strength = reversal_strength
        self.temperature = temperature
        self.ablations = ablations
        self.random_state = random_state
        self.deterministic = deterministic
        self.eval_every = eval_every

    def _adaptation_config(self, **overrides):
        return self._train_config(
            adversarial_start_epoch=self.adversarial_start_epoch,
            lr_adversarial=self.lr_adversarial,
            reversal_strength=self.reversal_strength,
            **overrides,
        )

    def _require_target(self, target_X):
        if target_X is None:
            raise ValueError(
                f"{type(self).__name__}.fit needs target_X, the unlabeled "
                "target-domain examples to adapt to"
            )
        return np.asarray(target_X)

    def _finish(self, X, K):
        self.classes_ = np.arange(K)
        if np.asarray(X).ndim == 2:
            self.n_features_in_ = np.asarray(X).shape[1]
        return self


class ClarinetCC(_AdversarialEstimatorBase):
    """Adversarial domain adaptation from a fully complementary source.

    ``fit(X, y, target_X=...)`` takes the labeled-by-exclusion source and
    the unlabeled target sample; predictions are then made in either
    domain, typically the target.
    """

    def __init__(self, num_classes=None, hidden_width=64, feature_dim=64,
                 predictor_hidden=64, batch_size=128, epochs=200,
                 adversarial_start_epoch=5, iterations_per_epoch=None,
                 lr_classifier=5e-5, lr_adversarial=0.005, momentum=0.9,
                 weight_decay=5e-5, reversal_strength=1.0, temperature=0.5,
                 ablations=(), random_state=1, deterministic=False,
                 eval_every=1):
        self._set_common(num_classes, hidden_width, feature_dim,
                         predictor_hidden, batch_size, epochs,
                         adversarial_start_epoch, iterations_per_epoch,
                         lr_classifier, lr_adversarial, momentum,
                         weight_decay, reversal_strength, temperature,
                         ablations, random_state, deterministic, eval_every)

    def fit(self, X, y, target_X=None, y_true_hidden=None, eval_data=None):
        target_X = self._require_target(target_X)
        K = _infer_num_classes(y, self.num_classes)
        model = self._build_model(X, K, self.reversal_strength)
        source = self._complementary_dataset(X, y, K, y_true_hidden)
        self.model_, self.metrics_ = train_cc_uda(
            model, source, target_X, self._adaptation_config(), eval_data=eval_data,
        )
        return self._finish(X, K)


class ClarinetPC(_AdversarialEstimatorBase):
    """Adaptation from a source that mixes true and complementary labels.

    ``fit(X, y, true_mask=..., target_X=...)``: y[i] is a true label where
    true_mask[i] is set and a complementary label elsewhere. ``alpha``
    balances the two losses; None uses an effective-sample-size default.
    """

    def __init__(self, num_classes=None, hidden_width=64, feature_dim=64,
                 predictor_hidden=64, batch_size=128, epochs=200,
                 adversarial_start_epoch=5, iterations_per_epoch=None,
                 lr_classifier=5e-5, lr_adversarial=0.005, momentum=0.9,
                 weight_decay=5e-5, reversal_strength=1.0, temperature=0.5,
                 alpha=None, ablations=(), random_state=1, deterministic=False,
                 eval_every=1):
        self._set_common(num_classes, hidden_width, feature_dim,
                         predictor_hidden, batch_size, epochs,
                         adversarial_start_epoch, iterations_per_epoch,
                         lr_classifier, lr_adversarial, momentum,
                         weight_decay, reversal_strength, temperature,
                         ablations, random_state, deterministic, eval_every)
        self.alpha = alpha

    def fit(self, X, y, true_mask=None, target_X=None, y_true_hidden=None,
            eval_data=None):
        target_X = self._require_target(target_X)
        X = np.asarray(X)
        y = np.asarray(y)
        if true_mask is None:
            true_mask = np.zeros(len(y), dtype=bool)
        true_mask = np.asarray(true_mask, dtype=bool)
        if true_mask.shape != y.shape:
            raise ValueError("true_mask must align with y")
        K = _infer_num_classes(y, self.num_classes)
        model = self._build_model(X, K, self.reversal_strength)
        true_part = (X[true_mask], y[true_mask])
        hidden = None if y_true_hidden is None else np.asarray(y_true_hidden)[~true_mask]
        comp_part = self._complementary_dataset(
            X[~true_mask], y[~true_mask], K, hidden
        )
        self.model_, self.metrics_ = train_pc_uda(
            model, true_part, comp_part, target_X,
            self._adaptation_config(alpha=self.alpha), eval_data=eval_data,
        )
        return self._finish(X, K)


class TwoStepClassifier(_AdversarialEstimatorBase):
    """Baseline: recover pseudo-labels without transfer, then adapt on them.

    Stage one fits the non-transfer classifier to the complementary
    labels; stage two trains a fresh model with ordinary supervised
    adaptation on its argmax predictions.
    """

    def __init__(self, num_classes=None, hidden_width=64, feature_dim=64,
                 predictor_hidden=64, batch_size=128, epochs=200,
                 adversarial_start_epoch=5, iterations_per_epoch=None,
                 lr_classifier=5e-5, lr_adversarial=0.005, momentum=0.9,
                 weight_decay=5e-5, reversal_strength=1.0, temperature=0.5,
                 ablations=(), random_state=1, deterministic=False,
                 eval_every=1):
        self._set_common(num_classes, hidden_width, feature_dim,
                         predictor_hidden, batch_size, epochs,
                         adversarial_start_epoch, iterations_per_epoch,
                         lr_classifier, lr_adversarial, momentum,
                         weight_decay, reversal_strength, temperature,
                         ablations, random_state, deterministic, eval_every)

    def fit(self, X, y, target_X=None, y_true_hidden=None, eval_data=None):
        target_X = self._require_target(target_X)
        K = _infer_num_classes(y, self.num_classes)
        model = self._build_model(X, K, self.reversal_strength)
        source = self._complementary_dataset(X, y, K, y_true_hidden)
        self.model_, self.metrics_ = two_step_pipeline(
            model, source, target_X, self._adaptation_config(), eval_data=eval_data,
        )
        return self._finish(X, K)
