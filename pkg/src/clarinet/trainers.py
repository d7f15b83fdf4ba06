"""Training procedures for complementary-label domain adaptation.

One engine drives all four procedures. Per iteration it runs up to three
parameter updates, each with its own gradient: a true-label step scaled
by alpha (only when a true-labeled stream exists), a complementary step
scaled by (1 - alpha) that applies the non-negative correction rule, and,
once the adversarial start epoch has passed, a conditioned adversarial
step in which the discriminator descends and the feature path ascends
through gradient reversal. The non-transfer baseline is the same engine
without a target stream; the two-step baseline chains it twice.

Every data stream draws mini-batches from its own named random stream, so
disabling one stream never perturbs the batch order of another. That is
what makes the reduction identities hold bitwise: with the adversarial
start pushed past the last epoch the adaptive run replays the baseline
exactly, and with no true-labeled data the partially-true procedure
replays the fully-complementary one.
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from .conditioning import (
    SOURCE_COMP,
    SOURCE_TRUE,
    TARGET,
    AdversarialBatchTerms,
    conditioned_feature,
    prediction_entropy,
    sample_weight,
    scattered_adversarial_loss_pc,
    sharpen,
)
from .losses import (
    UpdateMode,
    complementary_loss_vector,
    nonnegative_correction_step,
    true_label_loss,
)
from .models import build_model_triple, gradient_reversal, predict

NO_SHARPEN = "no_sharpen"
NO_CONDITION = "no_condition"
CE_ON_COMPLEMENTARY = "ce_on_complementary"
_KNOWN_ABLATIONS = frozenset({NO_SHARPEN, NO_CONDITION, CE_ON_COMPLEMENTARY})

# named random streams, one per data stream
_RNG_TRUE, _RNG_COMP, _RNG_TARGET = 0, 1, 2


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by all training procedures.

    ``alpha`` balances the true-label and complementary losses and is only
    consulted by the partially-true procedure; None selects an
    effective-sample-size default there. ``iterations_per_epoch`` of None
    derives the count from the largest active data stream; the smaller
    streams cycle with reshuffles.
    """

    batch_size: int = 128
    epochs: int = 200
    adversarial_start_epoch: int = 5
    iterations_per_epoch: int | None = None
    lr_classifier: float = 5e-5
    lr_adversarial: float = 0.005
    momentum: float = 0.9
    weight_decay: float = 5e-5
    reversal_strength: float = 1.0
    temperature: float = 0.5
    alpha: float | None = None
    seed: int = 1
    ablations: frozenset = field(default_factory=frozenset)
    deterministic: bool = False
    eval_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "ablations", frozenset(self.ablations))
        if not 0 <= self.adversarial_start_epoch <= self.epochs:
            raise ValueError(
                "adversarial start epoch must lie in [0, epochs], got "
                f"{self.adversarial_start_epoch} with epochs={self.epochs}"
            )
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if min(self.lr_classifier, self.lr_adversarial) <= 0:
            raise ValueError("learning rates must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.reversal_strength < 0:
            raise ValueError("reversal_strength must be nonnegative")
        if self.alpha is not None and not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        unknown = self.ablations - _KNOWN_ABLATIONS
        if unknown:
            raise ValueError(f"unknown ablations {sorted(unknown)}")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")


CSV_HEADER = "epoch,comp_loss,adv_loss,ascend_frac,target_acc,source_acc,seconds"


@dataclass
class EpochRecord:
    epoch: int
    comp_loss: float
    adv_loss: float
    ascend_frac: float
    target_acc: float
    source_acc: float
    seconds: float


@dataclass
class MetricsLog:
    """Per-epoch training records plus free-form run-level extras.

    ``comp_loss`` holds the classification-phase loss: the total
    complementary loss where one exists, otherwise the plain cross-entropy
    of the true-label phase. Absent quantities are NaN.
    """

    records: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def append(self, record):
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("epoch numbering must increase")
        self.records.append(record)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)

    @property
    def final_target_accuracy(self):
        accs = self.column("target_acc")
        finite = accs[np.isfinite(accs)]
        return float(finite[-1]) if len(finite) else float("nan")

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in self.records:
                fh.write(
                    f"{r.epoch},{r.comp_loss!r},{r.adv_loss!r},{r.ascend_frac!r},"
                    f"{r.target_acc!r},{r.source_acc!r},{r.seconds!r}\n"
                )

    @classmethod
    def from_csv(cls, path):
        log = cls()
        with open(path) as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise ValueError(f"unexpected metrics header in {path}: {header!r}")
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) != 7:
                    raise ValueError(f"malformed metrics row in {path}: {line!r}")
                log.append(EpochRecord(int(parts[0]), *(float(p) for p in parts[1:])))
        return log


class _BatchStream:
    """Cycling mini-batch index source with its own random stream."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next_indices(self):
        if self._pos >= self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        chunk = self._order[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return chunk


def evaluate(model, X, y):
    """Fraction of argmax predictions matching the true labels."""
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty set")
    _, probs = predict(model, X)
    return float((probs.argmax(dim=1).numpy() == y).mean())


def _effective_alpha(cfg, n_true, n_comp, num_classes):
    if cfg.alpha is not None:
        return float(cfg.alpha)
    if n_true == 0:
        return 0.0
    if n_comp == 0:
        return 1.0
    # effective-sample-size weighting: a complementary label carries about
    # 1/(K-1) of a true label's information
    return n_true / (n_true + n_comp / (num_classes - 1))


def _check_finite(value, what, epoch, iteration):
    if not torch.isfinite(value).all():
        raise RuntimeError(
            f"training diverged: non-finite {what} "
            f"at epoch {epoch}, iteration {iteration}"
        )


def _as_model_tensor(model, X, what):
    dtype = next(model.feature_extractor.parameters()).dtype
    # plain np.array copy: immutable dataset arrays must not share storage
    t = torch.from_numpy(np.array(X, dtype=torch.empty(0, dtype=dtype).numpy().dtype))
    if tuple(t.shape[1:]) != model.config.input_shape:
        raise ValueError(
            f"{what} shape {tuple(t.shape[1:])} does not match the model's "
            f"input shape {model.config.input_shape}"
        )
    return t


def _run_engine(model, cfg, *, comp=None, true_data=None, target_X=None,
                eval_data=None, source_eval=None, adversarial=False,
                alpha=0.0, force_no_sharpen=False, on_epoch_end=None):
    if cfg.deterministic:
        torch.set_num_threads(1)
    K = model.config.num_classes

    if comp is not None and len(comp) == 0:
        comp = None
    if true_data is not None and len(true_data[1]) == 0:
        true_data = None
    if comp is None and true_data is None:
        raise ValueError("need at least one nonempty source stream")
    if adversarial and (target_X is None or len(target_X) == 0):
        raise ValueError("adversarial training needs a nonempty target set")

    conditioned = NO_CONDITION not in cfg.ablations
    if model.config.conditioned != conditioned:
        raise ValueError(
            "model was built with conditioned="
            f"{model.config.conditioned} but the ablation set implies {conditioned}"
        )
    sharpening_off = force_no_sharpen or NO_SHARPEN in cfg.ablations
    if cfg.batch_size < K:
        warnings.warn(
            f"batch_size {cfg.batch_size} is below the class count {K}; "
            "per-batch class priors will be noisy",
            stacklevel=2,
        )

    sizes = []
    if comp is not None:
        Xc = _as_model_tensor(model, comp.X, "complementary source")
        ybar = torch.from_numpy(comp.ybar.copy())
        if comp.num_classes != K:
            raise ValueError("source label space disagrees with the model's class count")
        sizes.append(len(comp))
    if true_data is not None:
        Xtrue = _as_model_tensor(model, true_data[0], "true-labeled source")
        ytrue = torch.as_tensor(np.asarray(true_data[1]), dtype=torch.long)
        sizes.append(len(ytrue))
    if adversarial:
        Xtgt = _as_model_tensor(model, target_X, "target")
        sizes.append(len(Xtgt))

    n_iters = cfg.iterations_per_epoch or math.ceil(max(sizes) / cfg.batch_size)

    streams = {}
    if true_data is not None:
        streams["true"] = _BatchStream(
            len(ytrue), cfg.batch_size, np.random.default_rng([cfg.seed, _RNG_TRUE])
        )
    if comp is not None:
        streams["comp"] = _BatchStream(
            len(comp), cfg.batch_size, np.random.default_rng([cfg.seed, _RNG_COMP])
        )
    if adversarial:
        streams["target"] = _BatchStream(
            len(Xtgt), cfg.batch_size, np.random.default_rng([cfg.seed, _RNG_TARGET])
        )

    classifier_opt = torch.optim.SGD(
        list(model.classifier_parameters()),
        lr=cfg.lr_classifier, momentum=cfg.momentum, weight_decay=cfg.weight_decay,
    )
    adversarial_opt = None
    if adversarial:
        adversarial_opt = torch.optim.SGD(
            list(model.domain_discriminator.parameters()) + list(model.classifier_parameters()),
            lr=cfg.lr_adversarial, momentum=cfg.momentum, weight_decay=cfg.weight_decay,
        )

    def adversarial_side(X, idx, tag, epoch, iteration):
        features, probs = model.class_probabilities(X[idx])
        _check_finite(probs, f"{tag} class probabilities", epoch, iteration)
        t = probs if sharpening_off else sharpen(probs, cfg.temperature)
        weights = sample_weight(prediction_entropy(t)).detach()
        disc_in = conditioned_feature(features, t) if conditioned else features
        scores = model.discriminate(gradient_reversal(disc_in, cfg.reversal_strength))
        return AdversarialBatchTerms(weights=weights, disc_outputs=scores, tag=tag)

    log = MetricsLog()
    for epoch in range(1, cfg.epochs + 1):
        t_start = time.perf_counter()
        clf_losses, adv_losses = [], []
        ascend_count, correction_count = 0, 0
        for iteration in range(1, n_iters + 1):
            true_idx = comp_idx = None
            if true_data is not None:
                true_idx = torch.as_tensor(streams["true"].next_indices())
                _, probs = model.class_probabilities(Xtrue[true_idx])
                _check_finite(probs, "class probabilities", epoch, iteration)
                ce = true_label_loss(probs, ytrue[true_idx])
                objective = alpha * ce
                _check_finite(objective, "true-label loss", epoch, iteration)
                classifier_opt.zero_grad()
                objective.backward()
                classifier_opt.step()
                if comp is None:
                    clf_losses.append(float(ce.detach()))
            if comp is not None:
                comp_idx = torch.as_tensor(streams["comp"].next_indices())
                _, probs = model.class_probabilities(Xc[comp_idx])
                _check_finite(probs, "class probabilities", epoch, iteration)
                comp_scale = 1.0 - alpha
                if CE_ON_COMPLEMENTARY in cfg.ablations:
                    # deliberately treats the complementary label as if true
                    wrong = true_label_loss(probs, ybar[comp_idx])
                    objective = comp_scale * wrong
                    clf_losses.append(float(wrong.detach()))
                else:
                    per_class = complementary_loss_vector(probs, ybar[comp_idx], K)
                    clf_losses.append(float(per_class.values.detach().sum()))
                    directive = nonnegative_correction_step(per_class)
                    correction_count += 1
                    if directive.mode is UpdateMode.ASCEND_NEGATIVE:
                        ascend_count += 1
                        objective = comp_scale * (-directive.loss)
                    else:
                        objective = comp_scale * directive.loss
                _check_finite(objective, "complementary loss", epoch, iteration)
                classifier_opt.zero_grad()
                objective.backward()
                classifier_opt.step()
            if adversarial and epoch > cfg.adversarial_start_epoch:
                terms = {}
                if true_data is not None:
                    terms[SOURCE_TRUE] = adversarial_side(
                        Xtrue, true_idx, SOURCE_TRUE, epoch, iteration
                    )
                if comp is not None:
                    terms[SOURCE_COMP] = adversarial_side(
                        Xc, comp_idx, SOURCE_COMP, epoch, iteration
                    )
                target_idx = torch.as_tensor(streams["target"].next_indices())
                terms[TARGET] = adversarial_side(Xtgt, target_idx, TARGET, epoch, iteration)
                adv_loss = scattered_adversarial_loss_pc(
                    terms.get(SOURCE_TRUE), terms.get(SOURCE_COMP), terms[TARGET]
                )
                _check_finite(adv_loss, "adversarial loss", epoch, iteration)
                adversarial_opt.zero_grad()
                # descend the negated log-likelihood: the discriminator then
                # ascends it while reversal makes the feature path descend it
                (-adv_loss).backward()
                adversarial_opt.step()
                adv_losses.append(float(adv_loss.detach()))

        run_eval = epoch % cfg.eval_every == 0 or epoch == cfg.epochs
        target_acc = (
            evaluate(model, *eval_data) if eval_data is not None and run_eval else float("nan")
        )
        source_acc = (
            evaluate(model, *source_eval)
            if source_eval is not None and run_eval
            else float("nan")
        )
        record = EpochRecord(
            epoch=epoch,
            comp_loss=float(np.mean(clf_losses)) if clf_losses else float("nan"),
            adv_loss=float(np.mean(adv_losses)) if adv_losses else float("nan"),
            ascend_frac=ascend_count / correction_count if correction_count else float("nan"),
            target_acc=target_acc,
            source_acc=source_acc,
            seconds=time.perf_counter() - t_start,
        )
        log.append(record)
        if on_epoch_end is not None:
            on_epoch_end(model, record)
    return model, log


def _hidden_source_eval(comp, true_data=None):
    """Assemble the (X, y_true) pairs whose true labels are known, if any."""
    xs, ys = [], []
    if comp is not None and len(comp):
        known = comp.y_true_hidden >= 0
        if known.any():
            xs.append(comp.X[known])
            ys.append(comp.y_true_hidden[known])
    if true_data is not None and len(true_data[1]):
        xs.append(np.asarray(true_data[0]))
        ys.append(np.asarray(true_data[1]))
    if not xs:
        return None
    return np.concatenate(xs), np.concatenate(ys)


def train_gac(model, source, cfg, eval_data=None, on_epoch_end=None):
    """Non-transfer baseline: complementary loss with correction, no target.

    Matches the adaptive procedure with the adversarial start pushed past
    the last epoch, batch for batch, when the iteration pacing agrees (set
    ``iterations_per_epoch`` explicitly if source and target sizes differ).
    """
    return _run_engine(
        model, cfg, comp=source, eval_data=eval_data,
        source_eval=_hidden_source_eval(source), adversarial=False,
        alpha=0.0, on_epoch_end=on_epoch_end,
    )


def train_cc_uda(model, source, target_X, cfg, eval_data=None, on_epoch_end=None):
    """Adversarial adaptation from a complementary-label source."""
    return _run_engine(
        model, cfg, comp=source, target_X=target_X, eval_data=eval_data,
        source_eval=_hidden_source_eval(source), adversarial=True,
        alpha=0.0, on_epoch_end=on_epoch_end,
    )


def train_pc_uda(model, true_source, comp_source, target_X, cfg,
                 eval_data=None, on_epoch_end=None):
    """Adaptation from a mixed source: some true labels, the rest complementary.

    ``true_source`` is an (X, y) pair or None. With no true-labeled data and
    alpha 0 this replays the fully-complementary procedure exactly.
    """
    if true_source is not None and len(true_source[1]) == 0:
        true_source = None
    n_true = 0 if true_source is None else len(true_source[1])
    n_comp = 0 if comp_source is None else len(comp_source)
    alpha = _effective_alpha(cfg, n_true, n_comp, model.config.num_classes)
    model, log = _run_engine(
        model, cfg, comp=comp_source, true_data=true_source, target_X=target_X,
        eval_data=eval_data, source_eval=_hidden_source_eval(comp_source, true_source),
        adversarial=True, alpha=alpha, on_epoch_end=on_epoch_end,
    )
    log.extras["alpha"] = alpha
    return model, log


def train_pseudo_label_uda(model, source_X, source_y, target_X, cfg,
                           eval_data=None, hidden_true=None, on_epoch_end=None):
    """Ordinary conditioned adversarial adaptation on hard source labels.

    This is the second stage of the two-step baseline: plain cross-entropy
    on (possibly noisy) labels plus the same adversarial game, with
    sharpening disabled because the labels are already hard.
    """
    source_eval = None
    if hidden_true is not None:
        source_eval = (np.asarray(source_X), np.asarray(hidden_true))
    return _run_engine(
        model, cfg, true_data=(source_X, source_y), target_X=target_X,
        eval_data=eval_data, source_eval=source_eval, adversarial=True,
        alpha=1.0, force_no_sharpen=True, on_epoch_end=on_epoch_end,
    )


def two_step_pipeline(model, source, target_X, cfg, eval_data=None, on_epoch_end=None):
    """Baseline that separates label recovery from adaptation.

    Stage one trains the non-transfer classifier on the complementary
    source; stage two freezes its argmax predictions as pseudo-labels;
    stage three trains a fresh model with ordinary supervised adaptation
    on those pseudo-labels. The pseudo-label noise rate (against hidden
    true labels, when present) lands in the metrics extras.
    """
    stage1_model, stage1_log = train_gac(model, source, cfg, eval_data=eval_data)
    _, probs = predict(stage1_model, source.X)
    pseudo = probs.argmax(dim=1).numpy()
    known = source.y_true_hidden >= 0
    noise_rate = (
        float((pseudo[known] != source.y_true_hidden[known]).mean())
        if known.any() else float("nan")
    )
    fresh_seed = int(np.random.SeedSequence([cfg.seed, 0x2577EB]).generate_state(1)[0] % 2**31)
    dtype = next(model.feature_extractor.parameters()).dtype
    fresh = build_model_triple(
        model.config, fresh_seed, model.reversal_strength, dtype=dtype
    )
    hidden = source.y_true_hidden if known.any() else None
    final, log = train_pseudo_label_uda(
        fresh, source.X, pseudo, target_X, cfg, eval_data=eval_data,
        hidden_true=hidden, on_epoch_end=on_epoch_end,
    )
    log.extras["pseudo_label_noise_rate"] = noise_rate
    log.extras["stage1_final_target_acc"] = stage1_log.final_target_accuracy
    return final, log
