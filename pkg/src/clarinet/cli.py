"""Experiment harness: task registry, seeded runs, sweeps, verification, reports.

The command-line surface has four verbs. ``run`` trains one method on one
task across a list of seeds and persists per-seed metrics CSVs,
checkpoints, a summary JSON, and an accuracy plot. ``sweep`` repeats a
partially-true run over a list of true-label budgets. ``verify`` executes
the numerical oracle suite (closed-form identities, unbiasedness, gradient
checks) and exits nonzero on any failure. ``report`` walks completed runs,
recomputes each summary from its own CSVs, and flags any drift.

Artifact directories are derived from task, method, and a timestamp, and
never silently overwrite a completed run. Configuration is flat key=value
text plus command-line overrides; defaults come from the task registry.
"""

import argparse
import dataclasses
import datetime
import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .conditioning import prediction_entropy, sharpen
from .datasets import (
    BLOBS_SHIFT,
    MOONS_ROTATE,
    DomainPairSpec,
    make_digit_pair,
    make_synthetic_pair,
)
from .labels import LabelSpace, build_transition_matrix, split_pc_dataset
from .losses import complementary_loss_vector, true_label_loss
from .models import (
    ArchitectureConfig,
    build_model_triple,
    gradient_reversal,
    save_checkpoint,
)
from .oracle import (
    exact_complementary_risk,
    exact_true_risk,
    finite_difference_gradient_check,
    monte_carlo_estimator_check,
    random_toy_problem,
)
from .trainers import (
    TrainConfig,
    train_cc_uda,
    train_gac,
    train_pc_uda,
    two_step_pipeline,
)

METHODS = ("clarinet-cc", "clarinet-pc", "gac", "two-step")
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
DATA_ROOT_ENV = "CLARINET_DATA_ROOT"


# --- task registry ---

@dataclass
class TaskData:
    """Everything one seeded run consumes."""

    true_part: tuple
    comp: object
    target_X: np.ndarray
    eval_data: tuple
    num_classes: int


@dataclass(frozen=True)
class TaskSpec:
    name: str
    num_classes: int
    loader: object
    train_defaults: dict
    needs_data_root: bool = False


def _derived_seed(seed, tag):
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0] % (2**31 - 1))


def _split_source(Xs, ys, n_true, num_classes, seed):
    space = LabelSpace(num_classes=num_classes)
    # every method funnels through the same split so that n_true=0 yields
    # the identical complementary dataset the fully-complementary runs see
    return split_pc_dataset(Xs, ys, n_true, space, rng_seed=_derived_seed(seed, 0xBA12))


def _load_moons30(data_root, seed, n_true):
    spec = DomainPairSpec(
        kind=MOONS_ROTATE, n_source=600, n_target=600, n_target_eval=1000,
        rotation_degrees=30.0, noise_scale=0.1,
    )
    (Xs, ys), eval_pair, Xt = make_synthetic_pair(spec, seed=seed)
    true_part, comp = _split_source(Xs, ys, n_true, 2, seed)
    return TaskData(true_part, comp, Xt, eval_pair, 2)


def _load_blobs3(data_root, seed, n_true):
    spec = DomainPairSpec(
        kind=BLOBS_SHIFT, num_classes=3, n_source=400, n_target=600,
        n_target_eval=1200, translation=(1.5, 1.0), noise_scale=0.2,
    )
    (Xs, ys), eval_pair, Xt = make_synthetic_pair(spec, seed=seed)
    true_part, comp = _split_source(Xs, ys, n_true, 3, seed)
    return TaskData(true_part, comp, Xt, eval_pair, 3)


def _load_mnist2usps(data_root, seed, n_true):
    if data_root is None:
        raise ValueError(
            "mnist2usps needs a data root with the MNIST and USPS IDX files; "
            f"pass --data-root or set {DATA_ROOT_ENV}"
        )
    (Xs, ys), eval_pair, Xt = make_digit_pair(
        data_root, source="mnist", target="usps", n_source=10_000,
        image_size=28, seed=seed,
    )
    true_part, comp = _split_source(Xs, ys, n_true, 10, seed)
    return TaskData(true_part, comp, Xt, eval_pair, 10)


TASKS = {
    "moons30": TaskSpec(
        name="moons30", num_classes=2, loader=_load_moons30,
        train_defaults=dict(
            batch_size=128, epochs=300, adversarial_start_epoch=20,
            lr_classifier=0.05, lr_adversarial=0.005, eval_every=10,
        ),
    ),
    "blobs3": TaskSpec(
        name="blobs3", num_classes=3, loader=_load_blobs3,
        train_defaults=dict(
            batch_size=128, epochs=150, adversarial_start_epoch=20,
            lr_classifier=0.05, lr_adversarial=0.005, eval_every=10,
        ),
    ),
    "mnist2usps": TaskSpec(
        name="mnist2usps", num_classes=10, loader=_load_mnist2usps,
        needs_data_root=True,
        train_defaults=dict(
            batch_size=128, epochs=50, adversarial_start_epoch=5,
            lr_classifier=5e-5, lr_adversarial=0.005, eval_every=5,
        ),
    ),
}


# --- experiment configuration ---

@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    method: str
    seeds: tuple = DEFAULT_SEEDS
    n_true: int = 0
    out: str = "runs"
    data_root: str = None
    train_overrides: dict = field(default_factory=dict)
    make_plots: bool = True

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {sorted(TASKS)}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.n_true < 0:
            raise ValueError("n_true must be nonnegative")
        if self.n_true > 0 and self.method != "clarinet-pc":
            raise ValueError("only clarinet-pc consumes true-labeled source data")

    def train_config(self):
        merged = dict(TASKS[self.task].train_defaults)
        merged.update(self.train_overrides)
        known = {f.name for f in dataclasses.fields(TrainConfig)}
        unknown = set(merged) - known
        if unknown:
            raise ValueError(f"unknown training options {sorted(unknown)}")
        return TrainConfig(**merged)


@dataclass
class RunRecord:
    """Summary of one multi-seed run, mirrored in summary.json."""

    task: str
    method: str
    n_true: int
    seeds: tuple
    per_seed_accuracy: dict
    mean_accuracy: float
    std_accuracy: float
    median_accuracy: float
    wall_seconds: float
    run_dir: str
    train_config: dict
    extras: dict

    def to_json_dict(self):
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        d["per_seed_accuracy"] = {str(k): v for k, v in self.per_seed_accuracy.items()}
        d["extras"] = {str(k): v for k, v in self.extras.items()}
        d["train_config"]["ablations"] = sorted(d["train_config"]["ablations"])
        return d


def summarize_accuracies(per_seed):
    """Mean, sample std (None below two seeds), and median of final accuracies."""
    vals = np.array(list(per_seed.values()), dtype=float)
    mean = float(vals.mean())
    std = float(vals.std(ddof=1)) if len(vals) >= 2 else None
    return mean, std, float(np.median(vals))


def _unique_run_dir(out_root, tag):
    stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
    candidate = Path(out_root) / f"{tag}_{stamp}"
    bump = 0
    while candidate.exists():
        bump += 1
        candidate = Path(out_root) / f"{tag}_{stamp}-{bump}"
    candidate.mkdir(parents=True)
    return candidate


def _architecture_for_task(data, cfg):
    from .trainers import NO_CONDITION

    X = data.target_X
    conditioned = NO_CONDITION not in cfg.ablations
    if X.ndim == 2:
        return ArchitectureConfig(
            kind="mlp", input_shape=(X.shape[1],), num_classes=data.num_classes,
            conditioned=conditioned,
        )
    return ArchitectureConfig(
        kind="small_cnn", input_shape=X.shape[1:], num_classes=data.num_classes,
        conditioned=conditioned,
    )


def _train_one_seed(method, data, cfg, seed):
    cfg = dataclasses.replace(cfg, seed=seed)
    arch = _architecture_for_task(data, cfg)
    model = build_model_triple(arch, seed, reversal_strength=cfg.reversal_strength)
    if method == "gac":
        return train_gac(model, data.comp, cfg, eval_data=data.eval_data)
    if method == "clarinet-cc":
        return train_cc_uda(model, data.comp, data.target_X, cfg, eval_data=data.eval_data)
    if method == "clarinet-pc":
        return train_pc_uda(
            model, data.true_part, data.comp, data.target_X, cfg,
            eval_data=data.eval_data,
        )
    if method == "two-step":
        return two_step_pipeline(model, data.comp, data.target_X, cfg,
                                 eval_data=data.eval_data)
    raise ValueError(f"unknown method {method!r}")


def _plot_accuracy_curves(path, logs_by_seed):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for seed, log in sorted(logs_by_seed.items()):
        epochs = log.column("epoch")
        acc = log.column("target_acc")
        keep = np.isfinite(acc)
        ax.plot(epochs[keep], acc[keep], marker=".", label=f"seed {seed}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("target accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def run_experiment(exp, echo=print):
    """Train every seed, persist artifacts, and return the summary record."""
    task = TASKS[exp.task]
    cfg = exp.train_config()
    tag = f"{exp.task}_{exp.method}"
    if exp.method == "clarinet-pc":
        tag += f"_ntrue{exp.n_true}"
    run_dir = _unique_run_dir(exp.out, tag)
    echo(f"run {tag}: seeds {list(exp.seeds)} -> {run_dir}")
    t0 = time.perf_counter()
    per_seed, extras, logs = {}, {}, {}
    for seed in exp.seeds:
        data = task.loader(exp.data_root, seed, exp.n_true)
        model, log = _train_one_seed(exp.method, data, cfg, seed)
        log.to_csv(run_dir / f"metrics_seed{seed}.csv")
        save_checkpoint(model, run_dir / f"checkpoint_seed{seed}.pt")
        acc = log.final_target_accuracy
        per_seed[seed] = acc
        extras[seed] = log.extras
        logs[seed] = log
        echo(f"  seed {seed}: final target accuracy {acc:.4f}")
    mean, std, median = summarize_accuracies(per_seed)
    record = RunRecord(
        task=exp.task, method=exp.method, n_true=exp.n_true, seeds=exp.seeds,
        per_seed_accuracy=per_seed, mean_accuracy=mean, std_accuracy=std,
        median_accuracy=median, wall_seconds=time.perf_counter() - t0,
        run_dir=str(run_dir), train_config=dataclasses.asdict(cfg), extras=extras,
    )
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(record.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if exp.make_plots:
        _plot_accuracy_curves(run_dir / "accuracy_vs_epoch.png", logs)
    std_text = "n/a" if std is None else f"{std:.4f}"
    echo(f"  mean {mean:.4f} +/- {std_text} (median {median:.4f}, "
         f"{record.wall_seconds:.1f}s)")
    return record


def sweep_true_labels(exp, n_true_list, echo=print):
    """One clarinet-pc run per true-label budget, plus a combined table."""
    if exp.method != "clarinet-pc":
        raise ValueError("sweeps vary n_true, which only clarinet-pc consumes")
    if not n_true_list:
        raise ValueError("the n_true list must be nonempty")
    deduped = list(dict.fromkeys(int(n) for n in n_true_list))
    if len(deduped) != len(n_true_list):
        warnings.warn("duplicate n_true entries were dropped", stacklevel=2)
    sweep_dir = _unique_run_dir(exp.out, f"{exp.task}_sweep")
    records = []
    for n_true in deduped:
        sub = dataclasses.replace(exp, n_true=n_true, out=str(sweep_dir))
        records.append(run_experiment(sub, echo=echo))
    with open(sweep_dir / "sweep.csv", "w") as fh:
        fh.write("n_true,mean_accuracy,std_accuracy,median_accuracy\n")
        for r in records:
            std = "" if r.std_accuracy is None else repr(r.std_accuracy)
            fh.write(f"{r.n_true},{r.mean_accuracy!r},{std},{r.median_accuracy!r}\n")
    if exp.make_plots:
        _plot_sweep(sweep_dir / "accuracy_vs_ntrue.png", records)
    for prev, cur in zip(records, records[1:]):
        if cur.mean_accuracy < prev.mean_accuracy:
            echo(f"note: mean accuracy decreased from n_true={prev.n_true} to "
                 f"{cur.n_true} (non-binding trend)")
    return records


def _plot_sweep(path, records):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = [r.n_true for r in records]
    means = [r.mean_accuracy for r in records]
    stds = [0.0 if r.std_accuracy is None else r.std_accuracy for r in records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3)
    ax.set_xlabel("true-labeled source examples")
    ax.set_ylabel("mean target accuracy")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# --- verification suite ---

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check_matrix_identities():
    worst = 0.0
    closed_ok = True
    for K in range(2, 21):
        tm = build_transition_matrix(K)
        worst = max(worst, float(np.abs(tm.matrix @ tm.inverse - np.eye(K)).max()))
        expected = np.full((K, K), 1.0) - np.eye(K) * (K - 1.0)
        closed_ok &= np.array_equal(tm.inverse, expected)
    return CheckResult(
        "matrix-identities", worst < 1e-12 and closed_ok,
        f"max |QQinv - I| = {worst:.2e} over K=2..20, closed form "
        + ("exact" if closed_ok else "WRONG"),
    )


def _check_estimator_identity():
    rng = np.random.default_rng(20240815)
    worst = 0.0
    for _ in range(20):
        K = int(rng.integers(2, 7))
        problem = random_toy_problem(
            num_atoms=int(rng.integers(3, 30)), num_classes=K,
            rng_seed=int(rng.integers(0, 2**31 - 1)),
        )
        worst = max(worst, abs(exact_complementary_risk(problem) - exact_true_risk(problem)))
    return CheckResult(
        "estimator-identity", worst < 1e-10,
        f"max |complementary - true risk| = {worst:.2e} over 20 problems, K in 2..6",
    )


def _check_monte_carlo():
    problem = random_toy_problem(num_atoms=12, num_classes=4, rng_seed=77)
    check = monte_carlo_estimator_check(problem, n_samples=100_000, rng_seed=5)
    dev = abs(check.deviation_in_stderrs)
    return CheckResult(
        "monte-carlo-unbiasedness", dev <= 3.0,
        f"empirical mean within {dev:.2f} stderr of the exact risk (100k samples, K=4)",
    )


def _check_k2_exactness():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 65))
        logits = torch.from_numpy(rng.normal(size=(n, 2)) * 2.0)
        probs = torch.softmax(logits, dim=1)
        y = torch.from_numpy(rng.integers(0, 2, size=n))
        per_class = complementary_loss_vector(probs, 1 - y, 2)
        ce = true_label_loss(probs, y)
        worst = max(worst, abs(float(per_class.values.sum()) - float(ce)))
    return CheckResult(
        "k2-exactness", worst < 1e-9,
        f"max |complementary total - cross-entropy| = {worst:.2e} over 1000 batches",
    )


def _tiny_probe_model():
    arch = ArchitectureConfig(
        kind="mlp", input_shape=(2,), num_classes=3,
        hidden_width=4, feature_dim=3, predictor_hidden=4,
    )
    return build_model_triple(arch, rng_seed=3, dtype=torch.float64)


def _gradient_check_for(loss_fn, model, reversed_strength=None):
    """Finite-difference check of a model loss against autograd.

    When the loss runs through gradient reversal, the forward value is
    unaffected (reversal is the identity forward), so the feature-path
    analytic gradients carry an extra factor of -strength relative to the
    numerical derivative; ``reversed_strength`` undoes that factor on the
    classifier block, exercising exactly the minimax wiring.
    """
    from torch.nn.utils import parameters_to_vector, vector_to_parameters

    classifier = list(model.classifier_parameters())
    params = classifier + list(model.domain_discriminator.parameters())
    flat0 = parameters_to_vector(params).detach().clone()

    def scalar_fn(vec):
        with torch.no_grad():
            vector_to_parameters(torch.as_tensor(vec, dtype=torch.float64), params)
            value = float(loss_fn())
        vector_to_parameters(flat0, params)
        return value

    for p in params:
        p.grad = None
    loss_fn().backward()
    blocks = []
    for p in params:
        grad = p.grad if p.grad is not None else torch.zeros_like(p)
        scale = 1.0
        if reversed_strength is not None and any(p is q for q in classifier):
            scale = -1.0 / reversed_strength
        blocks.append(scale * grad.numpy().ravel())
    analytic = np.concatenate(blocks)
    err = finite_difference_gradient_check(
        scalar_fn, analytic, flat0.numpy(), max_coords=60, rng_seed=0
    )
    for p in params:
        p.grad = None
    return err


def _check_gradients():
    rng = np.random.default_rng(9)
    X = torch.from_numpy(rng.normal(size=(10, 2)))
    Xt = torch.from_numpy(rng.normal(size=(8, 2)) + 0.5)
    ybar = torch.from_numpy(rng.integers(0, 3, size=10))
    y = torch.from_numpy(rng.integers(0, 3, size=10))

    model = _tiny_probe_model()

    def comp_loss():
        _, probs = model.class_probabilities(X)
        return complementary_loss_vector(probs, ybar, 3).values.sum()

    from .conditioning import (
        AdversarialBatchTerms,
        SOURCE_COMP,
        TARGET,
        conditioned_feature,
        sample_weight,
        scattered_adversarial_loss_cc,
    )

    # the optimized objective holds the entropy weights constant (they are
    # detached), so the probe freezes them at the base point too
    with torch.no_grad():
        frozen_w = []
        for x_side in (X, Xt):
            _, probs = model.class_probabilities(x_side)
            frozen_w.append(sample_weight(prediction_entropy(sharpen(probs, 0.5))))

    def adv_loss():
        sides = []
        for x_side, w, tag in ((X, frozen_w[0], SOURCE_COMP), (Xt, frozen_w[1], TARGET)):
            feats, probs = model.class_probabilities(x_side)
            t = sharpen(probs, 0.5)
            score = model.discriminate(
                gradient_reversal(conditioned_feature(feats, t), 0.8)
            )
            sides.append(AdversarialBatchTerms(weights=w, disc_outputs=score, tag=tag))
        return scattered_adversarial_loss_cc(*sides)

    def pc_loss():
        _, probs = model.class_probabilities(X)
        comp = complementary_loss_vector(probs, ybar, 3).values.sum()
        ce = true_label_loss(probs, y)
        return 0.3 * ce + 0.7 * comp

    errs = {
        "complementary": _gradient_check_for(comp_loss, model),
        "adversarial": _gradient_check_for(adv_loss, model, reversed_strength=0.8),
        "pc-combined": _gradient_check_for(pc_loss, model),
    }
    worst = max(errs.values())
    detail = ", ".join(f"{k} {v:.2e}" for k, v in errs.items())
    return CheckResult("gradient-checks", worst < 1e-4, f"max relative error: {detail}")


def _check_reversal_exactness():
    rng = np.random.default_rng(4)
    x = torch.from_numpy(rng.normal(size=(6, 5))).requires_grad_(True)
    upstream = torch.from_numpy(rng.normal(size=(6, 5)))
    strength = 0.73
    (gradient_reversal(x, strength) * upstream).sum().backward()
    rel = float(
        (x.grad + strength * upstream).abs().max()
        / upstream.abs().max()
    )
    return CheckResult(
        "gradient-reversal", rel < 1e-12,
        f"backward vs -strength x upstream relative deviation {rel:.2e}",
    )


def _check_sharpening():
    rng = np.random.default_rng(21)
    rows = rng.dirichlet(np.ones(5), size=10_000)
    t = torch.from_numpy(rows)
    identity_dev = float((sharpen(t, 1.0) - t).abs().max())
    hard = sharpen(t, 0.01)
    # concentration holds for non-tied rows; require a clear top-2 margin
    top2 = torch.topk(t, 2, dim=1).values
    non_tied = top2[:, 1] <= 0.9 * top2[:, 0]
    concentration = float(hard.max(dim=1).values[non_tied].min())
    argmax_ok = bool(torch.equal(hard.argmax(dim=1), t.argmax(dim=1)))
    h_before = prediction_entropy(t)
    h_after = prediction_entropy(sharpen(t, 0.5))
    entropy_ok = bool((h_after <= h_before + 1e-12).all())
    passed = (
        identity_dev < 1e-12 and concentration >= 0.999 and argmax_ok and entropy_ok
    )
    return CheckResult(
        "sharpening-properties", passed,
        f"l=1 identity dev {identity_dev:.2e}; min top prob at l=0.01 "
        f"{concentration:.6f} over {int(non_tied.sum())} non-tied rows; "
        f"argmax preserved {argmax_ok}; entropy non-increasing {entropy_ok} "
        "(10k simplices)",
    )


def verification_checks():
    """The full oracle suite, in execution order."""
    return [
        _check_matrix_identities(),
        _check_estimator_identity(),
        _check_monte_carlo(),
        _check_k2_exactness(),
        _check_gradients(),
        _check_reversal_exactness(),
        _check_sharpening(),
    ]


def run_verify(echo=print):
    results = verification_checks()
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failures += not r.passed
        echo(f"{r.name.ljust(width)}  {status}  {r.detail}")
    echo(f"{failures} of {len(results)} checks failed" if failures
         else f"all {len(results)} checks passed")
    return 1 if failures else 0


# --- report ---

def _recompute_from_csvs(run_dir, summary):
    from .trainers import MetricsLog

    per_seed = {}
    for seed in summary["seeds"]:
        log = MetricsLog.from_csv(Path(run_dir) / f"metrics_seed{seed}.csv")
        per_seed[seed] = log.final_target_accuracy
    return summarize_accuracies(per_seed)


def report_runs(out_root, echo=print):
    """Print every summary and confirm it matches its own per-seed CSVs."""
    summaries = sorted(Path(out_root).rglob("summary.json"))
    if not summaries:
        echo(f"no runs found under {out_root}")
        return 1
    bad = 0
    for path in summaries:
        with open(path) as fh:
            summary = json.load(fh)
        try:
            mean, std, _ = _recompute_from_csvs(path.parent, summary)
            drift = abs(mean - summary["mean_accuracy"])
            if std is not None and summary["std_accuracy"] is not None:
                drift = max(drift, abs(std - summary["std_accuracy"]))
            ok = drift < 1e-12
        except (OSError, ValueError, KeyError) as exc:
            ok, drift = False, float("nan")
            echo(f"  error reading {path.parent}: {exc}")
        bad += not ok
        std_text = ("n/a" if summary.get("std_accuracy") is None
                    else f"{summary['std_accuracy']:.4f}")
        tag = f"{summary['task']}/{summary['method']}"
        if summary.get("method") == "clarinet-pc":
            tag += f"/ntrue={summary.get('n_true')}"
        echo(f"{tag:40s} mean {summary['mean_accuracy']:.4f} +/- {std_text}  "
             f"seeds {summary['seeds']}  "
             f"{'consistent' if ok else f'MISMATCH (drift {drift:.2e})'}")
    return 1 if bad else 0


# --- argument parsing ---

_OVERRIDE_FLAGS = (
    ("epochs", "--epochs", int, "training epochs"),
    ("batch_size", "--batch-size", int, "mini-batch size"),
    ("reversal_strength", "--lambda", float, "gradient reversal strength"),
    ("temperature", "--temperature", float, "sharpening temperature"),
    ("alpha", "--alpha", float, "true-label loss weight (clarinet-pc)"),
    ("adversarial_start_epoch", "--ts", int, "epoch after which adversarial steps start"),
)

_CONFIG_PARSERS = {
    "batch_size": int, "epochs": int, "adversarial_start_epoch": int,
    "seed": int, "eval_every": int,
    "iterations_per_epoch": lambda v: None if v.lower() == "none" else int(v),
    "lr_classifier": float, "lr_adversarial": float, "momentum": float,
    "weight_decay": float, "reversal_strength": float, "temperature": float,
    "alpha": lambda v: None if v.lower() == "none" else float(v),
    "deterministic": lambda v: v.lower() in ("1", "true", "yes"),
    "ablations": lambda v: frozenset(s.strip() for s in v.split(",") if s.strip()),
}
_CONFIG_EXPERIMENT_KEYS = ("task", "method", "seeds", "n_true", "out", "data_root")


def parse_config_file(path):
    """Flat key = value lines; # starts a comment; returns typed overrides."""
    train, experiment = {}, {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in _CONFIG_PARSERS:
                train[key] = _CONFIG_PARSERS[key](value)
            elif key in _CONFIG_EXPERIMENT_KEYS:
                if key == "seeds":
                    experiment[key] = tuple(int(s) for s in value.split(","))
                elif key == "n_true":
                    experiment[key] = int(value)
                else:
                    experiment[key] = value
            else:
                raise ValueError(f"{path}:{lineno}: unknown option {key!r}")
    return experiment, train


def _parse_seeds(text):
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("seeds list is empty")
    return seeds


def _add_run_arguments(parser, include_method=True, include_n_true=True):
    parser.add_argument("--task", choices=sorted(TASKS), help="task registry entry")
    if include_method:
        parser.add_argument("--method", choices=METHODS, help="training method")
    parser.add_argument("--seeds", type=_parse_seeds, default=None,
                        help="comma-separated seeds (default 1,2,3,4,5)")
    if include_n_true:
        parser.add_argument("--n-true", type=int, default=None,
                            help="true-labeled source examples (clarinet-pc)")
    parser.add_argument("--data-root", default=None,
                        help=f"dataset directory (default ${DATA_ROOT_ENV})")
    parser.add_argument("--out", default=None, help="output directory (default runs)")
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--deterministic", action="store_true",
                        help="single-threaded bitwise-reproducible training")
    parser.add_argument("--no-plots", action="store_true", help="skip plot images")
    for dest, flag, typ, help_text in _OVERRIDE_FLAGS:
        parser.add_argument(flag, dest=dest, type=typ, default=None, help=help_text)


def _experiment_from_args(args, forced_method=None):
    file_experiment, file_train = {}, {}
    if args.config:
        file_experiment, file_train = parse_config_file(args.config)
    overrides = dict(file_train)
    for dest, _, _, _ in _OVERRIDE_FLAGS:
        value = getattr(args, dest, None)
        if value is not None:
            overrides[dest] = value
    if args.deterministic:
        overrides["deterministic"] = True

    def pick(name, default=None):
        cli = getattr(args, name, None)
        if cli is not None:
            return cli
        return file_experiment.get(name, default)

    task = pick("task")
    method = forced_method or pick("method")
    if task is None:
        raise ValueError("a task is required (--task or config file)")
    if method is None:
        raise ValueError("a method is required (--method or config file)")
    data_root = pick("data_root") or os.environ.get(DATA_ROOT_ENV)
    return ExperimentConfig(
        task=task,
        method=method,
        seeds=pick("seeds", DEFAULT_SEEDS),
        n_true=int(pick("n_true", 0) or 0),
        out=pick("out", "runs"),
        data_root=data_root,
        train_overrides=overrides,
        make_plots=not args.no_plots,
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clarinet",
        description="Adversarial domain adaptation from complementary-label sources.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    run_p = sub.add_parser("run", help="train one method on one task across seeds")
    _add_run_arguments(run_p)

    sweep_p = sub.add_parser("sweep", help="vary the true-label budget for clarinet-pc")
    _add_run_arguments(sweep_p, include_method=False, include_n_true=False)
    sweep_p.add_argument("--n-true", required=True,
                         help="comma-separated true-label budgets, e.g. 0,200,400")

    sub.add_parser("verify", help="run the numerical oracle suite")

    report_p = sub.add_parser("report", help="summarize completed runs")
    report_p.add_argument("--out", default="runs", help="directory holding run folders")

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verb == "verify":
        return run_verify()
    if args.verb == "report":
        return report_runs(args.out)
    if args.verb == "run":
        exp = _experiment_from_args(args)
        run_experiment(exp)
        return 0
    if args.verb == "sweep":
        budgets = [int(s) for s in str(args.n_true).split(",") if s.strip()]
        args.n_true = None
        exp = _experiment_from_args(args, forced_method="clarinet-pc")
        sweep_true_labels(exp, budgets)
        return 0
    raise AssertionError(f"unhandled verb {args.verb!r}")


if __name__ == "__main__":
    raise SystemExit(main())
