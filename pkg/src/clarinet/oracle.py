"""Brute-force verification oracles, kept independent of the main code paths.

The exact-risk computations below transcribe the defining formulas
directly in numpy. They deliberately share no code with the loss module
(or the label-space helpers): the point is a double-entry check that the
trained losses estimate the quantity these oracles compute exactly.

The one sanctioned crossing is :func:`monte_carlo_estimator_check`, which
feeds sampled complementary labels to the production loss and compares its
empirical mean against the oracle's exact true risk.
"""

from dataclasses import dataclass

import numpy as np

_CLAMP = 1e-12


def _ell(p_row, k):
    # same cross-entropy kernel both risks are defined through
    return -np.log(max(p_row[k], _CLAMP))


@dataclass(frozen=True)
class DiscreteToyProblem:
    """A finite-support problem with known marginals, posteriors, and predictor.

    ``x_probs`` is P(X) over m atoms, ``true_conditional`` the m x K table
    P(Y|X), ``predictor`` the fixed m x K table of predicted class
    probabilities the risks are evaluated at.
    """

    x_probs: np.ndarray
    true_conditional: np.ndarray
    predictor: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_probs, dtype=np.float64)
        cond = np.asarray(self.true_conditional, dtype=np.float64)
        pred = np.asarray(self.predictor, dtype=np.float64)
        m = len(x)
        if not 1 <= m <= 50:
            raise ValueError(f"toy problems hold 1..50 atoms, got {m}")
        if cond.shape[0] != m or pred.shape != cond.shape:
            raise ValueError("x_probs, true_conditional, predictor disagree on shape")
        if not 2 <= cond.shape[1] <= 10:
            raise ValueError(f"toy problems hold 2..10 classes, got {cond.shape[1]}")
        for name, rows in (("x_probs", x[None, :]), ("true_conditional", cond), ("predictor", pred)):
            if np.any(rows < 0) or np.max(np.abs(rows.sum(axis=1) - 1.0)) > 1e-9:
                raise ValueError(f"{name} rows must be probability vectors")
        object.__setattr__(self, "x_probs", x)
        object.__setattr__(self, "true_conditional", cond)
        object.__setattr__(self, "predictor", pred)

    @property
    def num_classes(self):
        return self.true_conditional.shape[1]

    @property
    def num_atoms(self):
        return len(self.x_probs)


def random_toy_problem(num_atoms, num_classes, rng_seed):
    """A random problem with Dirichlet rows, for sweep-style checks."""
    rng = np.random.default_rng(rng_seed)
    return DiscreteToyProblem(
        x_probs=rng.dirichlet(np.ones(num_atoms)),
        true_conditional=rng.dirichlet(np.ones(num_classes), size=num_atoms),
        predictor=rng.dirichlet(np.ones(num_classes), size=num_atoms),
    )


def exact_true_risk(problem):
    """E[ l(p(X), Y) ] computed exactly over the finite support."""
    total = 0.0
    for i in range(problem.num_atoms):
        for y in range(problem.num_classes):
            total += (
                problem.x_probs[i]
                * problem.true_conditional[i, y]
                * _ell(problem.predictor[i], y)
            )
    return total


def complementary_conditional(problem):
    """P(Ybar|X) under the uniform complementary scheme.

    Transcribed directly: the complementary label is uniform over the K-1
    classes other than the true one, so
    P(Ybar=k|x) = sum_{c != k} P(Y=c|x) / (K-1) = (1 - P(Y=k|x)) / (K-1).
    """
    K = problem.num_classes
    eta = problem.true_conditional
    eta_bar = np.empty_like(eta)
    for i in range(problem.num_atoms):
        for k in range(K):
            eta_bar[i, k] = (eta[i].sum() - eta[i, k]) / (K - 1)
    return eta_bar


def exact_complementary_risk(problem):
    """Population value of the complementary-label risk rewrite.

    Computed as  sum_k E_X[ l(p(X), k) ]  -  (K-1) E_{X,Ybar}[ l(p(X), Ybar) ]
    with the complementary conditional obtained from the uniform scheme.
    By construction this equals the true risk; the equality is what the
    pair of functions exists to verify.
    """
    K = problem.num_classes
    eta_bar = complementary_conditional(problem)
    sum_over_classes = 0.0
    for i in range(problem.num_atoms):
        for k in range(K):
            sum_over_classes += problem.x_probs[i] * _ell(problem.predictor[i], k)
    complementary_term = 0.0
    for i in range(problem.num_atoms):
        for k in range(K):
            complementary_term += (
                problem.x_probs[i] * eta_bar[i, k] * _ell(problem.predictor[i], k)
            )
    return sum_over_classes - (K - 1) * complementary_term


@dataclass(frozen=True)
class MonteCarloCheck:
    empirical_mean: float
    exact_true_risk: float
    stderr: float

    @property
    def deviation_in_stderrs(self):
        return abs(self.empirical_mean - self.exact_true_risk) / self.stderr


def monte_carlo_estimator_check(problem, n_samples, rng_seed, batch_size=1000):
    """Sample complementary labels and run the production loss on them.

    Draws (x, ybar) pairs from the problem, evaluates the batch
    complementary loss from the loss module on consecutive batches, and
    reports the mean of the batch losses with its standard error. An
    unbiased estimator lands within a few standard errors of the exact
    true risk.
    """
    from . import losses as _losses
    import torch

    if n_samples < 1000:
        raise ValueError("the Monte-Carlo check needs at least 1000 samples")
    rng = np.random.default_rng(rng_seed)
    eta_bar = complementary_conditional(problem)
    n_batches = n_samples // batch_size
    batch_losses = []
    for _ in range(n_batches):
        xs = rng.choice(problem.num_atoms, size=batch_size, p=problem.x_probs)
        # inverse-CDF draw of ybar from each sampled atom's complementary law
        u = rng.random(batch_size)
        cdf = np.cumsum(eta_bar[xs], axis=1)
        ybar = np.minimum((u[:, None] > cdf).sum(axis=1), problem.num_classes - 1)
        probs = torch.as_tensor(problem.predictor[xs], dtype=torch.float64)
        per_class = _losses.complementary_loss_vector(probs, ybar, problem.num_classes)
        batch_losses.append(float(_losses.total_complementary_loss(per_class)))
    batch_losses = np.array(batch_losses)
    return MonteCarloCheck(
        empirical_mean=float(batch_losses.mean()),
        exact_true_risk=exact_true_risk(problem),
        stderr=float(batch_losses.std(ddof=1) / np.sqrt(n_batches)),
    )


def complementary_loss_variance(problem):
    """Exact per-sample variance of the batch complementary loss summand.

    With batch-empirical priors the batch loss averages independent terms
    zeta = sum_k l(p, k) - (K-1) l(p, ybar); this returns Var(zeta) under
    the problem's joint law, for calibrating Monte-Carlo standard errors.
    """
    K = problem.num_classes
    eta_bar = complementary_conditional(problem)
    mean = 0.0
    second = 0.0
    for i in range(problem.num_atoms):
        base = sum(_ell(problem.predictor[i], k) for k in range(K))
        for k in range(K):
            zeta = base - (K - 1) * _ell(problem.predictor[i], k)
            w = problem.x_probs[i] * eta_bar[i, k]
            mean += w * zeta
            second += w * zeta * zeta
    return second - mean * mean


def finite_difference_gradient_check(
    scalar_fn, analytic_grad, params, epsilon=1e-5, max_coords=None, rng_seed=0
):
    """Max relative error between analytic and central-difference gradients.

    ``scalar_fn`` maps a flat parameter vector to a float; ``analytic_grad``
    is the gradient vector at ``params`` (or a callable producing it). When
    the vector is long, a random subsample of ``max_coords`` coordinates is
    probed. Relative error uses denominator max(|a|, |b|, 1e-8).
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-4], got {epsilon}")
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(analytic_grad(params) if callable(analytic_grad) else analytic_grad,
                      dtype=np.float64)
    if grad.shape != params.shape:
        raise ValueError("analytic gradient and parameters disagree on shape")
    coords = np.arange(params.size)
    if max_coords is not None and params.size > max_coords:
        coords = np.random.default_rng(rng_seed).choice(params.size, max_coords, replace=False)
    worst = 0.0
    for c in coords:
        probe = params.copy()
        probe[c] = params[c] + epsilon
        up = scalar_fn(probe)
        probe[c] = params[c] - epsilon
        down = scalar_fn(probe)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(
                f"non-finite probe at coordinate {c}: f(+eps)={up}, f(-eps)={down}"
            )
        numeric = (up - down) / (2 * epsilon)
        denom = max(abs(numeric), abs(grad[c]), 1e-8)
        worst = max(worst, abs(numeric - grad[c]) / denom)
    return worst
