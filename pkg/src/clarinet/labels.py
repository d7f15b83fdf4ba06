"""Label-space algebra and complementary-label dataset construction.

A complementary label names a class an example does *not* belong to. Under
the unbiased scheme the complementary label is drawn uniformly from the
K-1 classes other than the true one, which links the true and
complementary class posteriors through a fixed K x K transition matrix
with a closed-form inverse.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_features, check_labels, check_probability_vector, check_random_seed


@dataclass(frozen=True)
class LabelSpace:
    """A finite label space of ``num_classes`` classes, optionally named."""

    num_classes: int
    names: tuple | None = None

    def __post_init__(self):
        if not isinstance(self.num_classes, (int, np.integer)) or self.num_classes < 2:
            raise ValueError(
                f"complementary labels need at least 2 classes, got {self.num_classes}"
            )
        object.__setattr__(self, "num_classes", int(self.num_classes))
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != self.num_classes:
                raise ValueError(
                    f"expected {self.num_classes} class names, got {len(names)}"
                )
            if len(set(names)) != len(names):
                raise ValueError("class names must be distinct")
            object.__setattr__(self, "names", names)


@dataclass(frozen=True)
class TransitionMatrix:
    """Linear map sending the true-class posterior to the complementary one.

    ``matrix`` has zero diagonal and all off-diagonal entries 1/(K-1);
    ``inverse`` has diagonal -(K-2) and all off-diagonal entries 1. Both
    are exact closed forms, not numerical inverses.
    """

    num_classes: int
    matrix: np.ndarray = field(repr=False)
    inverse: np.ndarray = field(repr=False)


def build_transition_matrix(space):
    """Build the complementary-label transition matrix for a label space.

    Accepts a :class:`LabelSpace` or a plain class count.
    """
    K = space.num_classes if isinstance(space, LabelSpace) else int(space)
    if K < 2:
        raise ValueError(f"complementary labels need at least 2 classes, got {K}")
    Q = np.full((K, K), 1.0 / (K - 1))
    np.fill_diagonal(Q, 0.0)
    Q_inv = np.ones((K, K))
    np.fill_diagonal(Q_inv, -(K - 2.0))
    return TransitionMatrix(num_classes=K, matrix=Q, inverse=Q_inv)


def complementary_to_true_posterior(eta_bar, tm):
    """Recover the true-class posterior from the complementary one.

    Each column of the inverse sums to 1, so the result again sums to 1.
    Inputs outside the image of a proper posterior are still computed
    (the result may then have negative entries).
    """
    eta_bar = check_probability_vector(eta_bar, name="eta_bar")
    if len(eta_bar) != tm.num_classes:
        raise ValueError(
            f"posterior has length {len(eta_bar)}, transition matrix is "
            f"{tm.num_classes}x{tm.num_classes}"
        )
    return tm.inverse @ eta_bar


@dataclass(frozen=True)
class ComplementaryExample:
    x: np.ndarray
    ybar: int
    y_true_hidden: int | None = None

    def __post_init__(self):
        if self.y_true_hidden is not None and self.ybar == self.y_true_hidden:
            raise ValueError("a complementary label can never equal the true label")


class ComplementaryDataset:
    """Features paired with complementary labels.

    True labels, when known (synthetic benchmarks), are retained in
    ``y_true_hidden`` for evaluation only; -1 marks an absent true label.
    Instances are immutable after construction.
    """

    def __init__(self, X, ybar, label_space, y_true_hidden=None):
        self.label_space = label_space
        K = label_space.num_classes
        self.X = check_features(X, allow_empty=True)
        self.ybar = check_labels(ybar, K, name="ybar")
        if len(self.ybar) != len(self.X):
            raise ValueError("X and ybar lengths differ")
        if y_true_hidden is None:
            y_true_hidden = np.full(len(self.X), -1, dtype=np.int64)
        self.y_true_hidden = check_labels(
            y_true_hidden, K, name="y_true_hidden", allow_missing=True
        )
        if len(self.y_true_hidden) != len(self.X):
            raise ValueError("X and y_true_hidden lengths differ")
        known = self.y_true_hidden >= 0
        if np.any(self.ybar[known] == self.y_true_hidden[known]):
            raise ValueError("a complementary label can never equal the true label")
        for arr in (self.X, self.ybar, self.y_true_hidden):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.ybar)

    def __getitem__(self, i):
        hidden = int(self.y_true_hidden[i])
        return ComplementaryExample(
            x=self.X[i], ybar=int(self.ybar[i]),
            y_true_hidden=None if hidden < 0 else hidden,
        )

    @property
    def num_classes(self):
        return self.label_space.num_classes

    @property
    def class_proportions(self):
        """Empirical frequency of each complementary label."""
        counts = np.bincount(self.ybar, minlength=self.num_classes)
        return counts / len(self)

    @property
    def has_hidden_labels(self):
        return bool(np.all(self.y_true_hidden >= 0))

    def subset(self, indices):
        return ComplementaryDataset(
            self.X[indices], self.ybar[indices], self.label_space,
            self.y_true_hidden[indices],
        )


def generate_complementary_dataset(X, y_true, space, rng_seed):
    """Relabel a true-labeled dataset with uniform complementary labels.

    For each example the complementary label is drawn uniformly from the
    K-1 classes other than the true one; the true label moves to the
    hidden evaluation field. Deterministic given ``rng_seed``.
    """
    K = space.num_classes
    X = check_features(X)
    y_true = check_labels(y_true, K, name="y_true")
    rng = np.random.default_rng(check_random_seed(rng_seed))
    # Draw an offset in [0, K-1) and skip over the true class.
    draw = rng.integers(0, K - 1, size=len(y_true))
    ybar = draw + (draw >= y_true)
    return ComplementaryDataset(X, ybar, space, y_true_hidden=y_true)


def split_pc_dataset(X, y_true, n_true, space, rng_seed):
    """Split a true-labeled dataset into a true-labeled part and a complementary rest.

    Returns ``((X_true, y_true), ComplementaryDataset)``; the two parts are
    disjoint and together cover the input. ``n_true=0`` reduces to the
    fully-complementary case.
    """
    X = check_features(X)
    y_true = check_labels(y_true, space.num_classes, name="y_true")
    n = len(y_true)
    if not 0 <= n_true <= n:
        raise ValueError(f"n_true must lie in [0, {n}], got {n_true}")
    rng = np.random.default_rng(check_random_seed(rng_seed))
    order = rng.permutation(n)
    true_idx, comp_idx = order[:n_true], order[n_true:]
    comp = generate_complementary_dataset(
        X[comp_idx], y_true[comp_idx], space,
        rng_seed=int(rng.integers(0, 2**31 - 1)),
    ) if len(comp_idx) else ComplementaryDataset(
        np.zeros((0, X.shape[1])), np.zeros(0, dtype=np.int64), space
    )
    return (X[true_idx], y_true[true_idx]), comp


def save_label_sidecar(dataset, path):
    """Write the label part of a complementary dataset as a CSV sidecar.

    Columns are (index, ybar, y_true_hidden); -1 encodes an absent true
    label. Features stay in their native container.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "ybar", "y_true_hidden"])
        for i in range(len(dataset)):
            writer.writerow([i, int(dataset.ybar[i]), int(dataset.y_true_hidden[i])])


def load_label_sidecar(path, X, space):
    """Rebuild a complementary dataset from features plus a CSV sidecar."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["index", "ybar", "y_true_hidden"]:
            raise ValueError(f"bad sidecar header in {path}: {header}")
        rows = [(int(r[0]), int(r[1]), int(r[2])) for r in reader]
    n = len(rows)
    ybar = np.zeros(n, dtype=np.int64)
    hidden = np.zeros(n, dtype=np.int64)
    for idx, yb, yh in rows:
        if not 0 <= idx < n:
            raise ValueError(f"sidecar index {idx} out of range for {n} rows")
        ybar[idx] = yb
        hidden[idx] = yh
    return ComplementaryDataset(X, ybar, space, y_true_hidden=hidden)
