"""Small input-validation helpers shared across the package."""

import numpy as np


def check_features(X, name="X", allow_empty=False):
    """Coerce to a 2-D (or higher) float array of finite values."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 2:
        X = X.reshape(len(X), -1) if X.ndim == 1 else X
    if X.size == 0 and not allow_empty:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_labels(y, num_classes, name="y", allow_missing=False):
    """Coerce to an int vector with entries in [0, num_classes).

    With ``allow_missing``, -1 entries are accepted as "no label".
    """
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        y_int = y.astype(np.int64)
        if not np.array_equal(y_int, y):
            raise ValueError(f"{name} must hold integer labels")
        y = y_int
    y = y.astype(np.int64)
    lo = -1 if allow_missing else 0
    if y.size and (y.min() < lo or y.max() >= num_classes):
        raise ValueError(
            f"{name} entries must lie in [{lo}, {num_classes}), "
            f"got range [{y.min()}, {y.max()}]"
        )
    return y


def check_probability_vector(p, name="probabilities", atol=1e-9):
    """Validate a single probability vector: entries in [0, 1], sums to 1."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    if np.any(p < -atol) or np.any(p > 1 + atol):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1 (got {p.sum()!r})")
    return p


def check_random_seed(seed, name="seed"):
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {type(seed).__name__}")
    return int(seed)
