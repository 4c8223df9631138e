"""Small argument-checking helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_rng(seed) -> np.random.Generator:
    """Normalize an int seed / SeedSequence / Generator into a Generator.

    All randomness in this package flows through numpy's PCG64 generator so
    that corpora and rollouts reproduce bit-for-bit across platforms.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} have mismatched dimensions: {a.shape} vs {b.shape}")


def check_features_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature array contains non-finite values")
    return X


def check_probability(p: float, name: str = "p") -> float:
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p
