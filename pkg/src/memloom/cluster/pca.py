"""Principal component analysis via singular value decomposition.

Keeps the smallest number of components whose cumulative explained-variance
ratio reaches the requested target. Degenerate inputs (fewer than two rows,
or zero total variance) fall back to a trivial one-component model so the
downstream pipeline stays total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ZERO_VARIANCE = 1e-18


@dataclass(frozen=True)
class PCAModel:
    mean: np.ndarray               # (d,)
    components: np.ndarray         # (p, d), orthonormal rows
    explained_variance: np.ndarray  # (p,), non-increasing

    @property
    def n_components(self) -> int:
        return int(self.components.shape[0])

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, Y: np.ndarray) -> np.ndarray:
        return np.asarray(Y, dtype=np.float64) @ self.components + self.mean


def _fallback_model(X: np.ndarray) -> tuple[PCAModel, np.ndarray]:
    n, d = X.shape
    mean = X.mean(axis=0) if n else np.zeros(d)
    components = np.zeros((1, d))
    components[0, 0] = 1.0
    model = PCAModel(mean=mean, components=components, explained_variance=np.zeros(1))
    return model, np.zeros((n, 1))


def fit_pca(X: np.ndarray, variance_target: float = 0.95) -> tuple[PCAModel, np.ndarray]:
    """Fit PCA and return (model, reduced coordinates).

    variance_target in (0, 1]; the model keeps the smallest p with cumulative
    explained-variance ratio >= variance_target.
    """
    if not 0.0 < variance_target <= 1.0:
        raise ValueError(f"variance_target must be in (0, 1], got {variance_target}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    n, d = X.shape
    if n < 2:
        return _fallback_model(X)

    mean = X.mean(axis=0)
    centered = X - mean
    _, singular_values, vt = np.linalg.svd(centered, full_matrices=False)
    explained = singular_values**2 / (n - 1)
    total = float(explained.sum())
    if total <= _ZERO_VARIANCE:
        return _fallback_model(X)

    ratio = np.cumsum(explained) / total
    # Small slack so variance_target=1.0 is reachable despite rounding.
    p = int(np.searchsorted(ratio, variance_target - 1e-12) + 1)
    p = min(max(p, 1), len(explained))

    model = PCAModel(mean=mean, components=vt[:p].copy(), explained_variance=explained[:p].copy())
    return model, centered @ model.components.T
