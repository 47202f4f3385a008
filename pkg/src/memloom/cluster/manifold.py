"""Low-dimensional manifold layout of embedding sets.

Classic fuzzy-topology embedding: an exact kNN graph is converted to fuzzy
edge weights (per-point bandwidths found by binary search), symmetrized with
the probabilistic t-conorm, and laid out by negative-sampling SGD with the
standard rational attractive/repulsive gradient pair. Everything is seeded
and single-threaded, so a fixed seed reproduces coordinates bit-for-bit.

Datasets with n <= n_neighbors skip the graph entirely and fall back to PCA
coordinates truncated or zero-padded to the requested dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pca import fit_pca

# Rational-curve constants for the attractive/repulsive gradients; the
# standard least-squares fit for min_dist = 0.1. Kept fixed instead of
# refitting per run.
CURVE_A = 1.577
CURVE_B = 0.895

NEGATIVE_SAMPLE_RATE = 5
_GRAD_CLIP = 4.0
_REPULSION_EPS = 0.001
_SIGMA_TOLERANCE = 1e-5
_SIGMA_ITERATIONS = 64
_INIT_SCALE = 10.0


@dataclass(frozen=True)
class ManifoldParams:
    n_neighbors: int = 10
    n_components: int = 5
    min_dist: float = 0.1
    n_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.min_dist < 0:
            raise ValueError("min_dist must be >= 0")
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be >= 1")


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    """Dense Euclidean distance matrix."""
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def _exact_knn(X: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the k nearest neighbors, self excluded."""
    dist = pairwise_distances(X)
    np.fill_diagonal(dist, np.inf)
    idx = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return idx, np.take_along_axis(dist, idx, axis=1)


def _smooth_bandwidths(knn_dists: np.ndarray, n_neighbors: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (rho, sigma).

    rho is the nearest-neighbor distance; sigma solves
    sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(n_neighbors)
    by binary search.
    """
    n = knn_dists.shape[0]
    target = np.log2(n_neighbors)
    rho = knn_dists[:, 0].copy()
    sigma = np.ones(n)
    for i in range(n):
        shifted = np.maximum(knn_dists[i] - rho[i], 0.0)
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(_SIGMA_ITERATIONS):
            psum = float(np.exp(-shifted / mid).sum())
            if abs(psum - target) < _SIGMA_TOLERANCE:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else (lo + hi) / 2.0
        sigma[i] = max(mid, 1e-12)
    return rho, sigma


def fuzzy_graph(X: np.ndarray, n_neighbors: int) -> np.ndarray:
    """Symmetric fuzzy adjacency matrix (dense; n is small here)."""
    n = X.shape[0]
    idx, dists = _exact_knn(X, n_neighbors)
    rho, sigma = _smooth_bandwidths(dists, n_neighbors)
    W = np.zeros((n, n))
    for i in range(n):
        W[i, idx[i]] = np.exp(-np.maximum(dists[i] - rho[i], 0.0) / sigma[i])
    # Fuzzy union: w = a + b - a*b.
    return W + W.T - W * W.T


def _pca_fallback(X: np.ndarray, n_components: int) -> np.ndarray:
    _, reduced = fit_pca(X, variance_target=1.0)
    n = X.shape[0]
    out = np.zeros((n, n_components))
    c = min(n_components, reduced.shape[1])
    out[:, :c] = reduced[:, :c]
    return out


def _initial_layout(X: np.ndarray, n_components: int, rng: np.random.Generator) -> np.ndarray:
    coords = _pca_fallback(X, n_components)
    peak = np.abs(coords).max()
    if peak > 0:
        coords = coords * (_INIT_SCALE / peak)
    return coords + rng.normal(scale=1e-4, size=coords.shape)


def manifold_embed(X: np.ndarray, params: ManifoldParams) -> np.ndarray:
    """Embed X (n x d) into params.n_components dimensions."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n <= params.n_neighbors:
        return _pca_fallback(X, params.n_components)

    rng = np.random.default_rng(params.seed)
    graph = fuzzy_graph(X, params.n_neighbors)

    w_max = graph.max()
    if w_max <= 0:
        return _pca_fallback(X, params.n_components)
    graph[graph < w_max / params.n_epochs] = 0.0
    head, tail = np.nonzero(graph)
    weights = graph[head, tail]

    embedding = _initial_layout(X, params.n_components, rng)
    if len(head) == 0:
        return embedding

    # Edges fire proportionally to their weight: an edge of weight w is
    # visited every w_max / w epochs.
    epochs_per_sample = w_max / weights
    next_sample = epochs_per_sample.copy()
    epochs_per_negative = epochs_per_sample / NEGATIVE_SAMPLE_RATE
    next_negative = epochs_per_negative.copy()

    a, b = CURVE_A, CURVE_B
    for epoch in range(params.n_epochs):
        alpha = 1.0 - epoch / params.n_epochs
        due = np.nonzero(next_sample <= epoch)[0]
        if due.size == 0:
            continue
        h, t = head[due], tail[due]

        diff = embedding[h] - embedding[t]
        d2 = np.sum(diff * diff, axis=1)
        coeff = np.zeros_like(d2)
        pos = d2 > 0
        coeff[pos] = (-2.0 * a * b * d2[pos] ** (b - 1.0)) / (a * d2[pos] ** b + 1.0)
        grad = np.clip(coeff[:, None] * diff, -_GRAD_CLIP, _GRAD_CLIP)
        np.add.at(embedding, h, grad * alpha)
        np.add.at(embedding, t, -grad * alpha)
        next_sample[due] += epochs_per_sample[due]

        n_neg = np.floor((epoch - next_negative[due]) / epochs_per_negative[due]).astype(int)
        np.maximum(n_neg, 0, out=n_neg)
        total = int(n_neg.sum())
        if total > 0:
            rep_h = np.repeat(h, n_neg)
            neg_t = rng.integers(0, n, size=total)
            diff_n = embedding[rep_h] - embedding[neg_t]
            d2_n = np.sum(diff_n * diff_n, axis=1)
            coeff_n = np.zeros_like(d2_n)
            apart = d2_n > 0
            coeff_n[apart] = (2.0 * b) / ((_REPULSION_EPS + d2_n[apart]) * (a * d2_n[apart] ** b + 1.0))
            grad_n = np.clip(coeff_n[:, None] * diff_n, -_GRAD_CLIP, _GRAD_CLIP)
            # Coincident distinct points get a hard push; self-pairs get none.
            grad_n[~apart] = _GRAD_CLIP
            grad_n[rep_h == neg_t] = 0.0
            np.add.at(embedding, rep_h, grad_n * alpha)
        next_negative[due] += n_neg * epochs_per_negative[due]

    return embedding
