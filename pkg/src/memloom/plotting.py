"""Cluster diagnostics figures: 2-D layout with density shading per user."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _kde_grid(points: np.ndarray, grid_x: np.ndarray, grid_y: np.ndarray) -> np.ndarray:
    """Gaussian kernel density on a grid (Scott bandwidth)."""
    n = len(points)
    bandwidth = max(n ** (-1.0 / 6.0), 1e-3) * max(points.std(), 1e-3)
    gx, gy = np.meshgrid(grid_x, grid_y)
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    diff = grid[:, None, :] - points[None, :, :]
    sq = np.sum(diff * diff, axis=2)
    density = np.exp(-sq / (2.0 * bandwidth**2)).sum(axis=1)
    return density.reshape(gx.shape)


def plot_cluster_diagnostics(diagnostics: dict[str, dict], out_path: str | Path) -> Path:
    """One panel per user: density contours plus topic-colored points."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    users = sorted(diagnostics)
    fig, axes = plt.subplots(1, max(len(users), 1), figsize=(6 * max(len(users), 1), 5), squeeze=False)
    for ax, user in zip(axes[0], users):
        diag = diagnostics[user]
        coords = np.asarray(diag.get("coords_2d", []), dtype=np.float64)
        labels = np.asarray(diag.get("topic_labels", []), dtype=np.int64)
        if coords.size == 0:
            ax.set_title(f"{user} (no layout: small dataset)")
            ax.axis("off")
            continue
        pad = 0.1 * max(coords.ptp(), 1.0)
        gx = np.linspace(coords[:, 0].min() - pad, coords[:, 0].max() + pad, 80)
        gy = np.linspace(coords[:, 1].min() - pad, coords[:, 1].max() + pad, 80)
        density = _kde_grid(coords, gx, gy)
        ax.contourf(gx, gy, density, levels=12, cmap="Blues", alpha=0.7)
        for label in sorted(set(labels.tolist())):
            mask = labels == label
            ax.scatter(coords[mask, 0], coords[mask, 1], s=18, label=f"topic {label}")
        ax.legend(loc="best", fontsize=8)
        ax.set_title(user)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
