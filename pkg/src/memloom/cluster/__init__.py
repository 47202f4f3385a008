"""Two-stage clustering of experience traces into topics and threads.

Topic level groups one user's whole trace set by semantic similarity
(n_neighbors=10, min_cluster_size=5); thread level re-clusters each topic
with a much finer grain (n_neighbors=2, min_cluster_size=2) and orders each
resulting thread chronologically. Both stages run PCA -> manifold layout ->
density clustering -> noise reassignment, with small-n fallbacks so every
dataset, however tiny, still yields a usable partition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Sequence

import numpy as np

from ..errors import DegenerateInput
from ..synaptic import ExperienceTrace
from .assign import knn_reassign
from .density import ClusterAssignment, DensityParams, density_cluster
from .manifold import ManifoldParams, manifold_embed
from .pca import PCAModel, fit_pca

__all__ = [
    "EmbeddingMatrix",
    "ThetaParams",
    "TopicCluster",
    "Thread",
    "ClusterDiagnostics",
    "TOPIC_THETA",
    "THREAD_THETA",
    "K_VOTE",
    "cluster_topics",
    "cluster_threads",
    "organize_traces",
    "ClusterAssignment",
    "DensityParams",
    "ManifoldParams",
    "PCAModel",
    "fit_pca",
    "manifold_embed",
    "density_cluster",
    "knn_reassign",
]

K_VOTE = 3
MANIFOLD_COMPONENTS = 5
MANIFOLD_EPOCHS = 200
MANIFOLD_MIN_DIST = 0.1


@dataclass(frozen=True)
class ThetaParams:
    n_neighbors: int
    min_cluster_size: int


TOPIC_THETA = ThetaParams(n_neighbors=10, min_cluster_size=5)
THREAD_THETA = ThetaParams(n_neighbors=2, min_cluster_size=2)


@dataclass(frozen=True)
class EmbeddingMatrix:
    rows: np.ndarray
    row_ids: tuple[str, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DegenerateInput("embedding matrix must be 2-D")
        if rows.shape[0] != len(self.row_ids):
            raise DegenerateInput(f"{rows.shape[0]} rows but {len(self.row_ids)} row ids")
        if not np.all(np.isfinite(rows)):
            raise DegenerateInput("embedding matrix contains non-finite values")
        object.__setattr__(self, "rows", rows)

    def subset(self, ids: Sequence[str]) -> "EmbeddingMatrix":
        index = {rid: i for i, rid in enumerate(self.row_ids)}
        picked = [index[i] for i in ids]
        return EmbeddingMatrix(self.rows[picked], tuple(ids))


@dataclass(frozen=True)
class TopicCluster:
    topic_id: int
    trace_ids: tuple[str, ...]


@dataclass(frozen=True)
class Thread:
    thread_id: str
    topic_id: int
    trace_ids: tuple[str, ...]
    time_span: tuple[datetime, datetime]


@dataclass
class ClusterDiagnostics:
    """Per-trace labels and a 2-D projection for plotting."""

    trace_ids: list[str] = field(default_factory=list)
    coords_2d: Optional[np.ndarray] = None
    topic_labels: list[int] = field(default_factory=list)
    thread_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        coords = self.coords_2d.tolist() if self.coords_2d is not None else []
        return {
            "trace_ids": list(self.trace_ids),
            "coords_2d": coords,
            "topic_labels": [int(x) for x in self.topic_labels],
            "thread_ids": list(self.thread_ids),
        }


def _run_stage(
    X: np.ndarray,
    theta: ThetaParams,
    variance_target: float,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """PCA -> manifold -> density -> reassignment. Returns (labels, layout)."""
    n = X.shape[0]
    _, reduced = fit_pca(X, variance_target)
    params = ManifoldParams(
        n_neighbors=theta.n_neighbors,
        n_components=MANIFOLD_COMPONENTS,
        min_dist=MANIFOLD_MIN_DIST,
        n_epochs=MANIFOLD_EPOCHS,
        seed=seed,
    )
    layout = manifold_embed(reduced, params)
    assignment = density_cluster(
        layout, DensityParams(min_cluster_size=theta.min_cluster_size, min_samples=theta.min_cluster_size)
    )
    assignment, reassigned = knn_reassign(layout, assignment, k_vote=K_VOTE)
    if not reassigned:
        # All noise and nothing to vote with: one cluster.
        return np.zeros(n, dtype=np.int64), layout
    return assignment.labels, layout


def _small_n(n: int, theta: ThetaParams) -> bool:
    return n < max(theta.n_neighbors + 1, theta.min_cluster_size)


def _group_by_label(labels: np.ndarray, ids: Sequence[str]) -> dict[int, list[str]]:
    groups: dict[int, list[str]] = {}
    for label, id_ in zip(labels, ids):
        groups.setdefault(int(label), []).append(id_)
    return groups


def cluster_topics(
    traces: Sequence[ExperienceTrace],
    vectors: EmbeddingMatrix,
    theta: ThetaParams = TOPIC_THETA,
    variance_target: float = 0.95,
    seed: int = 0,
) -> list[TopicCluster]:
    """Partition one user's traces into topic clusters."""
    topics, _ = _cluster_topics_with_layout(traces, vectors, theta, variance_target, seed)
    return topics


def _cluster_topics_with_layout(
    traces: Sequence[ExperienceTrace],
    vectors: EmbeddingMatrix,
    theta: ThetaParams,
    variance_target: float,
    seed: int,
) -> tuple[list[TopicCluster], Optional[np.ndarray]]:
    ids = [t.trace_id for t in traces]
    if tuple(ids) != tuple(vectors.row_ids):
        raise DegenerateInput("trace order does not match embedding row order")
    n = len(traces)
    if n == 0:
        return [], None
    if _small_n(n, theta):
        return [TopicCluster(0, tuple(ids))], None
    labels, layout = _run_stage(vectors.rows, theta, variance_target, seed)
    groups = _group_by_label(labels, ids)
    topics = [TopicCluster(label, tuple(groups[label])) for label in sorted(groups)]
    return topics, layout


def cluster_threads(
    topic: TopicCluster,
    traces: Sequence[ExperienceTrace],
    vectors: EmbeddingMatrix,
    theta: ThetaParams = THREAD_THETA,
    variance_target: float = 0.95,
    seed: int = 0,
    id_prefix: str = "",
) -> list[Thread]:
    """Split one topic's traces into chronologically ordered threads."""
    by_id = {t.trace_id: t for t in traces}
    topic_ids = list(topic.trace_ids)
    if not topic_ids:
        raise DegenerateInput("cannot thread an empty topic")
    n = len(topic_ids)
    if _small_n(n, theta):
        labels = np.zeros(n, dtype=np.int64)
    else:
        sub = vectors.subset(topic_ids)
        labels, _ = _run_stage(sub.rows, theta, variance_target, seed)

    groups = _group_by_label(labels, topic_ids)
    ordered_groups = []
    for label in sorted(groups):
        members = sorted(groups[label], key=lambda tid: (by_id[tid].timestamp, tid))
        ordered_groups.append((by_id[members[0]].timestamp, label, members))
    ordered_groups.sort(key=lambda item: (item[0], item[1]))

    prefix = id_prefix or "thread"
    threads = []
    for j, (_, _, members) in enumerate(ordered_groups):
        stamps = [by_id[tid].timestamp for tid in members]
        threads.append(
            Thread(
                thread_id=f"{prefix}:T{topic.topic_id}.{j}",
                topic_id=topic.topic_id,
                trace_ids=tuple(members),
                time_span=(min(stamps), max(stamps)),
            )
        )
    return threads


def organize_traces(
    traces: Sequence[ExperienceTrace],
    vectors: EmbeddingMatrix,
    topic_theta: ThetaParams = TOPIC_THETA,
    thread_theta: ThetaParams = THREAD_THETA,
    variance_target: float = 0.95,
    seed: int = 0,
    id_prefix: str = "",
) -> tuple[list[TopicCluster], list[Thread], ClusterDiagnostics]:
    """Full systems-consolidation pass for one user."""
    topics, layout = _cluster_topics_with_layout(traces, vectors, topic_theta, variance_target, seed)
    threads: list[Thread] = []
    for topic in topics:
        threads.extend(
            cluster_threads(topic, traces, vectors, thread_theta, variance_target, seed, id_prefix)
        )

    diag = ClusterDiagnostics(trace_ids=[t.trace_id for t in traces])
    if layout is not None:
        coords = layout[:, :2] if layout.shape[1] >= 2 else np.pad(layout, ((0, 0), (0, 2 - layout.shape[1])))
        diag.coords_2d = coords
    topic_of = {tid: topic.topic_id for topic in topics for tid in topic.trace_ids}
    thread_of = {tid: th.thread_id for th in threads for tid in th.trace_ids}
    diag.topic_labels = [topic_of[t.trace_id] for t in traces]
    diag.thread_ids = [thread_of[t.trace_id] for t in traces]
    return topics, threads, diag
