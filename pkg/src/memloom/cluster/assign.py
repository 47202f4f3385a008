"""Noise reassignment by k-nearest-neighbor vote."""

from __future__ import annotations

import numpy as np

from .density import ClusterAssignment
from .manifold import pairwise_distances

_VOTE_EPS = 1e-12


def knn_reassign(Y: np.ndarray, assignment: ClusterAssignment, k_vote: int = 3) -> tuple[ClusterAssignment, bool]:
    """Give every noise point the distance-weighted majority label of its
    k_vote nearest non-noise points.

    Votes weigh 1/(distance + eps); a weight tie goes to the nearest single
    neighbor among the tied labels, and an exact distance tie there goes to
    the smaller cluster id. All noise points vote against the original
    non-noise set, so reassignment order cannot matter.

    Returns (assignment, reassigned). When no non-noise labels exist the
    input comes back unchanged with reassigned=False so the caller can apply
    its own fallback.
    """
    labels = np.asarray(assignment.labels).copy()
    noise = np.nonzero(labels == -1)[0]
    anchors = np.nonzero(labels != -1)[0]
    if len(noise) == 0:
        return assignment, True
    if len(anchors) == 0:
        return assignment, False

    Y = np.asarray(Y, dtype=np.float64)
    dist = pairwise_distances(Y)
    k = min(k_vote, len(anchors))
    for p in noise:
        d_anchor = dist[p, anchors]
        order = np.argsort(d_anchor, kind="stable")[:k]
        votes: dict[int, float] = {}
        for o in order:
            lab = int(labels[anchors[o]])
            votes[lab] = votes.get(lab, 0.0) + 1.0 / (d_anchor[o] + _VOTE_EPS)
        top = max(votes.values())
        tied = {lab for lab, w in votes.items() if w == top}
        if len(tied) == 1:
            labels[p] = tied.pop()
        else:
            # (distance, label) ordering implements both remaining tie-breaks.
            best = min((d_anchor[o], int(labels[anchors[o]])) for o in order if int(labels[anchors[o]]) in tied)
            labels[p] = best[1]
    return ClusterAssignment(labels, assignment.n_clusters), True
