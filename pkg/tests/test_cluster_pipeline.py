from datetime import datetime, timedelta

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from memloom.cluster import (
    EmbeddingMatrix,
    THREAD_THETA,
    TOPIC_THETA,
    ThetaParams,
    cluster_threads,
    cluster_topics,
    organize_traces,
)
from memloom.errors import DegenerateInput
from memloom.gateway.mock import MockBackend
from memloom.synaptic import ExperienceTrace

TOPIC_VOCAB = {
    0: ["pottery", "glaze", "kiln", "clay", "wheel", "studio", "ceramic", "bowl", "sculpt", "fire"],
    1: ["marathon", "running", "sneakers", "race", "training", "mileage", "stamina", "jog", "track", "pace"],
    2: ["guitar", "chords", "melody", "concert", "band", "strings", "amplifier", "song", "rehearsal", "stage"],
}
FILLER = ["today", "really", "quite", "started", "finished", "weekend", "morning", "plan", "little", "felt"]


def planted_traces(per_topic=20, n_topics=3, seed=42, user="Melanie"):
    """Mock-embedded traces with known topic labels."""
    backend = MockBackend(64)
    rng = np.random.default_rng(seed)
    base = datetime(2026, 1, 1)
    traces, labels, vectors = [], [], []
    i = 0
    for topic in range(n_topics):
        words = TOPIC_VOCAB[topic]
        for _ in range(per_topic):
            text = f"{user} " + " ".join(
                rng.choice(words, size=5, replace=False).tolist()
                + rng.choice(FILLER, size=3, replace=False).tolist()
            )
            traces.append(ExperienceTrace(f"t{i:03d}", user, text, base + timedelta(hours=i), "e0"))
            vectors.append(backend.embed_one(text))
            labels.append(topic)
            i += 1
    matrix = EmbeddingMatrix(np.vstack(vectors), tuple(t.trace_id for t in traces))
    return traces, matrix, labels


def predicted_topic_labels(topics, traces):
    of = {}
    for topic in topics:
        for tid in topic.trace_ids:
            of[tid] = topic.topic_id
    return [of[t.trace_id] for t in traces]


class TestClusterTopics:
    def test_three_planted_topics_recovered(self):
        traces, matrix, labels = planted_traces()
        for seed in range(3):
            topics = cluster_topics(traces, matrix, seed=seed)
            predicted = predicted_topic_labels(topics, traces)
            assert adjusted_rand_score(labels, predicted) >= 0.9
            assert -1 not in predicted

    def test_topics_partition_traces(self):
        traces, matrix, _ = planted_traces(per_topic=15)
        topics = cluster_topics(traces, matrix, seed=0)
        seen = [tid for topic in topics for tid in topic.trace_ids]
        assert sorted(seen) == sorted(t.trace_id for t in traces)
        assert len(seen) == len(set(seen))

    def test_small_n_single_topic(self):
        traces, matrix, _ = planted_traces(per_topic=2, n_topics=2)
        topics = cluster_topics(traces, matrix)  # 4 traces < min_cluster_size
        assert len(topics) == 1
        assert len(topics[0].trace_ids) == 4

    def test_row_order_mismatch_rejected(self):
        traces, matrix, _ = planted_traces(per_topic=2, n_topics=1)
        with pytest.raises(DegenerateInput):
            cluster_topics(list(reversed(traces)), matrix)

    def test_uses_paper_parameters_by_default(self):
        assert TOPIC_THETA == ThetaParams(n_neighbors=10, min_cluster_size=5)
        assert THREAD_THETA == ThetaParams(n_neighbors=2, min_cluster_size=2)


class TestClusterThreads:
    def test_two_substories_split_and_ordered(self):
        traces, matrix, labels = planted_traces(per_topic=4, n_topics=2)
        topic = cluster_topics(traces, matrix)[0]  # small-n: one topic of 8
        threads = cluster_threads(topic, traces, matrix, id_prefix="c1:Melanie")
        assert len(threads) == 2
        by_id = {t.trace_id: t for t in traces}
        for thread in threads:
            stamps = [by_id[tid].timestamp for tid in thread.trace_ids]
            assert stamps == sorted(stamps)
            planted = {labels[int(tid[1:])] for tid in thread.trace_ids}
            assert len(planted) == 1  # no mixing of sub-stories

    def test_singleton_topic_single_thread(self):
        traces, matrix, _ = planted_traces(per_topic=1, n_topics=1)
        topic = cluster_topics(traces, matrix)[0]
        threads = cluster_threads(topic, traces, matrix)
        assert len(threads) == 1
        assert threads[0].trace_ids == (traces[0].trace_id,)

    def test_threads_partition_topic(self):
        traces, matrix, _ = planted_traces(per_topic=10, n_topics=2)
        for topic in cluster_topics(traces, matrix, seed=1):
            threads = cluster_threads(topic, traces, matrix, seed=1)
            seen = [tid for th in threads for tid in th.trace_ids]
            assert sorted(seen) == sorted(topic.trace_ids)

    def test_time_span_covers_members(self):
        traces, matrix, _ = planted_traces(per_topic=3, n_topics=1)
        topic = cluster_topics(traces, matrix)[0]
        thread = cluster_threads(topic, traces, matrix)[0]
        by_id = {t.trace_id: t for t in traces}
        stamps = [by_id[tid].timestamp for tid in thread.trace_ids]
        assert thread.time_span == (min(stamps), max(stamps))

    def test_empty_topic_rejected(self):
        traces, matrix, _ = planted_traces(per_topic=1, n_topics=1)
        from memloom.cluster import TopicCluster

        with pytest.raises(DegenerateInput):
            cluster_threads(TopicCluster(0, ()), traces, matrix)


class TestOrganizeTraces:
    def test_whole_pipeline_deterministic(self):
        traces, matrix, _ = planted_traces()
        first = organize_traces(traces, matrix, seed=5, id_prefix="c1:M")
        second = organize_traces(traces, matrix, seed=5, id_prefix="c1:M")
        assert first[0] == second[0]
        assert first[1] == second[1]

    def test_diagnostics_cover_all_traces(self):
        traces, matrix, _ = planted_traces(per_topic=12, n_topics=2)
        _, _, diag = organize_traces(traces, matrix, seed=0, id_prefix="c1:M")
        assert diag.trace_ids == [t.trace_id for t in traces]
        assert len(diag.topic_labels) == len(traces)
        assert len(diag.thread_ids) == len(traces)
        assert diag.coords_2d is not None and diag.coords_2d.shape == (len(traces), 2)

    def test_thread_ids_unique_and_prefixed(self):
        traces, matrix, _ = planted_traces(per_topic=8, n_topics=2)
        _, threads, _ = organize_traces(traces, matrix, seed=2, id_prefix="conv:Mel")
        ids = [t.thread_id for t in threads]
        assert len(ids) == len(set(ids))
        assert all(i.startswith("conv:Mel:T") for i in ids)

    def test_empty_traces(self):
        matrix = EmbeddingMatrix(np.zeros((0, 64)), ())
        topics, threads, diag = organize_traces([], matrix)
        assert topics == [] and threads == []
        assert diag.trace_ids == []
