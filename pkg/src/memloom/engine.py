"""Data-directory orchestration tying the pipeline stages together.

One engine instance owns one data directory (enforced by a lock file) and
runs the stage sequence: ingest -> short-term processing -> synaptic
consolidation -> clustering -> card building, persisting the vector store,
cards, statistics, and clustering diagnostics as plain files. Query and eval
load those artifacts read-only.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional

from filelock import FileLock
from filelock import Timeout as LockTimeout

from .cards import CardBuilder, MemoryCard, card_to_dict, parse_card, render_card
from .cluster import EmbeddingMatrix, organize_traces
from .config import EngineConfig
from .errors import EmptyStore, IoFailure, MalformedInput, NotFound
from .evals import EvalReport, run_eval
from .gateway import create_gateway
from .index import VectorRecord, VectorStore
from .ingest import Conversation, load_conversation, load_qa, save_conversation
from .search import Answer, MemorySearcher, Query, RetrievalBundle, SearchMode
from .stm import ShortTermProcessor
from .synaptic import ConsolidationStats, ExperienceTrace, SynapticConsolidator, compute_stats
from .text import parse_timestamp

logger = logging.getLogger(__name__)


class MemoryEngine:
    def __init__(self, config: EngineConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.data_dir / ".lock"))
        try:
            self._lock.acquire(timeout=0)
        except LockTimeout as exc:
            raise IoFailure(f"data directory {self.data_dir} is in use by another engine process") from exc
        self.gateway = create_gateway(config.backend, config.embedding_dimension)

    def close(self) -> None:
        if self._lock.is_locked:
            self._lock.release()

    def __enter__(self) -> "MemoryEngine":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- paths ---------------------------------------------------------------

    def _conversation_path(self, conversation_id: str) -> Path:
        return self.data_dir / "conversations" / f"{conversation_id}.json"

    def _store_path(self, conversation_id: str) -> Path:
        return self.data_dir / "stores" / f"{conversation_id}.ndjson"

    def _card_path(self, conversation_id: str, user_id: str) -> Path:
        return self.data_dir / "cards" / conversation_id / f"{user_id}.json"

    def _stats_path(self, conversation_id: str) -> Path:
        return self.data_dir / "stats" / f"{conversation_id}.json"

    def _diagnostics_path(self, conversation_id: str, user_id: str) -> Path:
        return self.data_dir / "diagnostics" / conversation_id / f"{user_id}.json"

    def _load_registered(self, conversation_id: str) -> Conversation:
        path = self._conversation_path(conversation_id)
        if not path.exists():
            raise NotFound([conversation_id])
        return load_conversation(path)

    # -- commands ---------------------------------------------------------------

    def ingest(self, path: str | Path) -> dict:
        """Validate and register a conversation; idempotent by conversation id."""
        conversation = load_conversation(path)
        target = self._conversation_path(conversation.conversation_id)
        replaced = target.exists()
        target.parent.mkdir(parents=True, exist_ok=True)
        save_conversation(conversation, target)
        return {
            "conversation_id": conversation.conversation_id,
            "sessions": len(conversation.sessions),
            "utterances": conversation.utterance_count(),
            "replaced": replaced,
        }

    def consolidate(self, conversation_id: str) -> ConsolidationStats:
        """Run the full memory-construction pipeline for one conversation."""
        conversation = self._load_registered(conversation_id)
        processor = ShortTermProcessor(self.gateway)
        consolidator = SynapticConsolidator(self.gateway)

        episodes = []
        facts_by_episode = {}
        for session in conversation.sessions:
            session_episodes, session_facts = processor.process_session(conversation_id, session)
            episodes.extend(session_episodes)
            facts_by_episode.update(session_facts)
        summaries, traces_by_user = consolidator.consolidate(conversation, episodes, facts_by_episode)

        store = VectorStore(self.config.embedding_dimension)
        summary_vectors = self.gateway.embed([s.summary_text for s in summaries]) if summaries else []
        store.upsert(
            [
                VectorRecord(
                    id=s.episode_id,
                    namespace="episode",
                    vector=vec,
                    payload=s.summary_text,
                    metadata={
                        "conversation_id": conversation_id,
                        "title": s.title,
                        "start": s.time_range[0].isoformat(),
                        "end": s.time_range[1].isoformat(),
                    },
                )
                for s, vec in zip(summaries, summary_vectors)
            ]
        )
        all_facts = [f for facts in facts_by_episode.values() for f in facts]
        if all_facts:
            fact_vectors = self.gateway.embed([f.text for f in all_facts])
            store.upsert(
                [
                    VectorRecord(
                        id=f.fact_id,
                        namespace="fact",
                        vector=vec,
                        payload=f.text,
                        metadata={
                            "conversation_id": conversation_id,
                            "episode_id": f.source_episode,
                            "speaker_id": f.speaker_id,
                        },
                    )
                    for f, vec in zip(all_facts, fact_vectors)
                ]
            )

        as_of = conversation.last_timestamp()
        builder = CardBuilder(self.gateway, store, conversation_id)
        n_threads = 0
        for user_id in sorted(conversation.participants):
            traces = traces_by_user.get(user_id, [])
            if traces:
                trace_vectors = self.gateway.embed([t.text for t in traces])
                store.upsert(
                    [
                        VectorRecord(
                            id=t.trace_id,
                            namespace="trace",
                            vector=vec,
                            payload=t.text,
                            metadata={
                                "conversation_id": conversation_id,
                                "user_id": user_id,
                                "timestamp": t.timestamp.isoformat(),
                                "episode_id": t.source_episode,
                            },
                        )
                        for t, vec in zip(traces, trace_vectors)
                    ]
                )
                matrix = EmbeddingMatrix(
                    rows=[vec.values for vec in trace_vectors],
                    row_ids=tuple(t.trace_id for t in traces),
                )
                topics, threads, diagnostics = organize_traces(
                    traces,
                    matrix,
                    topic_theta=self.config.theta_topic,
                    thread_theta=self.config.theta_thread,
                    variance_target=self.config.variance_target,
                    seed=self.config.seed,
                    id_prefix=f"{conversation_id}:{user_id}",
                )
            else:
                topics, threads, diagnostics = [], [], None
            n_threads += len(threads)

            card = builder.build_card(
                user_id,
                topics,
                threads,
                {t.trace_id: t for t in traces},
                version=self._next_card_version(conversation_id, user_id),
                as_of=as_of,
            )
            card_path = self._card_path(conversation_id, user_id)
            card_path.parent.mkdir(parents=True, exist_ok=True)
            card_path.write_text(render_card(card, "json") + "\n", encoding="utf-8")

            if diagnostics is not None:
                diag_path = self._diagnostics_path(conversation_id, user_id)
                diag_path.parent.mkdir(parents=True, exist_ok=True)
                diag_path.write_text(json.dumps(diagnostics.to_dict(), indent=2), encoding="utf-8")

        store_path = self._store_path(conversation_id)
        store_path.parent.mkdir(parents=True, exist_ok=True)
        store.persist(store_path)

        n_experiences = sum(len(v) for v in traces_by_user.values())
        stats = compute_stats(len(episodes), n_experiences, n_threads)
        stats_path = self._stats_path(conversation_id)
        stats_path.parent.mkdir(parents=True, exist_ok=True)
        stats_path.write_text(json.dumps(stats.to_table_dict(), indent=2), encoding="utf-8")
        return stats

    def _next_card_version(self, conversation_id: str, user_id: str) -> int:
        path = self._card_path(conversation_id, user_id)
        if not path.exists():
            return 1
        try:
            return parse_card(path.read_text(encoding="utf-8")).version + 1
        except MalformedInput:
            logger.warning("existing card %s unreadable; restarting version at 1", path)
            return 1

    def build_cards(self, conversation_id: str) -> dict:
        """Re-cluster persisted traces and rebuild cards (version bump)."""
        store = self._load_store(conversation_id)
        conversation = self._load_registered(conversation_id)
        as_of = conversation.last_timestamp()
        builder = CardBuilder(self.gateway, store, conversation_id)

        trace_ids = store.ids("trace")
        all_records = store.fetch("trace", trace_ids) if trace_ids else []
        rebuilt = {}
        for user_id in sorted(conversation.participants):
            records = [r for r in all_records if r.metadata.get("user_id") == user_id]
            records.sort(key=lambda r: (r.metadata.get("timestamp", ""), r.id))
            traces = [
                ExperienceTrace(
                    trace_id=r.id,
                    user_id=user_id,
                    text=r.payload,
                    timestamp=parse_timestamp(r.metadata["timestamp"]),
                    source_episode=r.metadata.get("episode_id", ""),
                )
                for r in records
            ]
            if traces:
                matrix = EmbeddingMatrix(
                    rows=[r.vector.values for r in records],
                    row_ids=tuple(r.id for r in records),
                )
                topics, threads, _ = organize_traces(
                    traces,
                    matrix,
                    topic_theta=self.config.theta_topic,
                    thread_theta=self.config.theta_thread,
                    variance_target=self.config.variance_target,
                    seed=self.config.seed,
                    id_prefix=f"{conversation_id}:{user_id}",
                )
            else:
                topics, threads = [], []
            card = builder.build_card(
                user_id,
                topics,
                threads,
                {t.trace_id: t for t in traces},
                version=self._next_card_version(conversation_id, user_id),
                as_of=as_of,
            )
            path = self._card_path(conversation_id, user_id)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(render_card(card, "json") + "\n", encoding="utf-8")
            rebuilt[user_id] = card.version
        store.persist(self._store_path(conversation_id))
        return rebuilt

    # -- reading ---------------------------------------------------------------

    def _load_store(self, conversation_id: str) -> VectorStore:
        path = self._store_path(conversation_id)
        if not path.exists():
            raise EmptyStore(f"no memory store for {conversation_id!r}; run consolidate first")
        return VectorStore.load(path)

    def _load_cards(self, conversation_id: str) -> list[MemoryCard]:
        card_dir = self.data_dir / "cards" / conversation_id
        if not card_dir.exists():
            return []
        cards = []
        for path in sorted(card_dir.glob("*.json")):
            cards.append(parse_card(path.read_text(encoding="utf-8")))
        return cards

    def searcher(self, conversation_id: str, mode: SearchMode = SearchMode.FULL) -> MemorySearcher:
        store = self._load_store(conversation_id)
        cards = self._load_cards(conversation_id) if mode is SearchMode.FULL else []
        return MemorySearcher(self.gateway, store, cards, mode)

    def query(
        self,
        conversation_id: str,
        question: str,
        mode: SearchMode = SearchMode.FULL,
        k: Optional[int] = None,
        user_hint: Optional[str] = None,
    ) -> tuple[Answer, RetrievalBundle]:
        searcher = self.searcher(conversation_id, mode)
        return searcher.answer_query(Query(question, user_hint=user_hint, k=k or self.config.retrieval_k))

    def evaluate(
        self,
        conversation_id: str,
        qa_path: str | Path,
        score_mode: str = "offline_match",
        search_mode: SearchMode = SearchMode.FULL,
        k: Optional[int] = None,
    ) -> EvalReport:
        qa_items = load_qa(qa_path)
        searcher = self.searcher(conversation_id, search_mode)
        return run_eval(
            qa_items,
            lambda q: searcher.answer_query(q)[0].text,
            mode=score_mode,
            gateway=self.gateway,
            k=k or self.config.retrieval_k,
        )

    def stats(self, conversation_id: str) -> dict:
        path = self._stats_path(conversation_id)
        if not path.exists():
            raise NotFound([conversation_id])
        return json.loads(path.read_text(encoding="utf-8"))

    def export_card(self, conversation_id: str, user_id: str, format: str = "json") -> str:
        path = self._card_path(conversation_id, user_id)
        if not path.exists():
            raise NotFound([f"{conversation_id}/{user_id}"])
        card = parse_card(path.read_text(encoding="utf-8"))
        return render_card(card, format)

    def diagnostics(self, conversation_id: str) -> dict[str, dict]:
        diag_dir = self.data_dir / "diagnostics" / conversation_id
        if not diag_dir.exists():
            raise NotFound([conversation_id])
        return {
            path.stem: json.loads(path.read_text(encoding="utf-8"))
            for path in sorted(diag_dir.glob("*.json"))
        }
