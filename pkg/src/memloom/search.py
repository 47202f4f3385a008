"""Query answering over consolidated memory.

The full path runs three stages: top-K episodic retrieval by cosine, memory
card selection, and thread extraction by id from the selected cards, then
fuses everything into one answer prompt. Reduced modes exist for ablation
runs: episodic memory only, episodic plus N semantic facts, and a passive
variant that swaps the card walk for plain similarity search over threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .cards import MemoryCard
from .errors import EmptyStore, NotFound
from .gateway import LlmGateway
from .index import SearchHit, VectorStore

logger = logging.getLogger(__name__)

DEFAULT_K = 10
_PASSIVE_THREAD_K = 5


class SearchMode(Enum):
    FULL = "full"
    EPISODIC_ONLY = "episodic-only"
    SEMANTIC_20 = "semantic-20"
    SEMANTIC_40 = "semantic-40"
    NO_AGENTIC = "no-agentic"

    @property
    def n_facts(self) -> int:
        return {"semantic-20": 20, "semantic-40": 40}.get(self.value, 0)


@dataclass(frozen=True)
class Query:
    text: str
    user_hint: Optional[str] = None
    k: int = DEFAULT_K

    def __post_init__(self):
        if not self.text:
            raise ValueError("query text must be non-empty")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class RetrievalBundle:
    episodic_hits: list[SearchHit] = field(default_factory=list)
    fact_hits: list[SearchHit] = field(default_factory=list)
    selected_cards: list[str] = field(default_factory=list)
    selected_thread_ids: list[str] = field(default_factory=list)
    missing_thread_ids: list[str] = field(default_factory=list)
    thread_contents: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Answer:
    text: str
    cited_episode_ids: tuple[str, ...]
    cited_thread_ids: tuple[str, ...]


class MemorySearcher:
    def __init__(
        self,
        gateway: LlmGateway,
        store: VectorStore,
        cards: Sequence[MemoryCard] = (),
        mode: SearchMode = SearchMode.FULL,
    ):
        self.gateway = gateway
        self.store = store
        self.cards = list(cards)
        self.mode = mode

    # -- stage 1: episodic retrieval ----------------------------------------

    def retrieve_episodic(self, query: Query) -> list[SearchHit]:
        if self.store.count("episode") == 0:
            raise EmptyStore("no episodic memory indexed; run consolidation first")
        return self.store.search(self.gateway.embed_one(query.text), "episode", query.k)

    # -- stage 2: card selection ----------------------------------------------

    def select_cards(self, query: Query, cards: Sequence[MemoryCard]) -> list[MemoryCard]:
        cards = list(cards)
        if not cards:
            return []
        if query.user_hint is not None:
            hinted = [c for c in cards if c.user_id == query.user_hint]
            if hinted:
                return hinted
        lines = "\n".join(
            f"{c.user_id} | {c.theme_title} | {'; '.join(s.title for s in c.sections)}"
            for c in cards
        )
        reply = self.gateway.ask("select_cards", query=query.text, cards=lines)
        chosen_ids = {ln.strip() for ln in reply.splitlines() if ln.strip()}
        chosen = [c for c in cards if c.user_id in chosen_ids]
        return chosen if chosen else cards  # nothing matched: keep everything

    # -- stage 3: thread extraction ----------------------------------------------

    def select_threads(self, query: Query, card: MemoryCard) -> list[str]:
        entries = [(e.thread_id, e.title) for s in card.sections for e in s.entries]
        if not entries:
            return []
        lines = "\n".join(f"{tid} | {title}" for tid, title in entries)
        reply = self.gateway.ask("select_threads", query=query.text, entries=lines)
        known = {tid for tid, _ in entries}
        chosen: list[str] = []
        for line in reply.splitlines():
            tid = line.strip()
            if not tid:
                continue
            if tid in known:
                if tid not in chosen:
                    chosen.append(tid)
            else:
                logger.warning("backend proposed unknown thread id %r; dropped", tid)
        return chosen

    # -- fusion --------------------------------------------------------------

    def _fetch_threads(self, thread_ids: list[str], bundle: RetrievalBundle) -> None:
        if not thread_ids:
            return
        try:
            records = self.store.fetch("thread", thread_ids)
        except NotFound as exc:
            records = exc.records
            bundle.missing_thread_ids = list(exc.missing)
            logger.warning("thread ids missing from index: %s", exc.missing)
        bundle.thread_contents = [r.payload for r in records]

    def _context(self, bundle: RetrievalBundle) -> str:
        parts = [hit.payload for hit in bundle.episodic_hits]
        parts.extend(hit.payload for hit in bundle.fact_hits)
        parts.extend(bundle.thread_contents)
        return "\n".join(parts)

    def answer_query(self, query: Query) -> tuple[Answer, RetrievalBundle]:
        bundle = RetrievalBundle()
        bundle.episodic_hits = self.retrieve_episodic(query)

        if self.mode in (SearchMode.SEMANTIC_20, SearchMode.SEMANTIC_40) and self.store.count("fact") > 0:
            bundle.fact_hits = self.store.search(
                self.gateway.embed_one(query.text), "fact", self.mode.n_facts
            )

        if self.mode is SearchMode.FULL and self.cards:
            for card in self.select_cards(query, self.cards):
                bundle.selected_cards.append(card.user_id)
                bundle.selected_thread_ids.extend(
                    tid for tid in self.select_threads(query, card)
                    if tid not in bundle.selected_thread_ids
                )
            self._fetch_threads(bundle.selected_thread_ids, bundle)
        elif self.mode is SearchMode.NO_AGENTIC and self.store.count("thread") > 0:
            hits = self.store.search(self.gateway.embed_one(query.text), "thread", _PASSIVE_THREAD_K)
            bundle.selected_thread_ids = [h.id for h in hits]
            bundle.thread_contents = [h.payload for h in hits]

        reply = self.gateway.ask("answer", question=query.text, context=self._context(bundle))
        fetched = [tid for tid in bundle.selected_thread_ids if tid not in bundle.missing_thread_ids]
        return (
            Answer(
                text=reply,
                cited_episode_ids=tuple(h.id for h in bundle.episodic_hits),
                cited_thread_ids=tuple(fetched),
            ),
            bundle,
        )
