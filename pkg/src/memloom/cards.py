"""User memory cards: theme title, topic sections, thread entries.

The card is the navigable surface of long-term memory. Each narrative thread
gets a titled, summarized entry whose full payload (summary plus the ordered
trace texts) is upserted into the vector index under the thread id, so a
reader holding only the id can fetch the complete narrative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Sequence

from .cluster import Thread, TopicCluster
from .errors import MalformedInput
from .gateway import LlmGateway
from .index import VectorRecord, VectorStore
from .synaptic import ExperienceTrace
from .text import parse_timestamp

_TITLE_PREFIX = "TITLE:"


@dataclass(frozen=True)
class ThreadEntry:
    thread_id: str
    title: str
    summary: str


@dataclass(frozen=True)
class TopicSection:
    topic_id: int
    title: str
    entries: tuple[ThreadEntry, ...]


@dataclass(frozen=True)
class MemoryCard:
    user_id: str
    theme_title: str
    sections: tuple[TopicSection, ...]
    version: int = 1
    built_at: datetime = field(default_factory=lambda: datetime(1970, 1, 1))

    def thread_ids(self) -> list[str]:
        return [entry.thread_id for section in self.sections for entry in section.entries]


class CardBuilder:
    def __init__(self, gateway: LlmGateway, store: VectorStore, conversation_id: str = ""):
        self.gateway = gateway
        self.store = store
        self.conversation_id = conversation_id

    def summarize_thread(self, thread: Thread, trace_texts: Sequence[str]) -> ThreadEntry:
        """Title + summary for one thread; also indexes its full payload."""
        traces_block = "\n".join(trace_texts)
        reply = self.gateway.ask("summarize_thread", traces=traces_block)
        first_line, _, rest = reply.partition("\n")
        if first_line.strip().upper().startswith(_TITLE_PREFIX):
            title = first_line.strip()[len(_TITLE_PREFIX):].strip()
            summary = rest
        else:
            title = " ".join(traces_block.split()[:6]) or thread.thread_id
            summary = reply
        if not summary:
            summary = traces_block

        payload = summary + "\n" + traces_block if summary != traces_block else summary
        self.store.upsert(
            [
                VectorRecord(
                    id=thread.thread_id,
                    namespace="thread",
                    vector=self.gateway.embed_one(payload),
                    payload=payload,
                    metadata={
                        "conversation_id": self.conversation_id,
                        "topic_id": thread.topic_id,
                        "start": thread.time_span[0].isoformat(),
                        "end": thread.time_span[1].isoformat(),
                    },
                )
            ]
        )
        return ThreadEntry(thread.thread_id, title, summary)

    def build_card(
        self,
        user_id: str,
        topics: Sequence[TopicCluster],
        threads: Sequence[Thread],
        traces_by_id: dict[str, ExperienceTrace],
        version: int = 1,
        as_of: datetime | None = None,
    ) -> MemoryCard:
        """Assemble the three-level card for one user."""
        threads_by_topic: dict[int, list[Thread]] = {}
        for thread in threads:
            threads_by_topic.setdefault(thread.topic_id, []).append(thread)

        sections: list[TopicSection] = []
        for topic in topics:
            entries: list[ThreadEntry] = []
            for thread in threads_by_topic.get(topic.topic_id, []):
                texts = [traces_by_id[tid].text for tid in thread.trace_ids]
                entries.append(self.summarize_thread(thread, texts))
            if not entries:
                continue
            entry_lines = "\n".join(f"{e.title}: {e.summary}" for e in entries)
            title = self.gateway.ask("title_topic", entries=entry_lines)
            sections.append(TopicSection(topic.topic_id, title.strip() or f"Topic {topic.topic_id}", tuple(entries)))

        if sections:
            section_lines = "\n".join(s.title for s in sections)
            theme = self.gateway.ask("title_theme", user=user_id, sections=section_lines).strip()
        else:
            theme = f"{user_id}: No Memories Yet"
        return MemoryCard(
            user_id=user_id,
            theme_title=theme or f"{user_id}: No Memories Yet",
            sections=tuple(sections),
            version=version,
            built_at=as_of or datetime(1970, 1, 1),
        )


def card_to_dict(card: MemoryCard) -> dict:
    return {
        "user_id": card.user_id,
        "theme_title": card.theme_title,
        "version": card.version,
        "built_at": card.built_at.isoformat(),
        "sections": [
            {
                "topic_id": s.topic_id,
                "title": s.title,
                "entries": [
                    {"thread_id": e.thread_id, "title": e.title, "summary": e.summary}
                    for e in s.entries
                ],
            }
            for s in card.sections
        ],
    }


def card_from_dict(data: dict) -> MemoryCard:
    try:
        sections = tuple(
            TopicSection(
                topic_id=int(s["topic_id"]),
                title=str(s["title"]),
                entries=tuple(
                    ThreadEntry(str(e["thread_id"]), str(e["title"]), str(e["summary"]))
                    for e in s["entries"]
                ),
            )
            for s in data["sections"]
        )
        return MemoryCard(
            user_id=str(data["user_id"]),
            theme_title=str(data["theme_title"]),
            sections=sections,
            version=int(data["version"]),
            built_at=parse_timestamp(str(data["built_at"])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"bad card payload: {exc}") from exc


def render_card(card: MemoryCard, format: str = "json") -> str:
    """Render to JSON (round-trips) or markdown (ids stay visible)."""
    if format == "json":
        return json.dumps(card_to_dict(card), indent=2, ensure_ascii=False)
    if format == "markdown":
        lines = [f"# {card.theme_title}", ""]
        for section in card.sections:
            lines.append(f"## {section.title}")
            for entry in section.entries:
                summary = " ".join(entry.summary.split())
                lines.append(f"- **{entry.title}** (`{entry.thread_id}`): {summary}")
            lines.append("")
        lines.append(f"_version {card.version}, built {card.built_at.isoformat()}_")
        return "\n".join(lines)
    raise ValueError(f"unknown card format {format!r}")


def parse_card(text: str) -> MemoryCard:
    try:
        return card_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"bad card JSON: {exc}") from exc
