"""Synaptic consolidation: episode summaries and user experience traces.

Every episode is condensed into a titled summary; from each summary (plus the
episode's extracted facts) a per-user distillation keeps only that user's own
biographical experiences. An episode yielding no traces for a user counts as
a discard for that user, which is what the consolidation statistics report.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Optional, Sequence

from .gateway import TOPIC_CHANGE_MARKER, LlmGateway
from .ingest import Conversation, Utterance
from .stm import Episode, SemanticFact

_TITLE_PREFIX = "TITLE:"
_TITLE_WORDS = 8


@dataclass(frozen=True)
class EpisodeSummary:
    episode_id: str
    title: str
    summary_text: str
    time_range: tuple[datetime, datetime]
    participants: frozenset[str]


@dataclass(frozen=True)
class ExperienceTrace:
    trace_id: str
    user_id: str
    text: str
    timestamp: datetime
    source_episode: str
    source_fact_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class ConsolidationStats:
    n_episodes: int
    n_experiences: int
    n_threads: int
    n_discard: float
    discard_rate: float

    def to_table_dict(self) -> dict:
        """Report row keyed like the published statistics table."""
        return {
            "Episode": self.n_episodes,
            "Exper.": self.n_experiences,
            "Thread": self.n_threads,
            "Discard": self.n_discard,
            "Dis. Rate": self.discard_rate,
        }


def compute_stats(n_episodes: int, n_experiences: int, n_threads: int) -> ConsolidationStats:
    """Discard accounting: n_discard = n_episodes - n_experiences / 2.

    Episodes are shared by both speakers while experiences are per user,
    hence the half weight. Fractional discard counts are legitimate.
    """
    if n_episodes < 0 or n_experiences < 0:
        raise ValueError("counts must be non-negative")
    n_discard = n_episodes - n_experiences / 2.0
    rate = n_discard / n_episodes if n_episodes > 0 else 0.0
    return ConsolidationStats(n_episodes, n_experiences, n_threads, n_discard, rate)


def _derive_title(summary_text: str) -> str:
    body = summary_text
    if body.startswith("SUMMARY:"):
        body = body[len("SUMMARY:"):]
    words = body.split()
    return " ".join(words[:_TITLE_WORDS]) if words else "Untitled episode"


def episode_text(utterances: Sequence[Utterance]) -> str:
    """Transcript block for prompting; segmentation control markers are not
    memory content and get stripped."""
    lines = []
    for u in utterances:
        text = u.text.replace(TOPIC_CHANGE_MARKER, "").strip()
        lines.append(f"{u.speaker_id}: {text}")
    return "\n".join(lines)


class SynapticConsolidator:
    def __init__(self, gateway: LlmGateway):
        self.gateway = gateway

    def summarize_episode(self, episode: Episode, utterances: Sequence[Utterance]) -> EpisodeSummary:
        """Condense one episode; the backend may lead with a TITLE: line."""
        if not utterances:
            raise ValueError(f"episode {episode.episode_id} has no utterances")
        reply = self.gateway.ask("summarize_episode", episode=episode_text(utterances))
        title: Optional[str] = None
        summary = reply
        first_line, _, rest = reply.partition("\n")
        if first_line.strip().upper().startswith(_TITLE_PREFIX):
            title = first_line.strip()[len(_TITLE_PREFIX):].strip()
            summary = rest
        if not title:
            title = _derive_title(summary)
        return EpisodeSummary(
            episode_id=episode.episode_id,
            title=title,
            summary_text=summary,
            time_range=(utterances[0].timestamp, utterances[-1].timestamp),
            participants=frozenset(u.speaker_id for u in utterances),
        )

    def distill_experiences(
        self, summary: EpisodeSummary, facts: Sequence[SemanticFact], user: str
    ) -> list[ExperienceTrace]:
        """Biographical traces of one user from one episode; empty = discard."""
        reply = self.gateway.ask(
            "distill_experience",
            user=user,
            summary=summary.summary_text,
            facts="\n".join(f.text for f in facts),
        )
        own_fact_ids = tuple(f.fact_id for f in facts if f.speaker_id == user)
        traces: list[ExperienceTrace] = []
        lines = []
        for raw in reply.splitlines():
            line = raw.strip()
            if line.startswith("SUMMARY:"):  # backend echoing scaffolding
                line = line[len("SUMMARY:"):].strip()
            if line:
                lines.append(line)
        for i, line in enumerate(lines):
            traces.append(
                ExperienceTrace(
                    trace_id=f"{summary.episode_id}:{user}:x{i}",
                    user_id=user,
                    text=line,
                    timestamp=summary.time_range[0],
                    source_episode=summary.episode_id,
                    source_fact_ids=own_fact_ids,
                )
            )
        return traces

    def consolidate(
        self,
        conversation: Conversation,
        episodes: Sequence[Episode],
        facts_by_episode: dict[str, list[SemanticFact]],
    ) -> tuple[list[EpisodeSummary], dict[str, list[ExperienceTrace]]]:
        """Summaries for all episodes plus per-user chronological traces."""
        utterances_by_ref = {
            (s.index, u.turn_index): u for s in conversation.sessions for u in s.utterances
        }
        participants = sorted(conversation.participants)
        summaries: list[EpisodeSummary] = []
        traces_by_user: dict[str, list[ExperienceTrace]] = {p: [] for p in participants}
        for episode in episodes:
            utterances = [utterances_by_ref[ref] for ref in episode.utterance_refs]
            summary = self.summarize_episode(episode, utterances)
            summaries.append(summary)
            facts = facts_by_episode.get(episode.episode_id, [])
            for user in participants:
                traces_by_user[user].extend(self.distill_experiences(summary, facts, user))
        for user in participants:
            traces_by_user[user].sort(key=lambda t: (t.timestamp, t.trace_id))
        return summaries, traces_by_user
