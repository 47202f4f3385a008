"""Short-term memory processing: episode segmentation and fact extraction.

Each session is partitioned into episodes by classifying every utterance as
topic-change (TC) or topic-development (TD); an episode is a maximal TD run
following a TC. The first utterance of a session is TC by fiat. In parallel,
each utterance is mapped to zero or more structured semantic facts
conditioned on its two preceding turns and any image caption.

Classification is batched: one prompt labels a whole session, with a
per-utterance fallback whenever the batch reply does not parse.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .gateway import ChatRequest, LlmGateway
from .ingest import Session, Utterance

logger = logging.getLogger(__name__)

PRE_WINDOW = 6  # utterances of the running episode offered as context
PREV_CONTEXT = 2  # turns conditioning fact extraction


class IntentLabel(Enum):
    TC = "TC"
    TD = "TD"


@dataclass(frozen=True)
class Episode:
    episode_id: str
    session_index: int
    span: tuple[int, int]  # inclusive turn range
    utterance_refs: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class SemanticFact:
    fact_id: str
    text: str
    source_turn: tuple[int, int]
    source_episode: str
    speaker_id: str


def episode_id_for(conversation_id: str, session_index: int, start_turn: int) -> str:
    return f"{conversation_id}:s{session_index}:e{start_turn}"


def _numbered_line(i: int, u: Utterance) -> str:
    return f"{i} | {u.speaker_id}: {u.text}"


def _context_block(utterances: Sequence[Utterance]) -> str:
    return "\n".join(f"{u.speaker_id}: {u.text}" for u in utterances)


class ShortTermProcessor:
    def __init__(self, gateway: LlmGateway):
        self.gateway = gateway

    # -- intent classification --------------------------------------------

    def classify_intent(
        self,
        current: Utterance,
        preceding: Sequence[Utterance],
        subsequent: Optional[Utterance] = None,
    ) -> IntentLabel:
        """Label one utterance given the tail of its episode and one lookahead."""
        if not preceding:
            return IntentLabel.TC
        reply = self.gateway.ask(
            "segment",
            utterances=_numbered_line(0, current),
            preceding=_context_block(preceding[-PRE_WINDOW:]),
            subsequent=_context_block([subsequent]) if subsequent is not None else "",
        )
        tokens = reply.split()
        return IntentLabel.TC if tokens and tokens[0].upper() == "TC" else IntentLabel.TD

    def _classify_batch(self, session: Session) -> Optional[list[IntentLabel]]:
        """One prompt for the whole session; None when the reply is unusable."""
        utterances = session.utterances
        reply = self.gateway.ask(
            "segment",
            utterances="\n".join(_numbered_line(i, u) for i, u in enumerate(utterances)),
            preceding="",
            subsequent="",
        )
        labels: list[IntentLabel] = []
        for line in reply.splitlines():
            token = line.split("|")[-1].split(":")[-1].strip().upper()
            if token not in ("TC", "TD"):
                return None
            labels.append(IntentLabel[token])
        if len(labels) != len(utterances):
            return None
        return labels

    def _classify_sequential(self, session: Session) -> list[IntentLabel]:
        utterances = session.utterances
        labels: list[IntentLabel] = []
        episode_tail: list[Utterance] = []
        for i, current in enumerate(utterances):
            subsequent = utterances[i + 1] if i + 1 < len(utterances) else None
            label = self.classify_intent(current, episode_tail, subsequent)
            labels.append(label)
            if label is IntentLabel.TC:
                episode_tail = [current]
            else:
                episode_tail.append(current)
        return labels

    # -- segmentation -------------------------------------------------------

    def segment_session(self, conversation_id: str, session: Session) -> list[Episode]:
        """Partition a session into episodes (maximal TD runs after each TC)."""
        labels = self._classify_batch(session)
        if labels is None:
            logger.warning(
                "batch segmentation reply unparseable for session %d; falling back to per-utterance calls",
                session.index,
            )
            labels = self._classify_sequential(session)
        labels[0] = IntentLabel.TC  # session boundary is always an episode boundary

        episodes: list[Episode] = []
        start = 0
        for turn in range(1, len(labels) + 1):
            if turn == len(labels) or labels[turn] is IntentLabel.TC:
                refs = tuple((session.index, t) for t in range(start, turn))
                episodes.append(
                    Episode(
                        episode_id=episode_id_for(conversation_id, session.index, start),
                        session_index=session.index,
                        span=(start, turn - 1),
                        utterance_refs=refs,
                    )
                )
                start = turn
        return episodes

    # -- fact extraction ----------------------------------------------------

    def extract_semantics(
        self,
        current: Utterance,
        prev2: Sequence[Utterance],
        caption: Optional[str] = None,
        episode_id: str = "",
    ) -> list[SemanticFact]:
        """Zero or more facts for one utterance, conditioned on two prior turns."""
        reply = self.gateway.ask(
            "extract_semantics",
            context=_context_block(prev2[-PREV_CONTEXT:]),
            speaker=current.speaker_id,
            text=current.text,
            caption=caption or "",
        )
        facts: list[SemanticFact] = []
        for i, line in enumerate(ln.strip() for ln in reply.splitlines() if ln.strip()):
            facts.append(
                SemanticFact(
                    fact_id=f"{episode_id}:f{current.turn_index}.{i}",
                    text=line,
                    source_turn=(current.session_index, current.turn_index),
                    source_episode=episode_id,
                    speaker_id=current.speaker_id,
                )
            )
        return facts

    # -- session pipeline -----------------------------------------------------

    def process_session(
        self, conversation_id: str, session: Session
    ) -> tuple[list[Episode], dict[str, list[SemanticFact]]]:
        """Segment a session, then extract facts for every utterance."""
        episodes = self.segment_session(conversation_id, session)
        episode_of_turn: dict[int, str] = {}
        for episode in episodes:
            for _, turn in episode.utterance_refs:
                episode_of_turn[turn] = episode.episode_id

        facts_by_episode: dict[str, list[SemanticFact]] = {e.episode_id: [] for e in episodes}
        utterances = session.utterances
        for i, current in enumerate(utterances):
            prev2 = utterances[max(0, i - PREV_CONTEXT):i]
            episode_id = episode_of_turn[current.turn_index]
            facts = self.extract_semantics(current, prev2, current.image_caption, episode_id)
            facts_by_episode[episode_id].extend(facts)
        return episodes, facts_by_episode
