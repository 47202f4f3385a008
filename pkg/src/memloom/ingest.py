"""Conversation and QA ingestion.

Parses the engine's JSON conversation format (see README) into an immutable
data model, enforcing structural invariants up front so every later stage can
trust its input. Two speakers, ordered sessions, gapless turns, non-decreasing
timestamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .errors import EmptyConversation, InvariantViolation, MalformedInput, UnknownCategory
from .text import parse_timestamp


@dataclass(frozen=True)
class Utterance:
    speaker_id: str
    text: str
    session_index: int
    turn_index: int
    timestamp: datetime
    image_caption: Optional[str] = None


@dataclass(frozen=True)
class Session:
    index: int
    datetime: datetime
    utterances: tuple[Utterance, ...]


@dataclass(frozen=True)
class Conversation:
    conversation_id: str
    participants: frozenset[str]
    sessions: tuple[Session, ...]

    def utterance_count(self) -> int:
        return sum(len(s.utterances) for s in self.sessions)

    def last_timestamp(self) -> datetime:
        return max(u.timestamp for s in self.sessions for u in s.utterances)


class QACategory(str, Enum):
    SINGLE_HOP = "single-hop"
    MULTI_HOP = "multi-hop"
    TEMPORAL = "temporal"
    OPEN_DOMAIN = "open-domain"


@dataclass(frozen=True)
class QAItem:
    question: str
    gold_answer: str
    category: QACategory
    evidence: tuple[tuple[int, int], ...] = field(default_factory=tuple)


def _build_utterance(raw: dict, session_index: int, turn_index: int) -> Utterance:
    try:
        speaker = str(raw["speaker_id"])
        text = str(raw["text"])
        ts = parse_timestamp(str(raw["timestamp"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"bad utterance at session {session_index} turn {turn_index}: {exc}") from exc
    if not text:
        raise InvariantViolation(f"empty utterance text at session {session_index} turn {turn_index}")
    caption = raw.get("image_caption")
    if caption is not None:
        caption = str(caption)
    return Utterance(speaker, text, session_index, turn_index, ts, caption)


def build_conversation(data: dict) -> Conversation:
    """Validate a parsed conversation dict and freeze it into the model."""
    try:
        conversation_id = str(data["conversation_id"])
        participants_raw = list(data["participants"])
        sessions_raw = list(data["sessions"])
    except (KeyError, TypeError) as exc:
        raise MalformedInput(f"missing conversation field: {exc}") from exc

    if len(set(participants_raw)) != 2:
        raise InvariantViolation(f"conversation needs exactly two participants, got {participants_raw}")
    participants = frozenset(str(p) for p in participants_raw)
    if not sessions_raw:
        raise EmptyConversation(f"conversation {conversation_id} has no sessions")

    sessions: list[Session] = []
    prev_index: Optional[int] = None
    for raw_session in sessions_raw:
        try:
            index = int(raw_session["index"])
            session_dt = parse_timestamp(str(raw_session["datetime"]))
            raw_utts = list(raw_session["utterances"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedInput(f"bad session record: {exc}") from exc

        if prev_index is not None and index <= prev_index:
            raise InvariantViolation(f"session indices must be strictly increasing, got {index} after {prev_index}")
        prev_index = index
        if not raw_utts:
            raise EmptyConversation(f"session {index} has no utterances")

        utterances = tuple(_build_utterance(raw, index, turn) for turn, raw in enumerate(raw_utts))
        for u in utterances:
            if u.speaker_id not in participants:
                raise InvariantViolation(f"speaker {u.speaker_id!r} not among participants {sorted(participants)}")
        for a, b in zip(utterances, utterances[1:]):
            try:
                out_of_order = b.timestamp < a.timestamp
            except TypeError as exc:
                raise MalformedInput(f"mixed naive/aware timestamps in session {index}") from exc
            if out_of_order:
                raise InvariantViolation(
                    f"timestamps decrease at session {index} turn {b.turn_index}"
                )
        sessions.append(Session(index, session_dt, utterances))

    return Conversation(conversation_id, participants, tuple(sessions))


def load_conversation(path: str | Path) -> Conversation:
    """Load and validate a conversation file."""
    path = Path(path)
    if not path.exists():
        raise MalformedInput(f"conversation file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedInput(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedInput(f"{path}: top level must be an object")
    return build_conversation(data)


def conversation_to_dict(conversation: Conversation) -> dict:
    """Serialize back to the file layout; round-trips through build_conversation."""
    return {
        "conversation_id": conversation.conversation_id,
        "participants": sorted(conversation.participants),
        "sessions": [
            {
                "index": s.index,
                "datetime": s.datetime.isoformat(),
                "utterances": [
                    {
                        "speaker_id": u.speaker_id,
                        "text": u.text,
                        "timestamp": u.timestamp.isoformat(),
                        **({"image_caption": u.image_caption} if u.image_caption is not None else {}),
                    }
                    for u in s.utterances
                ],
            }
            for s in conversation.sessions
        ],
    }


def save_conversation(conversation: Conversation, path: str | Path) -> None:
    Path(path).write_text(json.dumps(conversation_to_dict(conversation), indent=2), encoding="utf-8")


def load_qa(path: str | Path) -> list[QAItem]:
    """Load QA annotations, preserving file order."""
    path = Path(path)
    if not path.exists():
        raise MalformedInput(f"QA file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedInput(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, list):
        raise MalformedInput(f"{path}: top level must be an array")

    items: list[QAItem] = []
    for i, raw in enumerate(data):
        try:
            question = str(raw["question"])
            answer = str(raw["answer"])
            category_raw = str(raw["category"])
        except (KeyError, TypeError) as exc:
            raise MalformedInput(f"bad QA item {i}: {exc}") from exc
        try:
            category = QACategory(category_raw)
        except ValueError:
            raise UnknownCategory(f"QA item {i}: unknown category {category_raw!r}") from None
        evidence_raw: Iterable = raw.get("evidence", [])
        try:
            evidence = tuple((int(s), int(t)) for s, t in evidence_raw)
        except (TypeError, ValueError) as exc:
            raise MalformedInput(f"bad evidence in QA item {i}: {exc}") from exc
        items.append(QAItem(question, answer, category, evidence))
    return items
