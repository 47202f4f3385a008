"""Small text helpers shared by the mock backend, retrieval, and scoring."""

from __future__ import annotations

import re
from datetime import datetime

# Minimal English stopword list; used for title/query token overlap, not for
# embeddings (embeddings hash every token).
STOPWORDS = frozenset(
    """a an and are as at be been but by did do does for from had has have he
    her hers him his how i in is it its me my of on or our she so that the
    their them they this to was we were what when where which who whose why
    will with you your""".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9']+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+|\n+")


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens, punctuation stripped."""
    return _TOKEN_RE.findall(text.lower())


def content_tokens(text: str) -> list[str]:
    """Tokens with stopwords removed, original order kept."""
    return [t for t in tokenize(text) if t not in STOPWORDS]


def split_sentences(text: str) -> list[str]:
    """Split on sentence punctuation and newlines; drops empty pieces."""
    return [s.strip() for s in _SENTENCE_SPLIT_RE.split(text) if s.strip()]


def normalize_for_match(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(tokenize(text))


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp; accepts a trailing 'Z'."""
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    return datetime.fromisoformat(value)
