"""Deterministic offline backend.

Pure functions of (template_id, variables); no clock, no randomness, no
network. The chat contracts are intentionally simple so pipeline tests can
predict every byte:

* ``segment``            - one label per input line; TC iff the line carries
                           the "⟦TC⟧" marker or is the first utterance of a
                           session (empty preceding context), else TD.
* ``extract_semantics``  - one "speaker | sentence" line per sentence of the
                           utterance with at least two tokens; a caption
                           counts as one extra sentence.
* ``summarize_episode``  - "SUMMARY:" + first 400 chars of the episode text.
* ``distill_experience`` - the summary lines mentioning the target user
                           verbatim.
* ``summarize_thread``   - "TITLE: <top tokens>" then the trace lines as-is.
* ``title_topic``        - top content tokens of the entries, title-cased.
* ``title_theme``        - "<user>: " + top content tokens of the sections.
* ``select_cards`` /
  ``select_threads``     - ids of candidates whose titles share at least one
                           non-stopword token with the query.
* ``answer``             - the highest-scoring context sentences that share
                           tokens with the question, best three, concatenated.
* ``judge``              - CORRECT iff the normalized gold answer is contained
                           in the normalized prediction.

Embeddings hash each lowercased token into one of 64 buckets (BLAKE2 digest,
platform-independent), accumulate counts, and L2-normalize, so texts sharing
vocabulary land close in cosine space.
"""

from __future__ import annotations

import hashlib
from collections import Counter

import numpy as np

from ..text import STOPWORDS, content_tokens, normalize_for_match, split_sentences, tokenize

MOCK_DIMENSION = 64
TOPIC_CHANGE_MARKER = "⟦TC⟧"
_SUMMARY_PREFIX = "SUMMARY:"
_SUMMARY_BUDGET = 400


def _top_tokens(text: str, limit: int) -> list[str]:
    tokens = content_tokens(text)
    counts = Counter(tokens)
    first_pos: dict[str, int] = {}
    for i, t in enumerate(tokens):
        first_pos.setdefault(t, i)
    # Ties broken by first appearance so titles are stable.
    return sorted(counts, key=lambda t: (-counts[t], first_pos[t]))[:limit]


def _overlaps(query: str, title: str) -> bool:
    return bool(set(content_tokens(query)) & set(content_tokens(title)))


class MockBackend:
    """Offline chat + embedding backend; every reply is reproducible."""

    def __init__(self, dimension: int = MOCK_DIMENSION):
        self.dimension = dimension

    # -- chat ------------------------------------------------------------

    def chat(self, template_id: str, prompt: str, variables: dict[str, str],
             temperature: float = 0.0, max_tokens: int = 1024) -> str:
        handler = getattr(self, f"_chat_{template_id}", None)
        if handler is None:
            raise ValueError(f"mock backend has no handler for template {template_id!r}")
        return handler(variables)

    def _chat_segment(self, v: dict[str, str]) -> str:
        lines = [ln for ln in v.get("utterances", "").splitlines() if ln.strip()]
        session_start = not v.get("preceding", "").strip()
        labels = []
        for i, line in enumerate(lines):
            first = session_start and i == 0
            labels.append("TC" if TOPIC_CHANGE_MARKER in line or first else "TD")
        return "\n".join(labels)

    def _chat_extract_semantics(self, v: dict[str, str]) -> str:
        speaker = v.get("speaker", "speaker")
        sentences = [
            s.rstrip(".!?")
            for s in split_sentences(v.get("text", ""))
            if len(tokenize(s)) >= 2
        ]
        caption = v.get("caption", "").strip()
        if caption:
            sentences.append(caption)
        return "\n".join(f"{speaker} | {s}" for s in sentences)

    def _chat_summarize_episode(self, v: dict[str, str]) -> str:
        return _SUMMARY_PREFIX + v.get("episode", "")[:_SUMMARY_BUDGET]

    def _chat_distill_experience(self, v: dict[str, str]) -> str:
        user = v.get("user", "")
        lines = v.get("summary", "").splitlines()
        return "\n".join(ln for ln in lines if user and user in ln)

    def _chat_summarize_thread(self, v: dict[str, str]) -> str:
        traces = v.get("traces", "")
        title = " ".join(t.title() for t in _top_tokens(traces, 4)) or "Untitled Thread"
        return f"TITLE: {title}\n{traces}"

    def _chat_title_topic(self, v: dict[str, str]) -> str:
        tokens = _top_tokens(v.get("entries", ""), 3)
        return ", ".join(t.title() for t in tokens) or "Miscellaneous"

    def _chat_title_theme(self, v: dict[str, str]) -> str:
        user = v.get("user", "user")
        tokens = _top_tokens(v.get("sections", ""), 3)
        body = ", ".join(t.title() for t in tokens) or "No Memories Yet"
        return f"{user}: {body}"

    def _chat_select_cards(self, v: dict[str, str]) -> str:
        query = v.get("query", "")
        chosen = []
        for line in v.get("cards", "").splitlines():
            parts = [p.strip() for p in line.split("|")]
            if len(parts) >= 2 and _overlaps(query, " | ".join(parts[1:])):
                chosen.append(parts[0])
        return "\n".join(chosen)

    def _chat_select_threads(self, v: dict[str, str]) -> str:
        query = v.get("query", "")
        chosen = []
        for line in v.get("entries", "").splitlines():
            parts = [p.strip() for p in line.split("|")]
            if len(parts) >= 2 and _overlaps(query, parts[1]):
                chosen.append(parts[0])
        return "\n".join(chosen)

    def _chat_answer(self, v: dict[str, str]) -> str:
        question_tokens = set(content_tokens(v.get("question", "")))
        scored: list[tuple[int, int, str]] = []
        for pos, sentence in enumerate(split_sentences(v.get("context", ""))):
            overlap = len(question_tokens & set(content_tokens(sentence)))
            if overlap > 0:
                scored.append((-overlap, pos, sentence))
        scored.sort()
        if not scored:
            return "No relevant memory found."
        return " ".join(s for _, _, s in scored[:3])

    def _chat_judge(self, v: dict[str, str]) -> str:
        gold = normalize_for_match(v.get("gold", ""))
        predicted = normalize_for_match(v.get("predicted", ""))
        return "CORRECT" if gold and gold in predicted else "INCORRECT"

    # -- embeddings --------------------------------------------------------

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dimension

    def embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in tokenize(text):
            vec[self._bucket(token)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # Degenerate text (no tokens): a fixed unit vector keeps the
            # index total.
            vec[0] = 1.0
            return vec
        return vec / norm

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        return [self.embed_one(t) for t in texts]
