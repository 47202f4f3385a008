"""QA evaluation over consolidated memory.

Offline mode scores by normalized containment (gold inside prediction after
lowercasing and punctuation stripping); judge mode asks the configured chat
backend for a CORRECT/INCORRECT verdict. Reports break accuracy down by
reasoning category.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import UnparseableVerdict
from .gateway import LlmGateway
from .ingest import QACategory, QAItem
from .search import Query
from .text import normalize_for_match

logger = logging.getLogger(__name__)

CATEGORY_COLUMNS = {
    QACategory.SINGLE_HOP: "SingleHop",
    QACategory.MULTI_HOP: "MultiHop",
    QACategory.TEMPORAL: "Temporal",
    QACategory.OPEN_DOMAIN: "OpenDomain",
}


@dataclass(frozen=True)
class EvalReport:
    per_category: dict[QACategory, tuple[int, int, float]]  # (correct, total, accuracy)
    overall_accuracy: float
    mode: str  # "offline_match" | "llm_judge"

    def to_dict(self) -> dict:
        out = {}
        for category, column in CATEGORY_COLUMNS.items():
            correct, total, accuracy = self.per_category.get(category, (0, 0, 0.0))
            out[column] = accuracy
        out["Overall"] = self.overall_accuracy
        out["detail"] = {
            "mode": self.mode,
            "counts": {
                CATEGORY_COLUMNS[c]: {"correct": v[0], "total": v[1]}
                for c, v in self.per_category.items()
            },
        }
        return out


def score_offline(predicted: str, gold: str) -> bool:
    """True iff the normalized gold answer appears inside the prediction."""
    norm_gold = normalize_for_match(gold)
    norm_pred = normalize_for_match(predicted)
    return norm_pred == norm_gold or norm_gold in norm_pred


def judge_llm(gateway: LlmGateway, question: str, predicted: str, gold: str) -> bool:
    """Backend verdict; strict parsing, never a silent false."""
    reply = gateway.ask("judge", question=question, predicted=predicted, gold=gold)
    first = reply.strip().split()
    verdict = first[0].upper().strip(".,!") if first else ""
    if verdict == "CORRECT":
        return True
    if verdict in ("INCORRECT", "WRONG"):
        return False
    raise UnparseableVerdict(f"judge reply not understood: {reply[:120]!r}")


def run_eval(
    qa_items: Sequence[QAItem],
    answer_fn: Callable[[Query], str],
    mode: str = "offline_match",
    gateway: LlmGateway | None = None,
    k: int = 10,
) -> EvalReport:
    """Answer every QA item and score it; report partitioned by category.

    answer_fn maps a Query to the predicted answer text, so any answering
    pipeline can be evaluated.
    """
    if mode not in ("offline_match", "llm_judge"):
        raise ValueError(f"unknown eval mode {mode!r}")
    if mode == "llm_judge" and gateway is None:
        raise ValueError("llm_judge mode needs a gateway")
    if not qa_items:
        logger.warning("run_eval called with zero questions; reporting overall 0")

    tallies: dict[QACategory, list[int]] = {c: [0, 0] for c in QACategory}
    for item in qa_items:
        predicted = answer_fn(Query(item.question, k=k))
        if mode == "offline_match":
            correct = score_offline(predicted, item.gold_answer)
        else:
            correct = judge_llm(gateway, item.question, predicted, item.gold_answer)
        tallies[item.category][1] += 1
        if correct:
            tallies[item.category][0] += 1

    per_category = {}
    for category, (correct, total) in tallies.items():
        if total == 0:
            continue
        per_category[category] = (correct, total, correct / total)
    total_correct = sum(v[0] for v in per_category.values())
    total_questions = sum(v[1] for v in per_category.values())
    overall = total_correct / total_questions if total_questions else 0.0
    return EvalReport(per_category=per_category, overall_accuracy=overall, mode=mode)
