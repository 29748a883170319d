"""Answer records: validation rules, the joined analysis row, and CSV export."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from datetime import datetime, timezone

EXPORT_HEADER = (
    "answer_id,worker_id,case_id,question_id,hit_id,order_in_hit,option,"
    "confidence,difficulty,duration_seconds,explanation_chars,correct,"
    "submitted_at_iso8601"
)


class Option(str, enum.Enum):
    YES = "YES"
    NO = "NO"
    IDK = "IDK"


class AnswerValidationError(Exception):
    pass


@dataclass(frozen=True)
class AnswerRow:
    """One recorded answer joined with the attributes analyses need."""

    answer_id: str
    worker_id: str
    case_id: str
    question_id: str
    hit_id: str
    order_in_hit: int
    option: Option
    confidence: int
    difficulty: int
    duration_seconds: float
    explanation_chars: int
    correct: bool
    submitted_at: float  # seconds since the Unix epoch


def normalize_payload(option: Option, confidence: int, explanation: str) -> tuple[Option, int, str]:
    """Apply the submission rules; raises AnswerValidationError on bad input.

    IDK forces confidence to 0; YES/NO require confidence 1..5 and every
    answer requires a non-empty explanation.
    """
    explanation = explanation.strip()
    if not explanation:
        raise AnswerValidationError("explanation must not be empty")
    if option == Option.IDK:
        confidence = 0
    else:
        if not 1 <= int(confidence) <= 5:
            raise AnswerValidationError("confidence must be in 1..5 for YES/NO answers")
    return option, int(confidence), explanation


def is_correct(option: Option, covers_fault: bool) -> bool:
    """IDK is never correct; YES is correct exactly on fault-covering questions."""
    if option == Option.IDK:
        return False
    return (option == Option.YES) == covers_fault


def iso8601(epoch_seconds: float) -> str:
    dt = datetime.fromtimestamp(epoch_seconds, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"


def export_answers(rows: list[AnswerRow]) -> str:
    """Render the answers CSV (header is part of the external contract)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EXPORT_HEADER.split(","))
    for r in sorted(rows, key=lambda r: (r.submitted_at, r.answer_id)):
        writer.writerow([
            r.answer_id, r.worker_id, r.case_id, r.question_id, r.hit_id,
            r.order_in_hit, r.option.value, r.confidence, r.difficulty,
            f"{r.duration_seconds:.3f}", r.explanation_chars,
            str(r.correct).lower(), iso8601(r.submitted_at),
        ])
    return buf.getvalue()


def parse_answers_csv(text: str) -> list[AnswerRow]:
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for rec in reader:
        ts = rec["submitted_at_iso8601"].rstrip("Z")
        dt = datetime.fromisoformat(ts).replace(tzinfo=timezone.utc)
        rows.append(AnswerRow(
            answer_id=rec["answer_id"],
            worker_id=rec["worker_id"],
            case_id=rec["case_id"],
            question_id=rec["question_id"],
            hit_id=rec["hit_id"],
            order_in_hit=int(rec["order_in_hit"]),
            option=Option(rec["option"]),
            confidence=int(rec["confidence"]),
            difficulty=int(rec["difficulty"]),
            duration_seconds=float(rec["duration_seconds"]),
            explanation_chars=int(rec["explanation_chars"]),
            correct=rec["correct"] == "true",
            submitted_at=dt.timestamp(),
        ))
    return rows
