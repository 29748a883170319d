"""Experiment orchestration: HIT composition, qualification, and scheduling.

All mutating operations go through one Experiment instance (single logical
writer, guarded by a lock). Every mutation is recorded as an append-only
event; replaying the event stream onto a fresh Experiment reconstructs the
exact state, including completion codes and assigned qualification tests.
"""

from __future__ import annotations

import hashlib
import json
import random
import string
import threading
from dataclasses import dataclass, field
from importlib import resources

from .answers import AnswerRow, Option, AnswerValidationError, normalize_payload, is_correct
from .questions import QuestionSet

QUIT_REASONS = ("too long", "too difficult", "too boring", "other")
PROFESSIONS = ("hobbyist", "professional", "undergraduate", "graduate", "other")

CODE_ALPHABET = string.ascii_uppercase + string.digits
CODE_LENGTH = 10


class OrchestrationError(Exception):
    pass


class AuthorizationError(OrchestrationError):
    pass


class AlreadyAttemptedError(OrchestrationError):
    pass


class SequencingError(OrchestrationError):
    pass


class ExpiredError(OrchestrationError):
    pass


class ConfigError(OrchestrationError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    replication_k: int = 20
    hit_size: int = 3
    max_hits_per_worker: int = 8
    qualification_pass_threshold: int = 3  # correct answers out of 5
    hit_timeout_seconds: float = 2 * 3600.0
    pay_per_microtask: str = "1 USD"  # recorded metadata only, never executed
    allow_retake_other_tests: bool = False

    def validate(self) -> None:
        if self.hit_size < 1:
            raise ConfigError("hit_size must be >= 1")
        if self.replication_k < 1:
            raise ConfigError("replication K must be >= 1")


@dataclass(frozen=True)
class Hit:
    hit_id: str
    case_id: str
    question_ids: tuple[str, ...]
    timeout_seconds: float


@dataclass
class Demographics:
    age: int | None = None
    gender: str = ""
    country: str = ""
    years_of_experience: float = 0.0
    profession: str = "other"
    learned_at: str = ""
    languages: tuple[str, ...] = ()


@dataclass
class QuitEvent:
    hit_id: str
    reason: str


@dataclass
class WorkerProfile:
    worker_id: str
    demographics: Demographics | None = None
    qualification_test_id: str | None = None
    qualification_score: int | None = None  # 0..5
    qualification_passed: bool = False
    completed_hit_ids: list[str] = field(default_factory=list)
    active_assignment_id: str | None = None
    quit_events: list[QuitEvent] = field(default_factory=list)
    taken_cases: set[str] = field(default_factory=set)

    @property
    def score_percent(self) -> int | None:
        if self.qualification_score is None:
            return None
        return self.qualification_score * 20


ASSIGNMENT_STATES = ("issued", "in_progress", "submitted", "quit", "expired", "rejected")


@dataclass
class Assignment:
    assignment_id: str
    worker_id: str
    hit_id: str
    state: str = "issued"
    issued_at: float = 0.0
    completed_at: float | None = None
    completion_code: str | None = None
    served_at: dict[str, float] = field(default_factory=dict)
    answer_ids: list[str] = field(default_factory=list)

    def deadline(self, timeout_seconds: float) -> float:
        return self.issued_at + timeout_seconds


# --------------------------------------------------------------------------
# HIT composition
# --------------------------------------------------------------------------

def _ranges_compatible(a: frozenset[int], b: frozenset[int]) -> bool:
    """Non-overlapping and not touching within one line."""
    a_lo, a_hi = min(a), max(a)
    b_lo, b_hi = min(b), max(b)
    return b_lo > a_hi + 1 or a_lo > b_hi + 1


def compose_hits(question_sets: dict[str, QuestionSet], cfg: ExperimentConfig,
                 seed: int) -> tuple[list[Hit], list[str]]:
    """Partition each case's questions into HITs of cfg.hit_size (one remainder HIT).

    Within a HIT, covered-line ranges should be pairwise non-adjacent; when no
    such grouping is found a best-effort grouping is returned with one warning
    per violating HIT. Deterministic for a given seed.
    """
    cfg.validate()
    rng = random.Random(seed)
    hits: list[Hit] = []
    warnings: list[str] = []
    for case_id in sorted(question_sets):
        qs = question_sets[case_id]
        questions = list(qs.questions)
        n = len(questions)
        if n == 0:
            continue
        full, rem = divmod(n, cfg.hit_size)
        capacities = [cfg.hit_size] * full + ([rem] if rem else [])
        best = None
        for _attempt in range(60):
            order = questions[:]
            rng.shuffle(order)
            bins: list[list] = [[] for _ in capacities]
            ok = True
            for q in order:
                placed = False
                for b, cap in zip(bins, capacities):
                    if len(b) >= cap:
                        continue
                    if all(_ranges_compatible(q.covered_lines, other.covered_lines)
                           for other in b):
                        b.append(q)
                        placed = True
                        break
                if not placed:
                    ok = False
                    break
            if ok:
                best = bins
                break
        if best is None:
            # forced grouping: first fit by capacity, prefer compatible bins
            order = questions[:]
            rng.shuffle(order)
            bins = [[] for _ in capacities]
            for q in order:
                target = None
                for b, cap in zip(bins, capacities):
                    if len(b) < cap and all(
                            _ranges_compatible(q.covered_lines, o.covered_lines) for o in b):
                        target = b
                        break
                if target is None:
                    target = next(b for b, cap in zip(bins, capacities) if len(b) < cap)
                target.append(q)
            best = bins
        for k, group in enumerate(best):
            ordered = sorted(group, key=lambda q: q.question_id)
            hit_id = f"H-{case_id}-{k + 1:02d}"
            bad = any(
                not _ranges_compatible(a.covered_lines, b.covered_lines)
                for i, a in enumerate(ordered) for b in ordered[i + 1:])
            if bad:
                warnings.append(f"{hit_id}: no non-adjacent grouping feasible for "
                                f"{[q.question_id for q in ordered]}")
            hits.append(Hit(
                hit_id=hit_id,
                case_id=case_id,
                question_ids=tuple(q.question_id for q in ordered),
                timeout_seconds=cfg.hit_timeout_seconds,
            ))
    return hits, warnings


# --------------------------------------------------------------------------
# qualification test bank
# --------------------------------------------------------------------------

def load_test_bank() -> dict:
    data = resources.files("crowdlocate.data").joinpath("qualification_tests.json").read_bytes()
    return json.loads(data)


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


# --------------------------------------------------------------------------
# the experiment state machine
# --------------------------------------------------------------------------

class Experiment:
    """Single-writer state machine for one crowdsourcing experiment."""

    def __init__(self, question_sets: dict[str, QuestionSet], cfg: ExperimentConfig,
                 seed: int, event_sink=None):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        self.question_sets = question_sets
        self.questions = {q.question_id: q for qs in question_sets.values()
                          for q in qs.questions}
        self.hits_list, self.compose_warnings = compose_hits(question_sets, cfg, seed)
        self.hits = {h.hit_id: h for h in self.hits_list}
        self.test_bank = load_test_bank()
        self._rng = random.Random(seed ^ 0x5EED)
        self._lock = threading.RLock()
        self._event_sink = event_sink
        self.events: list[dict] = []

        self.workers: dict[str, WorkerProfile] = {}
        self.assignments: dict[str, Assignment] = {}
        self._assignment_seq = 0
        self._answer_seq = 0
        self._answers: dict[str, AnswerRow] = {}
        self._answer_rated: dict[str, bool] = {}
        self._answers_by_assignment: dict[str, list[str]] = {}
        self._codes: dict[str, dict] = {}  # code -> {assignment_id, used}
        self._hit_submitted: dict[str, int] = {h: 0 for h in self.hits}
        self._hit_active: dict[str, set[str]] = {h: set() for h in self.hits}

    # -- event plumbing ----------------------------------------------------
    def _emit(self, type_: str, *, assignment_id=None, worker_id=None, hit_id=None,
              payload=None, timestamp=None) -> dict:
        event = {
            "type": type_,
            "assignment_id": assignment_id,
            "worker_id": worker_id,
            "hit_id": hit_id,
            "payload": payload or {},
            "timestamp": timestamp,
        }
        self._apply(event)
        self.events.append(event)
        if self._event_sink is not None:
            self._event_sink(event)
        return event

    @classmethod
    def replay(cls, question_sets, cfg, seed, events, event_sink=None) -> "Experiment":
        exp = cls(question_sets, cfg, seed, event_sink=None)
        for event in events:
            exp._apply(event)
            exp.events.append(event)
        exp._event_sink = event_sink
        return exp

    def _apply(self, e: dict) -> None:
        t = e["type"]
        p = e.get("payload") or {}
        if t == "worker_registered":
            self.workers[e["worker_id"]] = WorkerProfile(worker_id=e["worker_id"])
        elif t == "demographics_set":
            w = self.workers[e["worker_id"]]
            w.demographics = Demographics(
                age=p.get("age"), gender=p.get("gender", ""), country=p.get("country", ""),
                years_of_experience=float(p.get("years_of_experience", 0.0)),
                profession=p.get("profession", "other"), learned_at=p.get("learned_at", ""),
                languages=tuple(p.get("languages", ())))
        elif t == "qualification_assigned":
            self.workers[e["worker_id"]].qualification_test_id = p["test_id"]
        elif t == "qualification_graded":
            w = self.workers[e["worker_id"]]
            w.qualification_score = p["score"]
            w.qualification_passed = p["passed"]
        elif t == "assignment_issued":
            a = Assignment(assignment_id=e["assignment_id"], worker_id=e["worker_id"],
                           hit_id=e["hit_id"], state="issued", issued_at=e["timestamp"])
            self.assignments[a.assignment_id] = a
            self._assignment_seq = max(self._assignment_seq, int(a.assignment_id[1:]))
            w = self.workers[a.worker_id]
            w.active_assignment_id = a.assignment_id
            w.taken_cases.add(self.hits[a.hit_id].case_id)
            self._hit_active[a.hit_id].add(a.assignment_id)
        elif t == "question_served":
            a = self.assignments[e["assignment_id"]]
            a.state = "in_progress"
            a.served_at[p["question_id"]] = e["timestamp"]
        elif t == "answer_submitted":
            a = self.assignments[e["assignment_id"]]
            a.state = "in_progress"
            row = AnswerRow(
                answer_id=p["answer_id"], worker_id=a.worker_id,
                case_id=p["case_id"], question_id=p["question_id"], hit_id=a.hit_id,
                order_in_hit=p["order_in_hit"], option=Option(p["option"]),
                confidence=p["confidence"], difficulty=p.get("difficulty") or 0,
                duration_seconds=p["duration_seconds"],
                explanation_chars=p["explanation_chars"], correct=p["correct"],
                submitted_at=e["timestamp"])
            self._answers[row.answer_id] = row
            self._answer_rated[row.answer_id] = p.get("difficulty") is not None
            self._answers_by_assignment.setdefault(a.assignment_id, []).append(row.answer_id)
            a.answer_ids.append(row.answer_id)
            self._answer_seq = max(self._answer_seq, int(row.answer_id[1:]))
        elif t == "difficulty_rated":
            row = self._answers[p["answer_id"]]
            self._answers[p["answer_id"]] = AnswerRow(
                **{**row.__dict__, "difficulty": p["difficulty"]})
            self._answer_rated[p["answer_id"]] = True
        elif t == "assignment_quit":
            a = self.assignments[e["assignment_id"]]
            a.state = "quit"
            w = self.workers[a.worker_id]
            w.active_assignment_id = None
            w.quit_events.append(QuitEvent(hit_id=a.hit_id, reason=p["reason"]))
            self._hit_active[a.hit_id].discard(a.assignment_id)
        elif t == "assignment_expired":
            a = self.assignments[e["assignment_id"]]
            a.state = "expired"
            w = self.workers[a.worker_id]
            if w.active_assignment_id == a.assignment_id:
                w.active_assignment_id = None
            self._hit_active[a.hit_id].discard(a.assignment_id)
        elif t == "assignment_completed":
            a = self.assignments[e["assignment_id"]]
            a.state = "submitted"
            a.completed_at = e["timestamp"]
            a.completion_code = p["code"]
            self._codes[p["code"]] = {"assignment_id": a.assignment_id, "used": False}
            w = self.workers[a.worker_id]
            w.active_assignment_id = None
            w.completed_hit_ids.append(a.hit_id)
            self._hit_active[a.hit_id].discard(a.assignment_id)
            self._hit_submitted[a.hit_id] += 1
        elif t == "code_validated":
            self._codes[p["code"]]["used"] = True
        else:
            raise OrchestrationError(f"unknown event type {t!r}")

    # -- worker lifecycle ----------------------------------------------------
    def register_worker(self, worker_id: str, now: float = 0.0) -> WorkerProfile:
        with self._lock:
            if worker_id in self.workers:
                return self.workers[worker_id]
            self._emit("worker_registered", worker_id=worker_id, timestamp=now)
            return self.workers[worker_id]

    def set_demographics(self, worker_id: str, payload: dict, now: float = 0.0) -> None:
        with self._lock:
            if worker_id not in self.workers:
                raise AuthorizationError("unknown worker")
            prof = payload.get("profession", "other")
            if prof not in PROFESSIONS:
                raise AnswerValidationError(f"profession must be one of {PROFESSIONS}")
            self._emit("demographics_set", worker_id=worker_id, payload=payload, timestamp=now)

    def qualification_test_for(self, worker_id: str, now: float = 0.0) -> dict:
        """Assign (once) and return the worker's qualification test, without answers."""
        with self._lock:
            w = self.workers.get(worker_id)
            if w is None:
                raise AuthorizationError("unknown worker")
            if w.qualification_test_id is None:
                tests = self.test_bank["tests"]
                pick = _stable_int(f"{self.seed}:{worker_id}") % len(tests)
                self._emit("qualification_assigned", worker_id=worker_id,
                           payload={"test_id": tests[pick]["test_id"]}, timestamp=now)
            test = next(t for t in self.test_bank["tests"]
                        if t["test_id"] == w.qualification_test_id)
            return {
                "test_id": test["test_id"],
                "questions": [
                    {"id": q["id"], "prompt": q["prompt"], "options": q["options"]}
                    for q in test["questions"]
                ],
            }

    def grade_qualification(self, worker_id: str, test_id: str,
                            responses: list[int], now: float = 0.0) -> dict:
        """Score a single qualification attempt; one attempt per worker."""
        with self._lock:
            w = self.workers.get(worker_id)
            if w is None:
                raise AuthorizationError("unknown worker")
            if w.qualification_score is not None and not self.cfg.allow_retake_other_tests:
                raise AlreadyAttemptedError("qualification already attempted")
            if w.qualification_test_id != test_id:
                raise AnswerValidationError("response is for a different test")
            test = next(t for t in self.test_bank["tests"] if t["test_id"] == test_id)
            if len(responses) != len(test["questions"]):
                raise AnswerValidationError("exactly five responses required")
            score = sum(1 for r, q in zip(responses, test["questions"])
                        if r == q["answer_index"])
            passed = score >= self.cfg.qualification_pass_threshold
            self._emit("qualification_graded", worker_id=worker_id,
                       payload={"test_id": test_id, "responses": list(responses),
                                "score": score, "passed": passed}, timestamp=now)
            return {"score": score, "passed": passed}

    # -- scheduling ----------------------------------------------------------
    def _hit_effective_count(self, hit_id: str) -> int:
        return self._hit_submitted[hit_id] + len(self._hit_active[hit_id])

    def next_assignment(self, worker_id: str, now: float) -> Assignment | None:
        """Round-robin issue: the open HIT whose questions have fewest answers."""
        with self._lock:
            w = self.workers.get(worker_id)
            if w is None or not w.qualification_passed:
                raise AuthorizationError("worker has not passed the qualification test")
            if w.active_assignment_id is not None:
                raise SequencingError("worker already holds an active assignment")
            if len(w.completed_hit_ids) >= self.cfg.max_hits_per_worker:
                return None
            eligible = [
                h for h in self.hits_list
                if h.case_id not in w.taken_cases
                and self._hit_effective_count(h.hit_id) < self.cfg.replication_k
            ]
            if not eligible:
                return None
            chosen = min(eligible, key=lambda h: (self._hit_effective_count(h.hit_id), h.hit_id))
            self._assignment_seq += 1
            aid = f"A{self._assignment_seq:05d}"
            self._emit("assignment_issued", assignment_id=aid, worker_id=worker_id,
                       hit_id=chosen.hit_id, timestamp=now)
            return self.assignments[aid]

    def _check_not_expired(self, a: Assignment, now: float) -> None:
        if a.state in ("quit", "expired", "submitted", "rejected"):
            if a.state == "expired":
                raise ExpiredError("assignment expired")
            raise SequencingError(f"assignment is {a.state}")
        if now > a.deadline(self.cfg.hit_timeout_seconds):
            self._emit("assignment_expired", assignment_id=a.assignment_id,
                       worker_id=a.worker_id, hit_id=a.hit_id, timestamp=now)
            raise ExpiredError("assignment expired")

    def _next_question(self, a: Assignment) -> str | None:
        hit = self.hits[a.hit_id]
        answered = len(a.answer_ids)
        if answered >= len(hit.question_ids):
            return None
        return hit.question_ids[answered]

    def serve_question(self, assignment_id: str, now: float) -> dict:
        """Serve the next unanswered question; starts the server-side duration clock."""
        with self._lock:
            a = self.assignments[assignment_id]
            self._check_not_expired(a, now)
            for ans_id in a.answer_ids:
                if not self._answer_rated.get(ans_id, True):
                    raise SequencingError("rate the previous answer's difficulty first")
            qid = self._next_question(a)
            if qid is None:
                raise SequencingError("all questions already answered")
            if qid not in a.served_at:
                self._emit("question_served", assignment_id=assignment_id,
                           worker_id=a.worker_id, hit_id=a.hit_id,
                           payload={"question_id": qid}, timestamp=now)
            a = self.assignments[assignment_id]
            return {"question_id": qid, "order_in_hit": len(a.answer_ids) + 1,
                    "of": len(self.hits[a.hit_id].question_ids)}

    def submit_answer(self, assignment_id: str, question_id: str, option: Option,
                      confidence: int, explanation: str, now: float,
                      difficulty: int | None = None) -> AnswerRow:
        with self._lock:
            a = self.assignments[assignment_id]
            self._check_not_expired(a, now)
            expected = self._next_question(a)
            if expected is None:
                raise SequencingError("all questions already answered")
            if question_id != expected:
                raise SequencingError(f"next question is {expected}, not {question_id}")
            if question_id not in a.served_at:
                raise SequencingError("question has not been served")
            option, confidence, explanation = normalize_payload(option, confidence, explanation)
            if difficulty is not None and not 1 <= difficulty <= 5:
                raise AnswerValidationError("difficulty must be in 1..5")
            q = self.questions[question_id]
            self._answer_seq += 1
            answer_id = f"N{self._answer_seq:06d}"
            payload = {
                "answer_id": answer_id,
                "case_id": q.case_id,
                "question_id": question_id,
                "order_in_hit": len(a.answer_ids) + 1,
                "option": option.value,
                "confidence": confidence,
                "difficulty": difficulty,
                "duration_seconds": max(0.0, now - a.served_at[question_id]),
                "explanation_chars": len(explanation),
                "correct": is_correct(option, q.covers_fault),
            }
            self._emit("answer_submitted", assignment_id=assignment_id,
                       worker_id=a.worker_id, hit_id=a.hit_id, payload=payload,
                       timestamp=now)
            return self._answers[answer_id]

    def rate_difficulty(self, assignment_id: str, difficulty: int, now: float) -> str:
        """Follow-up difficulty rating for the assignment's most recent answer."""
        with self._lock:
            a = self.assignments[assignment_id]
            if not 1 <= difficulty <= 5:
                raise AnswerValidationError("difficulty must be in 1..5")
            unrated = [ans for ans in a.answer_ids if not self._answer_rated.get(ans, True)]
            if not unrated:
                raise SequencingError("no answer awaiting a difficulty rating")
            answer_id = unrated[-1]
            self._emit("difficulty_rated", assignment_id=assignment_id,
                       worker_id=a.worker_id, hit_id=a.hit_id,
                       payload={"answer_id": answer_id, "difficulty": difficulty},
                       timestamp=now)
            return answer_id

    def quit_assignment(self, assignment_id: str, reason: str, now: float) -> None:
        with self._lock:
            if reason not in QUIT_REASONS:
                raise AnswerValidationError(f"reason must be one of {QUIT_REASONS}")
            a = self.assignments[assignment_id]
            if a.state not in ("issued", "in_progress"):
                raise SequencingError(f"cannot quit a {a.state} assignment")
            self._emit("assignment_quit", assignment_id=assignment_id,
                       worker_id=a.worker_id, hit_id=a.hit_id,
                       payload={"reason": reason}, timestamp=now)

    def complete_assignment(self, assignment_id: str, now: float,
                            feedback: str = "") -> str:
        """Submit a finished HIT; returns the unique completion code (idempotent)."""
        with self._lock:
            a = self.assignments[assignment_id]
            if a.state == "submitted":
                return a.completion_code
            self._check_not_expired(a, now)
            hit = self.hits[a.hit_id]
            if len(a.answer_ids) < len(hit.question_ids):
                raise SequencingError("incomplete submission: unanswered questions remain")
            if any(not self._answer_rated.get(ans, True) for ans in a.answer_ids):
                raise SequencingError("incomplete submission: difficulty rating missing")
            while True:
                code = "".join(self._rng.choice(CODE_ALPHABET) for _ in range(CODE_LENGTH))
                if code not in self._codes:
                    break
            self._emit("assignment_completed", assignment_id=assignment_id,
                       worker_id=a.worker_id, hit_id=a.hit_id,
                       payload={"code": code, "feedback": feedback}, timestamp=now)
            return code

    def validate_completion_code(self, code: str, now: float = 0.0) -> dict:
        """A code validates successfully exactly once."""
        with self._lock:
            entry = self._codes.get(code)
            if entry is None:
                return {"valid": False, "reason": "unknown code"}
            if entry["used"]:
                return {"valid": False, "reason": "already used"}
            self._emit("code_validated", assignment_id=entry["assignment_id"],
                       payload={"code": code}, timestamp=now)
            return {"valid": True, "assignment_id": entry["assignment_id"]}

    def expire_overdue(self, now: float) -> list[str]:
        """Expire every overdue open assignment; returns the expired ids."""
        with self._lock:
            expired = []
            for a in list(self.assignments.values()):
                if a.state in ("issued", "in_progress") and \
                        now > a.deadline(self.cfg.hit_timeout_seconds):
                    self._emit("assignment_expired", assignment_id=a.assignment_id,
                               worker_id=a.worker_id, hit_id=a.hit_id, timestamp=now)
                    expired.append(a.assignment_id)
            return expired

    # -- read side -------------------------------------------------------------
    def is_complete(self) -> bool:
        return all(self._hit_submitted[h] >= self.cfg.replication_k for h in self.hits)

    def answer_rows(self, include_abandoned: bool = False) -> list[AnswerRow]:
        """Answers from submitted assignments (abandoned ones optionally included)."""
        rows = []
        for a in self.assignments.values():
            if a.state != "submitted" and not include_abandoned:
                continue
            for ans_id in a.answer_ids:
                rows.append(self._answers[ans_id])
        return sorted(rows, key=lambda r: (r.submitted_at, r.answer_id))

    def progress(self) -> dict:
        per_hit = {
            h.hit_id: {
                "case_id": h.case_id,
                "submitted": self._hit_submitted[h.hit_id],
                "active": len(self._hit_active[h.hit_id]),
                "k": self.cfg.replication_k,
            }
            for h in self.hits_list
        }
        states: dict[str, int] = {}
        for a in self.assignments.values():
            states[a.state] = states.get(a.state, 0) + 1
        return {
            "hits": per_hit,
            "complete": self.is_complete(),
            "workers": len(self.workers),
            "qualified_workers": sum(1 for w in self.workers.values() if w.qualification_passed),
            "answers": len(self.answer_rows()),
            "assignment_states": states,
            "compose_warnings": list(self.compose_warnings),
        }

    def worker_infos(self) -> dict[str, "WorkerInfo"]:
        from .filters import WorkerInfo
        infos = {}
        for w in self.workers.values():
            if w.qualification_score is None:
                continue
            infos[w.worker_id] = WorkerInfo(
                worker_id=w.worker_id,
                profession=(w.demographics.profession if w.demographics else "other"),
                score=w.score_percent or 0,
                years_of_experience=(w.demographics.years_of_experience
                                     if w.demographics else 0.0))
        return infos
