"""Synthetic worker populations and answer streams.

Accuracy is modeled per (qualification score, perceived difficulty) with the
observed-accuracy table as the default preset; IDK probability, difficulty,
duration, and explanation-length distributions are configurable knobs with
defaults calibrated to the reported marginals. Two generation paths exist:

  run_experiment   drives the real orchestrator end to end (qualification,
                   assignment, answering, completion codes) and produces the
                   same CSV a live run would;
  sample_dataset   generates an answer table directly for statistical
                   studies where orchestration overhead adds nothing.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .answers import AnswerRow, Option, export_answers, is_correct
from .corpus import Corpus
from .filters import WorkerInfo
from .orchestrator import Experiment, ExperimentConfig, PROFESSIONS
from .questions import QuestionSet, generate_all

EXPERIMENT_EPOCH = datetime(2016, 1, 4, 13, 0, 0, tzinfo=timezone.utc).timestamp()

# observed answer accuracy by (worker score percent, difficulty level);
# the "table28" CLI preset name selects this table
OBSERVED_ACCURACY = {
    60: {1: 0.68, 2: 0.74, 3: 0.66, 4: 0.59, 5: 0.55},
    80: {1: 0.85, 2: 0.85, 3: 0.71, 4: 0.61, 5: 0.53},
    100: {1: 0.88, 2: 0.77, 3: 0.63, 4: 0.67, 5: 0.64},
}

# difficulty marginal: column sums of the difficulty/confidence grid
DEFAULT_DIFFICULTY_WEIGHTS = (401, 489, 755, 559, 376)


def constant_accuracy(p: float) -> dict[int, dict[int, float]]:
    return {s: {d: p for d in range(1, 6)} for s in (60, 80, 100)}


def load_model_config(path) -> tuple["PopulationModel", "AnswerModel"]:
    """Read a population/answer model pair from a JSON preset file."""
    import json
    from pathlib import Path

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    pop_raw = doc.get("population", {})
    ans_raw = doc.get("answer", {})
    pop = PopulationModel(
        profession_mix={k: float(v) for k, v in pop_raw.get(
            "profession_mix", PopulationModel().profession_mix).items()},
        score_mix={int(k): float(v) for k, v in pop_raw.get(
            "score_mix", {60: 0.35, 80: 0.25, 100: 0.40}).items()},
        yoe_median={k: float(v) for k, v in pop_raw.get(
            "yoe_median", PopulationModel().yoe_median).items()},
        mean_interarrival_seconds=float(pop_raw.get("mean_interarrival_seconds", 110.0)),
        arrival_decay_per_hour=float(pop_raw.get("arrival_decay_per_hour", 0.015)),
    )
    ans = AnswerModel(
        accuracy={int(s): {int(d): float(p) for d, p in row.items()}
                  for s, row in ans_raw.get("accuracy", OBSERVED_ACCURACY).items()},
        p_idk=float(ans_raw.get("p_idk", 0.12)),
        difficulty_weights=tuple(ans_raw.get("difficulty_weights",
                                             DEFAULT_DIFFICULTY_WEIGHTS)),
        duration_median_by_order=tuple(ans_raw.get("duration_median_by_order",
                                                   (390.0, 310.0, 280.0))),
        duration_sigma=float(ans_raw.get("duration_sigma", 0.6)),
        explanation_median_chars=float(ans_raw.get("explanation_median_chars", 90.0)),
        explanation_sigma=float(ans_raw.get("explanation_sigma", 0.7)),
    )
    pop.validate()
    ans.validate()
    return pop, ans


class ModelError(Exception):
    pass


@dataclass
class PopulationModel:
    profession_mix: dict[str, float] = field(default_factory=lambda: {
        "hobbyist": 0.30, "undergraduate": 0.25, "professional": 0.20,
        "graduate": 0.16, "other": 0.09})
    score_mix: dict[int, float] = field(default_factory=lambda: {60: 0.35, 80: 0.25, 100: 0.40})
    yoe_median: dict[str, float] = field(default_factory=lambda: {
        "hobbyist": 8.0, "undergraduate": 3.0, "professional": 12.0,
        "graduate": 5.0, "other": 6.0})
    mean_interarrival_seconds: float = 110.0
    arrival_decay_per_hour: float = 0.015

    def validate(self) -> None:
        if abs(sum(self.profession_mix.values()) - 1.0) > 1e-9:
            raise ModelError("profession mix must sum to 1")
        if abs(sum(self.score_mix.values()) - 1.0) > 1e-9:
            raise ModelError("score mix must sum to 1")
        if self.mean_interarrival_seconds <= 0 or self.arrival_decay_per_hour < 0:
            raise ModelError("arrival rates must be positive")
        for p in self.profession_mix:
            if p not in PROFESSIONS:
                raise ModelError(f"unknown profession {p}")


@dataclass
class AnswerModel:
    accuracy: dict[int, dict[int, float]] = field(default_factory=lambda: OBSERVED_ACCURACY)
    p_idk: float = 0.12
    difficulty_weights: tuple = DEFAULT_DIFFICULTY_WEIGHTS
    duration_median_by_order: tuple = (390.0, 310.0, 280.0)
    duration_sigma: float = 0.6
    explanation_median_chars: float = 90.0
    explanation_sigma: float = 0.7

    def validate(self) -> None:
        if not 0 <= self.p_idk <= 1:
            raise ModelError("p_idk must be in [0, 1]")
        for s, row in self.accuracy.items():
            for d in range(1, 6):
                if d not in row:
                    raise ModelError(f"accuracy missing cell ({s}, {d})")
                if not 0 <= row[d] <= 1:
                    raise ModelError(f"accuracy out of range at ({s}, {d})")


@dataclass
class SimWorker:
    worker_id: str
    profession: str
    years_of_experience: float
    score: int  # target percent: 60, 80, 100
    age: int
    gender: str
    country: str
    learned_at: str

    @property
    def correct_count(self) -> int:
        return self.score // 20

    def info(self) -> WorkerInfo:
        return WorkerInfo(worker_id=self.worker_id, profession=self.profession,
                          score=self.score, years_of_experience=self.years_of_experience)


def _weighted_choice(rng: random.Random, items: list, weights: list[float]):
    r = rng.random() * sum(weights)
    acc = 0.0
    for item, w in zip(items, weights):
        acc += w
        if r <= acc:
            return item
    return items[-1]


def sample_population(model: PopulationModel, count: int, seed: int) -> list[SimWorker]:
    """Deterministic synthetic worker population matching the model's mixes."""
    model.validate()
    rng = random.Random(seed)
    professions = sorted(model.profession_mix)
    scores = sorted(model.score_mix)
    workers = []
    for i in range(count):
        prof = _weighted_choice(rng, professions, [model.profession_mix[p] for p in professions])
        score = _weighted_choice(rng, scores, [model.score_mix[s] for s in scores])
        yoe = round(rng.lognormvariate(math.log(model.yoe_median[prof]), 0.5), 1)
        workers.append(SimWorker(
            worker_id=f"W{i:05d}",
            profession=prof,
            years_of_experience=yoe,
            score=score,
            age=rng.randint(18, 62),
            gender=rng.choice(["male", "female", "other"]),
            country=rng.choice(["USA", "USA", "USA", "India", "other"]),
            learned_at=rng.choice(["university", "the web", "high school", "other"]),
        ))
    return workers


_PHRASES = (
    "the range check looks wrong for negative values",
    "this line seems consistent with the failing test",
    "the variable is overwritten before it is used here",
    "boundary condition appears off by one in this fragment",
    "the call can throw for the inputs shown in the test",
    "nothing in these lines relates to the reported failure",
    "the cast may lose information for the failing input",
)


def _explanation(rng: random.Random, model: AnswerModel) -> str:
    target = max(8, int(rng.lognormvariate(
        math.log(model.explanation_median_chars), model.explanation_sigma)))
    text = rng.choice(_PHRASES)
    while len(text) < target:
        text += "; " + rng.choice(_PHRASES)
    return text[:max(8, target)]


def simulate_answer(worker: SimWorker, covers_fault: bool, order_in_hit: int,
                    model: AnswerModel, rng: random.Random) -> dict:
    """Draw one answer payload for a (worker, question) pair."""
    difficulty = _weighted_choice(rng, [1, 2, 3, 4, 5], list(model.difficulty_weights))
    order_idx = min(order_in_hit, len(model.duration_median_by_order)) - 1
    duration = rng.lognormvariate(
        math.log(model.duration_median_by_order[order_idx]), model.duration_sigma)
    payload = {
        "difficulty": difficulty,
        "duration_seconds": duration,
        "explanation": _explanation(rng, model),
    }
    if rng.random() < model.p_idk:
        payload["option"] = Option.IDK
        payload["confidence"] = 0
        return payload
    acc = model.accuracy[worker.score][difficulty]
    correct = rng.random() < acc
    truth = Option.YES if covers_fault else Option.NO
    flipped = Option.NO if covers_fault else Option.YES
    payload["option"] = truth if correct else flipped
    confidence = 6 - difficulty + rng.choice((-1, 0, 0, 1))
    payload["confidence"] = max(1, min(5, confidence))
    return payload


@dataclass
class SimulationResult:
    experiment: Experiment
    rows: list[AnswerRow]
    csv_text: str
    workers: dict[str, WorkerInfo]
    quit_count: int


def _qualify(exp: Experiment, worker: SimWorker, now: float) -> None:
    exp.register_worker(worker.worker_id, now=now)
    exp.set_demographics(worker.worker_id, {
        "age": worker.age, "gender": worker.gender, "country": worker.country,
        "years_of_experience": worker.years_of_experience,
        "profession": worker.profession, "learned_at": worker.learned_at,
        "languages": ["Java"],
    }, now=now)
    test = exp.qualification_test_for(worker.worker_id, now=now)
    bank = next(t for t in exp.test_bank["tests"] if t["test_id"] == test["test_id"])
    responses = []
    for k, q in enumerate(bank["questions"]):
        if k < worker.correct_count:
            responses.append(q["answer_index"])
        else:
            responses.append((q["answer_index"] + 1) % len(q["options"]))
    exp.grade_qualification(worker.worker_id, test["test_id"], responses, now=now)


def run_experiment(corpus: Corpus, cfg: ExperimentConfig,
                   pop_model: PopulationModel, ans_model: AnswerModel,
                   seed: int, dropout: bool = False,
                   question_sets: dict[str, QuestionSet] | None = None,
                   event_sink=None) -> SimulationResult:
    """Drive a full experiment until every question has K answers."""
    pop_model.validate()
    ans_model.validate()
    sets = question_sets or generate_all(corpus)
    exp = Experiment(sets, cfg, seed, event_sink=event_sink)
    rng = random.Random(seed * 2654435761 % (2 ** 31))
    loc_by_case = {c.case_id: c.loc for c in corpus.cases}

    worker_pool = iter(sample_population(pop_model, 100000, seed + 1))
    arrival_clock = EXPERIMENT_EPOCH
    heap: list[tuple[float, int, SimWorker]] = []
    seq = 0
    quit_count = 0
    workers_seen: dict[str, WorkerInfo] = {}

    def spawn(batch: int):
        nonlocal arrival_clock, seq
        for _ in range(batch):
            hours = (arrival_clock - EXPERIMENT_EPOCH) / 3600.0
            mean = pop_model.mean_interarrival_seconds * math.exp(
                pop_model.arrival_decay_per_hour * hours)
            arrival_clock += rng.expovariate(1.0 / mean)
            w = next(worker_pool)
            seq += 1
            heapq.heappush(heap, (arrival_clock, seq, w))

    spawn(16)
    while not exp.is_complete():
        if not heap:
            spawn(16)
        t, _, worker = heapq.heappop(heap)
        if worker.worker_id not in exp.workers:
            _qualify(exp, worker, t)
            workers_seen[worker.worker_id] = worker.info()
            t += rng.uniform(60.0, 240.0)
        assignment = exp.next_assignment(worker.worker_id, t)
        if assignment is None:
            continue  # worker retires; fresh arrivals keep filling slots
        hit = exp.hits[assignment.hit_id]
        will_quit_at = None
        if dropout:
            p_quit = min(0.5, 0.02 + 0.004 * loc_by_case[hit.case_id])
            if rng.random() < p_quit:
                will_quit_at = rng.randint(0, len(hit.question_ids) - 1)
        aborted = False
        for k, qid in enumerate(hit.question_ids):
            if will_quit_at is not None and k == will_quit_at:
                reason = rng.choice(("too difficult", "too difficult", "too long",
                                     "too boring", "other"))
                exp.quit_assignment(assignment.assignment_id, reason, now=t)
                quit_count += 1
                aborted = True
                break
            served = exp.serve_question(assignment.assignment_id, now=t)
            q = exp.questions[qid]
            payload = simulate_answer(worker, q.covers_fault, served["order_in_hit"],
                                      ans_model, rng)
            t += payload["duration_seconds"]
            exp.submit_answer(
                assignment.assignment_id, qid, payload["option"],
                payload["confidence"], payload["explanation"], now=t,
                difficulty=payload["difficulty"])
        if not aborted:
            exp.complete_assignment(assignment.assignment_id, now=t)
            seq += 1
            heapq.heappush(heap, (t + rng.uniform(30.0, 180.0), seq, worker))

    rows = exp.answer_rows()
    return SimulationResult(
        experiment=exp, rows=rows, csv_text=export_answers(rows),
        workers=workers_seen, quit_count=quit_count)


def sample_dataset(corpus: Corpus, k: int, pop_model: PopulationModel,
                   ans_model: AnswerModel, seed: int,
                   question_sets: dict[str, QuestionSet] | None = None
                   ) -> tuple[list[AnswerRow], dict[str, WorkerInfo]]:
    """Directly sample a complete K-replicated answer table (no orchestration)."""
    pop_model.validate()
    ans_model.validate()
    sets = question_sets or generate_all(corpus)
    rng = random.Random(seed)
    pool = sample_population(pop_model, max(4 * k, 64), seed + 1)
    rows: list[AnswerRow] = []
    answer_seq = 0
    t0 = EXPERIMENT_EPOCH
    for case_id in sorted(sets):
        qs = sets[case_id]
        for q in qs.questions:
            offset = rng.randrange(len(pool))
            for j in range(k):
                worker = pool[(offset + j) % len(pool)]
                payload = simulate_answer(worker, q.covers_fault, 1 + j % 3,
                                          ans_model, rng)
                answer_seq += 1
                rows.append(AnswerRow(
                    answer_id=f"N{answer_seq:06d}",
                    worker_id=worker.worker_id,
                    case_id=case_id,
                    question_id=q.question_id,
                    hit_id=f"S-{case_id}",
                    order_in_hit=1 + j % 3,
                    option=payload["option"],
                    confidence=payload["confidence"],
                    difficulty=payload["difficulty"],
                    duration_seconds=payload["duration_seconds"],
                    explanation_chars=len(payload["explanation"]),
                    correct=is_correct(payload["option"], q.covers_fault),
                    submitted_at=t0 + rng.uniform(0, 150 * 3600),
                ))
    return rows, {w.worker_id: w.info() for w in pool}
