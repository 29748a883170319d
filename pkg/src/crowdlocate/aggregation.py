"""Turning replicated answers into fault predictions and effectiveness metrics.

Three mechanisms over per-question YES/NO tallies:

  AM1  relative margin: predicted iff yes - no > n
  AM2  absolute threshold: predicted iff yes > n
  AM3  per-case ranking: predicted iff the question's yes count is at least
       the n-th largest yes count within its case (ties at the cutoff kept)

IDK answers never count toward yes or no. "First a answers" selections order
by (submitted_at, answer_id) for determinism.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .answers import AnswerRow, Option
from .questions import QuestionSet


class Mechanism(str, enum.Enum):
    AM1 = "AM1"
    AM2 = "AM2"
    AM3 = "AM3"


class AggregationError(Exception):
    pass


@dataclass(frozen=True)
class AggregationConfig:
    mechanism: Mechanism
    n: int

    def validate(self, k: int | None = None) -> None:
        if self.mechanism == Mechanism.AM3:
            if self.n < 1:
                raise AggregationError("AM3 requires n >= 1")
        else:
            if self.n < 0 or (k is not None and self.n > k):
                raise AggregationError(f"{self.mechanism.value} requires n in 0..K")


@dataclass(frozen=True)
class QuestionMeta:
    question_id: str
    case_id: str
    covered_lines: frozenset[int]
    covers_fault: bool
    kind: str = ""


def meta_from_question_sets(sets: dict[str, QuestionSet]) -> dict[str, QuestionMeta]:
    meta = {}
    for qs in sets.values():
        for q in qs.questions:
            meta[q.question_id] = QuestionMeta(
                question_id=q.question_id, case_id=q.case_id,
                covered_lines=q.covered_lines, covers_fault=q.covers_fault,
                kind=q.element.kind.value)
    return meta


@dataclass(frozen=True)
class Tally:
    question_id: str
    yes: int
    no: int
    idk: int

    @property
    def total(self) -> int:
        return self.yes + self.no + self.idk


def _ordered(answers: list[AnswerRow]) -> list[AnswerRow]:
    return sorted(answers, key=lambda a: (a.submitted_at, a.answer_id))


def tally(answers: list[AnswerRow], limit: int | None = None,
          question_ids: list[str] | None = None) -> list[Tally]:
    """Per-question YES/NO/IDK counts over the first `limit` answers (all if None)."""
    per_q: dict[str, list[AnswerRow]] = {}
    for a in answers:
        per_q.setdefault(a.question_id, []).append(a)
    ids = list(question_ids) if question_ids is not None else sorted(per_q)
    out = []
    for qid in ids:
        rows = _ordered(per_q.get(qid, []))
        if limit is not None:
            if len(rows) < limit:
                raise AggregationError(
                    f"question {qid} has only {len(rows)} answers, need {limit}")
            rows = rows[:limit]
        yes = sum(1 for r in rows if r.option == Option.YES)
        no = sum(1 for r in rows if r.option == Option.NO)
        idk = sum(1 for r in rows if r.option == Option.IDK)
        out.append(Tally(question_id=qid, yes=yes, no=no, idk=idk))
    return out


def predict(tallies: list[Tally], cfg: AggregationConfig,
            meta: dict[str, QuestionMeta]) -> set[str]:
    """Question ids the crowd predicts as fault covering under cfg."""
    cfg.validate()
    if cfg.mechanism == Mechanism.AM1:
        return {t.question_id for t in tallies if t.yes - t.no > cfg.n}
    if cfg.mechanism == Mechanism.AM2:
        return {t.question_id for t in tallies if t.yes > cfg.n}
    by_case: dict[str, list[Tally]] = {}
    for t in tallies:
        by_case.setdefault(meta[t.question_id].case_id, []).append(t)
    predicted: set[str] = set()
    for case_tallies in by_case.values():
        yes_sorted = sorted((t.yes for t in case_tallies), reverse=True)
        cutoff_idx = min(cfg.n, len(yes_sorted)) - 1
        cutoff = yes_sorted[cutoff_idx]
        predicted |= {t.question_id for t in case_tallies if t.yes >= cutoff}
    return predicted


@dataclass(frozen=True)
class QuestionOutcome:
    question_id: str
    predicted: bool
    klass: str  # TP | FP | FN | TN


@dataclass(frozen=True)
class CaseMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float | None:
        d = self.tp + self.fp
        return self.tp / d if d else None

    @property
    def recall(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None


@dataclass(frozen=True)
class LineCategories:
    true_positive: int
    near_positive: int
    false_positive: int
    false_negative: int
    true_negative: int
    total: int

    @property
    def extra_lines(self) -> int:
        return self.near_positive + self.false_positive

    @property
    def percent_of_total(self) -> int:
        if self.total == 0:
            return 0
        return int(math.floor(100.0 * self.extra_lines / self.total + 0.5))


@dataclass(frozen=True)
class LineReport:
    per_case: dict[str, LineCategories]
    totals: LineCategories


@dataclass
class AggregationReport:
    config: AggregationConfig
    tallies: list[Tally]
    outcomes: list[QuestionOutcome]
    per_case: dict[str, CaseMetrics]
    overall: CaseMetrics
    macro_precision: float | None
    macro_recall: float | None
    faults_located: int
    located_cases: list[str]
    line_report: LineReport | None = None


def classify(predicted: set[str], meta: dict[str, QuestionMeta],
             cfg: AggregationConfig, tallies: list[Tally] | None = None) -> AggregationReport:
    """Question-level outcome classes plus per-case and overall precision/recall."""
    unknown = predicted - set(meta)
    if unknown:
        raise AggregationError(f"predicted ids not in experiment: {sorted(unknown)[:3]}")
    outcomes = []
    by_case: dict[str, dict[str, int]] = {}
    for qid, m in sorted(meta.items()):
        is_pred = qid in predicted
        if is_pred:
            klass = "TP" if m.covers_fault else "FP"
        else:
            klass = "FN" if m.covers_fault else "TN"
        outcomes.append(QuestionOutcome(question_id=qid, predicted=is_pred, klass=klass))
        c = by_case.setdefault(m.case_id, {"TP": 0, "FP": 0, "FN": 0, "TN": 0})
        c[klass] += 1
    per_case = {cid: CaseMetrics(tp=c["TP"], fp=c["FP"], fn=c["FN"], tn=c["TN"])
                for cid, c in by_case.items()}
    overall = CaseMetrics(
        tp=sum(m.tp for m in per_case.values()),
        fp=sum(m.fp for m in per_case.values()),
        fn=sum(m.fn for m in per_case.values()),
        tn=sum(m.tn for m in per_case.values()),
    )
    precisions = [m.precision for m in per_case.values() if m.precision is not None]
    recalls = [m.recall for m in per_case.values() if m.recall is not None]
    located = sorted(cid for cid, m in per_case.items() if m.tp > 0)
    return AggregationReport(
        config=cfg,
        tallies=tallies or [],
        outcomes=outcomes,
        per_case=per_case,
        overall=overall,
        macro_precision=sum(precisions) / len(precisions) if precisions else None,
        macro_recall=sum(recalls) / len(recalls) if recalls else None,
        faults_located=len(located),
        located_cases=located,
    )


def line_level(predicted: set[str], meta: dict[str, QuestionMeta],
               case_lines: dict[str, list[int]], fault_lines: dict[str, set[int]],
               all_cases: bool = False) -> LineReport:
    """Line categories with tp > np > fp > fn > tn precedence.

    Scope is restricted to cases whose fault was located (>=1 TP question)
    unless all_cases is set.
    """
    per_case: dict[str, LineCategories] = {}
    cases = sorted(case_lines)
    for cid in cases:
        fault = fault_lines[cid]
        qmetas = [m for m in meta.values() if m.case_id == cid]
        tp_spans: set[int] = set()
        fp_spans: set[int] = set()
        for m in qmetas:
            if m.question_id in predicted:
                if m.covers_fault:
                    tp_spans |= set(m.covered_lines)
                else:
                    fp_spans |= set(m.covered_lines)
        located = bool(tp_spans & fault)
        if not located and not all_cases:
            continue
        lines = set(case_lines[cid])
        tp = fault & tp_spans
        np_ = (tp_spans - fault) & lines
        fp = (fp_spans - fault - np_) & lines
        fn = fault - tp
        tn = lines - tp - np_ - fp - fn
        per_case[cid] = LineCategories(
            true_positive=len(tp), near_positive=len(np_), false_positive=len(fp),
            false_negative=len(fn), true_negative=len(tn), total=len(lines))
    totals = LineCategories(
        true_positive=sum(c.true_positive for c in per_case.values()),
        near_positive=sum(c.near_positive for c in per_case.values()),
        false_positive=sum(c.false_positive for c in per_case.values()),
        false_negative=sum(c.false_negative for c in per_case.values()),
        true_negative=sum(c.true_negative for c in per_case.values()),
        total=sum(c.total for c in per_case.values()))
    return LineReport(per_case=per_case, totals=totals)


def aggregate(answers: list[AnswerRow], cfg: AggregationConfig,
              meta: dict[str, QuestionMeta],
              case_lines: dict[str, list[int]] | None = None,
              fault_lines: dict[str, set[int]] | None = None,
              limit: int | None = None,
              all_cases: bool = False) -> AggregationReport:
    """tally + predict + classify (+ line_level when case data is given)."""
    tallies = tally(answers, limit=limit, question_ids=sorted(meta))
    predicted = predict(tallies, cfg, meta)
    report = classify(predicted, meta, cfg, tallies=tallies)
    if case_lines is not None and fault_lines is not None:
        report.line_report = line_level(predicted, meta, case_lines, fault_lines,
                                        all_cases=all_cases)
    return report


@dataclass(frozen=True)
class SweepPoint:
    n: int
    tp: int
    tn: int
    fp: int
    fn: int


def threshold_sweep(answers: list[AnswerRow], mechanism: Mechanism,
                    meta: dict[str, QuestionMeta], k: int | None = None) -> list[SweepPoint]:
    """One (n, TP, TN, FP, FN) point per threshold value."""
    tallies = tally(answers, question_ids=sorted(meta))
    if k is None:
        k = max((t.total for t in tallies), default=0)
    if mechanism == Mechanism.AM3:
        case_sizes: dict[str, int] = {}
        for m in meta.values():
            case_sizes[m.case_id] = case_sizes.get(m.case_id, 0) + 1
        ns = range(1, max(case_sizes.values(), default=1) + 1)
    else:
        ns = range(0, k + 1)
    points = []
    for n in ns:
        cfg = AggregationConfig(mechanism=mechanism, n=n)
        predicted = predict(tallies, cfg, meta)
        rep = classify(predicted, meta, cfg)
        points.append(SweepPoint(n=n, tp=rep.overall.tp, tn=rep.overall.tn,
                                 fp=rep.overall.fp, fn=rep.overall.fn))
    return points


@dataclass(frozen=True)
class MinReplicationResult:
    per_case: dict[str, int | None]  # minimal a locating the fault; None = not located
    line_report: LineReport  # categories at each case's own minimum


def min_replication_sweep(answers: list[AnswerRow], cfg: AggregationConfig,
                          meta: dict[str, QuestionMeta],
                          case_lines: dict[str, list[int]],
                          fault_lines: dict[str, set[int]], k: int) -> MinReplicationResult:
    """Minimal answers-per-question at which each case's fault is located."""
    case_ids = sorted({m.case_id for m in meta.values()})
    minima: dict[str, int | None] = {cid: None for cid in case_ids}
    chosen_predicted: dict[str, set[str]] = {}
    for a in range(1, k + 1):
        tallies = tally(answers, limit=a, question_ids=sorted(meta))
        predicted = predict(tallies, cfg, meta)
        for cid in case_ids:
            if minima[cid] is not None:
                continue
            hit = any(meta[qid].covers_fault and meta[qid].case_id == cid
                      for qid in predicted)
            if hit:
                minima[cid] = a
                chosen_predicted[cid] = {qid for qid in predicted
                                         if meta[qid].case_id == cid}
        if all(v is not None for v in minima.values()):
            break
    combined: set[str] = set()
    for qids in chosen_predicted.values():
        combined |= qids
    report = line_level(combined, meta, case_lines, fault_lines)
    return MinReplicationResult(per_case=minima, line_report=report)


@dataclass(frozen=True)
class CutTimeRow:
    cut_time_hours: float | None  # None when this level was never reached
    answers_per_question: int
    workers: int
    answers: int
    faults_located: int
    lines_to_inspect: int


def cut_time_analysis(answers: list[AnswerRow], cfg: AggregationConfig,
                      meta: dict[str, QuestionMeta],
                      case_lines: dict[str, list[int]],
                      fault_lines: dict[str, set[int]],
                      k: int, start_time: float | None = None) -> list[CutTimeRow]:
    """Speed analysis: for each a, the earliest instant every question has >= a answers."""
    per_q: dict[str, list[AnswerRow]] = {qid: [] for qid in meta}
    for a in answers:
        per_q.setdefault(a.question_id, []).append(a)
    for qid in per_q:
        per_q[qid] = _ordered(per_q[qid])
    if start_time is None:
        start_time = min((a.submitted_at for a in answers), default=0.0)
    rows = []
    for a in range(1, k + 1):
        reachable = all(len(v) >= a for v in per_q.values())
        if not reachable:
            rows.append(CutTimeRow(cut_time_hours=None, answers_per_question=a,
                                   workers=0, answers=0, faults_located=0,
                                   lines_to_inspect=0))
            continue
        cut = max(v[a - 1].submitted_at for v in per_q.values())
        first_a = [r for v in per_q.values() for r in v[:a]]
        workers = len({r.worker_id for r in first_a})
        tallies = tally(answers, limit=a, question_ids=sorted(meta))
        predicted = predict(tallies, cfg, meta)
        rep = classify(predicted, meta, cfg)
        lines = line_level(predicted, meta, case_lines, fault_lines)
        rows.append(CutTimeRow(
            cut_time_hours=(cut - start_time) / 3600.0,
            answers_per_question=a,
            workers=workers,
            answers=len(first_a),
            faults_located=rep.faults_located,
            lines_to_inspect=lines.totals.extra_lines))
    return rows
