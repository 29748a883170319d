"""Subcrowd filters over answers, workers, and questions.

A filter is a boolean predicate tree with a textual grammar:

    atom       :=  field op value   |   field 'in' '(' value, value, ... ')'
    op         :=  = != < <= > >=
    combinator :=  and  or  not     (parentheses allowed)

e.g. ``not (question.kind = conditional and question.loc > 3)``. Atoms are
evaluated against an answer joined with its question and worker attributes;
quartile attributes are computed over the whole dataset being filtered.
Also hosts the quartile and Kendall-tau utilities the filter studies use.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from scipy import stats as _scipy_stats

from .aggregation import (AggregationConfig, AggregationReport, QuestionMeta, aggregate)
from .answers import AnswerRow


class FilterError(Exception):
    pass


# --------------------------------------------------------------------------
# statistics utilities
# --------------------------------------------------------------------------

def quartile_partition(values: list[float]) -> list[str]:
    """Label each value Q1..Q4 by nearest-rank cut points.

    Boundary ties go to the lower quartile, so all-equal input is all Q1.
    """
    if not values:
        raise FilterError("quartile_partition requires a non-empty list")
    ordered = sorted(values)
    n = len(ordered)
    cuts = [ordered[max(0, math.ceil(n * k / 4) - 1)] for k in (1, 2, 3)]
    labels = []
    for v in values:
        if v <= cuts[0]:
            labels.append("Q1")
        elif v <= cuts[1]:
            labels.append("Q2")
        elif v <= cuts[2]:
            labels.append("Q3")
        else:
            labels.append("Q4")
    return labels


def kendall_tau(xs: list[float], ys: list[float]) -> float:
    """Tie-corrected Kendall tau-b for paired samples."""
    if len(xs) != len(ys):
        raise FilterError("kendall_tau requires equal-length lists")
    if len(xs) < 2:
        raise FilterError("kendall_tau requires at least 2 pairs")
    return float(_scipy_stats.kendalltau(xs, ys, variant="b").statistic)


def consensus_threshold(total: int) -> int:
    """Per-cell answer count marking the uniform 1/30 expectation (to be exceeded)."""
    return math.ceil(total / 30)


def consensus_cells(answers: list[AnswerRow]) -> set[tuple[int, int]]:
    """(difficulty, confidence) cells holding strictly more than 1/30 of all answers."""
    total = len(answers)
    counts: dict[tuple[int, int], int] = {}
    for a in answers:
        key = (a.difficulty, a.confidence)
        counts[key] = counts.get(key, 0) + 1
    return {cell for cell, c in counts.items() if c * 30 > total}


# --------------------------------------------------------------------------
# filter expression grammar
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<op><=|>=|!=|=|<|>)|(?P<punct>[(),])|(?P<str>'[^']*'|\"[^\"]*\")"
    r"|(?P<word>[A-Za-z_][A-Za-z0-9_.]*)|(?P<num>-?\d+(?:\.\d+)?))")

OPS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Atom:
    field: str
    op: str  # one of OPS or "in"
    value: object  # scalar or tuple for "in"


@dataclass(frozen=True)
class Not:
    child: object


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


@dataclass(frozen=True)
class Literal:
    value: bool


FilterSpec = object  # Atom | Not | And | Or | Literal


def _lex(text: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m or m.start() != pos:
            raise FilterError(f"cannot tokenize filter at: {text[pos:pos+20]!r}")
        pos = m.end()
        for kind in ("op", "punct", "str", "word", "num"):
            val = m.group(kind)
            if val is not None:
                out.append((kind, val))
                break
    return out


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, text):
        kind, val = self.next()
        if val != text:
            raise FilterError(f"expected {text!r}, got {val!r}")

    def parse(self):
        node = self.parse_or()
        if self.i != len(self.toks):
            raise FilterError(f"trailing tokens after expression: {self.toks[self.i:]}")
        return node

    def parse_or(self):
        children = [self.parse_and()]
        while self.peek()[1] == "or":
            self.next()
            children.append(self.parse_and())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def parse_and(self):
        children = [self.parse_unary()]
        while self.peek()[1] == "and":
            self.next()
            children.append(self.parse_unary())
        return children[0] if len(children) == 1 else And(tuple(children))

    def parse_unary(self):
        kind, val = self.peek()
        if val == "not":
            self.next()
            return Not(self.parse_unary())
        if val == "(":
            self.next()
            node = self.parse_or()
            self.expect(")")
            return node
        if val == "true" and kind == "word":
            self.next()
            return Literal(True)
        if val == "false" and kind == "word":
            self.next()
            return Literal(False)
        return self.parse_atom()

    def parse_atom(self):
        kind, fieldname = self.next()
        if kind != "word":
            raise FilterError(f"expected field name, got {fieldname!r}")
        kind, op = self.next()
        if op == "in":
            self.expect("(")
            values = []
            while True:
                values.append(self._value())
                kind, nxt = self.next()
                if nxt == ")":
                    break
                if nxt != ",":
                    raise FilterError(f"expected ',' or ')' in value list, got {nxt!r}")
            return Atom(field=fieldname.lower(), op="in", value=tuple(values))
        if op not in OPS:
            raise FilterError(f"unknown operator {op!r}")
        return Atom(field=fieldname.lower(), op=op, value=self._value())

    def _value(self):
        kind, val = self.next()
        if kind == "num":
            return float(val) if "." in val else int(val)
        if kind == "str":
            return val[1:-1]
        if kind == "word":
            return val
        raise FilterError(f"expected a value, got {val!r}")


def parse_filter(text: str) -> FilterSpec:
    return _Parser(_lex(text)).parse()


def filter_to_text(spec: FilterSpec) -> str:
    if isinstance(spec, Literal):
        return "true" if spec.value else "false"
    if isinstance(spec, Atom):
        if spec.op == "in":
            vals = ", ".join(_value_text(v) for v in spec.value)
            return f"{spec.field} in ({vals})"
        return f"{spec.field} {spec.op} {_value_text(spec.value)}"
    if isinstance(spec, Not):
        return f"not ({filter_to_text(spec.child)})"
    if isinstance(spec, And):
        return " and ".join(f"({filter_to_text(c)})" for c in spec.children)
    if isinstance(spec, Or):
        return " or ".join(f"({filter_to_text(c)})" for c in spec.children)
    raise FilterError(f"not a filter node: {spec!r}")


def _value_text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.]*", str(v)):
        return str(v)
    return f"'{v}'"


# --------------------------------------------------------------------------
# evaluation context
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WorkerInfo:
    worker_id: str
    profession: str
    score: int  # qualification score percent: 60, 80, or 100
    years_of_experience: float = 0.0


KNOWN_FIELDS = {
    "question.kind", "question.loc", "question.case",
    "answer.option", "answer.confidence", "answer.difficulty",
    "answer.duration_quartile", "answer.explanation_quartile",
    "answer.order_in_hit", "answer.in_consensus_cell",
    "worker.profession", "worker.score", "worker.yoe", "worker.yoe_quartile",
}

_QUARTILE_ORDER = {"q1": 1, "q2": 2, "q3": 3, "q4": 4}


class FilterContext:
    """Joined attribute view over one answer dataset.

    Quartile populations are global over the dataset (not per case), and the
    consensus difficulty/confidence cells are computed from the same dataset.
    """

    def __init__(self, answers: list[AnswerRow], meta: dict[str, QuestionMeta],
                 workers: dict[str, WorkerInfo]):
        self.meta = meta
        self.workers = workers
        self.duration_q: dict[str, str] = {}
        self.explanation_q: dict[str, str] = {}
        if answers:
            for a, dq, eq in zip(
                    answers,
                    quartile_partition([a.duration_seconds for a in answers]),
                    quartile_partition([a.explanation_chars for a in answers])):
                self.duration_q[a.answer_id] = dq.lower()
                self.explanation_q[a.answer_id] = eq.lower()
        self.yoe_q: dict[str, str] = {}
        present = sorted({a.worker_id for a in answers})
        known = [w for w in present if w in workers]
        if known:
            labels = quartile_partition([workers[w].years_of_experience for w in known])
            self.yoe_q = {w: lab.lower() for w, lab in zip(known, labels)}
        self.cells = consensus_cells(answers)

    def attributes(self, a: AnswerRow) -> dict[str, object]:
        m = self.meta.get(a.question_id)
        w = self.workers.get(a.worker_id)
        attrs: dict[str, object] = {
            "answer.option": a.option.value.lower(),
            "answer.confidence": a.confidence,
            "answer.difficulty": a.difficulty,
            "answer.order_in_hit": a.order_in_hit,
            "answer.duration_quartile": self.duration_q.get(a.answer_id, "q1"),
            "answer.explanation_quartile": self.explanation_q.get(a.answer_id, "q1"),
            "answer.in_consensus_cell": (a.difficulty, a.confidence) in self.cells,
        }
        if m is not None:
            attrs["question.kind"] = m.kind
            attrs["question.loc"] = len(m.covered_lines)
            attrs["question.case"] = m.case_id.lower()
        if w is not None:
            attrs["worker.profession"] = w.profession.lower()
            attrs["worker.score"] = w.score
            attrs["worker.yoe"] = w.years_of_experience
            attrs["worker.yoe_quartile"] = self.yoe_q.get(a.worker_id, "q1")
        return attrs


def _norm(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, (int, float)):
        return float(v)
    s = str(v).lower()
    if s in ("true", "false"):
        return s == "true"
    if s in _QUARTILE_ORDER:
        return s
    return s


def _compare(op: str, left, right) -> bool:
    lv, rv = _norm(left), _norm(right)
    if isinstance(lv, str) and lv in _QUARTILE_ORDER and isinstance(rv, str) and rv in _QUARTILE_ORDER:
        lv, rv = _QUARTILE_ORDER[lv], _QUARTILE_ORDER[rv]
    if op == "=":
        return lv == rv
    if op == "!=":
        return lv != rv
    if type(lv) is not type(rv) and not (isinstance(lv, (int, float)) and isinstance(rv, (int, float))):
        raise FilterError(f"cannot order-compare {left!r} and {right!r}")
    if isinstance(lv, str) or isinstance(rv, str):
        raise FilterError(f"ordering not defined for {left!r} {op} {right!r}")
    if op == "<":
        return lv < rv
    if op == "<=":
        return lv <= rv
    if op == ">":
        return lv > rv
    if op == ">=":
        return lv >= rv
    raise FilterError(f"unknown operator {op}")


def validate_spec(spec: FilterSpec) -> None:
    """Reject atoms that reference an unknown attribute, before any evaluation."""
    if isinstance(spec, Atom):
        if spec.field not in KNOWN_FIELDS:
            raise FilterError(f"unknown attribute {spec.field!r}")
    elif isinstance(spec, Not):
        validate_spec(spec.child)
    elif isinstance(spec, (And, Or)):
        for c in spec.children:
            validate_spec(c)
    elif not isinstance(spec, Literal):
        raise FilterError(f"not a filter node: {spec!r}")


def evaluate(spec: FilterSpec, attrs: dict[str, object]) -> bool:
    if isinstance(spec, Literal):
        return spec.value
    if isinstance(spec, Not):
        return not evaluate(spec.child, attrs)
    if isinstance(spec, And):
        return all(evaluate(c, attrs) for c in spec.children)
    if isinstance(spec, Or):
        return any(evaluate(c, attrs) for c in spec.children)
    if isinstance(spec, Atom):
        if spec.field not in KNOWN_FIELDS:
            raise FilterError(f"unknown attribute {spec.field!r}")
        if spec.field not in attrs:
            return False
        left = attrs[spec.field]
        if spec.op == "in":
            return any(_compare("=", left, v) for v in spec.value)
        return _compare(spec.op, left, spec.value)
    raise FilterError(f"not a filter node: {spec!r}")


def apply_filter(answers: list[AnswerRow], spec: FilterSpec | str,
                 ctx: FilterContext) -> list[AnswerRow]:
    """Exactly the answers whose joined attributes satisfy the spec."""
    if isinstance(spec, str):
        spec = parse_filter(spec)
    validate_spec(spec)
    return [a for a in answers if evaluate(spec, ctx.attributes(a))]


# --------------------------------------------------------------------------
# builtin catalog and subcrowd reports
# --------------------------------------------------------------------------

_STUDENTS = "worker.profession in (undergraduate, graduate)"

BUILTIN_FILTERS: dict[str, str] = {
    # identity subcrowd
    "all_workers": "true",
    # question-attribute filter
    "exclude_conditionals_gt3loc": "not (question.kind = conditional and question.loc > 3)",
    # answer-attribute filters
    "consensus_cells": "answer.in_consensus_cell = true",
    "top_confidence_consensus": "answer.in_consensus_cell = true",
    "exclude_fastest_answers": "answer.duration_quartile != q1",
    "exclude_shortest_explanations": "answer.explanation_quartile != q1",
    # profession exclusions
    "exclude_students_hobbyists_others": "worker.profession = professional",
    "exclude_hobbyists_graduates_others": "worker.profession in (professional, undergraduate)",
    "exclude_students_others": "worker.profession in (professional, hobbyist)",
    "exclude_students": f"not ({_STUDENTS})",
    # qualification-score filters
    "score_80_plus": "worker.score >= 80",
    "score_100": "worker.score = 100",
    # score x profession
    "exclude_students_below_80": f"not ({_STUDENTS} and worker.score < 80)",
    "non_students_score_100": f"not ({_STUDENTS}) and worker.score = 100",
    # difficulty x score
    "exclude_difficulty5": "answer.difficulty != 5",
    "exclude_difficulty5_score_60_80": "not (answer.difficulty = 5 and worker.score in (60, 80))",
    "exclude_d5s80_d45s60": ("not ((answer.difficulty = 5 and worker.score = 80) "
                             "or (answer.difficulty >= 4 and worker.score = 60))"),
    "exclude_d45_score_60_80": "not (answer.difficulty >= 4 and worker.score in (60, 80))",
    "least_difficult_by_score": ("not ((answer.difficulty = 5 and worker.score = 100) "
                                 "or (answer.difficulty >= 4 and worker.score in (60, 80)))"),
    # difficulty x profession
    "nonstudents_easy_answers": f"not ({_STUDENTS}) and answer.difficulty <= 2",
    "exclude_d5grad_d45undergrad": ("not ((answer.difficulty = 5 and worker.profession = graduate) "
                                    "or (answer.difficulty >= 4 and worker.profession = undergraduate))"),
    "exclude_d345_students": f"not (answer.difficulty >= 3 and {_STUDENTS})",
    "least_difficult_by_profession": f"not (answer.difficulty >= 4 and {_STUDENTS})",
}


def builtin_filters() -> dict[str, FilterSpec]:
    return {name: parse_filter(text) for name, text in BUILTIN_FILTERS.items()}


def worker_accuracy(answers: list[AnswerRow], first_hit_only: bool = True) -> dict[str, float]:
    """Per-worker fraction of correct answers.

    Analysis displays compare workers on their first HIT only (the first
    three answers by submission time) so that prolific workers are not
    advantaged; filters, by contrast, always act on all of a worker's answers.
    """
    per_worker: dict[str, list[AnswerRow]] = {}
    for a in answers:
        per_worker.setdefault(a.worker_id, []).append(a)
    out = {}
    for worker_id, rows in per_worker.items():
        rows = sorted(rows, key=lambda r: (r.submitted_at, r.answer_id))
        if first_hit_only:
            rows = rows[:3]
        out[worker_id] = sum(1 for r in rows if r.correct) / len(rows)
    return out


@dataclass
class SubcrowdResult:
    filter_text: str
    retained_answers: int
    workers: int
    report: AggregationReport
    faults_located: int
    lines_to_inspect: int | None = None


def subcrowd_report(answers: list[AnswerRow], spec: FilterSpec | str,
                    cfg: AggregationConfig, meta: dict[str, QuestionMeta],
                    workers: dict[str, WorkerInfo],
                    case_lines: dict[str, list[int]] | None = None,
                    fault_lines: dict[str, set[int]] | None = None,
                    limit: int | None = None) -> SubcrowdResult:
    """Apply a filter, re-aggregate the surviving answers, report the summary columns."""
    if isinstance(spec, str):
        spec = parse_filter(spec)
    ctx = FilterContext(answers, meta, workers)
    subset = apply_filter(answers, spec, ctx)
    report = aggregate(subset, cfg, meta, case_lines=case_lines, fault_lines=fault_lines,
                       limit=limit)
    lines = report.line_report.totals.extra_lines if report.line_report else None
    return SubcrowdResult(
        filter_text=filter_to_text(spec),
        retained_answers=len(subset),
        workers=len({a.worker_id for a in subset}),
        report=report,
        faults_located=report.faults_located,
        lines_to_inspect=lines,
    )
