"""Template questions instantiated over extracted code elements."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .analysis import CodeElement, ElementKind, extract_elements
from .corpus import BugCase, Corpus

TEMPLATES = {
    ElementKind.LOOP: (
        "Is there any issue with the loop between lines {x} and {y} "
        "that might be related to the failure?"),
    ElementKind.CONDITIONAL: (
        "Is there any issue with the conditional between lines {x} and {y} "
        "that might be related to the failure?"),
    ElementKind.METHOD_CALL: (
        "Is there any issue with the method invocation {m} at line {x} "
        "that might be related to the failure?"),
    ElementKind.VARIABLE: (
        "Is there any issue with the definition or the use of variable {m} "
        "that might be related to the failure?"),
}

ANSWER_OPTIONS = ("I don't know", "Yes, there is an issue", "No, there is not an issue")


@dataclass(frozen=True)
class Question:
    question_id: str
    case_id: str
    element: CodeElement
    text: str
    covered_lines: frozenset[int]
    covers_fault: bool


@dataclass(frozen=True)
class QuestionSet:
    case_id: str
    questions: tuple[Question, ...]

    def __len__(self) -> int:
        return len(self.questions)

    def fault_covering(self) -> list[Question]:
        return [q for q in self.questions if q.covers_fault]


def render_text(element: CodeElement) -> str:
    template = TEMPLATES[element.kind]
    return template.format(x=element.min_line, y=element.max_line, m=element.name)


def generate_questions(case: BugCase) -> QuestionSet:
    """One question per extracted element, in source order, fault flags attached."""
    elements = extract_elements(case)
    truth = case.fault_lines
    questions = tuple(
        Question(
            question_id=f"{case.case_id}-Q{k + 1:03d}",
            case_id=case.case_id,
            element=e,
            text=render_text(e),
            covered_lines=e.span,
            covers_fault=bool(e.span & truth),
        )
        for k, e in enumerate(elements)
    )
    return QuestionSet(case_id=case.case_id, questions=questions)


def mark_fault_covering(qs: QuestionSet, truth: set[int]) -> QuestionSet:
    """Re-flag covers_fault against an explicit ground-truth line set."""
    return QuestionSet(
        case_id=qs.case_id,
        questions=tuple(
            replace(q, covers_fault=bool(q.covered_lines & truth)) for q in qs.questions
        ),
    )


def generate_all(corpus: Corpus) -> dict[str, QuestionSet]:
    return {case.case_id: generate_questions(case) for case in corpus.cases}


def total_questions(sets: dict[str, QuestionSet]) -> int:
    return sum(len(qs) for qs in sets.values())
