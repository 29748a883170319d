"""Bug-case corpus: loading, validation, and ground-truth access.

A corpus file is a JSON document with a top-level ``cases`` array. Each case
carries the failing method's printed source (absolute line numbers), the
failing test and failure message shown to workers, and the fault-line ground
truth. The reference corpus bundled under ``data/corpus.json`` holds the
eight failing Java methods used throughout the analytics.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

# LOC per reference case; the bundled corpus must match exactly.
REFERENCE_LOC = {"J1": 23, "J2": 7, "J3": 23, "J4": 78, "J5": 7, "J6": 28, "J7": 12, "J8": 33}


class CorpusFormatError(Exception):
    """Raised when the corpus file cannot be parsed into the expected shape."""


class CorpusValidationError(Exception):
    """Raised when a parsed case violates a corpus invariant."""

    def __init__(self, case_id: str, rule: str):
        self.case_id = case_id
        self.rule = rule
        super().__init__(f"{case_id}: {rule}")


@dataclass(frozen=True)
class SourceLine:
    line: int
    text: str
    executable: bool


@dataclass(frozen=True)
class ContextMethod:
    name: str
    highlight_line: int
    source: str


@dataclass(frozen=True)
class BugCase:
    case_id: str
    project: str
    defects4j_bug_id: str
    source_lines: tuple[SourceLine, ...]
    loc: int
    failing_test: str
    failure_message: str
    fault_lines: frozenset[int]
    context_methods: tuple[ContextMethod, ...] = ()

    def line_numbers(self) -> list[int]:
        return [s.line for s in self.source_lines]

    def executable_lines(self) -> set[int]:
        return {s.line for s in self.source_lines if s.executable}

    def text_of(self, line: int) -> str:
        for s in self.source_lines:
            if s.line == line:
                return s.text
        raise KeyError(line)


@dataclass(frozen=True)
class Corpus:
    cases: tuple[BugCase, ...]
    checksum: str

    def case(self, case_id: str) -> BugCase:
        for c in self.cases:
            if c.case_id == case_id:
                return c
        raise KeyError(case_id)

    def case_ids(self) -> list[str]:
        return [c.case_id for c in self.cases]


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise CorpusFormatError(f"missing field '{key}' in {where}")
    return doc[key]


def _parse_case(raw: dict, index: int) -> BugCase:
    where = f"cases[{index}]"
    case_id = _require(raw, "case_id", where)
    source_raw = _require(raw, "source", where)
    if not isinstance(source_raw, list) or not source_raw:
        raise CorpusFormatError(f"{where}.source must be a non-empty array")
    lines = []
    for j, s in enumerate(source_raw):
        lw = f"{where}.source[{j}]"
        lines.append(SourceLine(
            line=int(_require(s, "line", lw)),
            text=str(_require(s, "text", lw)),
            executable=bool(_require(s, "executable", lw)),
        ))
    ctx = tuple(
        ContextMethod(name=m["name"], highlight_line=int(m["highlight_line"]), source=m["source"])
        for m in raw.get("context_methods", [])
    )
    return BugCase(
        case_id=str(case_id),
        project=str(_require(raw, "project", where)),
        defects4j_bug_id=str(_require(raw, "defects4j_bug_id", where)),
        source_lines=tuple(lines),
        loc=int(_require(raw, "loc", where)),
        failing_test=str(_require(raw, "failing_test", where)),
        failure_message=str(_require(raw, "failure_message", where)),
        fault_lines=frozenset(int(x) for x in _require(raw, "fault_lines", where)),
        context_methods=ctx,
    )


def validate_case(case: BugCase) -> None:
    """Check every BugCase invariant; raises CorpusValidationError on the first violation."""
    numbers = case.line_numbers()
    if case.loc != len(numbers):
        raise CorpusValidationError(case.case_id, f"loc={case.loc} does not match {len(numbers)} source lines")
    if case.case_id in REFERENCE_LOC and case.loc != REFERENCE_LOC[case.case_id]:
        raise CorpusValidationError(
            case.case_id,
            f"loc={case.loc} contradicts the reference LOC {REFERENCE_LOC[case.case_id]}")
    for a, b in zip(numbers, numbers[1:]):
        if b != a + 1:
            raise CorpusValidationError(case.case_id, f"line numbers not contiguous at {a} -> {b}")
    if not case.fault_lines:
        raise CorpusValidationError(case.case_id, "fault_lines is empty")
    known = set(numbers)
    for f in case.fault_lines:
        if f not in known:
            raise CorpusValidationError(case.case_id, f"fault line {f} not in source lines")
    for m in case.context_methods:
        if not m.source.strip():
            raise CorpusValidationError(case.case_id, f"context method {m.name} has empty source")


def _parse_document(data: bytes) -> Corpus:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorpusFormatError(f"not a UTF-8 JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorpusFormatError("top level must be an object")
    raw_cases = _require(doc, "cases", "document")
    if not isinstance(raw_cases, list):
        raise CorpusFormatError("'cases' must be an array")
    cases = [_parse_case(raw, i) for i, raw in enumerate(raw_cases)]
    seen = set()
    for c in cases:
        if c.case_id in seen:
            raise CorpusValidationError(c.case_id, "duplicate case_id")
        seen.add(c.case_id)
        validate_case(c)
    checksum = hashlib.sha256(data).hexdigest()
    return Corpus(cases=tuple(cases), checksum=checksum)


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a corpus file; see module docstring for the format."""
    data = Path(path).read_bytes()
    return _parse_document(data)


def load_reference_corpus() -> Corpus:
    """Load the bundled eight-case reference corpus."""
    data = resources.files("crowdlocate.data").joinpath("corpus.json").read_bytes()
    return _parse_document(data)


def reference_corpus_path() -> Path:
    return Path(str(resources.files("crowdlocate.data").joinpath("corpus.json")))


def dump_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back out; reloading yields a structurally identical Corpus."""
    doc = {
        "format": "crowdlocate-corpus-v1",
        "cases": [
            {
                "case_id": c.case_id,
                "project": c.project,
                "defects4j_bug_id": c.defects4j_bug_id,
                "loc": c.loc,
                "failure_message": c.failure_message,
                "failing_test": c.failing_test,
                "fault_lines": sorted(c.fault_lines),
                "source": [
                    {"line": s.line, "text": s.text, "executable": s.executable}
                    for s in c.source_lines
                ],
                "context_methods": [
                    {"name": m.name, "highlight_line": m.highlight_line, "source": m.source}
                    for m in c.context_methods
                ],
            }
            for c in corpus.cases
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


def fault_ground_truth(case: BugCase) -> set[int]:
    """Ground-truth fault lines for a validated case.

    For missing-code faults these are the failure-exposing lines, not the
    eventual fix insertion points; the derivation per reference case is
    documented in docs/GROUND_TRUTH.md.
    """
    return set(case.fault_lines)
