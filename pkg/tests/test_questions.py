from crowdlocate.analysis import extract_elements
from crowdlocate.questions import (QuestionSet, generate_questions,
                                   mark_fault_covering, render_text)
from tests.test_analysis import synthetic_case

TABLE3_TOTALS = {"J1": 10, "J2": 6, "J3": 17, "J4": 37, "J5": 9, "J6": 18, "J7": 8, "J8": 24}
TABLE3_COVERING = {"J1": 2, "J2": 2, "J3": 4, "J4": 5, "J5": 3, "J6": 3, "J7": 3, "J8": 2}


def test_reference_totals(question_sets):
    totals = {cid: len(qs) for cid, qs in question_sets.items()}
    assert totals == TABLE3_TOTALS
    assert sum(totals.values()) == 129


def test_reference_fault_covering_counts(question_sets):
    # the per-case row is the pinned ground truth; it sums to 24
    covering = {cid: len(qs.fault_covering()) for cid, qs in question_sets.items()}
    assert covering == TABLE3_COVERING
    assert sum(covering.values()) == 24


def test_bijection_with_elements(ref_corpus, question_sets):
    for case in ref_corpus.cases:
        elements = extract_elements(case)
        qs = question_sets[case.case_id]
        assert len(qs) == len(elements)
        for q, e in zip(qs.questions, elements):
            assert q.element == e
            assert q.covered_lines == e.span


def test_template_wording(question_sets):
    texts = {q.element.kind.value: q.text
             for qs in question_sets.values() for q in qs.questions}
    assert texts["loop"].startswith("Is there any issue with the loop between lines ")
    assert texts["conditional"].startswith(
        "Is there any issue with the conditional between lines ")
    assert "that might be related to the failure?" in texts["method_call"]
    for text in texts.values():
        assert text.endswith("that might be related to the failure?")
    j1 = question_sets["J1"]
    first_cond = next(q for q in j1.questions if q.element.kind.value == "conditional")
    assert first_cond.text == ("Is there any issue with the conditional between lines "
                               "2428 and 2430 that might be related to the failure?")
    call = next(q for q in j1.questions if q.element.name == "safeMultiply")
    assert call.text == ("Is there any issue with the method invocation safeMultiply "
                         "at line 2445 that might be related to the failure?")
    var = next(q for q in j1.questions if q.element.name == "minutesOffset")
    assert var.text == ("Is there any issue with the definition or the use of variable "
                        "minutesOffset that might be related to the failure?")


def test_rendered_text_reproducible(question_sets):
    for qs in question_sets.values():
        for q in qs.questions:
            assert q.text == render_text(q.element)


def test_covers_fault_is_span_intersection(question_sets, fault_lines):
    for cid, qs in question_sets.items():
        for q in qs.questions:
            assert q.covers_fault == bool(q.covered_lines & fault_lines[cid])


def test_single_call_case():
    case = synthetic_case(["void f() {", "    g();", "}"], fault={2})
    qs = generate_questions(case)
    calls = [q for q in qs.questions if q.element.kind.value == "method_call"]
    assert len(calls) == 1
    assert calls[0].text == ("Is there any issue with the method invocation g at line 2 "
                             "that might be related to the failure?")
    assert calls[0].covers_fault


def test_mark_fault_covering_rules(question_sets):
    qs = question_sets["J3"]
    cleared = mark_fault_covering(qs, set())
    assert all(not q.covers_fault for q in cleared.questions)
    # synthetic spans {1..3}, {2}, {5} against truth {2}
    case = synthetic_case([
        "void f(int a) {",
        "    int b = a;",
        "    log(b);",
        "}",
        "",
    ])
    generated = generate_questions(case)
    spans = [frozenset({1, 2, 3}), frozenset({2}), frozenset({5})]
    import dataclasses
    picked = [dataclasses.replace(q, covered_lines=s)
              for q, s in zip(generated.questions[:3], spans)]
    marked = mark_fault_covering(QuestionSet(case_id="SYN", questions=tuple(picked)), {2})
    assert [q.covers_fault for q in marked.questions] == [True, True, False]
