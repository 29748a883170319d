import hashlib
import json

import pytest

from crowdlocate.corpus import (BugCase, CorpusFormatError, CorpusValidationError,
                                SourceLine, dump_corpus, fault_ground_truth,
                                load_corpus, load_reference_corpus,
                                reference_corpus_path)

TABLE1_LOC = {"J1": 23, "J2": 7, "J3": 23, "J4": 78, "J5": 7, "J6": 28, "J7": 12, "J8": 33}


def test_reference_corpus_shape(ref_corpus):
    assert ref_corpus.case_ids() == [f"J{i}" for i in range(1, 9)]
    for case in ref_corpus.cases:
        assert case.loc == TABLE1_LOC[case.case_id]
    assert sum(c.loc for c in ref_corpus.cases) == 211


def test_reference_fault_line_counts(ref_corpus):
    sizes = {c.case_id: len(c.fault_lines) for c in ref_corpus.cases}
    assert sizes == {"J1": 1, "J2": 1, "J3": 1, "J4": 2, "J5": 2, "J6": 1, "J7": 1, "J8": 1}
    assert sum(sizes.values()) == 10


def test_line_numbers_contiguous_and_fault_lines_exist(ref_corpus):
    for case in ref_corpus.cases:
        numbers = case.line_numbers()
        assert numbers == list(range(numbers[0], numbers[0] + case.loc))
        assert case.fault_lines <= set(numbers)
    assert ref_corpus.case("J1").line_numbers()[0] == 2427


def test_checksum_is_sha256_of_file_bytes(ref_corpus):
    data = reference_corpus_path().read_bytes()
    assert ref_corpus.checksum == hashlib.sha256(data).hexdigest()


def test_round_trip_identity(ref_corpus, tmp_path):
    out = tmp_path / "copy.json"
    dump_corpus(ref_corpus, out)
    again = load_corpus(out)
    assert again.cases == ref_corpus.cases
    # and a second dump/load is a fixed point including the checksum
    out2 = tmp_path / "copy2.json"
    dump_corpus(again, out2)
    assert load_corpus(out2).checksum == again.checksum


def test_malformed_file_reports_format_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json", encoding="utf-8")
    with pytest.raises(CorpusFormatError):
        load_corpus(p)
    p2 = tmp_path / "bad2.json"
    p2.write_text(json.dumps({"cases": [{"case_id": "X"}]}), encoding="utf-8")
    with pytest.raises(CorpusFormatError) as err:
        load_corpus(p2)
    assert "cases[0]" in str(err.value)


def test_loc_contradiction_names_case(tmp_path):
    doc = json.loads(reference_corpus_path().read_text(encoding="utf-8"))
    j2 = next(c for c in doc["cases"] if c["case_id"] == "J2")
    j2["loc"] = 8
    p = tmp_path / "tampered.json"
    p.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(CorpusValidationError) as err:
        load_corpus(p)
    assert err.value.case_id == "J2"


def test_non_contiguous_lines_rejected(tmp_path):
    doc = {"cases": [{
        "case_id": "X1", "project": "p", "defects4j_bug_id": "x",
        "loc": 2, "failure_message": "f", "failing_test": "t",
        "fault_lines": [1],
        "source": [{"line": 1, "text": "int a = 0;", "executable": True},
                   {"line": 3, "text": "a = 1;", "executable": True}],
    }]}
    p = tmp_path / "gap.json"
    p.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(CorpusValidationError) as err:
        load_corpus(p)
    assert "contiguous" in str(err.value)


def test_minimal_synthetic_case(tmp_path):
    doc = {"cases": [{
        "case_id": "X1", "project": "toy", "defects4j_bug_id": "none",
        "loc": 3, "failure_message": "boom", "failing_test": "t()",
        "fault_lines": [2],
        "source": [{"line": 1, "text": "int f(int a) {", "executable": True},
                   {"line": 2, "text": "    return a / 0;", "executable": True},
                   {"line": 3, "text": "}", "executable": False}],
    }]}
    p = tmp_path / "mini.json"
    p.write_text(json.dumps(doc), encoding="utf-8")
    corp = load_corpus(p)
    assert len(corp.cases) == 1
    assert fault_ground_truth(corp.cases[0]) == {2}


def test_fault_ground_truth_passthrough(ref_corpus):
    assert len(fault_ground_truth(ref_corpus.case("J4"))) == 2
    assert len(fault_ground_truth(ref_corpus.case("J6"))) == 1
    case = BugCase(
        case_id="S", project="", defects4j_bug_id="", loc=3,
        source_lines=(SourceLine(1, "a", True), SourceLine(2, "b", True),
                      SourceLine(3, "c", True)),
        failing_test="", failure_message="", fault_lines=frozenset({2}))
    assert fault_ground_truth(case) == {2}


def test_every_fault_line_covered_by_a_question(ref_corpus):
    from crowdlocate.questions import generate_questions
    for case in ref_corpus.cases:
        qs = generate_questions(case)
        covered = set()
        for q in qs.questions:
            covered |= q.covered_lines
        assert case.fault_lines <= covered, case.case_id
