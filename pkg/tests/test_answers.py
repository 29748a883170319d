import pytest

from crowdlocate.answers import (EXPORT_HEADER, AnswerValidationError, Option,
                                 export_answers, is_correct, iso8601,
                                 normalize_payload, parse_answers_csv)
from crowdlocate.orchestrator import ExperimentConfig
from crowdlocate.simulator import AnswerModel, PopulationModel, constant_accuracy, run_experiment
from tests.test_aggregation import row


class TestValidation:
    def test_idk_coerces_confidence_to_zero(self):
        option, confidence, _ = normalize_payload(Option.IDK, 3, "no idea")
        assert (option, confidence) == (Option.IDK, 0)

    def test_empty_explanation_rejected(self):
        with pytest.raises(AnswerValidationError):
            normalize_payload(Option.NO, 2, "   ")

    def test_confidence_range_for_yes_no(self):
        with pytest.raises(AnswerValidationError):
            normalize_payload(Option.YES, 0, "something")
        with pytest.raises(AnswerValidationError):
            normalize_payload(Option.NO, 6, "something")
        assert normalize_payload(Option.YES, 4, " off-by-one ")[1] == 4

    def test_explanation_size_is_trimmed_char_count(self):
        _, _, text = normalize_payload(Option.YES, 4, "  off-by-one in range check  ")
        assert len(text) == len("off-by-one in range check")


class TestCorrectness:
    def test_truth_table(self):
        assert is_correct(Option.YES, True) is True
        assert is_correct(Option.NO, False) is True
        assert is_correct(Option.YES, False) is False
        assert is_correct(Option.NO, True) is False
        assert is_correct(Option.IDK, True) is False
        assert is_correct(Option.IDK, False) is False


class TestExport:
    def test_header_is_bit_exact(self):
        text = export_answers([])
        assert text.splitlines()[0] == EXPORT_HEADER
        assert text == EXPORT_HEADER + "\n"

    def test_round_trip(self):
        rows = [row("q1", Option.YES, 1500000000, "a1"),
                row("q2", Option.IDK, 1500000060, "a2")]
        parsed = parse_answers_csv(export_answers(rows))
        assert [(r.answer_id, r.option, r.submitted_at) for r in parsed] == \
            [("a1", Option.YES, 1500000000.0), ("a2", Option.IDK, 1500000060.0)]

    def test_iso8601_format(self):
        assert iso8601(0) == "1970-01-01T00:00:00.000Z"

    def test_small_experiment_row_count(self, ref_corpus):
        # 1 case, 6 questions, K=2 -> 12 rows
        from crowdlocate.corpus import Corpus
        j2 = ref_corpus.case("J2")
        small = Corpus(cases=(j2,), checksum="x")
        result = run_experiment(
            small, ExperimentConfig(replication_k=2), PopulationModel(),
            AnswerModel(accuracy=constant_accuracy(1.0), p_idk=0.0), seed=5)
        lines = result.csv_text.splitlines()
        assert lines[0] == EXPORT_HEADER
        assert len(lines) == 1 + 12

    def test_reference_quiescence_row_count(self, perfect_run):
        lines = perfect_run.csv_text.splitlines()
        assert len(lines) == 1 + 2580
        per_q = {}
        workers_per_q = {}
        for r in perfect_run.rows:
            per_q[r.question_id] = per_q.get(r.question_id, 0) + 1
            workers_per_q.setdefault(r.question_id, set()).add(r.worker_id)
        assert all(v == 20 for v in per_q.values())
        assert all(len(v) == 20 for v in workers_per_q.values())

    def test_correct_flag_is_pure_function(self, perfect_run, qmeta):
        for r in perfect_run.rows[:200]:
            assert r.correct == is_correct(r.option, qmeta[r.question_id].covers_fault)
