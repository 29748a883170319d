import random

import pytest

from crowdlocate.aggregation import (AggregationConfig, AggregationError,
                                     LineCategories, Mechanism, QuestionMeta,
                                     classify, cut_time_analysis, line_level,
                                     min_replication_sweep, predict, tally,
                                     threshold_sweep)
from crowdlocate.answers import AnswerRow, Option
from tests.oracles import naive_am1, naive_am2, naive_am3, naive_counts


def row(qid, option, ts, aid, case="C1", worker=None):
    return AnswerRow(
        answer_id=aid, worker_id=worker or f"w{aid}", case_id=case, question_id=qid,
        hit_id="H", order_in_hit=1, option=option, confidence=0 if option == Option.IDK else 3,
        difficulty=3, duration_seconds=60.0, explanation_chars=20, correct=False,
        submitted_at=float(ts))


def mk_meta(spec):
    """spec: {qid: (case_id, covers_fault)} with unit spans."""
    return {qid: QuestionMeta(question_id=qid, case_id=c, covered_lines=frozenset({1}),
                              covers_fault=f, kind="variable")
            for qid, (c, f) in spec.items()}


def counts_rows(qid, yes, no, idk, start=0):
    rows = []
    t = start
    for k in range(yes):
        rows.append(row(qid, Option.YES, t, f"{qid}y{k}"))
        t += 1
    for k in range(no):
        rows.append(row(qid, Option.NO, t, f"{qid}n{k}"))
        t += 1
    for k in range(idk):
        rows.append(row(qid, Option.IDK, t, f"{qid}i{k}"))
        t += 1
    return rows


class TestTally:
    def test_basic_counting(self):
        rows = counts_rows("q1", 12, 5, 3)
        (t,) = tally(rows)
        assert (t.yes, t.no, t.idk) == (12, 5, 3)
        assert t.total == 20

    def test_prefix_limit(self):
        rows = [row("q1", Option.NO, 0, "a1"), row("q1", Option.YES, 1, "a2")]
        (t,) = tally(rows, limit=1)
        assert (t.yes, t.no, t.idk) == (0, 1, 0)

    def test_equal_timestamps_tie_broken_by_answer_id(self):
        rows = [row("q1", Option.YES, 5, "a2"), row("q1", Option.NO, 5, "a1")]
        (t,) = tally(rows, limit=1)
        assert (t.yes, t.no) == (0, 1)
        # permuting equal-timestamp answers never changes a full tally
        (full_a,) = tally(rows)
        (full_b,) = tally(list(reversed(rows)))
        assert full_a == full_b

    def test_insufficient_answers_names_question(self):
        rows = counts_rows("q7", 2, 0, 0)
        with pytest.raises(AggregationError) as err:
            tally(rows, limit=3)
        assert "q7" in str(err.value)

    def test_zero_tallies_for_unanswered_questions(self):
        rows = counts_rows("q1", 1, 0, 0)
        ts = tally(rows, question_ids=["q1", "q2"])
        assert [(t.question_id, t.total) for t in ts] == [("q1", 1), ("q2", 0)]


class TestPredict:
    def test_am1_excludes_ties_at_n0(self):
        meta = mk_meta({"q1": ("C1", True)})
        rows = counts_rows("q1", 10, 10, 0)
        assert predict(tally(rows), AggregationConfig(Mechanism.AM1, 0), meta) == set()

    def test_am2_strict_boundary(self):
        meta = mk_meta({"q1": ("C1", True), "q2": ("C1", False)})
        rows = counts_rows("q1", 6, 14, 0) + counts_rows("q2", 5, 15, 0)
        predicted = predict(tally(rows), AggregationConfig(Mechanism.AM2, 5), meta)
        assert predicted == {"q1"}

    def test_am3_tie_inclusion(self):
        meta = mk_meta({f"q{i}": ("C1", False) for i in range(1, 5)})
        rows = []
        for qid, yes in zip(["q1", "q2", "q3", "q4"], [7, 5, 5, 3]):
            rows += counts_rows(qid, yes, 20 - yes, 0)
        predicted = predict(tally(rows), AggregationConfig(Mechanism.AM3, 2), meta)
        assert predicted == {"q1", "q2", "q3"}

    def test_am3_is_per_case(self):
        meta = mk_meta({"a1": ("C1", False), "a2": ("C1", False),
                        "b1": ("C2", False), "b2": ("C2", False)})
        rows = (counts_rows("a1", 9, 0, 0) + counts_rows("a2", 8, 0, 0)
                + counts_rows("b1", 2, 0, 0) + counts_rows("b2", 1, 0, 0))
        predicted = predict(tally(rows), AggregationConfig(Mechanism.AM3, 1), meta)
        assert predicted == {"a1", "b1"}

    def test_invalid_n(self):
        with pytest.raises(AggregationError):
            AggregationConfig(Mechanism.AM3, 0).validate()
        with pytest.raises(AggregationError):
            AggregationConfig(Mechanism.AM1, -1).validate()
        with pytest.raises(AggregationError):
            AggregationConfig(Mechanism.AM2, 21).validate(k=20)


class TestClassify:
    def test_overall_precision_table5_am3_shape(self):
        meta = {}
        predicted = set()
        for k in range(25):
            meta[f"f{k}"] = QuestionMeta(f"f{k}", f"J{k % 8}", frozenset({1}), True)
        for k in range(104):
            meta[f"n{k}"] = QuestionMeta(f"n{k}", f"J{k % 8}", frozenset({2}), False)
        predicted |= {f"f{k}" for k in range(15)}  # 15 TP
        predicted |= {f"n{k}" for k in range(4)}  # 4 FP
        rep = classify(predicted, meta, AggregationConfig(Mechanism.AM3, 2))
        assert (rep.overall.tp, rep.overall.fp) == (15, 4)
        assert round(rep.overall.precision, 3) == 0.789
        assert round(100 * rep.overall.precision) == 79

    def test_perfect_prediction(self):
        meta = mk_meta({"q1": ("C1", True), "q2": ("C1", False)})
        rep = classify({"q1"}, meta, AggregationConfig(Mechanism.AM2, 5))
        assert rep.overall.precision == 1.0 and rep.overall.recall == 1.0
        assert rep.faults_located == 1

    def test_small_enumeration(self):
        meta = mk_meta({"q1": ("C1", False), "q2": ("C1", True),
                        "q3": ("C1", False), "q4": ("C1", False)})
        rep = classify({"q1"}, meta, AggregationConfig(Mechanism.AM1, 0))
        m = rep.per_case["C1"]
        assert (m.tp, m.fp, m.fn, m.tn) == (0, 1, 1, 2)
        assert rep.faults_located == 0

    def test_class_partition(self, qmeta):
        rep = classify(set(), qmeta, AggregationConfig(Mechanism.AM1, 0))
        o = rep.overall
        assert o.tp + o.fp + o.fn + o.tn == 129


class TestLineLevel:
    def test_precedence_rules(self):
        meta = {
            "tp": QuestionMeta("tp", "C1", frozenset({2, 3}), True),
            "fp": QuestionMeta("fp", "C1", frozenset({3, 4}), False),
        }
        rep = line_level({"tp", "fp"}, meta, {"C1": [1, 2, 3, 4, 5]}, {"C1": {3}})
        c = rep.per_case["C1"]
        assert (c.true_positive, c.near_positive, c.false_positive,
                c.false_negative, c.true_negative) == (1, 1, 1, 0, 2)
        assert c.extra_lines == 2

    def test_fp_line_requires_no_tp_cover(self):
        meta = {
            "tp": QuestionMeta("tp", "C1", frozenset({2, 3}), True),
            "fp": QuestionMeta("fp", "C1", frozenset({2}), False),
        }
        rep = line_level({"tp", "fp"}, meta, {"C1": [1, 2, 3]}, {"C1": {3}})
        c = rep.per_case["C1"]
        assert (c.true_positive, c.near_positive, c.false_positive) == (1, 1, 0)

    def test_scope_excludes_unlocated_cases(self):
        meta = {
            "q1": QuestionMeta("q1", "C1", frozenset({1}), True),
            "q2": QuestionMeta("q2", "C2", frozenset({1}), True),
        }
        lines = {"C1": [1, 2], "C2": [1, 2]}
        faults = {"C1": {1}, "C2": {1}}
        rep = line_level({"q1"}, meta, lines, faults)
        assert set(rep.per_case) == {"C1"}
        assert rep.totals.total == 2
        both = line_level({"q1"}, meta, lines, faults, all_cases=True)
        assert set(both.per_case) == {"C1", "C2"}

    def test_metric_arithmetic_table6_and_table7(self):
        am3_totals = LineCategories(true_positive=10, near_positive=31, false_positive=2,
                                    false_negative=0, true_negative=168, total=211)
        assert am3_totals.extra_lines == 33
        assert am3_totals.percent_of_total == 16
        j4 = LineCategories(true_positive=2, near_positive=1, false_positive=0,
                            false_negative=0, true_negative=75, total=78)
        assert (j4.extra_lines, j4.percent_of_total) == (1, 1)
        assert j4.true_positive + j4.near_positive + j4.false_positive + \
            j4.false_negative + j4.true_negative == 78


def random_instance(seed):
    rng = random.Random(seed)
    n_cases = rng.randint(1, 3)
    n_questions = rng.randint(1, 10)
    meta = {}
    rows = []
    aid = 0
    for k in range(n_questions):
        qid = f"q{k}"
        case = f"C{rng.randrange(n_cases)}"
        meta[qid] = QuestionMeta(qid, case, frozenset({k}), rng.random() < 0.3)
        for _ in range(rng.randint(0, 20)):
            aid += 1
            option = rng.choice([Option.YES, Option.YES, Option.NO, Option.IDK])
            rows.append(row(qid, option, rng.randint(0, 50), f"a{aid:04d}", case=case))
    return meta, rows


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(40))
    def test_predictions_match_brute_force(self, seed):
        meta, rows = random_instance(seed)
        raw = [(r.question_id, r.option.value, r.submitted_at, r.answer_id) for r in rows]
        counts = naive_counts(raw)
        for qid in meta:
            counts.setdefault(qid, (0, 0, 0))
        tallies = tally(rows, question_ids=sorted(meta))
        case_of = {qid: m.case_id for qid, m in meta.items()}
        rng = random.Random(seed + 999)
        n1, n2, n3 = rng.randint(0, 20), rng.randint(0, 20), rng.randint(1, 10)
        assert predict(tallies, AggregationConfig(Mechanism.AM1, n1), meta) == \
            naive_am1(counts, n1)
        assert predict(tallies, AggregationConfig(Mechanism.AM2, n2), meta) == \
            naive_am2(counts, n2)
        assert predict(tallies, AggregationConfig(Mechanism.AM3, n3), meta) == \
            naive_am3(counts, case_of, n3)


class TestThresholdSweep:
    def test_perfect_tallies_shape(self):
        meta = {}
        rows = []
        for k in range(25):
            meta[f"f{k}"] = QuestionMeta(f"f{k}", "C1", frozenset({k}), True)
            rows += counts_rows(f"f{k}", 20, 0, 0)
        for k in range(10):
            meta[f"n{k}"] = QuestionMeta(f"n{k}", "C1", frozenset({100 + k}), False)
            rows += counts_rows(f"n{k}", 0, 20, 0)
        points = threshold_sweep(rows, Mechanism.AM2, meta, k=20)
        assert len(points) == 21
        for p in points:
            assert p.fp == 0
            assert p.tp == (25 if p.n < 20 else 0)

    def test_monotonicity_small(self):
        for seed in range(10):
            meta, rows = random_instance(seed + 500)
            if not rows:
                continue
            sizes_am2 = [len(predict(tally(rows, question_ids=sorted(meta)),
                                     AggregationConfig(Mechanism.AM2, n), meta))
                         for n in range(0, 21)]
            assert sizes_am2 == sorted(sizes_am2, reverse=True)
            sizes_am3 = [len(predict(tally(rows, question_ids=sorted(meta)),
                                     AggregationConfig(Mechanism.AM3, n), meta))
                         for n in range(1, 11)]
            assert sizes_am3 == sorted(sizes_am3)

    def test_sweep_equals_bruteforce_recount(self):
        rng = random.Random(77)
        meta, rows = random_instance(4242)
        raw = [(r.question_id, r.option.value, r.submitted_at, r.answer_id) for r in rows]
        counts = naive_counts(raw)
        for qid in meta:
            counts.setdefault(qid, (0, 0, 0))
        points = threshold_sweep(rows, Mechanism.AM2, meta, k=20)
        for p in points:
            predicted = naive_am2(counts, p.n)
            tp = len([q for q in predicted if meta[q].covers_fault])
            fp = len(predicted) - tp
            assert (p.tp, p.fp) == (tp, fp)


class TestMinReplication:
    def test_perfect_crowd_am2_needs_six(self, ref_corpus, qmeta, case_lines,
                                          fault_lines, perfect_run):
        res = min_replication_sweep(
            perfect_run.rows, AggregationConfig(Mechanism.AM2, 5), qmeta,
            case_lines, fault_lines, k=20)
        assert all(a == 6 for a in res.per_case.values())

    def test_k1_yes_located_at_one(self):
        meta = mk_meta({"q1": ("C1", True)})
        rows = [row("q1", Option.YES, 0, "a1")]
        res = min_replication_sweep(rows, AggregationConfig(Mechanism.AM2, 0), meta,
                                    {"C1": [1, 2]}, {"C1": {1}}, k=1)
        assert res.per_case == {"C1": 1}

    def test_not_located_marker(self):
        meta = mk_meta({"q1": ("C1", True)})
        rows = counts_rows("q1", 0, 5, 0)
        res = min_replication_sweep(rows, AggregationConfig(Mechanism.AM1, 0), meta,
                                    {"C1": [1]}, {"C1": {1}}, k=5)
        assert res.per_case == {"C1": None}

    def test_random_crowd_sometimes_misses(self):
        misses = 0
        for seed in range(60):
            rng = random.Random(seed)
            meta = mk_meta({"q1": ("C1", True), "q2": ("C1", False)})
            rows = []
            for k in range(10):
                rows.append(row("q1", rng.choice([Option.YES, Option.NO]), k, f"x{k}"))
                rows.append(row("q2", rng.choice([Option.YES, Option.NO]), k, f"y{k}"))
            res = min_replication_sweep(rows, AggregationConfig(Mechanism.AM1, 0), meta,
                                        {"C1": [1, 2]}, {"C1": {1}}, k=10)
            if res.per_case["C1"] is None:
                misses += 1
        assert 0 < misses < 60


class TestCutTime:
    def test_structure_on_simulated_run(self, qmeta, case_lines, fault_lines, perfect_run):
        rows_ct = cut_time_analysis(perfect_run.rows, AggregationConfig(Mechanism.AM3, 2),
                                    qmeta, case_lines, fault_lines, k=20)
        assert len(rows_ct) == 20
        for k, r in enumerate(rows_ct, start=1):
            assert r.answers_per_question == k
            assert r.answers == 129 * k
        times = [r.cut_time_hours for r in rows_ct]
        assert all(t is not None for t in times)
        assert times == sorted(times)

    def test_monotone_cut_times_toy(self):
        meta = mk_meta({"q1": ("C1", False), "q2": ("C1", False)})
        rows = [row("q1", Option.YES, 10, "a1"), row("q2", Option.YES, 5, "a2"),
                row("q1", Option.NO, 30, "a3"), row("q2", Option.NO, 20, "a4")]
        out = cut_time_analysis(rows, AggregationConfig(Mechanism.AM1, 0), meta,
                                {"C1": [1]}, {"C1": {1}}, k=2)
        assert out[0].cut_time_hours <= out[1].cut_time_hours

    def test_unreachable_rows_marked(self):
        meta = mk_meta({"q1": ("C1", False)})
        rows = [row("q1", Option.YES, 0, "a1")]
        out = cut_time_analysis(rows, AggregationConfig(Mechanism.AM1, 0), meta,
                                {"C1": [1]}, {"C1": {1}}, k=3)
        assert out[0].cut_time_hours is not None
        assert out[1].cut_time_hours is None and out[2].cut_time_hours is None
