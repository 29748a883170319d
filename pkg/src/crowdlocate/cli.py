"""crowdlocate command line interface."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import click

from . import corpus as corpus_mod
from .aggregation import (AggregationConfig, Mechanism, meta_from_question_sets,
                          threshold_sweep)
from .analysis import extract_elements
from .answers import parse_answers_csv
from .filters import BUILTIN_FILTERS, WorkerInfo, parse_filter, subcrowd_report
from .orchestrator import ExperimentConfig, compose_hits
from .questions import generate_all
from .simulator import (AnswerModel, PopulationModel, OBSERVED_ACCURACY,
                        constant_accuracy, run_experiment)


def _load_corpus(path: str | None):
    if path:
        return corpus_mod.load_corpus(path)
    return corpus_mod.load_reference_corpus()


def _write_csv(rows: list[list], header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_workers(path: str | None) -> dict[str, WorkerInfo]:
    if not path:
        return {}
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out[rec["worker_id"]] = WorkerInfo(
                worker_id=rec["worker_id"], profession=rec["profession"],
                score=int(rec["score"]),
                years_of_experience=float(rec.get("years_of_experience", 0) or 0))
    return out


@click.group()
def main():
    """Crowdsourced fault localization toolkit."""


@main.command()
@click.argument("corpus_file", required=False)
@click.option("--case", "case_id", default=None, help="restrict to one case id")
def elements(corpus_file, case_id):
    """Emit the extracted code-element table as CSV."""
    corp = _load_corpus(corpus_file)
    rows = []
    for case in corp.cases:
        if case_id and case.case_id != case_id:
            continue
        for e in extract_elements(case):
            span = sorted(e.span)
            rows.append([e.element_id, case.case_id, e.kind.value, e.name,
                         span[0], span[-1], " ".join(map(str, span))])
    click.echo(_write_csv(rows, ["element_id", "case_id", "kind", "name",
                                 "min_line", "max_line", "span"]), nl=False)


@main.command()
@click.argument("corpus_file", required=False)
def questions(corpus_file):
    """Emit the instantiated question table as CSV."""
    corp = _load_corpus(corpus_file)
    sets = generate_all(corp)
    rows = []
    for case_id in sorted(sets):
        for q in sets[case_id].questions:
            rows.append([q.question_id, q.case_id, q.element.kind.value, q.element.name,
                         min(q.covered_lines), max(q.covered_lines),
                         len(q.covered_lines), str(q.covers_fault).lower()])
    click.echo(_write_csv(rows, ["question_id", "case_id", "kind", "name", "min_line",
                                 "max_line", "covered_line_count", "covers_fault"]),
               nl=False)


@main.group()
def hits():
    """HIT composition and live status."""


@hits.command("compose")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--corpus", "corpus_file", default=None)
@click.option("--hit-size", type=int, default=3, show_default=True)
def hits_compose(seed, corpus_file, hit_size):
    corp = _load_corpus(corpus_file)
    cfg = ExperimentConfig(hit_size=hit_size)
    sets = generate_all(corp)
    composed, warnings = compose_hits(sets, cfg, seed)
    rows = [[h.hit_id, h.case_id, len(h.question_ids), " ".join(h.question_ids)]
            for h in composed]
    click.echo(_write_csv(rows, ["hit_id", "case_id", "size", "question_ids"]), nl=False)
    for w in warnings:
        click.echo(f"warning: {w}", err=True)


@hits.command("status")
@click.option("--store", "store_dir", required=True)
@click.option("--corpus", "corpus_file", default=None)
@click.option("--seed", type=int, default=7)
@click.option("--k", type=int, default=20)
def hits_status(store_dir, corpus_file, seed, k):
    from .service import EventLog
    from .orchestrator import Experiment
    corp = _load_corpus(corpus_file)
    events, problem = EventLog(Path(store_dir) / "events.jsonl").read_all()
    exp = Experiment.replay(generate_all(corp), ExperimentConfig(replication_k=k),
                            seed, events)
    click.echo(json.dumps(exp.progress(), indent=2))
    if problem:
        click.echo(f"warning: {problem}", err=True)


@main.command()
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--k", type=int, default=20, show_default=True)
@click.option("--acc-preset", type=click.Choice(["table28", "perfect", "coinflip"]),
              default="table28", show_default=True)
@click.option("--model-config", "model_config", default=None,
              help="JSON preset with population and answer models (overrides --acc-preset)")
@click.option("--dropout", is_flag=True, default=False)
@click.option("--corpus", "corpus_file", default=None)
@click.option("--out", "out_file", default="answers.csv", show_default=True)
@click.option("--workers-out", default=None, help="also dump worker attributes CSV")
@click.option("--events-out", default=None, help="also dump the event log as JSONL")
def simulate(seed, k, acc_preset, model_config, dropout, corpus_file, out_file,
             workers_out, events_out):
    """Run a full synthetic experiment and write the answers CSV."""
    corp = _load_corpus(corpus_file)
    if model_config:
        from .simulator import load_model_config
        pop_model, ans_model = load_model_config(model_config)
    else:
        acc = {"table28": OBSERVED_ACCURACY, "perfect": constant_accuracy(1.0),
               "coinflip": constant_accuracy(0.5)}[acc_preset]
        pop_model = PopulationModel()
        ans_model = AnswerModel(accuracy=acc,
                                p_idk=0.0 if acc_preset == "perfect" else 0.12)
    result = run_experiment(corp, ExperimentConfig(replication_k=k), pop_model,
                            ans_model, seed, dropout=dropout)
    Path(out_file).write_text(result.csv_text, encoding="utf-8")
    click.echo(f"{len(result.rows)} answers from {len(result.workers)} workers "
               f"over {len(result.experiment.hits_list)} HITs -> {out_file}")
    if workers_out:
        rows = [[w.worker_id, w.profession, w.score, w.years_of_experience]
                for w in result.workers.values()]
        Path(workers_out).write_text(
            _write_csv(rows, ["worker_id", "profession", "score", "years_of_experience"]),
            encoding="utf-8")
    if events_out:
        with open(events_out, "w", encoding="utf-8") as fh:
            for e in result.experiment.events:
                fh.write(json.dumps(e, separators=(",", ":")) + "\n")


def _report_lines(result, cfg):
    rep = result.report
    out = [
        f"mechanism {cfg.mechanism.value} n={cfg.n}  filter: {result.filter_text}",
        f"answers {result.retained_answers}  workers {result.workers}",
        f"question level: TP {rep.overall.tp}  FP {rep.overall.fp}  "
        f"FN {rep.overall.fn}  TN {rep.overall.tn}",
        f"precision {_pct(rep.overall.precision)}  recall {_pct(rep.overall.recall)}  "
        f"(macro {_pct(rep.macro_precision)}/{_pct(rep.macro_recall)})",
        f"faults located {rep.faults_located} of {len(rep.per_case)}: "
        f"{', '.join(rep.located_cases) or '-'}",
    ]
    if rep.line_report is not None:
        t = rep.line_report.totals
        out.append(
            f"line level (located cases): tp {t.true_positive}  near {t.near_positive}  "
            f"fp {t.false_positive}  fn {t.false_negative}  tn {t.true_negative}  "
            f"total {t.total}  extra {t.extra_lines} ({t.percent_of_total}%)")
    return out


def _pct(v):
    return "-" if v is None else f"{100 * v:.1f}%"


def _case_csv(rep):
    rows = []
    for cid in sorted(rep.per_case):
        m = rep.per_case[cid]
        lc = rep.line_report.per_case.get(cid) if rep.line_report else None
        rows.append([cid, m.tp, m.fp, m.fn, m.tn,
                     "" if m.precision is None else f"{m.precision:.4f}",
                     "" if m.recall is None else f"{m.recall:.4f}",
                     lc.extra_lines if lc else "", lc.percent_of_total if lc else ""])
    return _write_csv(rows, ["case_id", "tp", "fp", "fn", "tn", "precision", "recall",
                             "extra_lines", "percent_of_total"])


@main.command("aggregate")
@click.option("--answers", "answers_file", required=True)
@click.option("--mechanism", type=click.Choice(["AM1", "AM2", "AM3"]), required=True)
@click.option("--n", type=int, required=True)
@click.option("--limit", type=int, default=None, help="use only the first a answers per question")
@click.option("--filter", "filter_spec", default=None)
@click.option("--workers", "workers_file", default=None)
@click.option("--corpus", "corpus_file", default=None)
@click.option("--all-cases", is_flag=True, default=False,
              help="line report over all cases, not only located ones")
@click.option("--csv", "csv_out", default=None, help="write the per-case CSV here")
def aggregate_cmd(answers_file, mechanism, n, limit, filter_spec, workers_file,
                  corpus_file, all_cases, csv_out):
    """Aggregate an answers CSV into a fault-prediction report."""
    corp = _load_corpus(corpus_file)
    sets = generate_all(corp)
    meta = meta_from_question_sets(sets)
    rows = parse_answers_csv(Path(answers_file).read_text(encoding="utf-8"))
    cfg = AggregationConfig(Mechanism(mechanism), n)
    case_lines = {c.case_id: c.line_numbers() for c in corp.cases}
    fault_lines = {c.case_id: set(c.fault_lines) for c in corp.cases}
    spec = filter_spec or "true"
    if spec in BUILTIN_FILTERS:
        spec = BUILTIN_FILTERS[spec]
    result = subcrowd_report(rows, spec, cfg, meta, _load_workers(workers_file),
                             case_lines=case_lines, fault_lines=fault_lines,
                             limit=limit)
    if all_cases and result.report.line_report is not None:
        from .aggregation import line_level, predict as _predict
        tallies = result.report.tallies
        predicted = _predict(tallies, cfg, meta)
        result.report.line_report = line_level(predicted, meta, case_lines, fault_lines,
                                               all_cases=True)
        result.lines_to_inspect = result.report.line_report.totals.extra_lines
    for line in _report_lines(result, cfg):
        click.echo(line)
    if csv_out:
        Path(csv_out).write_text(_case_csv(result.report), encoding="utf-8")


@main.command()
@click.option("--answers", "answers_file", required=True)
@click.option("--mechanism", type=click.Choice(["AM1", "AM2", "AM3"]), required=True)
@click.option("--corpus", "corpus_file", default=None)
@click.option("--k", type=int, default=None)
def sweep(answers_file, mechanism, corpus_file, k):
    """Threshold sweep: one (n, TP, TN, FP, FN) CSV row per n."""
    corp = _load_corpus(corpus_file)
    meta = meta_from_question_sets(generate_all(corp))
    rows = parse_answers_csv(Path(answers_file).read_text(encoding="utf-8"))
    points = threshold_sweep(rows, Mechanism(mechanism), meta, k=k)
    click.echo(_write_csv([[p.n, p.tp, p.tn, p.fp, p.fn] for p in points],
                          ["n", "tp", "tn", "fp", "fn"]), nl=False)


@main.command("filter")
@click.option("--answers", "answers_file", required=True)
@click.option("--spec", "spec_text", default=None)
@click.option("--builtin", "builtin_name", default=None)
@click.option("--mechanism", type=click.Choice(["AM1", "AM2", "AM3"]), default="AM3")
@click.option("--n", type=int, default=2)
@click.option("--workers", "workers_file", default=None)
@click.option("--corpus", "corpus_file", default=None)
@click.option("--list", "list_builtins", is_flag=True, default=False)
def filter_cmd(answers_file, spec_text, builtin_name, mechanism, n, workers_file,
               corpus_file, list_builtins):
    """Apply a subcrowd filter and re-aggregate."""
    if list_builtins:
        for name, text in BUILTIN_FILTERS.items():
            click.echo(f"{name}: {text}")
        return
    if bool(spec_text) == bool(builtin_name):
        raise click.UsageError("exactly one of --spec or --builtin is required")
    if builtin_name:
        if builtin_name not in BUILTIN_FILTERS:
            raise click.UsageError(f"unknown builtin {builtin_name!r}; try --list")
        spec_text = BUILTIN_FILTERS[builtin_name]
    spec = parse_filter(spec_text)
    corp = _load_corpus(corpus_file)
    sets = generate_all(corp)
    meta = meta_from_question_sets(sets)
    rows = parse_answers_csv(Path(answers_file).read_text(encoding="utf-8"))
    cfg = AggregationConfig(Mechanism(mechanism), n)
    case_lines = {c.case_id: c.line_numbers() for c in corp.cases}
    fault_lines = {c.case_id: set(c.fault_lines) for c in corp.cases}
    result = subcrowd_report(rows, spec, cfg, meta, _load_workers(workers_file),
                             case_lines=case_lines, fault_lines=fault_lines)
    for line in _report_lines(result, cfg):
        click.echo(line)


@main.command("cut-times")
@click.option("--answers", "answers_file", required=True)
@click.option("--mechanism", type=click.Choice(["AM1", "AM2", "AM3"]), default="AM3")
@click.option("--n", type=int, default=2)
@click.option("--k", type=int, default=20, show_default=True)
@click.option("--corpus", "corpus_file", default=None)
def cut_times(answers_file, mechanism, n, k, corpus_file):
    """Speed analysis: cut time, workers, answers, and outcomes per answer level."""
    from .aggregation import cut_time_analysis
    corp = _load_corpus(corpus_file)
    meta = meta_from_question_sets(generate_all(corp))
    rows = parse_answers_csv(Path(answers_file).read_text(encoding="utf-8"))
    case_lines = {c.case_id: c.line_numbers() for c in corp.cases}
    fault_lines = {c.case_id: set(c.fault_lines) for c in corp.cases}
    out = cut_time_analysis(rows, AggregationConfig(Mechanism(mechanism), n), meta,
                            case_lines, fault_lines, k=k)
    table = [["" if r.cut_time_hours is None else f"{r.cut_time_hours:.1f}",
              r.answers_per_question, r.workers, r.answers, r.faults_located,
              r.lines_to_inspect] for r in out]
    click.echo(_write_csv(table, ["cut_time_hours", "answers_per_question", "workers",
                                  "answers", "faults_located", "lines_to_inspect"]),
               nl=False)


@main.command("min-replication")
@click.option("--answers", "answers_file", required=True)
@click.option("--mechanism", type=click.Choice(["AM1", "AM2", "AM3"]), default="AM2")
@click.option("--n", type=int, default=5)
@click.option("--k", type=int, default=20, show_default=True)
@click.option("--corpus", "corpus_file", default=None)
def min_replication(answers_file, mechanism, n, k, corpus_file):
    """Minimal answers-per-question at which each case's fault is located."""
    from .aggregation import min_replication_sweep
    corp = _load_corpus(corpus_file)
    meta = meta_from_question_sets(generate_all(corp))
    rows = parse_answers_csv(Path(answers_file).read_text(encoding="utf-8"))
    case_lines = {c.case_id: c.line_numbers() for c in corp.cases}
    fault_lines = {c.case_id: set(c.fault_lines) for c in corp.cases}
    res = min_replication_sweep(rows, AggregationConfig(Mechanism(mechanism), n), meta,
                                case_lines, fault_lines, k=k)
    table = [[cid, "not located" if a is None else a]
             for cid, a in sorted(res.per_case.items())]
    click.echo(_write_csv(table, ["case_id", "min_answers_per_question"]), nl=False)
    t = res.line_report.totals
    click.echo(f"line categories at the per-case minima: tp {t.true_positive} "
               f"near {t.near_positive} fp {t.false_positive} total {t.total} "
               f"extra {t.extra_lines} ({t.percent_of_total}%)", err=True)


@main.command()
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--corpus", "corpus_file", default=None)
@click.option("--k", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--store", "store_dir", default=None, help="event-log directory for durability")
@click.option("--static", "static_dir", default=None, help="worker UI bundle directory")
def serve(port, host, corpus_file, k, seed, store_dir, static_dir):
    """Serve the live-experiment HTTP API (and the worker UI when built)."""
    import uvicorn
    from .service import create_app
    app = create_app(corpus_path=corpus_file, k=k, seed=seed, store_dir=store_dir,
                     static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
