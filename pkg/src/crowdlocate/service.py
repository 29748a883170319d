"""HTTP service for live experiments: worker flow, admin analytics, durable state.

All mutations funnel through the experiment's single writer; state is durable
via an append-only JSONL event log that is replayed on startup. Worker
endpoints authenticate with an opaque session token; admin endpoints with the
CROWDLOCATE_ADMIN_TOKEN environment secret. No worker-facing response ever
carries fault ground truth.
"""

from __future__ import annotations

import json
import os
import secrets
import time
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException
from fastapi.responses import HTMLResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .aggregation import AggregationConfig, Mechanism, meta_from_question_sets
from .answers import AnswerValidationError, Option, export_answers
from .corpus import Corpus, load_corpus
from .filters import BUILTIN_FILTERS, FilterError, subcrowd_report
from .orchestrator import (AlreadyAttemptedError, AuthorizationError, Experiment,
                           ExperimentConfig, ExpiredError, OrchestrationError,
                           QUIT_REASONS, SequencingError)
from .questions import ANSWER_OPTIONS, generate_all


class EventLog:
    """Append-only JSONL log; replay stops at the first corrupt record."""

    def __init__(self, path: Path):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = None

    def append(self, event: dict) -> None:
        if self._fh is None:
            self._fh = open(self.path, "a", encoding="utf-8")
        self._fh.write(json.dumps(event, separators=(",", ":")) + "\n")
        self._fh.flush()

    def read_all(self) -> tuple[list[dict], str | None]:
        if not self.path.exists():
            return [], None
        events, problem = [], None
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError:
                    problem = f"corrupt record at line {lineno}; recovered {len(events)} events"
                    break
        return events, problem


class ServiceState:
    def __init__(self, corpus: Corpus, cfg: ExperimentConfig, seed: int,
                 store_dir: Path | None, clock=time.time):
        self.corpus = corpus
        self.cfg = cfg
        self.clock = clock
        self.question_sets = generate_all(corpus)
        self.meta = meta_from_question_sets(self.question_sets)
        self.case_lines = {c.case_id: c.line_numbers() for c in corpus.cases}
        self.fault_lines = {c.case_id: set(c.fault_lines) for c in corpus.cases}
        self.log = EventLog(store_dir / "events.jsonl") if store_dir else None
        self.recovery_report: str | None = None
        if self.log is not None:
            events, problem = self.log.read_all()
            self.recovery_report = problem
            self.experiment = Experiment.replay(
                self.question_sets, cfg, seed, events, event_sink=self.log.append)
        else:
            self.experiment = Experiment(self.question_sets, cfg, seed)
        self.tokens: dict[str, str] = {}  # token -> worker_id
        for w in self.experiment.workers.values():
            # tokens are worker ids issued by us; restore the mapping on replay
            self.tokens[w.worker_id] = w.worker_id


def _error(status: int, detail: str):
    raise HTTPException(status_code=status, detail=detail)


def create_app(corpus: Corpus | None = None, corpus_path: str | None = None,
               k: int = 20, seed: int = 7, store_dir: str | None = None,
               static_dir: str | None = None, clock=time.time,
               cfg: ExperimentConfig | None = None) -> FastAPI:
    if corpus is None:
        if corpus_path is None:
            from .corpus import load_reference_corpus
            corpus = load_reference_corpus()
        else:
            corpus = load_corpus(corpus_path)
    cfg = cfg or ExperimentConfig(replication_k=k)
    state = ServiceState(corpus, cfg, seed,
                         Path(store_dir) if store_dir else None, clock=clock)
    app = FastAPI(title="crowdlocate", docs_url=None, redoc_url=None)
    app.state.service = state

    def now() -> float:
        return state.clock()

    def worker_for(token: str | None) -> str:
        if not token or token not in state.tokens:
            _error(401, "missing or unknown session token")
        return state.tokens[token]

    def require_admin(token: str | None) -> None:
        expected = os.environ.get("CROWDLOCATE_ADMIN_TOKEN", "")
        if not expected or token != expected:
            _error(401, "admin token required")

    def translate(exc: Exception):
        if isinstance(exc, AuthorizationError):
            _error(403, str(exc))
        if isinstance(exc, ExpiredError):
            _error(410, str(exc))
        if isinstance(exc, (SequencingError, AlreadyAttemptedError)):
            _error(409, str(exc))
        if isinstance(exc, (AnswerValidationError, FilterError)):
            _error(422, str(exc))
        if isinstance(exc, (KeyError, OrchestrationError)):
            _error(404, f"unknown resource: {exc}")
        raise exc

    def own_assignment(assignment_id: str, worker_id: str):
        a = state.experiment.assignments.get(assignment_id)
        if a is None:
            _error(404, "unknown assignment")
        if a.worker_id != worker_id:
            _error(403, "assignment belongs to a different worker")
        return a

    # -- worker session flow ------------------------------------------------
    @app.post("/session")
    def create_session(body: dict):
        if not body.get("consent"):
            _error(422, "consent is required")
        token = secrets.token_hex(16)
        state.tokens[token] = token
        state.experiment.register_worker(token, now=now())
        return {"token": token, "steps": ["consent", "demographics", "qualification", "questions"]}

    @app.post("/session/demographics")
    def demographics(body: dict, x_worker_token: str | None = Header(default=None)):
        wid = worker_for(x_worker_token)
        try:
            state.experiment.set_demographics(wid, body, now=now())
        except Exception as exc:
            translate(exc)
        return {"ok": True}

    @app.get("/session/qualification")
    def get_qualification(x_worker_token: str | None = Header(default=None)):
        wid = worker_for(x_worker_token)
        try:
            return state.experiment.qualification_test_for(wid, now=now())
        except Exception as exc:
            translate(exc)

    @app.post("/session/qualification")
    def post_qualification(body: dict, x_worker_token: str | None = Header(default=None)):
        wid = worker_for(x_worker_token)
        try:
            return state.experiment.grade_qualification(
                wid, body.get("test_id", ""), list(body.get("responses", [])), now=now())
        except Exception as exc:
            translate(exc)

    @app.get("/session/next")
    def next_assignment(x_worker_token: str | None = Header(default=None)):
        wid = worker_for(x_worker_token)
        exp = state.experiment
        w = exp.workers[wid]
        if w.active_assignment_id is not None:
            a = exp.assignments[w.active_assignment_id]
            return {"status": "active", "assignment_id": a.assignment_id,
                    "answered": len(a.answer_ids),
                    "of": len(exp.hits[a.hit_id].question_ids)}
        try:
            a = exp.next_assignment(wid, now=now())
        except Exception as exc:
            translate(exc)
        if a is None:
            return {"status": "done"}
        return {"status": "assigned", "assignment_id": a.assignment_id,
                "answered": 0, "of": len(exp.hits[a.hit_id].question_ids)}

    @app.get("/assignment/{assignment_id}/question")
    def get_question(assignment_id: str, x_worker_token: str | None = Header(default=None)):
        wid = worker_for(x_worker_token)
        a = own_assignment(assignment_id, wid)
        exp = state.experiment
        try:
            served = exp.serve_question(assignment_id, now=now())
        except Exception as exc:
            translate(exc)
        q = exp.questions[served["question_id"]]
        case = state.corpus.case(q.case_id)
        context = [
            {"name": m.name, "highlight_line": m.highlight_line, "source": m.source}
            for m in case.context_methods
        ]
        secondary = sorted({m.highlight_line for m in case.context_methods})
        return {
            "assignment_id": assignment_id,
            "question_id": q.question_id,
            "question_text": q.text,
            "options": list(ANSWER_OPTIONS),
            "progress": {"answered": served["order_in_hit"] - 1, "of": served["of"]},
            "failing_test": case.failing_test,
            "failure_message": case.failure_message,
            "source_lines": [{"line": s.line, "text": s.text} for s in case.source_lines],
            "highlight": {"bright": sorted(q.covered_lines), "secondary": secondary},
            "context_methods": context,
            "confidence_scale": [1, 2, 3, 4, 5],
            "explanation_required": True,
        }

    @app.post("/assignment/{assignment_id}/answer")
    def post_answer(assignment_id: str, body: dict,
                    x_worker_token: str | None = Header(default=None)):
        wid = worker_for(x_worker_token)
        own_assignment(assignment_id, wid)
        try:
            option = Option(str(body.get("option", "")).upper())
        except ValueError:
            _error(422, "option must be YES, NO, or IDK")
        try:
            row = state.experiment.submit_answer(
                assignment_id, body.get("question_id", ""), option,
                int(body.get("confidence", 0)), str(body.get("explanation", "")),
                now=now())
        except Exception as exc:
            translate(exc)
        return {"answer_id": row.answer_id, "order_in_hit": row.order_in_hit,
                "awaiting_difficulty": True}

    @app.post("/assignment/{assignment_id}/difficulty")
    def post_difficulty(assignment_id: str, body: dict,
                        x_worker_token: str | None = Header(default=None)):
        wid = worker_for(x_worker_token)
        own_assignment(assignment_id, wid)
        try:
            answer_id = state.experiment.rate_difficulty(
                assignment_id, int(body.get("difficulty", 0)), now=now())
        except Exception as exc:
            translate(exc)
        return {"answer_id": answer_id, "ok": True}

    @app.post("/assignment/{assignment_id}/quit")
    def post_quit(assignment_id: str, body: dict,
                  x_worker_token: str | None = Header(default=None)):
        wid = worker_for(x_worker_token)
        own_assignment(assignment_id, wid)
        reason = body.get("reason", "")
        if reason not in QUIT_REASONS:
            _error(422, f"reason must be one of {list(QUIT_REASONS)}")
        try:
            state.experiment.quit_assignment(assignment_id, reason, now=now())
        except Exception as exc:
            translate(exc)
        return {"ok": True}

    @app.post("/assignment/{assignment_id}/complete")
    def post_complete(assignment_id: str, body: dict | None = None,
                      x_worker_token: str | None = Header(default=None)):
        wid = worker_for(x_worker_token)
        own_assignment(assignment_id, wid)
        feedback = str((body or {}).get("feedback", ""))
        try:
            code = state.experiment.complete_assignment(assignment_id, now=now(),
                                                        feedback=feedback)
        except Exception as exc:
            translate(exc)
        return {"completion_code": code}

    @app.post("/codes/validate")
    def validate_code(body: dict):
        return state.experiment.validate_completion_code(str(body.get("code", "")), now=now())

    # -- admin --------------------------------------------------------------
    @app.get("/admin/progress")
    def admin_progress(x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        out = state.experiment.progress()
        out["recovery_report"] = state.recovery_report
        return out

    @app.get("/admin/report")
    def admin_report(mechanism: str = "AM3", n: int = 2, filter: str | None = None,
                     limit: int | None = None,
                     x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        try:
            cfg_ = AggregationConfig(Mechanism(mechanism.upper()), n)
        except ValueError:
            _error(422, "mechanism must be AM1, AM2, or AM3")
        rows = state.experiment.answer_rows()
        spec = filter or "true"
        if spec in BUILTIN_FILTERS:
            spec = BUILTIN_FILTERS[spec]
        try:
            result = subcrowd_report(
                rows, spec, cfg_, state.meta, state.experiment.worker_infos(),
                case_lines=state.case_lines, fault_lines=state.fault_lines)
        except FilterError as exc:
            _error(422, str(exc))
        rep = result.report
        return {
            "filter": result.filter_text,
            "mechanism": cfg_.mechanism.value,
            "n": cfg_.n,
            "answers": result.retained_answers,
            "workers": result.workers,
            "faults_located": rep.faults_located,
            "located_cases": rep.located_cases,
            "overall": {"tp": rep.overall.tp, "fp": rep.overall.fp,
                        "fn": rep.overall.fn, "tn": rep.overall.tn,
                        "precision": rep.overall.precision, "recall": rep.overall.recall},
            "macro": {"precision": rep.macro_precision, "recall": rep.macro_recall},
            "lines_to_inspect": result.lines_to_inspect,
        }

    @app.get("/admin/export.csv")
    def admin_export(x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        csv_text = export_answers(state.experiment.answer_rows())
        return PlainTextResponse(csv_text, media_type="text/csv")

    # -- static UI ------------------------------------------------------------
    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index():
            return ("<html><body><h1>crowdlocate</h1>"
                    "<p>No worker UI bundle is installed; the HTTP API is live.</p>"
                    "</body></html>")

    return app
