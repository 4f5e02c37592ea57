"""Operator entry points: ingestion, one-shot queries, RAG, evaluation, serving.

Exit codes: 0 success, 2 validation error, 3 backend failure, 4 cassette
miss. Every failure prints one machine-parseable line to stderr:
``error: {"kind": ..., "message": ...}``.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .engine import Engine, EngineConfig, EngineRunError
from .evaluation import (
    EvalError,
    apply_labels,
    export_report,
    load_corpus,
    load_outcomes,
    load_ratings,
    run_corpus,
    save_outcomes,
)
from .llm import (
    Backend,
    CassetteMissError,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    ScriptedBackend,
    ScriptedExhaustedError,
    RemoteBackendError,
)
from .rag import RagPipeline
from .store import SensorStore
from .streams import StreamKind, UnknownStreamError
from .timeutil import TimeRange, parse_instant

EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_CASSETTE_MISS = 4

ENV_BASE_URL = "SENSEMAKER_LLM_BASE_URL"
ENV_API_KEY = "SENSEMAKER_LLM_API_KEY"
ENV_MODEL = "SENSEMAKER_LLM_MODEL"


class CliFailure(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _fail(kind: str, message: str, code: int) -> CliFailure:
    return CliFailure(kind, message, code)


def _classify(exc: Exception) -> CliFailure:
    cause = exc.__cause__ if isinstance(exc, EngineRunError) else exc
    if isinstance(cause, CassetteMissError):
        return _fail("cassette-miss", str(cause), EXIT_CASSETTE_MISS)
    if isinstance(cause, (ScriptedExhaustedError, RemoteBackendError)):
        return _fail("backend", str(cause), EXIT_BACKEND)
    if isinstance(exc, EngineRunError):
        return _fail("run-failed", str(exc), EXIT_BACKEND)
    if isinstance(exc, (UnknownStreamError, EvalError, ValueError)):
        return _fail("validation", str(exc), EXIT_VALIDATION)
    return _fail(type(exc).__name__, str(exc), EXIT_BACKEND)


def _run_guarded(fn):
    try:
        fn()
    except CliFailure as failure:
        click.echo("error: " + json.dumps(
            {"kind": failure.kind, "message": str(failure)}), err=True)
        sys.exit(failure.code)
    except Exception as exc:  # noqa: BLE001 - single funnel for exit codes
        failure = _classify(exc)
        click.echo("error: " + json.dumps(
            {"kind": failure.kind, "message": str(failure)}), err=True)
        sys.exit(failure.code)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    obj = json.loads(Path(path).read_text())
    if not isinstance(obj, dict):
        raise _fail("validation", "config file must hold a JSON object",
                    EXIT_VALIDATION)
    return obj


def _engine_config(cfg: dict, max_iter: int | None, sandbox: str | None) -> EngineConfig:
    config = EngineConfig()
    if "max_iterations" in cfg:
        config.max_iterations = int(cfg["max_iterations"])
    if max_iter is not None:
        config.max_iterations = max_iter
    if "codegen_attempts" in cfg:
        config.agent.codegen_attempts = int(cfg["codegen_attempts"])
    if "model" in cfg:
        config.agent.model = cfg["model"]
    if "temperature" in cfg:
        config.agent.temperature = float(cfg["temperature"])
    if "top_p" in cfg:
        config.agent.top_p = float(cfg["top_p"])
    if "sandbox" in cfg:
        config.sandbox_kind = cfg["sandbox"]
    if sandbox:
        config.sandbox_kind = sandbox
    if "display_tz" in cfg:
        config.display_tz = cfg["display_tz"]
    return config


def _build_backend(backend: str, cassette: str | None, script: str | None,
                   record: str | None, cfg: dict) -> Backend:
    if backend == "remote":
        base_url = cfg.get("base_url") or os.environ.get(ENV_BASE_URL)
        if not base_url:
            raise _fail("validation",
                        f"remote backend needs {ENV_BASE_URL} or config base_url",
                        EXIT_VALIDATION)
        inner: Backend = RemoteBackend(base_url,
                                       api_key=os.environ.get(ENV_API_KEY))
    elif backend == "scripted":
        if not script:
            raise _fail("validation", "--script FILE is required with "
                        "--backend scripted", EXIT_VALIDATION)
        responses = json.loads(Path(script).read_text())
        if not isinstance(responses, list):
            raise _fail("validation", "script file must hold a JSON array of "
                        "response strings", EXIT_VALIDATION)
        inner = ScriptedBackend(responses)
    elif backend == "replay":
        if not cassette:
            raise _fail("validation", "--cassette FILE is required with "
                        "--backend replay", EXIT_VALIDATION)
        inner = ReplayBackend(cassette)
    else:
        raise _fail("validation", f"unknown backend {backend!r}", EXIT_VALIDATION)
    if record:
        return RecordingBackend(inner, record)
    return inner


def _model_name(cfg: dict) -> str:
    return cfg.get("model") or os.environ.get(ENV_MODEL) or "gpt-4o"


_backend_options = [
    click.option("--backend", type=click.Choice(["remote", "scripted", "replay"]),
                 default="remote", show_default=True),
    click.option("--cassette", type=click.Path(), default=None,
                 help="Cassette file for --backend replay."),
    click.option("--script", type=click.Path(exists=True), default=None,
                 help="JSON array of canned responses for --backend scripted."),
    click.option("--record", type=click.Path(), default=None,
                 help="Record all exchanges to this cassette file."),
    click.option("--config", "config_path", type=click.Path(exists=True),
                 default=None, help="JSON config overriding engine defaults."),
]


def backend_options(fn):
    for option in reversed(_backend_options):
        fn = option(fn)
    return fn


@click.group()
def main():
    """Sensemaking engine for passive sensing data."""


@main.command()
@click.option("--stream", "stream_name", default=None, help="Stream name for --file.")
@click.option("--file", "file_path", type=click.Path(exists=True), default=None)
@click.option("--manifest", type=click.Path(exists=True), default=None,
              help="JSON array of {stream, path} entries.")
@click.option("--data-dir", type=click.Path(), required=True)
@click.option("--tz", default="UTC", show_default=True)
def ingest(stream_name, file_path, manifest, data_dir, tz):
    """Ingest JSONL sensing records into the datastore."""
    def body():
        store = SensorStore(Path(data_dir), tz=tz)
        if manifest:
            reports = store.ingest_manifest(Path(manifest))
        elif stream_name and file_path:
            stream = StreamKind.parse(stream_name)
            lines = Path(file_path).read_text().splitlines()
            reports = {f"{stream.value}:{Path(file_path).name}":
                       store.ingest_stream(stream, lines)}
        else:
            raise _fail("validation",
                        "provide --manifest or both --stream and --file",
                        EXIT_VALIDATION)
        total = 0
        for name, report in reports.items():
            total += report.accepted
            click.echo(f"{name}: accepted={report.accepted} "
                       f"duplicates={report.duplicates} rejected={report.rejected}")
            for rejection in report.rejections:
                click.echo(f"  line {rejection.line}: {rejection.reason}")
        click.echo(f"total accepted: {total}")
    _run_guarded(body)


@main.command()
@click.option("--user", default="", help="User id (recorded with the run).")
@click.option("--query", required=True)
@click.option("--present", default="", help="Presentation instructions.")
@click.option("--max-iter", type=int, default=None)
@click.option("--sandbox", type=click.Choice(["subprocess", "docker"]), default=None)
@click.option("--data-dir", type=click.Path(), required=True)
@click.option("--tz", default="UTC", show_default=True)
@click.option("--trace-out", type=click.Path(), default=None,
              help="Write the run trace as JSONL to this path.")
@backend_options
def ask(user, query, present, max_iter, sandbox, data_dir, tz, trace_out,
        backend, cassette, script, record, config_path):
    """Run one sensemaking query and print the answer."""
    def body():
        cfg = _load_config(config_path)
        config = _engine_config(cfg, max_iter, sandbox)
        config.display_tz = tz if tz != "UTC" else config.display_tz
        config.agent.model = _model_name(cfg)
        llm = _build_backend(backend, cassette, script, record, cfg)
        store = SensorStore(Path(data_dir), tz=config.display_tz)
        engine = Engine(llm, store, config=config)
        try:
            result = engine.run(query, present)
        finally:
            if isinstance(llm, RecordingBackend):
                llm.close()
        if trace_out:
            with open(trace_out, "w") as fh:
                for event in result.trace:
                    fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
        click.echo(f"status: {result.state.status.value}")
        click.echo(result.answer.text)
    _run_guarded(body)


@main.command()
@click.option("--user", required=True)
@click.option("--query", required=True)
@click.option("--start", required=True, help="Range start (epoch or wall clock).")
@click.option("--end", required=True, help="Range end (exclusive).")
@click.option("--k", type=int, default=None)
@click.option("--window", type=float, default=None, help="Chunk window seconds.")
@click.option("--data-dir", type=click.Path(), required=True)
@click.option("--tz", default="UTC", show_default=True)
@backend_options
def rag(user, query, start, end, k, window, data_dir, tz,
        backend, cassette, script, record, config_path):
    """Answer one query with the retrieval-augmented baseline."""
    def body():
        cfg = _load_config(config_path)
        llm = _build_backend(backend, cassette, script, record, cfg)
        store = SensorStore(Path(data_dir), tz=tz)
        pipeline = RagPipeline(store, llm, model=_model_name(cfg),
                               window=window or float(cfg.get("window", 3600.0)),
                               k=k or int(cfg.get("k", 8)))
        rng = TimeRange(parse_instant(start, tz), parse_instant(end, tz))
        try:
            answer = pipeline.answer(query, user, rng)
        finally:
            if isinstance(llm, RecordingBackend):
                llm.close()
        click.echo(answer.text)
        click.echo(f"chunks: {answer.chunk_ids}")
        if answer.ungrounded:
            click.echo(f"ungrounded numbers: {answer.ungrounded}")
    _run_guarded(body)


@main.group()
def eval():
    """Evaluation harness: corpus runs and metric reports."""


@eval.command("run")
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--repetitions", type=int, default=3, show_default=True)
@click.option("--systems", default="engine", show_default=True,
              help="Comma-separated subset of engine,rag.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--data-dir", type=click.Path(), required=True)
@click.option("--tz", default="UTC", show_default=True)
@click.option("--sandbox", type=click.Choice(["subprocess", "docker"]), default=None)
@backend_options
def eval_run(corpus, repetitions, systems, out_path, jobs, data_dir, tz, sandbox,
             backend, cassette, script, record, config_path):
    """Run a query corpus through the selected systems."""
    def body():
        cfg = _load_config(config_path)
        config = _engine_config(cfg, None, sandbox)
        config.agent.model = _model_name(cfg)
        llm = _build_backend(backend, cassette, script, record, cfg)
        store = SensorStore(Path(data_dir), tz=tz)
        specs = load_corpus(corpus, tz)
        wanted = [s.strip() for s in systems.split(",") if s.strip()]
        runners = {}
        if "engine" in wanted:
            engine = Engine(llm, store, config=config)
            runners["engine"] = lambda spec: engine.run(
                spec.text, spec.presentation_instructions).answer.text
        if "rag" in wanted:
            pipeline = RagPipeline(store, llm, model=config.agent.model,
                                   window=float(cfg.get("window", 3600.0)),
                                   k=int(cfg.get("k", 8)))
            runners["rag"] = lambda spec: pipeline.answer(
                spec.text, spec.user_id, spec.range).text
        if not runners:
            raise _fail("validation", f"no known systems in {systems!r}",
                        EXIT_VALIDATION)
        try:
            outcomes = run_corpus(specs, runners, repetitions, jobs=jobs)
        finally:
            if isinstance(llm, RecordingBackend):
                llm.close()
        if record:
            for outcome in outcomes:
                outcome.provenance = str(record)
        save_outcomes(outcomes, out_path)
        click.echo(f"wrote {len(outcomes)} outcomes to {out_path}")
    _run_guarded(body)


@eval.command("report")
@click.option("--outcomes", type=click.Path(exists=True), required=True)
@click.option("--ratings", type=click.Path(exists=True), default=None)
@click.option("--labels", type=click.Path(exists=True), default=None,
              help='JSON array of {"query_id", "system", "label"}.')
@click.option("--out-dir", type=click.Path(), default=None)
def eval_report(outcomes, ratings, labels, out_dir):
    """Compute metrics and statistics from saved outcomes."""
    def body():
        outcome_list = load_outcomes(outcomes)
        if labels:
            entries = json.loads(Path(labels).read_text())
            apply_labels(outcome_list,
                         {(e["query_id"], e["system"]): e["label"] for e in entries})
        rating_list = load_ratings(ratings) if ratings else None
        if out_dir:
            report = export_report(outcome_list, rating_list, Path(out_dir))
        else:
            from .evaluation import build_report
            report = build_report(outcome_list, rating_list)
        for system, metrics in sorted(report["metrics"].items()):
            acc = metrics["accuracy_percent"]
            acc_text = (f"{acc}% ({metrics['accuracy_correct']}/"
                        f"{metrics['accuracy_judged']})") if acc else "n/a"
            cons = metrics["consistency_percent"]
            cons_text = (f"{cons}% ({metrics['consistent_count']}/"
                         f"{metrics['consistency_defined']})") if cons else "n/a"
            click.echo(f"{system}: accuracy={acc_text} consistency={cons_text}")
        if out_dir:
            click.echo(f"report written to {out_dir}")
    _run_guarded(body)


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", type=click.Path(), required=True)
@click.option("--tz", default="UTC", show_default=True)
@click.option("--capacity", type=int, default=8, show_default=True)
@click.option("--sandbox", type=click.Choice(["subprocess", "docker"]), default=None)
@click.option("--ui-dir", type=click.Path(exists=True), default=None,
              help="Serve the built web client from this directory at /.")
@backend_options
def serve(port, host, data_dir, tz, capacity, sandbox, ui_dir,
          backend, cassette, script, record, config_path):
    """Serve the HTTP API (runs, event streams, ingestion, RAG, eval)."""
    def body():
        import uvicorn

        from .service import RunManager, create_app

        cfg = _load_config(config_path)
        config = _engine_config(cfg, None, sandbox)
        config.agent.model = _model_name(cfg)
        llm = _build_backend(backend, cassette, script, record, cfg)
        data = Path(data_dir)
        store = SensorStore(data / "sensors", tz=tz)
        engine = Engine(llm, store, config=config)
        pipeline = RagPipeline(store, llm, model=config.agent.model)
        manager = RunManager(engine, data_dir=data, capacity=capacity)
        app = create_app(manager, store, pipeline,
                         ui_dir=Path(ui_dir) if ui_dir else None)
        uvicorn.run(app, host=host, port=port, log_level="warning")
    _run_guarded(body)


if __name__ == "__main__":
    main()
