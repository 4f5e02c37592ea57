"""Operator CLI: subcommands, determinism under replay, exit codes."""

import json

import pytest
from click.testing import CliRunner

from golden_defs import DATA_DIR, GOLDENS_DIR, HAPPY_PATH
from sensemaker.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def store_dir(tmp_path):
    """A store directory pre-loaded with the committed fixtures."""
    target = tmp_path / "sensors"
    runner = CliRunner()
    result = runner.invoke(main, [
        "ingest", "--manifest", str(DATA_DIR / "manifest.json"),
        "--data-dir", str(target)])
    assert result.exit_code == 0, result.output
    return target


class TestIngest:
    def test_single_file_counts(self, runner, tmp_path):
        result = runner.invoke(main, [
            "ingest", "--stream", "app_usage",
            "--file", str(DATA_DIR / "test010_app_usage.jsonl"),
            "--data-dir", str(tmp_path / "d")])
        assert result.exit_code == 0
        assert "accepted=6" in result.output
        assert "total accepted: 6" in result.output

    def test_unknown_stream_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, [
            "ingest", "--stream", "ppg",
            "--file", str(DATA_DIR / "test010_app_usage.jsonl"),
            "--data-dir", str(tmp_path / "d")])
        assert result.exit_code == 2
        assert "error:" in result.output

    def test_manifest_ingests_all_streams(self, runner, tmp_path):
        result = runner.invoke(main, [
            "ingest", "--manifest", str(DATA_DIR / "manifest.json"),
            "--data-dir", str(tmp_path / "d")])
        assert result.exit_code == 0
        assert "total accepted: 34" in result.output


class TestAsk:
    def ask_args(self, store_dir, extra=()):
        return ["ask", "--user", "test010", "--query", HAPPY_PATH.query,
                "--present", HAPPY_PATH.instructions,
                "--backend", "replay",
                "--cassette", str(GOLDENS_DIR / "happy-path.cassette.jsonl"),
                "--data-dir", str(store_dir), *extra]

    def test_replay_is_deterministic_across_invocations(self, runner, store_dir):
        outputs = {runner.invoke(main, self.ask_args(store_dir)).output
                   for _ in range(3)}
        assert len(outputs) == 1
        output = outputs.pop()
        assert "status: answered" in output
        golden = (GOLDENS_DIR / "happy-path.answer.txt").read_text().rstrip("\n")
        assert golden in output

    def test_trace_dump(self, runner, store_dir, tmp_path):
        trace_path = tmp_path / "trace.jsonl"
        result = runner.invoke(main, self.ask_args(
            store_dir, ["--trace-out", str(trace_path)]))
        assert result.exit_code == 0
        events = [json.loads(l) for l in trace_path.read_text().splitlines()]
        assert events[0]["phase"] == "pending"
        assert events[-1]["payload"]["status"] == "answered"

    def test_cassette_miss_exits_4(self, runner, store_dir):
        result = runner.invoke(main, [
            "ask", "--query", "a query the cassette never saw",
            "--backend", "replay",
            "--cassette", str(GOLDENS_DIR / "happy-path.cassette.jsonl"),
            "--data-dir", str(store_dir)])
        assert result.exit_code == 4
        assert "cassette-miss" in result.output

    def test_scripted_backend_exhaustion_exits_3(self, runner, store_dir,
                                                 tmp_path):
        script = tmp_path / "script.json"
        script.write_text(json.dumps([]))
        result = runner.invoke(main, [
            "ask", "--query", "q", "--backend", "scripted",
            "--script", str(script), "--data-dir", str(store_dir)])
        assert result.exit_code == 3

    def test_scripted_backend_missing_script_exits_2(self, runner, store_dir):
        result = runner.invoke(main, [
            "ask", "--query", "q", "--backend", "scripted",
            "--data-dir", str(store_dir)])
        assert result.exit_code == 2

    def test_record_writes_cassette(self, runner, store_dir, tmp_path):
        script = tmp_path / "script.json"
        script.write_text(json.dumps(HAPPY_PATH.responses))
        cassette = tmp_path / "recorded.jsonl"
        result = runner.invoke(main, [
            "ask", "--query", HAPPY_PATH.query,
            "--present", HAPPY_PATH.instructions,
            "--backend", "scripted", "--script", str(script),
            "--record", str(cassette), "--data-dir", str(store_dir)])
        assert result.exit_code == 0, result.output
        assert cassette.exists()
        lines = cassette.read_text().splitlines()
        assert len(lines) == len(HAPPY_PATH.responses)

    def test_max_iter_flag(self, runner, store_dir, tmp_path):
        script = tmp_path / "script.json"
        responses = [
            '```json\n{"answerable": true, "steps": ["s"], "rationale": "r"}\n```',
            '```json\n{"request": "fetch wifi networks"}\n```',
            "```python\nemit_result({\"n\": 1})\n```",
            "One window of wifi rows in the result.",
            '```json\n{"narrative": "wifi seen", "needs": [], "failure_note": null}\n```',
            "Partial answer.",
        ]
        script.write_text(json.dumps(responses))
        result = runner.invoke(main, [
            "ask", "--query", "probe wifi", "--backend", "scripted",
            "--script", str(script), "--max-iter", "1",
            "--data-dir", str(store_dir)])
        assert result.exit_code == 0, result.output
        assert "status: cutoff" in result.output


class TestRag:
    def test_rag_answer_with_scripted_backend(self, runner, store_dir, tmp_path):
        script = tmp_path / "script.json"
        script.write_text(json.dumps(["The user used SnapChat for 2075 seconds."]))
        result = runner.invoke(main, [
            "rag", "--user", "test010", "--query", "which apps were used?",
            "--start", "2024-07-15 00:00:00", "--end", "2024-07-16 00:00:00",
            "--k", "4", "--backend", "scripted", "--script", str(script),
            "--data-dir", str(store_dir)])
        assert result.exit_code == 0, result.output
        assert "SnapChat" in result.output
        assert "chunks:" in result.output


class TestEval:
    def corpus_file(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        spec = {"id": "q1", "text": HAPPY_PATH.query, "category": "objective",
                "user_id": "test010", "start": 0, "end": 86400 * 20000,
                "presentation_instructions": HAPPY_PATH.instructions}
        corpus.write_text(json.dumps(spec) + "\n")
        return corpus

    def test_eval_run_then_report(self, runner, store_dir, tmp_path):
        corpus = self.corpus_file(tmp_path)
        outcomes = tmp_path / "outcomes.jsonl"
        result = runner.invoke(main, [
            "eval", "run", "--corpus", str(corpus), "--repetitions", "3",
            "--systems", "engine", "--out", str(outcomes),
            "--backend", "replay",
            "--cassette", str(GOLDENS_DIR / "happy-path.cassette.jsonl"),
            "--data-dir", str(store_dir)])
        assert result.exit_code == 0, result.output
        labels = tmp_path / "labels.json"
        labels.write_text(json.dumps([
            {"query_id": "q1", "system": "engine", "label": "correct"}]))
        report = runner.invoke(main, [
            "eval", "report", "--outcomes", str(outcomes),
            "--labels", str(labels), "--out-dir", str(tmp_path / "report")])
        assert report.exit_code == 0, report.output
        assert "accuracy=100.00%" in report.output
        assert (tmp_path / "report" / "metrics.csv").exists()

    def test_report_prints_table4_style_consistency(self, runner, tmp_path):
        # integer tallies: 139/210 consistent for the engine system
        outcomes = tmp_path / "outcomes.jsonl"
        rows = []
        for i in range(210):
            rows.append(json.dumps({
                "query_id": f"q{i}", "system": "engine",
                "answers": ["a", "a", "a"], "accuracy_label": "unjudged",
                "consistent": i < 139, "error": None, "provenance": None}))
        outcomes.write_text("\n".join(rows) + "\n")
        result = runner.invoke(main, [
            "eval", "report", "--outcomes", str(outcomes)])
        assert result.exit_code == 0, result.output
        assert "consistency=66.19% (139/210)" in result.output


class TestHelp:
    def test_all_subcommands_documented(self, runner):
        result = runner.invoke(main, ["--help"])
        for sub in ("ingest", "ask", "rag", "eval", "serve"):
            assert sub in result.output
