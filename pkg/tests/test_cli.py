from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest
from click.testing import CliRunner

from icat.cli import main

from e2e_fixture import FIXTURE_DIR, chat_fixtures_json


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workspace(tmp_path):
    """tmp dir with the e2e fixture files plus a mock-backend config."""
    for name in ("corpus.jsonl", "topics.jsonl", "qrels.txt", "responses.jsonl"):
        shutil.copy(FIXTURE_DIR / name, tmp_path / name)
    (tmp_path / "chat_fixtures.json").write_text(json.dumps(chat_fixtures_json()))
    config = {
        "backends": {
            "chat": {"kind": "mock", "fixtures": "chat_fixtures.json"},
            "embedding": {"kind": "hash", "dim": 192},
            "nli": {"kind": "substring"},
        },
        "cache_enabled": False,
    }
    (tmp_path / "config.json").write_text(json.dumps(config))
    return tmp_path


def invoke(runner, args, **kwargs):
    result = runner.invoke(main, args, catch_exceptions=False, **kwargs)
    return result


class TestIngest:
    def test_ingest_writes_staging_dir(self, runner, workspace):
        result = invoke(
            runner,
            ["ingest", "--corpus", str(workspace / "corpus.jsonl"),
             "--out", str(workspace / "staged")],
        )
        assert result.exit_code == 0, result.output
        assert (workspace / "staged" / "docs.jsonl").exists()
        assert (workspace / "staged" / "snippets.jsonl").exists()
        meta = json.loads((workspace / "staged" / "ingest.json").read_text())
        assert meta["documents"] == 20
        assert meta["snippets"] == 21  # d20 spans two windows


class TestIndex:
    def test_build_and_search(self, runner, workspace):
        build = invoke(
            runner,
            ["index", "build", "--corpus", str(workspace / "corpus.jsonl"),
             "--config", str(workspace / "config.json"),
             "--out", str(workspace / "idx")],
        )
        assert build.exit_code == 0, build.output
        assert (workspace / "idx" / "manifest.json").exists()

        lexical = invoke(
            runner,
            ["index", "search", "--index", str(workspace / "idx"),
             "--query", "solar power", "--k", "3", "--lexical"],
        )
        assert lexical.exit_code == 0
        assert "d0" in lexical.output

        dense = invoke(
            runner,
            ["index", "search", "--index", str(workspace / "idx"),
             "--query", "coffee and sleep", "--k", "3",
             "--config", str(workspace / "config.json")],
        )
        assert dense.exit_code == 0
        assert len(dense.output.strip().splitlines()) == 3


class TestClaimsCommands:
    def test_extract(self, runner, workspace):
        result = invoke(
            runner,
            ["claims", "extract", "--responses", str(workspace / "responses.jsonl"),
             "--config", str(workspace / "config.json"),
             "--out", str(workspace / "claims.jsonl")],
        )
        assert result.exit_code == 0, result.output
        lines = [json.loads(l) for l in (workspace / "claims.jsonl").read_text().splitlines()]
        assert len(lines) == 10
        by_key = {(l["query_id"], l["system_id"]): l["claims"] for l in lines}
        assert len(by_key[("q1", "sys_a")]) == 4
        assert by_key[("q4", "sys_b")] == []

    def test_synth(self, runner, workspace, tmp_path):
        fixtures = {
            "rules": [
                {"contains": ["diverse high-level topics"], "reply": '["topic one", "topic two"]'},
                {"contains": ['topic "topic one"', "entities"], "reply": '["e1"]'},
                {"contains": ['topic "topic two"', "entities"], "reply": '["e2"]'},
                {"contains": ['about "e1"'],
                 "reply": '{"paragraph": "About e1.", "claims": ["e1 exists."]}'},
                {"contains": ['about "e2"'],
                 "reply": '{"paragraph": "About e2.", "claims": ["e2 exists."]}'},
            ]
        }
        (workspace / "synth_fixtures.json").write_text(json.dumps(fixtures))
        config = {
            "backends": {"chat": {"kind": "mock", "fixtures": "synth_fixtures.json"}},
            "cache_enabled": False,
        }
        (workspace / "synth_config.json").write_text(json.dumps(config))
        result = invoke(
            runner,
            ["claims", "synth", "--topics", "2", "--entities", "1",
             "--config", str(workspace / "synth_config.json"),
             "--out", str(workspace / "synth.jsonl")],
        )
        assert result.exit_code == 0, result.output
        assert len((workspace / "synth.jsonl").read_text().splitlines()) == 2


class TestRunCommand:
    def run_variant(self, runner, workspace, variant, out, extra=()):
        return invoke(
            runner,
            ["run", "--variant", variant, "--retrieval", "corpus",
             "--config", str(workspace / "config.json"),
             "--responses", str(workspace / "responses.jsonl"),
             "--topics", str(workspace / "topics.jsonl"),
             "--qrels", str(workspace / "qrels.txt"),
             "--corpus", str(workspace / "corpus.jsonl"),
             "--out", str(workspace / out), *extra],
        )

    def test_variant_s_writes_reports(self, runner, workspace):
        result = self.run_variant(runner, workspace, "S", "out_s")
        assert result.exit_code == 0, result.output
        report = json.loads((workspace / "out_s" / "report.json").read_text())
        assert report["evaluated"] == 10 and report["total"] == 10
        assert set(report["systems"]) == {"sys_a", "sys_b"}
        csv_lines = (workspace / "out_s" / "scores.csv").read_text().splitlines()
        assert len(csv_lines) == 11

    def test_beta_sweep_outputs(self, runner, workspace):
        result = self.run_variant(
            runner, workspace, "S", "out_sweep", extra=["--beta-sweep", "0.5,1,2"]
        )
        assert result.exit_code == 0, result.output
        sweep = (workspace / "out_sweep" / "beta_sweep.csv").read_text().splitlines()
        assert len(sweep) == 1 + 2 * 3  # header + systems x betas
        assert (workspace / "out_sweep" / "crossovers.json").exists()

    def test_config_error_exit_code_2(self, runner, workspace):
        result = runner.invoke(
            main,
            ["run", "--variant", "M", "--retrieval", "web",
             "--config", str(workspace / "config.json"),
             "--responses", str(workspace / "responses.jsonl"),
             "--topics", str(workspace / "topics.jsonl"),
             "--out", str(workspace / "out_bad")],
        )
        assert result.exit_code == 2
        assert "configuration error" in result.output


class TestCorrelateCommand:
    def test_correlate(self, runner, workspace):
        method = workspace / "method.csv"
        human = workspace / "human.csv"
        method.write_text(
            "query_id,system_id,s_coverage\nq1,a,0.2\nq2,a,0.4\nq3,a,0.9\n"
        )
        human.write_text(
            "query_id,system_id,human_s_coverage\nq1,a,0.1\nq2,a,0.5\nq3,a,0.8\n"
        )
        result = invoke(
            runner,
            ["correlate", "--method-scores", str(method),
             "--human-scores", str(human), "--out", str(workspace / "corr.json")],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads((workspace / "corr.json").read_text())
        assert payload["n_pairs"] == 3
        assert payload["spearman"] == pytest.approx(1.0)


class TestAnnotatePrepare:
    def test_prepare_tasks(self, runner, workspace):
        result = invoke(
            runner,
            ["annotate", "prepare", "--responses", str(workspace / "responses.jsonl"),
             "--topics", str(workspace / "topics.jsonl"),
             "--out", str(workspace / "tasks")],
        )
        assert result.exit_code == 0, result.output
        lines = (workspace / "tasks" / "tasks.jsonl").read_text().splitlines()
        assert len(lines) == 10
        task = json.loads(lines[0])
        assert {"task_id", "query_id", "system_id", "response_text", "aspects"} <= set(task)
