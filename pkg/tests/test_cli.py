from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from codecascade.cli import main

CONFIG = """
seed: 1
verdict_mode: autonomous
dataset: queries.jsonl
flags: {use_hierarchy: true, use_solution_demo: true, use_cot: false}
conversation: {max_turns: 5}
sandbox: {timeout_s: 10}
hierarchy:
  - name: cheap
    price_in: "0.5"
    price_out: "1.5"
    context_window: 100000
    backend:
      kind: scripted
      rules:
        - {match: "exit status", respond: "there we go TERMINATE"}
      default: "attempt\\n```python\\nprint('cheap att')\\n```"
  - name: strong
    price_in: "10"
    price_out: "30"
    context_window: 100000
    backend:
      kind: scripted
      rules:
        - {match: "exit status", respond: "strong solve TERMINATE"}
      default: "working\\n```python\\nprint('strong att')\\n```"
judge:
  name: judge
  price_in: "10"
  price_out: "30"
  backend: {kind: scripted, rules: [], default: "yes"}
"""


def write_inputs(tmp_path: Path, n=3):
    rows = [
        {"id": f"q{i}", "query": f"what about thing {i}", "api": "weather", "key_env": "WEATHER_KEY"}
        for i in range(n)
    ]
    (tmp_path / "queries.jsonl").write_text(
        "\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8"
    )
    (tmp_path / "run.yaml").write_text(CONFIG, encoding="utf-8")


@pytest.fixture()
def runner(monkeypatch):
    monkeypatch.setenv("WEATHER_KEY", "real-weather-secret")
    return CliRunner()


class TestReplay:
    def test_replay_writes_artifacts(self, tmp_path, runner):
        write_inputs(tmp_path)
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["replay", "--config", str(tmp_path / "run.yaml"),
                   "--label", "demo", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert (out / "ledger.jsonl").exists()
        assert (out / "store.jsonl").exists()
        assert (out / "curves-demo.csv").exists()
        assert (out / "curves-demo.png").exists()
        assert (out / "summary.csv").exists()

    def test_two_replays_byte_identical_curves(self, tmp_path, runner):
        write_inputs(tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            result = runner.invoke(
                main, ["replay", "--config", str(tmp_path / "run.yaml"),
                       "--label", "x", "--out", str(out)],
            )
            assert result.exit_code == 0, result.output
            outs.append((out / "curves-x.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_six_policy_labels_six_rows(self, tmp_path, runner):
        write_inputs(tmp_path, n=2)
        out = tmp_path / "out"
        labels = ["m1", "m2", "m3", "m4", "m5", "m6"]
        for label in labels:
            result = runner.invoke(
                main, ["replay", "--config", str(tmp_path / "run.yaml"),
                       "--label", label, "--out", str(out)],
            )
            assert result.exit_code == 0, result.output
        rows = (out / "summary.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 6
        assert [r.split(",")[0] for r in rows[1:]] == labels

    def test_summary_row_reflects_scripted_success_rate(self, tmp_path, runner):
        write_inputs(tmp_path)
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["replay", "--config", str(tmp_path / "run.yaml"),
                   "--label", "demo", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        header, row = (out / "summary.csv").read_text().strip().splitlines()
        values = dict(zip(header.split(","), row.split(",")))
        assert values["success_rate"] == "100.00"
        assert values["queries"] == "3"


class TestSmallCommands:
    def test_ingest_check(self, tmp_path, runner):
        write_inputs(tmp_path, n=5)
        result = runner.invoke(main, ["ingest-check", str(tmp_path / "queries.jsonl")])
        assert result.exit_code == 0
        assert "5 queries" in result.output
        assert "weather" in result.output

    def test_summarize_reads_ledger(self, tmp_path, runner):
        write_inputs(tmp_path)
        out = tmp_path / "out"
        runner.invoke(
            main, ["replay", "--config", str(tmp_path / "run.yaml"),
                   "--label", "demo", "--out", str(out)],
        )
        result = runner.invoke(main, ["summarize", str(out / "ledger.jsonl")])
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["queries"] == 3
        assert body["success_rate"] == 100.0

    def test_export_curves(self, tmp_path, runner):
        write_inputs(tmp_path)
        out = tmp_path / "out"
        runner.invoke(
            main, ["replay", "--config", str(tmp_path / "run.yaml"),
                   "--label", "demo", "--out", str(out)],
        )
        result = runner.invoke(
            main, ["export-curves", str(out / "ledger.jsonl"),
                   "--out", str(out / "exported")],
        )
        assert result.exit_code == 0, result.output
        assert (out / "exported.csv").exists()
        assert (out / "exported.png").exists()
        # curves derived from the same ledger agree with the replay export
        assert (out / "exported.csv").read_bytes() == (out / "curves-demo.csv").read_bytes()

    def test_simulate_command(self, tmp_path, runner):
        out = tmp_path / "sim"
        result = runner.invoke(
            main, ["simulate", "--queries", "120", "--seeds", "0", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert (out / "comparison.csv").exists()
        assert (out / "curves.png").exists()
        assert "PASS success_gap_at_least_10_points" in result.output

    def test_simulate_with_profile_file(self, tmp_path, runner):
        profiles = [
            {"name": "a", "rank": 0, "p_success_base": 0.25, "p_success_with_demo": 0.45,
             "turns_on_success": 2, "turns_on_failure": 3,
             "tokens_in_per_turn": 1000, "tokens_out_per_turn": 500,
             "price_in": "0.5", "price_out": "1.5"},
            {"name": "b", "rank": 1, "p_success_base": 0.59, "p_success_with_demo": 0.78,
             "turns_on_success": 1, "turns_on_failure": 5,
             "tokens_in_per_turn": 1000, "tokens_out_per_turn": 500,
             "price_in": "30", "price_out": "60"},
        ]
        profile_path = tmp_path / "profiles.yaml"
        profile_path.write_text(json.dumps(profiles), encoding="utf-8")
        result = runner.invoke(
            main, ["simulate", "--profiles", str(profile_path), "--queries", "150",
                   "--seeds", "0", "--out", str(tmp_path / "sim2")],
        )
        assert result.exit_code == 0, result.output
