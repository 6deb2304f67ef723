"""Command-line entry points: serve, replay, ingest-check, summarize,
export-curves, simulate."""

from __future__ import annotations

import json
import logging
import sys
from decimal import Decimal
from pathlib import Path

import click
import yaml

from .datasets import ingest_dataset
from .executor import SandboxExecutor
from .judging import ConsoleVerdictSource, JudgeVerdictSource
from .ledger import Ledger, microusd_to_usd_str, summarize
from .orchestrator import QueryPipeline
from .reporting import (
    append_summary_row,
    plot_curves,
    write_comparison_table,
    write_curves,
)
from .runconfig import RunConfig, load_config
from .simulate import TierSimProfile, reproduce_tradeoff
from .store import HashedBagOfWords, SolutionStore

logger = logging.getLogger(__name__)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


def _load_config_or_exit(path: str):
    from .datasets import DatasetError
    from .runconfig import ConfigError

    try:
        return load_config(path)
    except (ConfigError, DatasetError) as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def serve(config_path: str) -> None:
    """Run the HTTP service."""
    from .service import serve as run_service

    run_service(_load_config_or_exit(config_path))


def build_pipeline(config: RunConfig, ledger: Ledger, store: SolutionStore) -> QueryPipeline:
    if config.verdict_mode == "human":
        verdict_source = ConsoleVerdictSource()
    else:
        assert config.judge is not None
        verdict_source = JudgeVerdictSource(config.judge, ledger=ledger)
    sandbox = config.sandbox
    return QueryPipeline(
        hierarchy=config.hierarchy,
        store=store,
        verdict_source=verdict_source,
        flags=config.flags,
        ledger=ledger,
        conversation_config=config.conversation,
        executor_factory=lambda: SandboxExecutor(
            interpreter=sandbox.interpreter,
            timeout=sandbox.timeout_s,
            stream_cap=sandbox.stream_cap_bytes,
        ),
    )


def run_replay(config: RunConfig, policy_label: str, out_dir: Path, resume: bool = False) -> dict:
    """Headless stream run: writes ledger, store, curve files and a summary row."""
    import time as _time

    out_dir.mkdir(parents=True, exist_ok=True)
    ledger_path = out_dir / "ledger.jsonl"
    store_path = out_dir / "store.jsonl"
    if not resume:
        ledger_path.unlink(missing_ok=True)
        store_path.unlink(missing_ok=True)
    if not config.dataset:
        raise click.ClickException("config must set a dataset for replay")
    queries = ingest_dataset(config.dataset, seed=config.seed)
    ledger = Ledger(ledger_path)
    store = SolutionStore(
        embedder=HashedBagOfWords(config.embedder_dim),
        path=store_path,
        floor=config.retrieval_floor,
    )
    pipeline = build_pipeline(config, ledger, store)
    started = _time.monotonic()
    results = pipeline.run_stream(queries, skip_decided=resume)
    runtime_s = _time.monotonic() - started
    ledger.close()
    store.close()

    curves_csv = write_curves(out_dir / f"curves-{policy_label}.csv", pipeline.curves)
    plot_curves({policy_label: pipeline.curves}, out_dir / f"curves-{policy_label}.png")
    summary = summarize(ledger.entries, total_runtime_s=runtime_s)
    row = {
        "label": policy_label,
        "queries": summary.queries,
        "success_rate": f"{summary.success_rate:.2f}",
        "total_cost_usd": microusd_to_usd_str(summary.total_cost),
        "runtime_s": f"{runtime_s:.2f}",
        **{
            f"avg_calls_rank{rank}": f"{calls:.4f}"
            for rank, calls in sorted(summary.avg_model_calls_per_rank.items())
        },
    }
    append_summary_row(out_dir / "summary.csv", row)
    logger.info("replay %s: %d queries, %.2f%% success, cost %s, curves at %s",
                policy_label, summary.queries, summary.success_rate,
                microusd_to_usd_str(summary.total_cost), curves_csv)
    return {"summary": summary, "results": results, "curves_path": curves_csv}


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--label", "policy_label", default="default", help="Row key in the summary table.")
@click.option("--out", "out_dir", default="runs/replay", type=click.Path())
@click.option("--resume", is_flag=True, help="Skip queries already decided in the existing ledger.")
def replay(config_path: str, policy_label: str, out_dir: str, resume: bool) -> None:
    """Run the full query stream headlessly and write run artifacts."""
    from .datasets import DatasetError

    config = _load_config_or_exit(config_path)
    try:
        run_replay(config, policy_label, Path(out_dir), resume=resume)
    except DatasetError as exc:
        raise click.ClickException(str(exc))


@main.command("ingest-check")
@click.argument("dataset", type=click.Path(exists=True))
@click.option("--seed", default=0, type=int)
def ingest_check(dataset: str, seed: int) -> None:
    """Validate a dataset file and report its shape."""
    queries = ingest_dataset(dataset, seed=seed)
    apis = sorted({q.api.name for q in queries})
    click.echo(f"{len(queries)} queries across {len(apis)} APIs: {', '.join(apis)}")


@main.command("summarize")
@click.argument("ledger_file", type=click.Path(exists=True))
def summarize_cmd(ledger_file: str) -> None:
    """Print run metrics derived from a ledger file."""
    ledger = Ledger.load(ledger_file)
    try:
        summary = summarize(ledger.entries)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(summary.to_dict(), indent=2))


@main.command("export-curves")
@click.argument("ledger_file", type=click.Path(exists=True))
@click.option("--out", "out_base", default="curves", help="Output base path (.csv/.png added).")
@click.option("--label", default="run")
def export_curves(ledger_file: str, out_base: str, label: str) -> None:
    """Write cumulative success/cost curves (CSV + PNG) from a ledger."""
    ledger = Ledger.load(ledger_file)
    summary = summarize(ledger.entries)
    csv_path = write_curves(Path(out_base).with_suffix(".csv"), summary.curves)
    png_path = plot_curves({label: summary.curves}, Path(out_base).with_suffix(".png"))
    click.echo(f"wrote {csv_path} and {png_path}")


def load_sim_profiles(path: str | Path) -> list[TierSimProfile]:
    """Profile file format: YAML/JSON list of tier parameter mappings."""
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    profiles = []
    for entry in data:
        profiles.append(
            TierSimProfile(
                name=entry["name"],
                rank=int(entry["rank"]),
                p_success_base=float(entry["p_success_base"]),
                p_success_with_demo=float(entry["p_success_with_demo"]),
                turns_on_success=int(entry["turns_on_success"]),
                turns_on_failure=int(entry["turns_on_failure"]),
                tokens_in_per_turn=int(entry["tokens_in_per_turn"]),
                tokens_out_per_turn=int(entry["tokens_out_per_turn"]),
                price_in=Decimal(str(entry["price_in"])),
                price_out=Decimal(str(entry["price_out"])),
            )
        )
    return profiles


@main.command("simulate")
@click.option("--profiles", "profiles_path", type=click.Path(exists=True), default=None,
              help="Tier profile file; omit for the calibrated defaults.")
@click.option("--queries", "n_queries", default=300, type=int)
@click.option("--seeds", default="0,1,2")
@click.option("--out", "out_dir", default="runs/simulate", type=click.Path())
def simulate_cmd(profiles_path: str | None, n_queries: int, seeds: str, out_dir: str) -> None:
    """Run the four-policy trade-off comparison on simulated backends."""
    profiles = load_sim_profiles(profiles_path) if profiles_path else None
    seed_list = [int(s) for s in seeds.split(",") if s.strip() != ""]
    report = reproduce_tradeoff(profiles, n_queries=n_queries, seeds=seed_list)
    out = Path(out_dir)
    write_comparison_table(out / "comparison.csv", report.rows)
    curve_sets = {
        f"{o.label} (seed {o.seed})": o.curves for o in report.outcomes if o.seed == seed_list[0]
    }
    plot_curves(curve_sets, out / "curves.png")
    click.echo(f"success gap: {report.success_gap_points:+.2f} points")
    click.echo(f"cost ratio vs tier2-only: {report.cost_ratio:.3f}")
    click.echo(f"hierarchy-only saving: {report.hierarchy_saving:.3f}")
    for name, ok in report.claims.items():
        click.echo(f"{'PASS' if ok else 'FAIL'} {name}")
    if not report.all_claims_hold:
        sys.exit(1)


if __name__ == "__main__":
    main()
