"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 provider error, 4 state error.
"""

from __future__ import annotations

import json
import sys
import threading
from pathlib import Path

import click
import yaml

from .config import Config, load_config
from .errors import AlforgeError, ConfigError
from .metrics import Judgment, build_report
from .orchestrator import Orchestrator, build_splits, providers_from_config
from .pool import PoolStore
from .sim import default_experiment, run_experiment, spec_from_dict
from .util import canonical_json


def _load(ctx) -> Config:
    path = ctx.obj.get("config")
    cfg = load_config(path) if path else Config()
    if ctx.obj.get("seed") is not None:
        cfg.seed = ctx.obj["seed"]
    if ctx.obj.get("strategy"):
        cfg.loop.strategy = ctx.obj["strategy"]
    if ctx.obj.get("mock_providers"):
        for pc in cfg.providers.values():
            pc.kind = "mock"
    cfg.validate()
    return cfg


def _store(cfg: Config, fresh: bool = False) -> PoolStore:
    workdir = Path(cfg.workdir) if cfg.workdir else None
    if workdir is None:
        raise ConfigError("this command needs a workdir in the config")
    snapshot = workdir / "snapshot.json"
    if snapshot.exists() and not fresh:
        return PoolStore.load(snapshot, workdir=workdir)
    return PoolStore(workdir=workdir)


def _orchestrator(cfg: Config, store: PoolStore, label: str = "run") -> Orchestrator:
    bindings = providers_from_config(cfg, label)
    bindings.health_check()
    orch = Orchestrator(store, bindings, cfg)
    if store.loop_state.batch_size == 0:  # not initialized; resumes keep their seed
        store.loop_state.rng_seed = cfg.seed
    return orch


@click.group()
@click.option("--config", "config_path", type=click.Path(), help="YAML config file.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option(
    "--strategy",
    type=click.Choice(["random", "topn", "cluster"]),
    default=None,
    help="Override the acquisition strategy.",
)
@click.option("--mock-providers", is_flag=True, help="Force every provider to its mock.")
@click.pass_context
def main(ctx, config_path, seed, strategy, mock_providers):
    """Active-learning dataset forge."""
    ctx.ensure_object(dict)
    ctx.obj.update(
        config=config_path, seed=seed, strategy=strategy, mock_providers=mock_providers
    )


def _run(ctx, fn):
    try:
        fn()
    except AlforgeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)


@main.command()
@click.argument("pool", type=click.Path(exists=True), required=False)
@click.pass_context
def ingest(ctx, pool):
    """Load a pool JSONL file into the workdir store."""

    def go():
        cfg = _load(ctx)
        store = _store(cfg)
        count = store.ingest(pool or cfg.pool_path)
        store.save_snapshot()
        click.echo(f"ingested {count} instances ({store.total_ingested} total)")

    _run(ctx, go)


@main.command()
@click.option("-k", "clusters", type=int, default=None, help="Cluster count override.")
@click.pass_context
def cluster(ctx, clusters):
    """Embed the pool and fit the cluster model."""

    def go():
        cfg = _load(ctx)
        orch = _orchestrator(cfg, _store(cfg))
        model = orch.embed_and_cluster(clusters)
        click.echo(
            f"clustered {len(model.assignments)} instances into k={model.k} "
            f"(inertia {model.inertia:.6f})"
        )

    _run(ctx, go)


@main.command()
@click.option("-n", "count", type=int, default=None, help="Bootstrap size override.")
@click.pass_context
def bootstrap(ctx, count):
    """Distill and label random instances, then fine-tune the learner once."""

    def go():
        cfg = _load(ctx)
        orch = _orchestrator(cfg, _store(cfg))
        state = orch.bootstrap(count, cfg.seed)
        click.echo(
            f"bootstrapped {len(orch.store.pairs)} pairs; "
            f"budget {state.budget_remaining}, revision {state.learner_revision}"
        )

    _run(ctx, go)


@main.command()
@click.pass_context
def iterate(ctx):
    """Run exactly one acquisition iteration."""

    def go():
        cfg = _load(ctx)
        orch = _orchestrator(cfg, _store(cfg))
        state = orch.run_iteration()
        click.echo(
            f"iteration {state.iteration} done; budget {state.budget_remaining}, "
            f"|L|={len(orch.store.pairs)}"
        )

    _run(ctx, go)


@main.command()
@click.pass_context
def run(ctx):
    """Bootstrap if needed, then iterate until the budget is spent."""

    def go():
        cfg = _load(ctx)
        store = _store(cfg)
        orch = _orchestrator(cfg, store)
        if store.loop_state.batch_size == 0:  # loop never initialized
            orch.bootstrap(cfg.loop.bootstrap_n, cfg.seed)
        if cfg.loop.strategy == "cluster" and orch.cluster_model is None:
            orch.embed_and_cluster()
        state = orch.run_loop()
        click.echo(
            f"loop finished at iteration {state.iteration}; "
            f"budget {state.budget_remaining}, |L|={len(store.pairs)}"
        )

    _run(ctx, go)


@main.command()
@click.option("--drive/--no-drive", default=False, help="Run the loop while serving.")
@click.pass_context
def serve(ctx, drive):
    """Start the verification API plus static UI."""

    def go():
        from .server import serve as serve_app

        cfg = _load(ctx)
        store = _store(cfg)
        orch = _orchestrator(cfg, store)
        if drive:
            cfg.verification_mode = "human"

            def drive_loop():
                if store.loop_state.batch_size == 0:
                    orch.bootstrap(cfg.loop.bootstrap_n, cfg.seed)
                if cfg.loop.strategy == "cluster" and orch.cluster_model is None:
                    orch.embed_and_cluster()
                orch.run_loop()

            threading.Thread(target=drive_loop, daemon=True).start()
        serve_app(
            store,
            orch.queue,
            host=cfg.server.host,
            port=cfg.server.port,
            get_metrics=lambda: orch.latest_report,
            auth_token=cfg.server.auth_token,
            ui_dir=cfg.server.ui_dir,
        )

    _run(ctx, go)


@main.command("export-splits")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.pass_context
def export_splits(ctx, out):
    """Build the three strategy splits plus the fixed test set."""

    def go():
        cfg = _load(ctx)
        manifest = build_splits(
            cfg, lambda label: providers_from_config(cfg, label), out
        )
        click.echo(canonical_json(manifest))

    _run(ctx, go)


@main.command()
@click.option(
    "--judgments",
    type=click.Path(exists=True),
    required=True,
    help="JSONL of {id, subgroup, correct} rows.",
)
@click.option(
    "--generations",
    type=click.Path(exists=True),
    default=None,
    help="Optional JSONL of {output} rows for MTLD.",
)
@click.option("--csv", "csv_path", type=click.Path(), default=None, help="Per-group CSV.")
@click.pass_context
def evaluate(ctx, judgments, generations, csv_path):
    """Aggregate external judgments into a metrics report."""

    def go():
        rows = []
        with open(judgments, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    rows.append(
                        Judgment(
                            instance_id=str(d.get("id", d.get("instance_id", ""))),
                            subgroup=d["subgroup"],
                            correct=bool(d.get("correct", d.get("safe"))),
                        )
                    )
        texts = []
        if generations:
            with open(generations, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        texts.append(json.loads(line).get("output", ""))
        report = build_report(rows, texts)
        click.echo(canonical_json(report.to_dict()))
        if csv_path:
            with open(csv_path, "w", encoding="utf-8") as fh:
                fh.write("group,errors,total,ratio\n")
                for group, errors, total, ratio in report.csv_rows():
                    fh.write(f"{group},{errors},{total},{ratio}\n")

    _run(ctx, go)


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None)
@click.option("--strategies", default=None, help="Comma-separated strategy list.")
@click.option("--seeds", type=int, default=None, help="Number of seeds (0..n-1).")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.pass_context
def simulate(ctx, spec_path, strategies, seeds, out):
    """Run the offline mock-provider experiment and emit report.json + CSV."""

    def go():
        if spec_path:
            raw = yaml.safe_load(Path(spec_path).read_text(encoding="utf-8")) or {}
            exp = spec_from_dict(raw)
        else:
            exp = default_experiment()
        from dataclasses import replace

        if strategies:
            exp = replace(exp, strategies=tuple(strategies.split(",")))
        if seeds is not None:
            exp = replace(exp, seeds=tuple(range(seeds)))
        report = run_experiment(exp, out, progress=lambda m: click.echo(m, err=True))
        click.echo(canonical_json(report["summary"]))

    _run(ctx, go)


@main.command()
@click.option("--replay-dir", type=click.Path(exists=True), required=True)
@click.option("--from-iteration", type=int, default=0, help="Snapshot to resume from.")
@click.pass_context
def replay(ctx, replay_dir, from_iteration):
    """Re-run a recorded session offline and verify the final snapshot matches."""

    def go():
        cfg = _load(ctx)
        cfg.record = False
        cfg.replay_dir = replay_dir
        workdir = Path(cfg.workdir) if cfg.workdir else None
        if workdir is None:
            raise ConfigError("replay needs a workdir with recorded snapshots")
        reference = (workdir / "snapshot.json").read_bytes()
        source = workdir / "snapshots" / f"iter_{from_iteration:04d}.json"
        if not source.exists():
            raise ConfigError(f"no snapshot for iteration {from_iteration}: {source}")
        store = PoolStore.restore(source.read_bytes())
        orch = Orchestrator(store, providers_from_config(cfg, "run"), cfg)
        orch.run_loop()
        final = store.snapshot_bytes()
        if final == reference:
            click.echo("replay ok: final snapshot matches the recorded run")
        else:
            click.echo("replay mismatch: final snapshot differs", err=True)
            sys.exit(4)

    _run(ctx, go)


if __name__ == "__main__":
    main()
