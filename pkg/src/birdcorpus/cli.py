"""Command-line entry points for the curation pipeline."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .balance import gini as gini_fn
from .config import load_config
from .errors import BirdcorpusError
from .manifest import read_manifest
from .pipeline import STAGE_DEPS, dataset_report, run_stage


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML config overriding the default profile.")
@click.option("--workspace", type=click.Path(), default=None, help="Workspace directory.")
@click.option("--seed", type=int, default=None, help="Override the run seed.")
@click.option("--force", is_flag=True, help="Re-run stages even if up to date.")
@click.option("--jobs", type=int, default=None, help="Download worker count.")
@click.pass_context
def main(ctx, config_path, workspace, seed, force, jobs):
    """Build balanced bird presence/absence audio datasets."""
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, workspace=workspace, seed=seed,
                   force=force, jobs=jobs)


def _load(ctx) -> tuple:
    overrides = dict(ctx.obj.get("extra_overrides", {}))
    if ctx.obj.get("jobs"):
        overrides["download"] = {"jobs": ctx.obj["jobs"]}
    cfg = load_config(ctx.obj.get("config_path"), workspace=ctx.obj.get("workspace"),
                      seed=ctx.obj.get("seed"), overrides=overrides)
    return cfg, ctx.obj.get("force", False)


def _run(ctx, stage):
    cfg, force = _load(ctx)
    try:
        report = run_stage(stage, cfg, force=force)
    except BirdcorpusError as exc:
        raise click.ClickException(str(exc))
    status = "skipped (up to date)" if report.get("skipped") else "done"
    click.echo(f"[{stage}] {status}")
    click.echo(json.dumps({k: v for k, v in report.items()
                           if k not in ("fingerprint",)}, indent=2, sort_keys=True))


def _stage_command(stage):
    @main.command(name=stage, help=f"Run the {stage} stage"
                  + (f" (needs: {', '.join(STAGE_DEPS[stage])})." if STAGE_DEPS[stage] else "."))
    @click.pass_context
    def _cmd(ctx):
        _run(ctx, stage)
    return _cmd


for _stage in STAGE_DEPS:
    if _stage not in ("fetch-metadata", "balance"):
        _stage_command(_stage)


@main.command("fetch-metadata")
@click.option("--endpoint", default=None, help="Catalog API endpoint URL.")
@click.option("--country", "countries", multiple=True,
              help="Country filter (repeatable); defaults to the profile list.")
@click.option("--cache-dir", default=None, type=click.Path(),
              help="Directory for cached page responses.")
@click.pass_context
def fetch_metadata_cmd(ctx, endpoint, countries, cache_dir):
    """Fetch and filter recording metadata."""
    fetch_overrides = {}
    if endpoint:
        fetch_overrides["endpoint"] = endpoint
    if countries:
        fetch_overrides["countries"] = list(countries)
    if cache_dir:
        fetch_overrides["cache_dir"] = cache_dir
    if fetch_overrides:
        ctx.obj.setdefault("extra_overrides", {})["fetch"] = fetch_overrides
    _run(ctx, "fetch-metadata")


@main.command("balance")
@click.option("--target", type=int, default=None, help="Target clip count.")
@click.option("--k-clusters", type=int, default=None, help="Acoustic clusters per species.")
@click.pass_context
def balance_cmd(ctx, target, k_clusters):
    """Run diversity-aware species balancing."""
    balance_overrides = {}
    if target is not None:
        balance_overrides["n_target"] = target
    if k_clusters is not None:
        balance_overrides["k_clusters"] = k_clusters
    if balance_overrides:
        ctx.obj.setdefault("extra_overrides", {})["balance"] = balance_overrides
    _run(ctx, "balance")


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
def gini(manifest):
    """Print the species Gini coefficient of a manifest CSV."""
    records = read_manifest(manifest)
    counts = {}
    for r in records:
        if r.label == 1:
            counts[r.species] = counts.get(r.species, 0) + 1
    if not counts:
        raise click.ClickException("manifest has no positive clips")
    click.echo(f"{gini_fn(counts):.6f}")


@main.command()
@click.pass_context
def report(ctx):
    """Dataset statistics for the current workspace."""
    cfg, _ = _load(ctx)
    try:
        summary = dataset_report(cfg.workspace)
    except BirdcorpusError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@main.command("audit-serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8777, type=int)
@click.option("--round", "round_id", default=1, type=int)
@click.option("--token", default=None, help="Shared token required in X-Auth-Token.")
@click.pass_context
def audit_serve(ctx, host, port, round_id, token):
    """Serve the audit HTTP API for the review UI."""
    cfg, _ = _load(ctx)
    from .server import serve

    try:
        serve(cfg.workspace, round_id=round_id, host=host, port=port, token=token)
    except BirdcorpusError as exc:
        raise click.ClickException(str(exc))


@main.command("make-fixture")
@click.option("--root", type=click.Path(), required=True)
@click.option("--recordings", default=200, type=int)
@click.option("--species", default=20, type=int)
@click.option("--seed", default=7, type=int)
@click.option("--with-mp3/--no-mp3", default=False)
def make_fixture(root, recordings, species, seed, with_mp3):
    """Generate the synthetic mini-corpus (positives + negative layouts + config)."""
    from .synth import write_fixture_config, write_negative_fixture, write_positive_fixture

    root = Path(root)
    pos_stats = write_positive_fixture(root / "positive", n_recordings=recordings,
                                       n_species=species, seed=seed, use_mp3=with_mp3)
    neg_stats = write_negative_fixture(root / "negative", seed=seed)
    config_path = write_fixture_config(root)
    click.echo(json.dumps({"positive": pos_stats, "negative": neg_stats,
                           "config": str(config_path)}, indent=2))


if __name__ == "__main__":
    main()
