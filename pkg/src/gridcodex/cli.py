"""Operator command line: build KBs, query, benchmark, serve.

Results go to stdout so they pipe cleanly; diagnostics and progress go to
stderr. Exit codes: 0 success, 1 validation error, 2 provider or runtime
failure.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .config import EngineConfig
from .corpus import SourceDocument
from .engine import Engine
from .errors import (
    AuthError,
    ContextLengthExceeded,
    GridCodexError,
    TransportError,
)
from .evaluation import load_dataset, render_table, run_benchmark
from .qa import MODES

RUNTIME_ERRORS = (TransportError, AuthError, ContextLengthExceeded)


def _fail(message: str, exit_code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(exit_code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except RUNTIME_ERRORS as exc:
            _fail(str(exc), 2)
        except GridCodexError as exc:
            _fail(str(exc), 1)
        except OSError as exc:
            _fail(str(exc), 2)

    return wrapper


def make_engine(config_path: str | None, providers_spec: str | None, data_dir: str | None) -> Engine:
    if config_path:
        cfg = EngineConfig.from_yaml(config_path)
    else:
        cfg = EngineConfig()
    if data_dir:
        cfg.data_dir = Path(data_dir).resolve()
    if providers_spec:
        kind, _, arg = providers_spec.partition(":")
        if kind != "scripted" or not arg:
            _fail(f"unsupported providers spec {providers_spec!r}; expected scripted:<fixture-dir>", 1)
        cfg = EngineConfig.scripted(
            arg, cfg.data_dir,
            chunk_budget=cfg.chunk_budget, retrieval_k=cfg.retrieval_k,
            term_k=cfg.term_k, term_floor=cfg.term_floor, raptor=cfg.raptor,
            guardrail=cfg.guardrail, prompts_dir=cfg.prompts_dir,
        )
    return Engine(cfg)


def engine_options(fn):
    fn = click.option("--config", "config_path", envvar="GRIDCODEX_CONFIG",
                      type=click.Path(exists=True, dir_okay=False),
                      help="Engine config YAML (env: GRIDCODEX_CONFIG).")(fn)
    fn = click.option("--providers", "providers_spec",
                      help="Provider override, e.g. scripted:<fixture-dir>.")(fn)
    fn = click.option("--data-dir", help="Override the data directory.")(fn)
    return fn


@click.group()
def main():
    """Regulation question answering over hierarchical grid codes."""


@main.command()
@click.argument("files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=click.Choice(["factual", "terminology"]), required=True)
@click.option("--region", required=True)
@click.option("--kb-id", required=True)
@click.option("--language", default="en")
@click.option("--force", is_flag=True, help="Replace an existing KB with the same id.")
@engine_options
@handle_errors
def ingest(files, kind, region, kb_id, language, force, config_path, providers_spec, data_dir):
    """Build a knowledge base from document or glossary files."""
    engine = make_engine(config_path, providers_spec, data_dir)
    if kind == "factual":
        docs = [
            SourceDocument(
                doc_id=Path(f).stem, region=region, language=language,
                title=Path(f).stem.replace("_", " "),
                body=Path(f).read_text(encoding="utf-8"),
            )
            for f in files
        ]
        kb = engine.ingest_factual(
            docs, kb_id=kb_id, region=region, language=language, force=force,
            progress=lambda s: click.echo(f"  {s}", err=True),
        )
        leaves = sum(1 for c in kb.chunks.values() if c.level == 0)
        click.echo(f"kb {kb_id}: {leaves} leaf chunks, "
                   f"{len(kb.chunks) - leaves} summary chunks, "
                   f"{len(kb.tree.levels)} levels")
    else:
        kb, warnings = engine.ingest_terminology(
            list(files), kb_id=kb_id, region=region, language=language, force=force
        )
        for warning in warnings:
            click.echo(f"warning: {warning}", err=True)
        click.echo(f"kb {kb_id}: {len(kb.chunks)} term entries")


@main.command()
@click.argument("question")
@click.option("--region", required=True)
@click.option("--mode", type=click.Choice(list(MODES)), default="gridcodex")
@click.option("--k", type=int, default=None)
@click.option("--show-trace", is_flag=True, help="Print the stage table after the answer.")
@engine_options
@handle_errors
def query(question, region, mode, k, show_trace, config_path, providers_spec, data_dir):
    """Answer one question and print the cited answer."""
    engine = make_engine(config_path, providers_spec, data_dir)
    trace = engine.answer_query(question, region, mode, k=k)
    click.echo(trace.answer)
    if trace.cited_chunk_ids:
        click.echo("\ncitations:")
        hits = {h["chunk_id"]: h for h in trace.retrieval_hits}
        for cid in trace.cited_chunk_ids:
            labels = ".".join(p[0] for p in hits[cid]["clause_path"]) if cid in hits else "-"
            click.echo(f"  [{cid}] clause {labels}")
    if show_trace:
        click.echo(f"\ntrace {trace.trace_id} (mode {trace.mode})")
        rows = [
            ("term hits", "; ".join(h["term"] for h in trace.term_hits) or "-"),
            ("enriched", trace.enriched_query or "-"),
            ("translated", trace.translated_query or "-"),
            ("retrieved", str(len(trace.retrieval_hits))),
            ("abstained", str(trace.abstained)),
            ("flags", ", ".join(trace.flags) or "-"),
        ]
        rows.extend((f"t_{stage}", f"{secs * 1000:.1f} ms") for stage, secs in trace.timings.items())
        width = max(len(name) for name, _ in rows)
        for name, value in rows:
            click.echo(f"  {name.ljust(width)}  {value}")


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--modes", default=",".join(MODES), show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@engine_options
@handle_errors
def eval(dataset, modes, out, config_path, providers_spec, data_dir):
    """Run the benchmark and print the metrics table."""
    engine = make_engine(config_path, providers_spec, data_dir)
    items = load_dataset(dataset)
    mode_list = [m.strip() for m in modes.split(",") if m.strip()]
    out_path = Path(out)
    work_dir = out_path.parent / f"{out_path.stem}.work"
    report = run_benchmark(items, mode_list, engine, work_dir)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(report.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
    click.echo(render_table(report), nl=False)
    click.echo(f"report written to {out_path}", err=True)


@main.group()
def kb():
    """Knowledge-base management."""


@kb.command("list")
@engine_options
@handle_errors
def kb_list(config_path, providers_spec, data_dir):
    """List registered knowledge bases."""
    engine = make_engine(config_path, providers_spec, data_dir)
    metas = engine.registry.list()
    if not metas:
        click.echo("no knowledge bases registered")
        return
    for meta in metas:
        click.echo(f"{meta['kb_id']}  kind={meta['kind']}  region={meta['region']}  "
                   f"language={meta.get('language', '-')}")


@main.command()
@click.option("--config", "config_path", envvar="GRIDCODEX_CONFIG", required=True,
              type=click.Path(exists=True, dir_okay=False))
@handle_errors
def serve(config_path):
    """Run the HTTP service (blocking)."""
    from .service import serve as run_service

    cfg = EngineConfig.from_yaml(config_path)
    click.echo(f"serving on {cfg.host}:{cfg.port}", err=True)
    run_service(cfg)


@main.group()
def raptor():
    """Summary-tree maintenance."""


@raptor.command("rebuild")
@click.option("--kb-id", required=True)
@engine_options
@handle_errors
def raptor_rebuild(kb_id, config_path, providers_spec, data_dir):
    """Rebuild the summary tree of a factual KB from its stored leaves."""
    engine = make_engine(config_path, providers_spec, data_dir)
    kb = engine.rebuild_raptor(kb_id, progress=lambda s: click.echo(f"  {s}", err=True))
    leaves = sum(1 for c in kb.chunks.values() if c.level == 0)
    click.echo(f"kb {kb_id}: rebuilt, {len(kb.chunks) - leaves} summary chunks, "
               f"{len(kb.tree.levels)} levels")


if __name__ == "__main__":
    main()
