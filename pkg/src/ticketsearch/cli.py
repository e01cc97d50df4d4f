"""Command-line entry points: serve, build-index, gen-corpus, search."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import load_config
from .corpus import read_corpus, serialize_corpus
from .embedding import HashingEmbedder, tokenize
from .engine import FilterSet, run_search
from .engine_manager import EngineManager
from .indexstore import build_artifact
from .present import present
from .rerank import CoverageReranker
from .service import _parse_date
from .synthetic import generate_synthetic_corpus
from .variants import load_intent_lexicon, load_translation_dictionary


@click.group()
def main():
    """Hybrid semantic search over a support-ticket corpus."""


@main.command("gen-corpus")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--tickets", type=int, default=100, show_default=True)
@click.option("--languages", default="es,en,gl", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Output JSONL path (default: stdout).")
def gen_corpus(seed, tickets, languages, out):
    """Generate a deterministic synthetic ticket corpus."""
    records = generate_synthetic_corpus(
        seed, tickets, tuple(l.strip() for l in languages.split(",") if l.strip())
    )
    text = serialize_corpus(records)
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {len(records)} chunks to {out}")
    else:
        sys.stdout.write(text)


@main.command("build-index")
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--artifact", type=click.Path(file_okay=False), default="data/index",
              show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
def build_index(corpus, artifact, config_path):
    """Build the dense + lexical index artifact from a corpus JSONL file."""
    cfg = load_config(config_path)
    records = read_corpus(corpus, departments=cfg.departments)
    embedder = HashingEmbedder()
    build_artifact(artifact, records, embedder, k1=cfg.bm25.k1, b=cfg.bm25.b)
    click.echo(f"indexed {len(records)} chunks into {artifact}/active")


@main.command("search")
@click.argument("query")
@click.option("--artifact", type=click.Path(exists=True, file_okay=False),
              default="data/index", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--final-k", type=int, default=None)
@click.option("--department", default=None)
@click.option("--date-from", default=None)
@click.option("--date-to", default=None)
@click.option("--as-json", "as_json", is_flag=True, help="Print the raw JSON response.")
def search(query, artifact, config_path, final_k, department, date_from, date_to, as_json):
    """One-shot query against an on-disk artifact, no server needed."""
    cfg = load_config(config_path)
    embedder = HashingEmbedder()
    reranker = CoverageReranker()
    manager = EngineManager(embedder)
    snapshot = manager.reload(artifact)

    filters = FilterSet(
        department=department,
        date_from=_parse_date(date_from, end=False) if date_from else None,
        date_to=_parse_date(date_to, end=True) if date_to else None,
    )
    retrieval = cfg.retrieval
    if final_k:
        from dataclasses import replace

        retrieval = replace(
            retrieval, final_k=final_k,
            rerank_top_n=max(retrieval.rerank_top_n, final_k),
        )
    outcome = run_search(
        snapshot, query, filters, retrieval, embedder, reranker,
        load_intent_lexicon(cfg.variants.lexicon_path),
        load_translation_dictionary(cfg.variants.dictionary_path),
        cfg.variants.weights,
        typo_min_frequency=cfg.variants.typo_min_frequency,
    )
    results = present(
        outcome.candidates, snapshot.records, retrieval.final_k,
        outcome.candidates_for,
        rt_base_url=cfg.server.rt_base_url,
        query_tokens=tokenize(query),
    )
    if as_json:
        click.echo(json.dumps(
            [
                {
                    "ticket_id": r.ticket_id,
                    "score": r.score,
                    "snippet": r.snippet,
                    "department": r.department,
                    "link": r.link,
                }
                for r in results
            ],
            ensure_ascii=False, indent=2,
        ))
        return
    if not results:
        click.echo("no results")
        return
    for rank, r in enumerate(results, start=1):
        click.echo(f"{rank:2d}. [{r.score:.4f}] {r.ticket_id} ({r.department}) {r.link}")
        click.echo(f"    {r.snippet[:160]}")


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--data-dir", type=click.Path(file_okay=False), default="data",
              show_default=True)
@click.option("--host", default=None, help="Override the configured bind address.")
@click.option("--port", type=int, default=None)
def serve(config_path, data_dir, host, port):
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    cfg = load_config(config_path)
    app = create_app(cfg, data_dir)
    uvicorn.run(app, host=host or cfg.server.host, port=port or cfg.server.port)


if __name__ == "__main__":
    main()
