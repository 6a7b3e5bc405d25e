"""Operator CLI: ingest, merge, index, serve, ask.

Each pipeline stage is independently operable. Providers come from
environment variables; --mock-providers swaps in the deterministic
scripted/hash implementations for offline runs.

Exit codes: 0 success, 1 usage error, 2 environment/config error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import ingestion
from .agent import SessionState, Toolbox, run_turn
from .domain import CaseStore, default_vocabulary
from .index_store import (
    CHUNK_COLLECTION,
    CHUNK_PROFILE,
    InProcessVectorStore,
    TITLE_COLLECTION,
    TITLE_PROFILE,
    chunk_document,
    extract_pdf_pages,
    index_case,
)
from .providers import (
    HashEmbeddingProvider,
    HttpChatProvider,
    HttpEmbeddingProvider,
    HttpResearchProvider,
    HttpWebSearchProvider,
    ProviderConfig,
    ScriptedChatProvider,
    ScriptedResearchProvider,
    ScriptedWebSearchProvider,
)


class ConfigError(Exception):
    pass


def _chat_provider(mock: bool):
    if mock:
        return ScriptedChatProvider(["{}"] * 1000)
    config = ProviderConfig.from_env()
    if not config.chat_url:
        raise ConfigError("CHAT_PROVIDER_URL is not set (or pass --mock-providers)")
    return HttpChatProvider(config)


def _embed_provider(mock: bool):
    if mock:
        return HashEmbeddingProvider()
    config = ProviderConfig.from_env()
    if not config.embed_url:
        raise ConfigError("EMBED_PROVIDER_URL is not set (or pass --mock-providers)")
    return HttpEmbeddingProvider(
        config,
        models={CHUNK_PROFILE: "chunk-embedding", TITLE_PROFILE: "title-embedding"},
        dims={CHUNK_PROFILE: 1536, TITLE_PROFILE: 1536},
    )


@click.group()
def cli():
    """Research assistant for competition-law cases."""


@cli.group()
def ingest():
    """Build the case dataset from source snapshots."""


@ingest.command("eu")
@click.option("--in", "in_file", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_file", type=click.Path(path_type=Path), required=True)
@click.option("--overrides", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--sample", "sample_n", type=int, default=0, help="Emit a stratified review sample.")
def ingest_eu(in_file: Path, out_file: Path, overrides, sample_n):
    """Clean an EU endpoint snapshot (JSONL of raw records) into the dataset."""
    vocab = default_vocabulary()
    raw = [json.loads(line) for line in in_file.read_text("utf-8").splitlines() if line.strip()]
    records, report = ingestion.clean_eu_cases(raw, vocab.violations, vocab)
    if overrides:
        records = ingestion.apply_overrides(records, json.loads(Path(overrides).read_text("utf-8")))
    ingestion.write_dataset(records, out_file)
    click.echo(
        f"kept {report.kept}/{report.total} "
        f"(empty link: {report.dropped_empty_link}, non-English: {report.dropped_non_english}, "
        f"invalid: {report.dropped_invalid})"
    )
    if sample_n:
        for record in ingestion.stratified_sample(records, sample_n):
            click.echo(f"SAMPLE {record.case_id}\t{record.violation}\t{record.case_title}")


@ingest.command("de")
@click.option("--links", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--texts", "texts_dir", type=click.Path(exists=True, path_type=Path), required=True,
              help="Directory of decision texts, one <case_id>.txt per link.")
@click.option("--out", "out_file", type=click.Path(path_type=Path), required=True)
@click.option("--overrides", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--pages", type=int, default=5, help="Leading pages of text fed to extraction.")
@click.option("--mock-providers", is_flag=True)
def ingest_de(links: Path, texts_dir: Path, out_file: Path, overrides, pages, mock_providers):
    """Deduce metadata from decision links and extract the rest via the chat provider."""
    vocab = default_vocabulary()
    chat = _chat_provider(mock_providers)
    grammar = ingestion.UrlGrammar.default()
    records = []
    for url in links.read_text("utf-8").splitlines():
        url = url.strip()
        if not url:
            continue
        meta = ingestion.parse_bka_url(url, grammar)
        text_path = Path(texts_dir) / f"{meta.case_id}.txt"
        text = text_path.read_text("utf-8") if text_path.exists() else ""
        leading = "\n".join(text.split("\f")[:pages])
        records.append(ingestion.build_german_case(url, leading or text, chat, vocab, grammar))
    if overrides:
        records = ingestion.apply_overrides(records, json.loads(Path(overrides).read_text("utf-8")))
    ingestion.write_dataset(records, out_file)
    click.echo(f"wrote {len(records)} German cases to {out_file}")


@cli.command("merge")
@click.option("--eu", "eu_file", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--de", "de_file", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_file", type=click.Path(path_type=Path), required=True)
def merge(eu_file: Path, de_file: Path, out_file: Path):
    """Union the EU and German datasets into one interchange file."""
    eu = ingestion.read_dataset(eu_file)
    de = ingestion.read_dataset(de_file)
    store = ingestion.merge_datasets(eu, de)
    ingestion.write_dataset(list(store), out_file)
    click.echo(f"merged {len(eu)} EU + {len(de)} DE -> {len(store)} cases")


@cli.command("index")
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--store", "store_dir", type=click.Path(path_type=Path), required=True)
@click.option("--pdf-dir", type=click.Path(exists=True, path_type=Path), default=None,
              help="Directory of decision PDFs, one <case_id>.pdf per case.")
@click.option("--mock-providers", is_flag=True)
def index(dataset: Path, store_dir: Path, pdf_dir, mock_providers):
    """Chunk, embed, and persist decision documents plus title embeddings."""
    embed = _embed_provider(mock_providers)
    store = InProcessVectorStore()
    store.declare_collection(CHUNK_COLLECTION, CHUNK_PROFILE, embed.dimension(CHUNK_PROFILE))
    store.declare_collection(TITLE_COLLECTION, TITLE_PROFILE, embed.dimension(TITLE_PROFILE))
    total_chunks = 0
    for case in ingestion.read_dataset(dataset):
        chunks = []
        if pdf_dir:
            pdf_path = Path(pdf_dir) / f"{case.case_id}.pdf"
            if pdf_path.exists():
                pages = extract_pdf_pages(pdf_path.read_bytes())
                chunks = chunk_document(pages, case_id=case.case_id, source_url=case.pdf_url)
        total_chunks += index_case(case, chunks, store, embed)
    store.save(store_dir)
    click.echo(f"indexed {total_chunks} chunks into {store_dir}")


def _build_toolbox(dataset: Path, store_dir, mock: bool) -> Toolbox:
    case_store = CaseStore(ingestion.read_dataset(dataset))
    vector_store = InProcessVectorStore(Path(store_dir) if store_dir else None)
    vocab = default_vocabulary()
    if mock:
        chat = ScriptedChatProvider(["{}"] * 1000)
        research = ScriptedResearchProvider([{"answer_text": "", "source_urls": [], "candidate_cases": []}] * 100)
        web = ScriptedWebSearchProvider([[]] * 100)
        embed = HashEmbeddingProvider()
    else:
        config = ProviderConfig.from_env()
        if not (config.chat_url and config.embed_url):
            raise ConfigError("provider URLs are not configured (or pass --mock-providers)")
        chat = HttpChatProvider(config)
        embed = _embed_provider(False)
        web = HttpWebSearchProvider(config)
        research = HttpResearchProvider(config)
    return Toolbox(
        case_store=case_store,
        vector_store=vector_store,
        embed=embed,
        chat=chat,
        research=research,
        web=web,
        vocab=vocab,
    )


@cli.command("serve")
@click.option("--port", type=int, default=8000, envvar="PORT")
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True,
              envvar="DATASET_PATH")
@click.option("--store", "store_dir", type=click.Path(path_type=Path), required=True,
              envvar="STORE_DIR")
@click.option("--journal-dir", type=click.Path(path_type=Path), default=None)
@click.option("--mock-providers", is_flag=True)
def serve(port, dataset, store_dir, journal_dir, mock_providers):
    """Run the HTTP API."""
    import uvicorn

    from .service import create_app

    toolbox = _build_toolbox(dataset, store_dir, mock_providers)
    app = create_app(toolbox, toolbox.chat, journal_dir=journal_dir)
    uvicorn.run(app, host="0.0.0.0", port=port)


@cli.command("ask")
@click.option("--question", required=True)
@click.option("--dataset", type=click.Path(exists=True, path_type=Path), required=True,
              envvar="DATASET_PATH")
@click.option("--store", "store_dir", type=click.Path(path_type=Path), default=None,
              envvar="STORE_DIR")
@click.option("--mock-providers", is_flag=True)
def ask(question, dataset, store_dir, mock_providers):
    """One-shot question; prints the answer and its citations."""
    toolbox = _build_toolbox(dataset, store_dir, mock_providers)
    session = SessionState(session_id="cli")
    outcome = run_turn(session, question, toolbox, toolbox.chat)
    if outcome.kind == "final":
        click.echo(outcome.answer.text)
        for citation in outcome.answer.citations:
            page = f", page {citation.page}" if citation.page else ""
            click.echo(f"  [{citation.marker}] {citation.source_url}{page}")
        for followup in outcome.answer.followups:
            click.echo(f"  follow-up: {followup}")
    else:
        click.echo(f"Clarification needed: {outcome.clarification}")


def main():
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    except click.exceptions.Abort:
        sys.exit(1)


if __name__ == "__main__":
    main()
