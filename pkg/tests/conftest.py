from datetime import datetime, timezone

import pytest

from ticketsearch.corpus import ChunkRecord
from ticketsearch.embedding import HashingEmbedder
from ticketsearch.rerank import CoverageReranker
from ticketsearch.variants import load_intent_lexicon, load_translation_dictionary

TS = datetime(2025, 3, 1, 12, 0, 0, tzinfo=timezone.utc)

# Acceptance tests append one "PASS ..."/"FAIL ..." line per criterion here;
# the summary hook prints them after the run, outside output capture.
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


def make_record(text, ticket="T1", conversation=None, chunk_id=0, department="hpc",
                source_type="ticket", title="", ts=TS):
    return ChunkRecord(
        ticket_id=ticket,
        conversation_id=conversation or f"{ticket}/c0",
        chunk_id=chunk_id,
        text=text,
        title=title,
        department=department,
        last_updated=ts,
        source_type=source_type,
        ingest_job_id="test",
    )


def make_snapshot(records, embedder, generation=1, k1=1.5, b=0.75):
    from collections import Counter

    from ticketsearch.embedding import tokenize
    from ticketsearch.engine import EngineSnapshot
    from ticketsearch.lexical import Bm25Index

    records = tuple(records)
    vocab = Counter()
    for r in records:
        vocab.update(tokenize(r.text))
    return EngineSnapshot(
        matrix=embedder.embed_batch([r.text for r in records]),
        records=records,
        lexical=Bm25Index.from_texts([r.text for r in records], k1=k1, b=b),
        vocab=dict(vocab),
        generation=generation,
        embedder_id=embedder.identity,
    )


@pytest.fixture(scope="session")
def embedder():
    return HashingEmbedder()


@pytest.fixture(scope="session")
def reranker():
    return CoverageReranker()


@pytest.fixture(scope="session")
def lexicon():
    return load_intent_lexicon()


@pytest.fixture(scope="session")
def dictionary():
    return load_translation_dictionary()
