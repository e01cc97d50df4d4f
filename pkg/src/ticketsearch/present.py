"""Ticket-level presentation: dedup by ticket, adaptive overfetch, snippets, deep links."""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime

from .corpus import ChunkRecord

SNIPPET_CHARS = 300
MAX_OVERFETCH_ROUNDS = 3


@dataclass(frozen=True)
class TicketResult:
    ticket_id: str
    score: float
    snippet: str
    title: str
    department: str
    last_updated: datetime
    source_type: str
    link: str


def ticket_link(rt_base_url: str, ticket_id: str) -> str:
    return f"{rt_base_url.rstrip('/')}/Ticket/Display.html?id={ticket_id}"


def make_snippet(chunk: ChunkRecord, query_tokens, limit: int = SNIPPET_CHARS) -> str:
    """Pick the `limit`-char window with the most query-token hits (first
    window on ties), strip a leading title duplicate, prepend the title."""
    text = chunk.text
    title = chunk.title.strip()
    if title and text.startswith(title):
        text = text[len(title):].lstrip(" \t\n-—:").strip() or chunk.text

    tokens = [t for t in query_tokens if t]
    if len(text) <= limit:
        window = text
    else:
        spans = []
        for t in tokens:
            spans.extend(
                m.start() for m in re.finditer(re.escape(t), text.lower())
            )
        starts = sorted({0, *(max(0, min(s, len(text) - limit)) for s in spans)})
        best_start, best_hits = 0, -1
        for s in starts:
            piece = text[s : s + limit].lower()
            hits = sum(piece.count(t) for t in tokens)
            if hits > best_hits:
                best_start, best_hits = s, hits
        window = text[best_start : best_start + limit]
    snippet = window.strip()
    if title and not snippet.startswith(title):
        snippet = f"{title} — {snippet}"
    return snippet[:limit].strip()


def _dedup(candidates, records) -> list:
    seen: set[str] = set()
    out = []
    for cand in candidates:
        ticket = records[cand.doc_idx].ticket_id
        if ticket in seen:
            continue
        seen.add(ticket)
        out.append(cand)
    return out


def present(
    candidates,
    records,
    final_k: int,
    refetch,
    *,
    rt_base_url: str,
    query_tokens,
    max_rounds: int = MAX_OVERFETCH_ROUNDS,
) -> list[TicketResult]:
    """Keep the best chunk per ticket; when dedup leaves the response short,
    double the candidate window via `refetch` (at most `max_rounds` times).

    A response shorter than final_k after exhaustion is valid.
    """
    pool = list(candidates)
    window = max(len(pool), 1)
    rounds = 0
    survivors = _dedup(pool, records)
    while len(survivors) < final_k and rounds < max_rounds:
        window *= 2
        more = list(refetch(window))
        rounds += 1
        if len(more) <= len(pool):
            break  # engine had nothing further to offer
        pool = more
        survivors = _dedup(pool, records)

    results = []
    for cand in survivors[:final_k]:
        record = records[cand.doc_idx]
        results.append(
            TicketResult(
                ticket_id=record.ticket_id,
                score=cand.adjusted_score,
                snippet=make_snippet(record, query_tokens),
                title=record.title,
                department=record.department,
                last_updated=record.last_updated,
                source_type=record.source_type,
                link=ticket_link(rt_base_url, record.ticket_id),
            )
        )
    return results
