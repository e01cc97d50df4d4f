"""The retrieval pipeline: per-variant dual-channel search, dynamic pools,
weighted reciprocal-rank fusion, rescue injection, reranking, and heuristic
score adjustment."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from datetime import datetime

import numpy as np

from . import indexstore
from .corpus import ChunkRecord
from .embedding import tokenize
from .lexical import Bm25Index
from .variants import QueryVariant, VariantWeights, make_variants


@dataclass(frozen=True)
class FilterSet:
    department: str | None = None
    date_from: datetime | None = None
    date_to: datetime | None = None
    source_types: frozenset | None = None

    @property
    def has_temporal(self) -> bool:
        return self.date_from is not None or self.date_to is not None

    @property
    def has_department(self) -> bool:
        return self.department is not None

    def is_empty(self) -> bool:
        return not (self.has_temporal or self.has_department or self.source_types)

    def allows(self, record: ChunkRecord) -> bool:
        if self.department is not None and record.department != self.department:
            return False
        if self.date_from is not None and record.last_updated < self.date_from:
            return False
        if self.date_to is not None and record.last_updated > self.date_to:
            return False
        if self.source_types is not None and record.source_type not in self.source_types:
            return False
        return True

    def mask(self, records) -> np.ndarray | None:
        if self.is_empty():
            return None
        return np.array([self.allows(r) for r in records], dtype=bool)


@dataclass(frozen=True)
class ScoreAdjustments:
    department_hint: float = 1.15
    non_ticket_short: float = 0.85
    low_density: float = 0.80
    title_coverage: float = 1.10
    exact_single_term: float = 1.20


@dataclass(frozen=True)
class RetrievalConfig:
    semantic_k: int = 20
    lexical_k: int = 20
    final_k: int = 10
    rerank_top_n: int = 30
    short_query_tokens: int = 2
    pool_multiplier: int = 2
    k_rrf: float = 60.0
    semantic_weight: float = 0.6
    lexical_weight: float = 0.4
    adjustments: ScoreAdjustments = field(default_factory=ScoreAdjustments)
    department_aliases: dict = field(default_factory=dict)  # alias token -> department
    semantic_rescue_n: int = 3
    exact_match_cap: int = 20
    max_overfetch_rounds: int = 3
    snippet_chars: int = 300

    def __post_init__(self) -> None:
        if self.rerank_top_n < self.final_k:
            raise ValueError("rerank_top_n must be >= final_k")
        if self.k_rrf <= 0:
            raise ValueError("k_rrf must be positive")
        if self.semantic_weight <= 0 or self.lexical_weight <= 0:
            raise ValueError("channel weights must be positive")


@dataclass(frozen=True)
class RankedList:
    """One ranker's output (channel x variant); position implies 1-based rank."""

    ranker_id: str
    doc_ids: tuple
    weight: float

    def __post_init__(self) -> None:
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError("ranked list contains duplicate ids")


@dataclass
class Candidate:
    doc_idx: int
    fused_score: float
    rerank_score: float = 0.0
    adjusted_score: float = 0.0
    provenance: tuple = ()


@dataclass(frozen=True)
class EngineSnapshot:
    """Immutable generation-numbered bundle serving queries."""

    matrix: np.ndarray
    records: tuple
    lexical: Bm25Index
    vocab: dict  # token -> corpus frequency, from the docstore of this generation
    generation: int
    embedder_id: str

    @property
    def size(self) -> int:
        return len(self.records)


def effective_pools(query: str, filters: FilterSet, cfg: RetrievalConfig, corpus_size: int):
    """Base pools multiplied once for a short query and once per active
    filter class (temporal, department), capped at corpus size."""
    semantic_k, lexical_k = cfg.semantic_k, cfg.lexical_k
    factor = 1
    if len(tokenize(query)) <= cfg.short_query_tokens:
        factor *= cfg.pool_multiplier
    if filters.has_temporal:
        factor *= cfg.pool_multiplier
    if filters.has_department:
        factor *= cfg.pool_multiplier
    semantic_k = min(semantic_k * factor, corpus_size) if corpus_size else semantic_k * factor
    lexical_k = min(lexical_k * factor, corpus_size) if corpus_size else lexical_k * factor
    return max(semantic_k, 1), max(lexical_k, 1)


def fuse_wrrf(lists, k_rrf: float = 60.0):
    """Weighted reciprocal rank fusion over the given ranked lists.

    s(d) = sum over lists containing d of w * 1/(k_rrf + rank), ranks
    1-based; output sorted by score descending, ties by lower id. Operates
    on positions only, never on raw channel scores.
    """
    scores: dict = {}
    for ranked in lists:
        for position, doc in enumerate(ranked.doc_ids, start=1):
            scores[doc] = scores.get(doc, 0.0) + ranked.weight / (k_rrf + position)
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


def select_candidates(fused, cfg: RetrievalConfig, query: str, snapshot: EngineSnapshot,
                      query_vec, filters: FilterSet, window: int | None = None):
    """Top max(rerank_top_n, 4*final_k) fused candidates plus rescues.

    Rescues: the top pure-dense hits for the query itself, and for
    single-token queries every document containing the exact token (capped)
    that fusion left out.
    """
    if window is None:
        window = max(cfg.rerank_top_n, 4 * cfg.final_k)
    candidates = [
        Candidate(doc_idx=doc, fused_score=score, provenance=("fused",))
        for doc, score in fused[:window]
    ]
    present = {c.doc_idx for c in candidates}

    mask = filters.mask(snapshot.records)
    if snapshot.size and cfg.semantic_rescue_n > 0:
        for doc, score in indexstore.dense_search(
            snapshot.matrix, query_vec, cfg.semantic_rescue_n, allowed=mask
        ):
            if doc not in present:
                present.add(doc)
                candidates.append(
                    Candidate(doc_idx=doc, fused_score=0.0, provenance=("semantic_rescue",))
                )

    query_tokens = tokenize(query)
    if len(query_tokens) == 1:
        token = query_tokens[0]
        injected = 0
        for idx, record in enumerate(snapshot.records):
            if injected >= cfg.exact_match_cap:
                break
            if idx in present:
                continue
            if mask is not None and not mask[idx]:
                continue
            if token in tokenize(record.text):
                present.add(idx)
                candidates.append(
                    Candidate(doc_idx=idx, fused_score=0.0, provenance=("exact_rescue",))
                )
                injected += 1
    return candidates


def build_prompts(query: str, variants) -> list[str]:
    prompts = [query, query.lower(), query.title()]
    prompts.extend(v.text for v in variants)
    seen: set[str] = set()
    out = []
    for p in prompts:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


def rerank_candidates(candidates, prompts, reranker, snapshot: EngineSnapshot) -> bool:
    """Score each candidate as the max over prompts; a failing pair
    contributes -inf, and a totally failed reranker falls back to the fused
    order. Returns True when the fallback was taken."""
    any_success = False
    for cand in candidates:
        text = snapshot.records[cand.doc_idx].text
        best = -math.inf
        for prompt in prompts:
            try:
                s = reranker.score(prompt, text)
            except Exception:
                continue
            any_success = True
            if s > best:
                best = s
        cand.rerank_score = best
    if not any_success and candidates:
        for cand in candidates:
            cand.rerank_score = cand.fused_score
        return True
    return False


def _alphanumeric_ratio(text: str) -> float:
    if not text:
        return 0.0
    return sum(c.isalnum() for c in text) / len(text)


def adjust_scores(candidates, query: str, filters: FilterSet, cfg: RetrievalConfig,
                  snapshot: EngineSnapshot) -> None:
    """Multiply the rerank score by every applicable heuristic factor.

    Factors are order-independent (a pure product): department-hint match,
    non-ticket source on a short query, low information density, full title
    coverage, and exact single-term match.
    """
    adj = cfg.adjustments
    query_tokens = tokenize(query)
    token_set = set(query_tokens)
    hinted = {
        cfg.department_aliases[t] for t in token_set if t in cfg.department_aliases
    }
    short = len(query_tokens) <= cfg.short_query_tokens
    single = len(query_tokens) == 1
    for cand in candidates:
        record = snapshot.records[cand.doc_idx]
        factor = 1.0
        if record.department in hinted:
            factor *= adj.department_hint
        if short and record.source_type != "ticket":
            factor *= adj.non_ticket_short
        text_tokens = tokenize(record.text)
        if _alphanumeric_ratio(record.text) < 0.4 or len(set(text_tokens)) < 5:
            factor *= adj.low_density
        if record.title and token_set and token_set <= set(tokenize(record.title)):
            factor *= adj.title_coverage
        if single and query_tokens[0] in text_tokens:
            factor *= adj.exact_single_term
        cand.adjusted_score = cand.rerank_score * factor
    candidates.sort(key=lambda c: (-c.adjusted_score, c.doc_idx))


@dataclass
class SearchOutcome:
    candidates: list  # adjusted order, full rerank window (not yet truncated)
    variants: list
    timings: dict
    reranker_fallback: bool
    candidates_for: object  # callable(window) -> adjusted candidates for a bigger window
    fused_size: int


def run_search(
    snapshot: EngineSnapshot,
    query: str,
    filters: FilterSet,
    cfg: RetrievalConfig,
    embedder,
    reranker,
    lexicon: dict,
    dictionary: dict,
    variant_weights: VariantWeights | None = None,
    typo_min_frequency: int = 5,
) -> SearchOutcome:
    """Execute the full chunk-level pipeline against one engine snapshot."""
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    variants = make_variants(
        query, snapshot.vocab, lexicon, dictionary, variant_weights,
        min_frequency=typo_min_frequency,
    )
    timings["variants"] = time.perf_counter() - t0

    semantic_k, lexical_k = effective_pools(query, filters, cfg, snapshot.size)
    mask = filters.mask(snapshot.records)

    lists: list[RankedList] = []
    t_dense = t_lex = 0.0
    query_vec = embedder.embed(query)
    for variant in variants:
        t0 = time.perf_counter()
        vec = embedder.embed(variant.text)
        dense_hits = (
            indexstore.dense_search(snapshot.matrix, vec, semantic_k, allowed=mask)
            if snapshot.size
            else []
        )
        t_dense += time.perf_counter() - t0
        lists.append(
            RankedList(
                ranker_id=f"semantic:{variant.kind}",
                doc_ids=tuple(doc for doc, _ in dense_hits),
                weight=cfg.semantic_weight * variant.weight,
            )
        )
        t0 = time.perf_counter()
        lex_hits = snapshot.lexical.search(tokenize(variant.text), lexical_k, allowed=mask)
        t_lex += time.perf_counter() - t0
        lists.append(
            RankedList(
                ranker_id=f"lexical:{variant.kind}",
                doc_ids=tuple(doc for doc, _ in lex_hits),
                weight=cfg.lexical_weight * variant.weight,
            )
        )
    timings["dense"] = t_dense
    timings["lexical"] = t_lex

    t0 = time.perf_counter()
    fused = fuse_wrrf(lists, cfg.k_rrf)
    timings["fusion"] = time.perf_counter() - t0

    prompts = build_prompts(query, variants)
    fallback_seen = {"value": False}

    def candidates_for(window: int):
        cands = select_candidates(fused, cfg, query, snapshot, query_vec, filters, window=window)
        fallback = rerank_candidates(cands, prompts, reranker, snapshot)
        if fallback:
            fallback_seen["value"] = True
        adjust_scores(cands, query, filters, cfg, snapshot)
        return cands

    t0 = time.perf_counter()
    initial = candidates_for(max(cfg.rerank_top_n, 4 * cfg.final_k))
    timings["rerank"] = time.perf_counter() - t0

    return SearchOutcome(
        candidates=initial,
        variants=variants,
        timings=timings,
        reranker_fallback=fallback_seen["value"],
        candidates_for=candidates_for,
        fused_size=len(fused),
    )
