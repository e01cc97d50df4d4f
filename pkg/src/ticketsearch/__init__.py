"""Hybrid (dense + BM25) search over a support-ticket corpus, with
incremental ingestion, atomic index promotion, and zero-downtime engine
reload."""

__version__ = "0.1.0"
