"""Okapi BM25 inverted index over tokenized chunks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embedding import tokenize

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75


@dataclass
class Bm25Index:
    """Posting lists plus the corpus statistics needed for scoring.

    IDF uses the non-negative variant ln(1 + (N - df + 0.5) / (df + 0.5)).
    """

    postings: dict = field(default_factory=dict)  # term -> list[(doc_idx, tf)]
    doc_lens: list = field(default_factory=list)
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    @classmethod
    def from_texts(cls, texts, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> "Bm25Index":
        index = cls(k1=k1, b=b)
        for text in texts:
            index.add_document(tokenize(text))
        return index

    def add_document(self, tokens) -> None:
        doc_idx = len(self.doc_lens)
        self.doc_lens.append(len(tokens))
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        for term, tf in counts.items():
            self.postings.setdefault(term, []).append((doc_idx, tf))

    @property
    def doc_count(self) -> int:
        return len(self.doc_lens)

    @property
    def avgdl(self) -> float:
        if not self.doc_lens:
            return 0.0
        return sum(self.doc_lens) / len(self.doc_lens)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        if df == 0:
            return 0.0
        n = self.doc_count
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def scores(self, query_tokens) -> np.ndarray:
        """BM25 score of every document for the given query tokens."""
        out = np.zeros(self.doc_count, dtype=np.float64)
        if not self.doc_count:
            return out
        avgdl = self.avgdl
        for term in query_tokens:
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for doc_idx, tf in plist:
                dl = self.doc_lens[doc_idx]
                denom = tf + self.k1 * (1.0 - self.b + self.b * dl / avgdl)
                out[doc_idx] += idf * tf * (self.k1 + 1.0) / denom
        return out

    def search(self, query_tokens, k: int, allowed=None) -> list[tuple[int, float]]:
        """Top-k (doc_idx, score) with zero scores excluded, ties by lower index."""
        if k < 1:
            raise ValueError("k must be >= 1")
        scores = self.scores(query_tokens)
        hits = [
            (i, s)
            for i, s in enumerate(scores)
            if s > 0.0 and (allowed is None or allowed[i])
        ]
        hits.sort(key=lambda pair: (-pair[1], pair[0]))
        return hits[:k]

    def to_dict(self) -> dict:
        return {
            "k1": self.k1,
            "b": self.b,
            "doc_lens": list(self.doc_lens),
            "postings": {
                term: [[i, tf] for i, tf in plist]
                for term, plist in sorted(self.postings.items())
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Bm25Index":
        return cls(
            postings={
                term: [(int(i), int(tf)) for i, tf in plist]
                for term, plist in d["postings"].items()
            },
            doc_lens=[int(x) for x in d["doc_lens"]],
            k1=float(d["k1"]),
            b=float(d["b"]),
        )
