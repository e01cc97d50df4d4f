"""Cross-scoring interface with a deterministic coverage-based reference scorer.

A model-server adapter exposing the same `score` method is the production
extension point; the reference scorer keeps every downstream heuristic
exercisable with predictable numbers.
"""

from __future__ import annotations

from .embedding import tokenize


class CoverageReranker:
    """Fraction of distinct prompt tokens that occur in the candidate text.

    Scores lie in [0, 1]; adding a prompt token that occurs in the text
    never decreases the score.
    """

    @property
    def identity(self) -> str:
        return "token-coverage-reranker:v1"

    def score(self, prompt: str, text: str) -> float:
        prompt_tokens = set(tokenize(prompt))
        if not prompt_tokens:
            return 0.0
        text_tokens = set(tokenize(text))
        return len(prompt_tokens & text_tokens) / len(prompt_tokens)
