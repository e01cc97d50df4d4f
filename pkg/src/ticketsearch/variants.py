"""Weighted query variants: normalization, typo repair, intent expansion, translation."""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from importlib import resources

from .embedding import tokenize

VARIANT_KINDS = ("original", "normalized", "typo_fixed", "intent_expanded", "translated")
INTENT_ORDER = ("definition", "installation", "containers", "error_troubleshooting")

DEFAULT_TYPO_MIN_FREQUENCY = 5

_PUNCT_RE = re.compile(r"[^\w\s]", re.UNICODE)
_WS_RE = re.compile(r"\s+")


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class QueryVariant:
    text: str
    kind: str
    weight: float

    def __post_init__(self) -> None:
        if not 0.0 < self.weight <= 1.0:
            raise ValueError("variant weight must be in (0, 1]")
        if self.kind not in VARIANT_KINDS:
            raise ValueError(f"unknown variant kind {self.kind!r}")


@dataclass(frozen=True)
class VariantWeights:
    normalized: float = 0.9
    typo_fixed: float = 0.8
    intent_expanded: float = 0.7
    translated: float = 0.7


def fold_accents(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(c for c in decomposed if not unicodedata.combining(c))


def normalize_query(query: str) -> str:
    """Lowercase, accent-folded, punctuation stripped, whitespace collapsed."""
    text = fold_accents(query.lower())
    text = _PUNCT_RE.sub(" ", text)
    return _WS_RE.sub(" ", text).strip()


def levenshtein(a: str, b: str) -> int:
    """Plain insert/delete/substitute edit distance (no transpositions)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def load_intent_lexicon(path=None) -> dict:
    if path is None:
        raw = resources.files("ticketsearch.data").joinpath("intent_lexicon.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    lexicon = json.loads(raw)
    for cls in INTENT_ORDER:
        entry = lexicon.get(cls)
        if not entry or not entry.get("triggers") or not entry.get("expansions"):
            raise ValueError(f"intent class {cls!r} must define non-empty triggers and expansions")
    return lexicon


def load_translation_dictionary(path=None) -> dict:
    if path is None:
        raw = resources.files("ticketsearch.data").joinpath("es_en_dictionary.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    dictionary = json.loads(raw)
    for key, value in dictionary.items():
        if key != key.lower() or value != value.lower():
            raise ValueError(f"dictionary entries must be lowercase: {key!r} -> {value!r}")
    return dictionary


def _repair_typos(tokens, vocab, min_frequency: int):
    """Replace each out-of-vocabulary token by the most frequent vocabulary
    token at edit distance exactly 1 (frequency >= min_frequency); ties go
    to higher frequency, then lexicographic order."""
    replaced = False
    out = []
    for token in tokens:
        if token in vocab:
            out.append(token)
            continue
        best = None
        for candidate, freq in vocab.items():
            if freq < min_frequency or abs(len(candidate) - len(token)) > 1:
                continue
            if levenshtein(token, candidate) != 1:
                continue
            if best is None or freq > best[1] or (freq == best[1] and candidate < best[0]):
                best = (candidate, freq)
        if best is None:
            out.append(token)
        else:
            out.append(best[0])
            replaced = True
    return out, replaced


def _first_intent(tokens, lexicon) -> str | None:
    token_set = set(tokens)
    for cls in INTENT_ORDER:
        if token_set & set(lexicon[cls]["triggers"]):
            return cls
    return None


def _translate(text: str, dictionary: dict) -> tuple[str, int]:
    replacements = 0
    # Longer keys first so fixed phrases win over their component tokens.
    for key in sorted(dictionary, key=len, reverse=True):
        pattern = r"\b" + re.escape(key) + r"\b"
        text, n = re.subn(pattern, dictionary[key], text)
        replacements += n
    return text, replacements


def make_variants(
    query: str,
    vocab,
    lexicon: dict,
    dictionary: dict,
    weights: VariantWeights | None = None,
    *,
    min_frequency: int = DEFAULT_TYPO_MIN_FREQUENCY,
) -> list[QueryVariant]:
    """Emit the original query plus applicable distinct rewrites.

    Duplicate texts are merged keeping the maximum weight; the original is
    always first with weight 1.0 and at most 5 variants are returned.
    """
    if not query.strip():
        raise QueryError("empty query")
    weights = weights or VariantWeights()

    candidates: list[QueryVariant] = [QueryVariant(query, "original", 1.0)]

    normalized = normalize_query(query)
    if normalized:
        candidates.append(QueryVariant(normalized, "normalized", weights.normalized))

        tokens = normalized.split(" ")
        fixed, replaced = _repair_typos(tokens, vocab, min_frequency)
        if replaced:
            candidates.append(
                QueryVariant(" ".join(fixed), "typo_fixed", weights.typo_fixed)
            )

        intent = _first_intent(tokens, lexicon)
        if intent is not None:
            expanded = normalized + " " + " ".join(lexicon[intent]["expansions"])
            candidates.append(
                QueryVariant(expanded, "intent_expanded", weights.intent_expanded)
            )

        translated, n = _translate(normalized, dictionary)
        if n > 0:
            candidates.append(QueryVariant(translated, "translated", weights.translated))

    merged: dict[str, QueryVariant] = {}
    for variant in candidates:
        prior = merged.get(variant.text)
        if prior is None:
            merged[variant.text] = variant
        elif variant.weight > prior.weight:
            merged[variant.text] = QueryVariant(variant.text, prior.kind, variant.weight)
    return list(merged.values())[:5]
