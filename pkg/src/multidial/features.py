"""Raw-text state features: tokenisation, the two input-compression schemes
(slot-value delexicalisation and synonym folding), and word-vector encoding
of the last system/user exchange.

System words enter the state as hit-or-miss bits; user words carry their
recognition confidence in [0, 1] and override system bits on overlap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

# Provenance codes for StateVector entries.
PROV_ABSENT = 0
PROV_SYSTEM = 1
PROV_USER = 2

# Tokens starting with '_' carry retrieved venue info and never become
# features: the presentation vocabulary would otherwise be unbounded.
INFO_PREFIX = "_"

_TOKEN_CLEAN = re.compile(r"[^a-z0-9_$\s]+")


class LexiconError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace. Deterministic."""
    cleaned = _TOKEN_CLEAN.sub(" ", text.lower())
    return cleaned.split()


class Vocabulary:
    """Ordered, duplicate-free token list; vector index equals token rank."""

    def __init__(self, tokens: list[str] | tuple[str, ...]):
        seen = set()
        ordered = []
        for t in tokens:
            if t not in seen:
                seen.add(t)
                ordered.append(t)
        self.tokens: tuple[str, ...] = tuple(ordered)
        self.index: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def from_corpus_tokens(cls, tokens) -> "Vocabulary":
        """Sorted construction, so the ordering is independent of corpus order."""
        return cls(sorted(set(tokens)))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __iter__(self):
        return iter(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens


class SlotLexicon:
    """Maps surface values to slot ids (e.g. edinburgh -> h_city).

    Within one lexicon a value may belong to at most one slot; merging
    domain lexicons keeps that rule across the union.
    """

    def __init__(self, slot_values: dict[str, set[str]]):
        self.slot_values = {slot: set(vals) for slot, vals in slot_values.items()}
        self.value_to_slot: dict[str, str] = {}
        for slot, vals in self.slot_values.items():
            for v in vals:
                prior = self.value_to_slot.get(v)
                if prior is not None and prior != slot:
                    raise LexiconError(
                        f"value {v!r} is ambiguous between slots {prior} and {slot}"
                    )
                self.value_to_slot[v] = slot

    @staticmethod
    def slot_token(slot: str) -> str:
        """The feature token a slot contributes after delexicalisation."""
        return "$" + slot

    @classmethod
    def merge(cls, lexicons: list["SlotLexicon"]) -> "SlotLexicon":
        merged: dict[str, set[str]] = {}
        for lex in lexicons:
            for slot, vals in lex.slot_values.items():
                merged.setdefault(slot, set()).update(vals)
        return cls(merged)

    def slots(self) -> list[str]:
        return sorted(self.slot_values)

    def values(self) -> set[str]:
        return set(self.value_to_slot)


class SynonymMap:
    """Folds out-of-vocabulary words onto known feature words."""

    def __init__(self, mapping: dict[str, str]):
        self.mapping = dict(mapping)

    def check_images(self, vocab: Vocabulary) -> None:
        missing = sorted(v for v in self.mapping.values() if v not in vocab)
        if missing:
            raise LexiconError(f"synonym images missing from vocabulary: {missing}")

    def get(self, token: str) -> str | None:
        return self.mapping.get(token)


@dataclass
class StateVector:
    """Per-agent feature vector plus the origin of each nonzero entry."""

    values: np.ndarray
    provenance: np.ndarray

    def __post_init__(self) -> None:
        assert self.values.shape == self.provenance.shape


def delexicalize(tokens: list[str], lexicon: SlotLexicon) -> list[str]:
    """Replace every lexicon value by its slot-id token ($-prefixed).

    Idempotent: slot-id tokens are never lexicon values themselves.
    """
    out = []
    for t in tokens:
        slot = lexicon.value_to_slot.get(t)
        out.append(SlotLexicon.slot_token(slot) if slot is not None else t)
    return out


def synonymize(tokens: list[str], syn: SynonymMap, vocab: Vocabulary) -> list[str]:
    """Keep known words, fold mapped unknowns onto their synonyms, drop the
    rest: unmapped out-of-vocabulary tokens contribute no features."""
    out = []
    for t in tokens:
        if t in vocab:
            out.append(t)
            continue
        image = syn.get(t)
        if image is not None and image in vocab:
            out.append(image)
    return out


def vectorize(
    system_tokens: list[str],
    user_tokens: list[tuple[str, float]],
    vocab: Vocabulary,
) -> StateVector:
    """Encode one exchange. System words are hit-or-miss bits, user words
    carry their confidence, and on overlap the user value wins regardless of
    magnitude. Tokens outside the vocabulary contribute nothing."""
    values = np.zeros(len(vocab))
    prov = np.zeros(len(vocab), dtype=np.uint8)
    for t in system_tokens:
        i = vocab.index.get(t)
        if i is not None:
            values[i] = 1.0
            prov[i] = PROV_SYSTEM
    for t, conf in user_tokens:
        if not (0.0 <= conf <= 1.0):
            raise LexiconError(f"confidence {conf} for token {t!r} outside [0, 1]")
        i = vocab.index.get(t)
        if i is not None:
            values[i] = conf
            prov[i] = PROV_USER
    return StateVector(values, prov)


class TextPipeline:
    """The per-run token path: tokenize, then optionally delexicalise against
    the merged lexicon and fold synonyms against the global vocabulary.

    ``compressed=False`` reproduces the raw-words configuration; unknown
    words are then simply invisible to every vectoriser.
    """

    def __init__(
        self,
        lexicon: SlotLexicon,
        synonyms: SynonymMap,
        global_vocab: Vocabulary | None = None,
        compressed: bool = True,
    ):
        self.lexicon = lexicon
        self.synonyms = synonyms
        self.global_vocab = global_vocab
        self.compressed = compressed

    def process(self, tokens: list[str]) -> list[str]:
        if not self.compressed:
            return list(tokens)
        # Substitute synonyms before delexicalisation so value synonyms
        # (e.g. inexpensive -> cheap) still fold into their slot token.
        substituted = []
        for t in tokens:
            if (
                (self.global_vocab is None or t not in self.global_vocab)
                and t not in self.lexicon.value_to_slot
            ):
                t = self.synonyms.get(t) or t
            substituted.append(t)
        out = delexicalize(substituted, self.lexicon)
        if self.global_vocab is not None:
            out = [t for t in out if t in self.global_vocab]
        return out

    def process_text(self, text: str) -> list[str]:
        return self.process(tokenize(text))
