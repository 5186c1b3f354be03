"""Stochastic document augmentation via word-level substitution tables.

Five strategies are supported: two synonym-table replacements (one table built
from a synset resource, one from a paraphrase database), antonym negation,
uninformative-word replacement, and precomputed back-translation lookup. All
of them obey the dictionary constraint: every emitted token is in-vocabulary,
because the tables are filtered against the vocabulary at load time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import TokenizedDocument, Vocabulary, tokenize

STRATEGY_KINDS = ("wordnet", "ppdb", "antonym", "uninformative", "backtranslation")


class LexiconError(ValueError):
    """Malformed lexicon input or a strategy whose table was never loaded."""


@dataclass
class AugmentStrategy:
    """Which augmentation to run and its knobs.

    ``antonym_prob`` is the per-eligible-token replacement probability for the
    antonym strategy; ``uninformative_threshold`` is the corpus frequency
    below which a word counts as rare.
    """

    kind: str
    antonym_prob: float = 0.15
    uninformative_threshold: int = 10

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise LexiconError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.antonym_prob <= 1.0:
            raise ValueError("antonym_prob must be in [0, 1]")
        if self.uninformative_threshold < 1:
            raise ValueError("uninformative_threshold must be >= 1")


@dataclass
class AugmentationLexicon:
    """Replacement tables resolved to vocabulary ids.

    A table is ``None`` when its source file was never supplied (requesting a
    strategy that needs it is an error); an empty dict is a legitimately
    loaded but degenerate table (every word maps to itself only).
    """

    vocab_size: int
    freq: np.ndarray
    synonyms: Optional[dict[int, np.ndarray]] = None
    antonyms: Optional[dict[int, np.ndarray]] = None
    paraphrases: Optional[dict[int, np.ndarray]] = None
    stats: dict = field(default_factory=lambda: {"backtranslation_fallbacks": 0})

    # flattened synonym arrays for vectorized drawing, built on first use
    _syn_flat: Optional[np.ndarray] = field(default=None, repr=False)
    _syn_offsets: Optional[np.ndarray] = field(default=None, repr=False)
    _best_synonym: Optional[np.ndarray] = field(default=None, repr=False)

    def synonym_arrays(self):
        """Return (offsets, flat) candidate arrays covering every word id.

        Words without an entry get the implicit self-only candidate set.
        """
        if self._syn_offsets is None:
            table = self.synonyms or {}
            counts = np.ones(self.vocab_size, dtype=np.int64)
            for wid, cands in table.items():
                counts[wid] = len(cands)
            offsets = np.zeros(self.vocab_size + 1, dtype=np.int64)
            np.cumsum(counts, out=offsets[1:])
            flat = np.empty(offsets[-1], dtype=np.int32)
            flat[offsets[:-1]] = np.arange(self.vocab_size, dtype=np.int32)  # self-only default
            for wid, cands in table.items():
                flat[offsets[wid]:offsets[wid + 1]] = cands
            self._syn_offsets, self._syn_flat = offsets, flat
        return self._syn_offsets, self._syn_flat

    def best_synonyms(self) -> np.ndarray:
        """Per-word highest-frequency candidate; frequency ties take the lowest id."""
        if self._best_synonym is None:
            best = np.arange(self.vocab_size, dtype=np.int32)
            table = self.synonyms or {}
            for wid, cands in table.items():
                freqs = self.freq[cands]
                best[wid] = int(cands[np.lexsort((cands, -freqs))[0]])
            self._best_synonym = best
        return self._best_synonym


def _require(table, name: str):
    if table is None:
        raise LexiconError(f"augmentation needs the {name} table but none was loaded")
    return table


def _parse_tsv(path, n_fields: int):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != n_fields:
                raise LexiconError(f"{path}:{lineno}: expected {n_fields} tab-separated fields")
            yield lineno, parts


def load_lexicon(
    vocab: Vocabulary,
    synonym_path=None,
    antonym_path=None,
    paraphrase_path=None,
) -> AugmentationLexicon:
    """Load replacement tables, filtering everything against ``vocab``.

    Synonym lines are ``word<TAB>cand1,cand2,...``; out-of-vocabulary
    candidates are silently dropped and the original word is always added to
    its own candidate set. Antonym lines are ``word<TAB>negated phrase``; an
    entry whose head word or any phrase token is out-of-vocabulary is dropped.
    Paraphrase lines are ``doc_id<TAB>text``, tokenized with the default rules;
    a paraphrase that is empty after OOV dropping is a load-time error.
    """
    lex = AugmentationLexicon(vocab_size=len(vocab), freq=vocab.freq)

    if synonym_path is not None:
        synonyms: dict[int, np.ndarray] = {}
        for lineno, (word, cand_field) in _parse_tsv(synonym_path, 2):
            if word not in vocab:
                continue
            wid = vocab.id_of[word]
            cands = {wid}
            for cand in cand_field.split(","):
                cand = cand.strip()
                if cand and cand in vocab:
                    cands.add(vocab.id_of[cand])
            synonyms[wid] = np.asarray(sorted(cands), dtype=np.int32)
        lex.synonyms = synonyms

    if antonym_path is not None:
        antonyms: dict[int, np.ndarray] = {}
        for lineno, (word, phrase) in _parse_tsv(antonym_path, 2):
            if word not in vocab:
                continue
            phrase_tokens = phrase.split()
            if not phrase_tokens:
                raise LexiconError(f"{antonym_path}:{lineno}: empty replacement phrase")
            if any(t not in vocab for t in phrase_tokens):
                continue
            antonyms[vocab.id_of[word]] = np.asarray(
                [vocab.id_of[t] for t in phrase_tokens], dtype=np.int32
            )
        lex.antonyms = antonyms

    if paraphrase_path is not None:
        paraphrases: dict[int, np.ndarray] = {}
        for lineno, (doc_field, text) in _parse_tsv(paraphrase_path, 2):
            try:
                doc_id = int(doc_field)
            except ValueError:
                raise LexiconError(f"{paraphrase_path}:{lineno}: bad doc id {doc_field!r}") from None
            ids = vocab.encode(tokenize(text))
            if ids.size == 0:
                raise LexiconError(
                    f"{paraphrase_path}:{lineno}: paraphrase is empty after dropping "
                    "out-of-vocabulary tokens"
                )
            paraphrases[doc_id] = ids
        lex.paraphrases = paraphrases

    return lex


def _rewrap(doc: TokenizedDocument, tokens: np.ndarray) -> TokenizedDocument:
    return TokenizedDocument(doc_id=doc.doc_id, tokens=tokens, label=doc.label, split=doc.split)


def synonym_replace(doc: TokenizedDocument, lex: AugmentationLexicon,
                    rng: np.random.Generator) -> TokenizedDocument:
    """Replace each token with a uniform draw from its candidate set.

    Candidate sets always include the original word, so a word without
    synonyms passes through unchanged. Length is preserved exactly.
    """
    _require(lex.synonyms, "synonym")
    offsets, flat = lex.synonym_arrays()
    tokens = doc.tokens
    starts = offsets[tokens]
    counts = offsets[tokens + 1] - starts
    draws = starts + (rng.random(tokens.size) * counts).astype(np.int64)
    return _rewrap(doc, flat[draws])


def antonym_negate(doc: TokenizedDocument, lex: AugmentationLexicon,
                   rng: np.random.Generator, p: float = 0.15) -> TokenizedDocument:
    """With probability ``p``, swap each antonym-bearing token for its negated phrase.

    Replacement phrases may be longer than one token, so the document can
    grow; it never shrinks. Tokens without an antonym entry are untouched.
    """
    antonyms = _require(lex.antonyms, "antonym")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    tokens = doc.tokens
    if not antonyms or p == 0.0 or tokens.size == 0:
        return _rewrap(doc, tokens.copy())
    u = rng.random(tokens.size)
    pieces = []
    for i, tok in enumerate(tokens):
        phrase = antonyms.get(int(tok))
        if phrase is not None and u[i] < p:
            pieces.append(phrase)
        else:
            pieces.append(tokens[i:i + 1])
    return _rewrap(doc, np.concatenate(pieces))


def uninformative_replace(doc: TokenizedDocument, lex: AugmentationLexicon,
                          threshold: int = 10) -> TokenizedDocument:
    """Deterministically swap rare tokens for their most frequent synonym.

    A token whose corpus frequency is below ``threshold`` becomes its
    highest-frequency candidate; everything else (including rare words whose
    only candidate is themselves) stays put.
    """
    _require(lex.synonyms, "synonym")
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    best = lex.best_synonyms()
    tokens = doc.tokens
    rare = lex.freq[tokens] < threshold
    return _rewrap(doc, np.where(rare, best[tokens], tokens).astype(np.int32))


def backtranslate_lookup(doc: TokenizedDocument, lex: AugmentationLexicon) -> TokenizedDocument:
    """Return the precomputed paraphrase of this document.

    Falls back to the original document (and bumps a fallback counter on the
    lexicon) when no paraphrase entry exists.
    """
    paraphrases = _require(lex.paraphrases, "paraphrase")
    entry = paraphrases.get(doc.doc_id)
    if entry is None:
        lex.stats["backtranslation_fallbacks"] += 1
        return _rewrap(doc, doc.tokens.copy())
    return _rewrap(doc, entry.copy())


def check_strategy_available(lex: AugmentationLexicon, kind: str) -> None:
    """Raise LexiconError unless the table ``kind`` needs was loaded."""
    if kind in ("wordnet", "ppdb", "uninformative"):
        _require(lex.synonyms, "synonym")
    elif kind == "antonym":
        _require(lex.antonyms, "antonym")
    elif kind == "backtranslation":
        _require(lex.paraphrases, "paraphrase")
    else:
        raise LexiconError(f"unknown augmentation kind {kind!r}")


def augment(doc: TokenizedDocument, strategy: AugmentStrategy,
            lex: AugmentationLexicon, rng: np.random.Generator) -> TokenizedDocument:
    """Generate one augmented view of ``doc`` under ``strategy``.

    Pure function of (doc, strategy, lexicon, rng state): the same seed gives
    the same output.
    """
    kind = strategy.kind
    if kind in ("wordnet", "ppdb"):
        return synonym_replace(doc, lex, rng)
    if kind == "antonym":
        return antonym_negate(doc, lex, rng, p=strategy.antonym_prob)
    if kind == "uninformative":
        return uninformative_replace(doc, lex, threshold=strategy.uninformative_threshold)
    if kind == "backtranslation":
        return backtranslate_lookup(doc, lex)
    raise LexiconError(f"unknown augmentation kind {kind!r}")


_AUGMENT_SENTINEL = 0xA063E47  # distinct from the trainer's stream sentinel


def augmentation_rng(seed: int, doc_id: int, epoch: int) -> np.random.Generator:
    """Per-document random stream, independent of worker scheduling.

    Derived from (global seed, doc id, epoch) so parallel augmentation is
    reproducible no matter how documents are sharded across workers.
    """
    return np.random.default_rng(
        np.random.SeedSequence((_AUGMENT_SENTINEL, seed, doc_id, epoch))
    )
