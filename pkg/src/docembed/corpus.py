"""Corpus ingestion: tokenization, vocabulary construction, bag-of-words vectors.

The corpus line format is one document per line, ``label<TAB>text`` (UTF-8).
Train/test membership is carried by separate files, so loaders take an explicit
split tag. Out-of-vocabulary tokens are dropped rather than mapped to a
placeholder, because the encoder averages embeddings of known words only.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

SPLITS = ("train", "test", "unlabeled")


class CorpusError(ValueError):
    """Malformed corpus input (carries file/line context in the message)."""


class EmptyVocabularyError(CorpusError):
    """No word survived the frequency threshold."""


class EmptyDocumentError(CorpusError):
    """A document has no in-vocabulary tokens."""


@dataclass(frozen=True)
class TokenizerRules:
    """Tokenizer configuration: lowercase and strip edge punctuation by default."""

    lowercase: bool = True
    strip_punctuation: bool = True


DEFAULT_RULES = TokenizerRules()


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str, rules: TokenizerRules = DEFAULT_RULES) -> list[str]:
    """Split ``text`` into word tokens.

    Lowercases (per ``rules``), splits on any whitespace run, and strips
    leading/trailing punctuation from each token. Tokens that are pure
    punctuation vanish. Deterministic for fixed rules; empty input gives [].
    """
    if rules.lowercase:
        text = text.lower()
    out = []
    for raw in text.split():
        tok = raw
        if rules.strip_punctuation:
            start, end = 0, len(tok)
            while start < end and _is_punct(tok[start]):
                start += 1
            while end > start and _is_punct(tok[end - 1]):
                end -= 1
            tok = tok[start:end]
        if tok:
            out.append(tok)
    return out


@dataclass
class Vocabulary:
    """Word/id bimap with corpus frequencies.

    Ids are dense in ``[0, len(self))`` and assigned by descending corpus
    frequency with lexicographic tie-break, so id 0 is always the most
    frequent word.
    """

    words: list[str]
    freq: np.ndarray  # int64, aligned with ids
    id_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.id_of = {w: i for i, w in enumerate(self.words)}
        self.freq = np.asarray(self.freq, dtype=np.int64)
        if len(self.words) != len(self.freq):
            raise ValueError("words and freq length mismatch")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.id_of

    @property
    def size(self) -> int:
        return len(self.words)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        """Map tokens to ids, silently dropping out-of-vocabulary ones."""
        ids = [self.id_of[t] for t in tokens if t in self.id_of]
        return np.asarray(ids, dtype=np.int32)

    def save(self, path) -> None:
        """Write the ``word<TAB>frequency`` file, ordered by id."""
        with open(path, "w", encoding="utf-8") as fh:
            for word, count in zip(self.words, self.freq):
                fh.write(f"{word}\t{int(count)}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        words, freqs = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\r\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise CorpusError(f"{path}:{lineno}: expected 'word<TAB>frequency'")
                try:
                    freqs.append(int(parts[1]))
                except ValueError:
                    raise CorpusError(f"{path}:{lineno}: bad frequency {parts[1]!r}") from None
                words.append(parts[0])
        return cls(words=words, freq=np.asarray(freqs, dtype=np.int64))


def build_vocab(docs: Iterable[Sequence[str]], min_count: int = 10) -> Vocabulary:
    """Build a Vocabulary from an iterable of token sequences.

    Keeps exactly the words whose corpus frequency is >= ``min_count``;
    ids are assigned by descending frequency, ties broken lexicographically.
    Raises EmptyVocabularyError if nothing survives.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    for tokens in docs:
        counts.update(tokens)
    kept = [(w, c) for w, c in counts.items() if c >= min_count]
    if not kept:
        raise EmptyVocabularyError(
            f"no word reaches min_count={min_count} (corpus has {len(counts)} distinct words)"
        )
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    words = [w for w, _ in kept]
    freq = np.asarray([c for _, c in kept], dtype=np.int64)
    return Vocabulary(words=words, freq=freq)


@dataclass
class TokenizedDocument:
    """A document as a sequence of in-vocabulary word ids."""

    doc_id: int
    tokens: np.ndarray  # int32 word ids
    label: Optional[int] = None
    split: str = "unlabeled"

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int32)
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    @property
    def length(self) -> int:
        return int(self.tokens.size)


@dataclass
class SparseBow:
    """Sparse per-word occurrence counts of one document.

    ``indices`` are strictly increasing word ids, ``values`` the positive
    counts, and ``total`` their sum (the document's in-vocabulary length).
    """

    indices: np.ndarray
    values: np.ndarray
    total: int


def to_bow(doc: TokenizedDocument, vocab: Vocabulary) -> SparseBow:
    """Count token occurrences into a SparseBow. Errors on empty documents."""
    if doc.tokens.size == 0:
        raise EmptyDocumentError(f"document {doc.doc_id} has no tokens")
    if doc.tokens.size and int(doc.tokens.max()) >= len(vocab):
        raise CorpusError(f"document {doc.doc_id} holds a token id outside the vocabulary")
    indices, values = np.unique(doc.tokens, return_counts=True)
    return SparseBow(
        indices=indices.astype(np.int32),
        values=values.astype(np.int64),
        total=int(values.sum()),
    )


def bow_matrix(docs: Sequence[TokenizedDocument], vocab_size: int, normalize: bool = True):
    """Stack document BoWs into a CSR matrix (rows = docs).

    With ``normalize=True`` each row holds counts / length, so ``matrix @ U``
    yields the mean-of-word-vectors document embeddings in one product.
    """
    from scipy import sparse

    indptr = np.zeros(len(docs) + 1, dtype=np.int64)
    all_idx, all_val = [], []
    for i, doc in enumerate(docs):
        if doc.tokens.size == 0:
            raise EmptyDocumentError(f"document {doc.doc_id} has no tokens")
        idx, val = np.unique(doc.tokens, return_counts=True)
        val = val.astype(np.float64)
        if normalize:
            val /= doc.tokens.size
        all_idx.append(idx)
        all_val.append(val)
        indptr[i + 1] = indptr[i] + idx.size
    data = np.concatenate(all_val) if all_val else np.zeros(0)
    indices = np.concatenate(all_idx) if all_idx else np.zeros(0, dtype=np.int32)
    return sparse.csr_matrix((data, indices, indptr), shape=(len(docs), vocab_size))


def iter_corpus_lines(path) -> Iterator[tuple[int, str, str]]:
    """Yield (lineno, label, text) from a ``label<TAB>text`` file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            label, sep, text = line.partition("\t")
            if not sep:
                raise CorpusError(f"{path}:{lineno}: missing tab separator between label and text")
            if not label:
                raise CorpusError(f"{path}:{lineno}: empty label")
            yield lineno, label, text


def load_labeled_corpus(
    path,
    vocab: Optional[Vocabulary] = None,
    split: str = "train",
    label_map: Optional[dict[str, int]] = None,
    rules: TokenizerRules = DEFAULT_RULES,
    start_doc_id: int = 0,
):
    """Load one corpus file.

    Returns ``(documents, labels, splits)``. When ``vocab`` is given, tokens
    are encoded to ids with OOV dropped and a document that becomes empty is
    an error; without a vocab, each document is the plain token-string list
    (the vocabulary-building pass). ``label_map`` is extended in place so
    train and test files share label ids.
    """
    if label_map is None:
        label_map = {}
    documents = []
    labels: list[int] = []
    splits: list[str] = []
    doc_id = start_doc_id
    for lineno, label, text in iter_corpus_lines(path):
        tokens = tokenize(text, rules)
        if label not in label_map:
            label_map[label] = len(label_map)
        label_id = label_map[label]
        if vocab is not None:
            ids = vocab.encode(tokens)
            if ids.size == 0:
                raise EmptyDocumentError(
                    f"{path}:{lineno}: document is empty after dropping out-of-vocabulary tokens"
                )
            documents.append(
                TokenizedDocument(doc_id=doc_id, tokens=ids, label=label_id, split=split)
            )
        else:
            documents.append(tokens)
        labels.append(label_id)
        splits.append(split)
        doc_id += 1
    return documents, labels, splits


@dataclass
class Corpus:
    """A fully loaded corpus: encoded documents plus the shared vocabulary."""

    documents: list[TokenizedDocument]
    vocab: Vocabulary
    label_names: list[str]

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    def split_indices(self, split: str) -> np.ndarray:
        return np.asarray([i for i, d in enumerate(self.documents) if d.split == split])

    def labels(self) -> np.ndarray:
        return np.asarray([-1 if d.label is None else d.label for d in self.documents])


def load_corpus(
    train_path,
    test_path=None,
    min_count: int = 10,
    rules: TokenizerRules = DEFAULT_RULES,
    vocab: Optional[Vocabulary] = None,
) -> Corpus:
    """Load train (and optional test) files, building the vocabulary over both.

    All documents are kept for embedding learning; the split tag only matters
    to the downstream classifier. Pass ``vocab`` to reuse a prebuilt one.
    """
    paths = [(Path(train_path), "train")]
    if test_path is not None:
        paths.append((Path(test_path), "test"))

    if vocab is None:
        token_lists = []
        for path, _ in paths:
            for _, _, text in iter_corpus_lines(path):
                token_lists.append(tokenize(text, rules))
        vocab = build_vocab(token_lists, min_count=min_count)

    label_map: dict[str, int] = {}
    documents: list[TokenizedDocument] = []
    for path, split in paths:
        docs, _, _ = load_labeled_corpus(
            path, vocab=vocab, split=split, label_map=label_map,
            rules=rules, start_doc_id=len(documents),
        )
        documents.extend(docs)

    label_names = [name for name, _ in sorted(label_map.items(), key=lambda kv: kv[1])]
    return Corpus(documents=documents, vocab=vocab, label_names=label_names)
