"""Synthetic corpora for smoke tests and end-to-end validation at desk scale."""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, TokenizedDocument, Vocabulary


def two_topic_corpus(n_docs_per_topic: int = 200, words_per_topic: int = 50,
                     doc_len: tuple[int, int] = (20, 60), seed: int = 0,
                     test_fraction: float = 0.25) -> Corpus:
    """Two disjoint topic vocabularies, documents drawn from one topic each.

    Word frequencies within a topic follow a Zipf-like profile so the noise
    distribution and frequency-based augmentations have something to bite on.
    """
    rng = np.random.default_rng(seed)
    v = 2 * words_per_topic
    words = [f"topic{t}_w{i:03d}" for t in range(2) for i in range(words_per_topic)]

    ranks = np.arange(1, words_per_topic + 1, dtype=np.float64)
    topic_probs = (1.0 / ranks) / (1.0 / ranks).sum()

    documents = []
    freq = np.zeros(v, dtype=np.int64)
    n_total = 2 * n_docs_per_topic
    doc_id = 0
    for topic in range(2):
        base = topic * words_per_topic
        for _ in range(n_docs_per_topic):
            length = int(rng.integers(doc_len[0], doc_len[1] + 1))
            tokens = base + rng.choice(words_per_topic, size=length, p=topic_probs)
            split = "test" if rng.random() < test_fraction else "train"
            documents.append(TokenizedDocument(
                doc_id=doc_id, tokens=tokens.astype(np.int32), label=topic, split=split))
            np.add.at(freq, tokens, 1)
            doc_id += 1

    order = rng.permutation(n_total)
    shuffled = []
    for new_id, old in enumerate(order):
        doc = documents[old]
        shuffled.append(TokenizedDocument(doc_id=new_id, tokens=doc.tokens,
                                          label=doc.label, split=doc.split))
    vocab = Vocabulary(words=words, freq=freq)
    return Corpus(documents=shuffled, vocab=vocab, label_names=["topic0", "topic1"])


def write_corpus_files(corpus: Corpus, train_path, test_path) -> None:
    """Render a corpus back to the ``label<TAB>text`` line format."""
    handles = {"train": open(train_path, "w", encoding="utf-8"),
               "test": open(test_path, "w", encoding="utf-8")}
    try:
        for doc in corpus.documents:
            words = " ".join(corpus.vocab.words[t] for t in doc.tokens)
            label = corpus.label_names[doc.label] if doc.label is not None else "none"
            handles.get(doc.split, handles["train"]).write(f"{label}\t{words}\n")
    finally:
        for fh in handles.values():
            fh.close()
