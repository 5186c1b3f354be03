from pathlib import Path

import numpy as np
import pytest

from docembed.corpus import load_corpus

FIXTURES = Path(__file__).parent / "fixtures"
LEXICONS = Path(__file__).parents[1] / "src" / "docembed" / "data" / "lexicons"


@pytest.fixture(scope="session")
def fixture_paths():
    return {
        "train": FIXTURES / "corpus_train.tsv",
        "test": FIXTURES / "corpus_test.tsv",
        "synonyms": LEXICONS / "synonyms_wordnet.tsv",
        "ppdb": LEXICONS / "synonyms_ppdb.tsv",
        "antonyms": LEXICONS / "antonyms.tsv",
        "paraphrases": LEXICONS / "paraphrases.tsv",
        "lexicon_dir": LEXICONS,
    }


@pytest.fixture(scope="session")
def small_corpus(fixture_paths):
    return load_corpus(fixture_paths["train"], fixture_paths["test"], min_count=1)


def central_difference(fn, x, step=1e-5):
    """Finite-difference gradient of a scalar function over a flat array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        out[i] = (hi - lo) / (2 * step)
    return grad


def relative_error(analytic, numeric):
    # the floor keeps mathematically-zero gradients (norm ~ FD noise) comparable
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-6)
    return np.linalg.norm(analytic - numeric) / denom
