"""Downstream probes for frozen embeddings: linear classification and clustering.

The protocol is transductive: embeddings are computed for every document
before any evaluation, and the train/test split only decides which rows the
classifier may see. Nothing here mutates the embeddings.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .corpus import Corpus
from .encoder import ModelParams, stream_rng

RNG_KMEANS = 7


@dataclass
class EmbeddingSet:
    """Embeddings plus the ids, labels, and split tags they belong to."""

    doc_ids: np.ndarray
    vectors: np.ndarray   # (n, d)
    labels: Optional[np.ndarray] = None
    splits: Optional[list[str]] = None

    def __post_init__(self):
        self.doc_ids = np.asarray(self.doc_ids, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.doc_ids.size != self.vectors.shape[0]:
            raise ValueError("doc_ids and vectors disagree on the document count")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("non-finite embedding values")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def rows_for_split(self, split: str) -> np.ndarray:
        if self.splits is None:
            raise ValueError("embedding set has no split tags")
        return np.asarray([i for i, s in enumerate(self.splits) if s == split])


@dataclass
class EvalReport:
    """One evaluation result with enough metadata to rerun it."""

    task: str                 # classify | cluster
    metric: str               # error_rate | nmi
    value: float
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None
    wall_clock_sec: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"metric {self.metric} outside [0, 1]: {self.value}")

    def to_json(self) -> str:
        return json.dumps({
            "task": self.task, "metric": self.metric, "value": self.value,
            "config": self.config, "seed": self.seed,
            "wall_clock_sec": round(self.wall_clock_sec, 3),
        }, sort_keys=True)


def embed_corpus(corpus: Corpus, params: ModelParams) -> EmbeddingSet:
    """Mean-of-word-vectors embedding of every document (no corruption)."""
    from .corpus import bow_matrix

    X = bow_matrix(corpus.documents, len(corpus.vocab))
    vectors = X @ params.word_embeddings.astype(np.float64)
    return EmbeddingSet(
        doc_ids=np.asarray([d.doc_id for d in corpus.documents]),
        vectors=vectors,
        labels=corpus.labels(),
        splits=[d.split for d in corpus.documents],
    )


# ---------------------------------------------------------------------------
# multinomial logistic regression

def multinomial_logloss_grad(weights: np.ndarray, X: np.ndarray, y: np.ndarray,
                             l2: float):
    """Summed cross entropy with an L2 penalty on everything but the intercept.

    ``weights`` has shape (n_classes, d + 1), last column the intercept.
    Returns (loss, gradient) for the quasi-Newton solver and the gradient
    oracle tests.
    """
    W = weights[:, :-1]
    b = weights[:, -1]
    logits = X @ W.T + b
    lse = logsumexp(logits, axis=1)
    loss = float(lse.sum() - logits[np.arange(X.shape[0]), y].sum()
                 + 0.5 * l2 * (W * W).sum())
    P = np.exp(logits - lse[:, None])
    P[np.arange(X.shape[0]), y] -= 1.0
    grad = np.empty_like(weights)
    grad[:, :-1] = P.T @ X + l2 * W
    grad[:, -1] = P.sum(axis=0)
    return loss, grad


def fit_logistic_regression(train_vectors: np.ndarray, labels: np.ndarray,
                            l2: float = 1.0, max_iter: int = 500,
                            gtol: float = 1e-5, standardize: bool = True) -> np.ndarray:
    """Multinomial logistic regression by full-batch L-BFGS.

    ``l2`` is the direct penalty weight (the CLI exposes the inverse-strength
    convention and passes 1/C here). Features are standardized internally so
    the penalty acts on scale-free coordinates; the scaler folds back into
    the returned weights, which therefore apply to raw inputs. Optimizes
    until the projected gradient norm drops below ``gtol`` or ``max_iter``
    iterations. Returns weights of shape (n_classes, d + 1), last column the
    intercept.
    """
    X = np.asarray(train_vectors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need at least 2 classes to fit a classifier")
    if classes.min() < 0 or classes.max() >= classes.size:
        raise ValueError("labels must be dense ids 0..k-1")
    n_classes = int(classes.size)

    if standardize:
        mu = X.mean(axis=0)
        sigma = X.std(axis=0)
        sigma = np.where(sigma > 1e-12, sigma, 1.0)
        X = (X - mu) / sigma
    w0 = np.zeros((n_classes, X.shape[1] + 1))

    def objective(flat):
        loss, grad = multinomial_logloss_grad(flat.reshape(w0.shape), X, y, l2)
        return loss, grad.ravel()

    res = minimize(objective, w0.ravel(), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": gtol, "ftol": 0.0})
    weights = res.x.reshape(w0.shape)
    if standardize:
        raw = np.empty_like(weights)
        raw[:, :-1] = weights[:, :-1] / sigma
        raw[:, -1] = weights[:, -1] - raw[:, :-1] @ mu
        weights = raw
    return weights


def predict_classes(weights: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    logits = vectors @ weights[:, :-1].T + weights[:, -1]
    return np.argmax(logits, axis=1)


def classification_error(weights: np.ndarray, vectors: np.ndarray,
                         labels: np.ndarray) -> float:
    """Fraction of misclassified rows, in [0, 1]."""
    pred = predict_classes(weights, np.asarray(vectors, dtype=np.float64))
    return float(np.mean(pred != np.asarray(labels)))


# ---------------------------------------------------------------------------
# k-means and normalized mutual information

def _kmeans_pp_centers(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = X[rng.integers(n, size=k - j)]
            break
        probs = d2 / total
        idx = min(int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")), n - 1)
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int):
    """Lloyd iterations; returns (labels, inertia, per-iteration inertia trace)."""
    k = centers.shape[0]
    trace = []
    labels = None
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(X.shape[0]), new_labels].sum())
        trace.append(inertia)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        far_order = None
        taken = 0
        for j in range(k):
            members = X[labels == j]
            if members.size:
                centers[j] = members.mean(axis=0)
            else:
                # deterministic rescue: seize the points farthest from their centers
                if far_order is None:
                    far_order = np.argsort(-d2[np.arange(X.shape[0]), labels])
                centers[j] = X[far_order[taken]]
                taken += 1
    return labels, trace[-1], trace


def kmeans_cluster(vectors: np.ndarray, k: int, seed: int = 0, restarts: int = 10,
                   max_iter: int = 300, threads: int = 1, return_details: bool = False):
    """Best-of-restarts k-means with plus-plus seeding; deterministic per seed.

    Restarts draw from independent per-restart streams and the winner is the
    lowest inertia (ties broken by restart index), so running them in
    parallel cannot change the result.
    """
    X = np.asarray(vectors, dtype=np.float64)
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points n={n}")

    def one_restart(r: int):
        rng = stream_rng(seed, RNG_KMEANS, r)
        centers = _kmeans_pp_centers(X, k, rng)
        return _lloyd(X, centers, max_iter)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one_restart, range(restarts)))
    else:
        results = [one_restart(r) for r in range(restarts)]

    best = None
    for labels, inertia, trace in results:
        if best is None or inertia < best[1]:
            best = (labels, inertia, trace)
    labels, inertia, trace = best
    if return_details:
        return labels, inertia, trace
    return labels


def _entropy(counts: np.ndarray) -> float:
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def nmi(assignment_a, assignment_b) -> float:
    """Mutual information normalized by the geometric mean of the entropies.

    Constant-vs-constant labelings score 1; a constant labeling against a
    non-constant one scores 0.
    """
    a = np.asarray(assignment_a)
    b = np.asarray(assignment_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("assignments must be equal-length 1-d sequences")
    if a.size == 0:
        raise ValueError("assignments are empty")

    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    n_a = int(ai.max()) + 1
    n_b = int(bi.max()) + 1
    joint = np.zeros((n_a, n_b))
    np.add.at(joint, (ai, bi), 1.0)
    n = a.size

    h_a = _entropy(joint.sum(axis=1))
    h_b = _entropy(joint.sum(axis=0))
    if h_a == 0.0 and h_b == 0.0:
        return 1.0
    if h_a == 0.0 or h_b == 0.0:
        return 0.0

    pij = joint / n
    pa = pij.sum(axis=1, keepdims=True)
    pb = pij.sum(axis=0, keepdims=True)
    mask = pij > 0
    mi = float((pij[mask] * np.log(pij[mask] / (pa @ pb)[mask])).sum())
    value = mi / np.sqrt(h_a * h_b)
    return float(min(max(value, 0.0), 1.0))


# ---------------------------------------------------------------------------
# embedding files

TEXT_HEADER = "# docembed embeddings"
EMB_MAGIC = b"DEMBVEC1"


def export_embeddings(embeddings: EmbeddingSet, path, format: str = "text") -> None:
    """Write ``doc_id v1 ... vd`` lines (full precision) or the binary layout."""
    if format == "text":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{TEXT_HEADER} n={embeddings.n} d={embeddings.dim}\n")
            for doc_id, row in zip(embeddings.doc_ids, embeddings.vectors):
                fh.write(str(int(doc_id)) + " "
                         + " ".join(repr(float(x)) for x in row) + "\n")
    elif format == "binary":
        import struct

        with open(path, "wb") as fh:
            fh.write(EMB_MAGIC)
            fh.write(struct.pack("<QI", embeddings.n, embeddings.dim))
            fh.write(np.ascontiguousarray(embeddings.doc_ids, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(embeddings.vectors, dtype="<f8").tobytes())
    else:
        raise ValueError(f"unknown embedding format {format!r}")


def import_embeddings(path) -> EmbeddingSet:
    """Read either embedding file format (sniffed from the first bytes)."""
    import struct

    with open(path, "rb") as fh:
        head = fh.read(len(EMB_MAGIC))
        if head == EMB_MAGIC:
            n, d = struct.unpack("<QI", fh.read(12))
            doc_ids = np.frombuffer(fh.read(8 * n), dtype="<i8").copy()
            vectors = np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d).copy()
            return EmbeddingSet(doc_ids=doc_ids, vectors=vectors)

    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith(TEXT_HEADER):
            raise ValueError(f"{path}: not an embedding file")
        fields = dict(kv.split("=") for kv in header[len(TEXT_HEADER):].split())
        dim = int(fields.get("d", 0))
        doc_ids, rows = [], []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            doc_ids.append(int(parts[0]))
            rows.append([float(x) for x in parts[1:]])
        vectors = np.asarray(rows) if rows else np.zeros((0, dim))
        return EmbeddingSet(doc_ids=np.asarray(doc_ids, dtype=np.int64), vectors=vectors)


def timed_report(task: str, metric: str, fn, config: dict, seed=None) -> EvalReport:
    """Run ``fn`` and wrap its scalar result in an EvalReport with wall time."""
    start = time.perf_counter()
    value = fn()
    return EvalReport(task=task, metric=metric, value=float(value), config=config,
                      seed=seed, wall_clock_sec=time.perf_counter() - start)
