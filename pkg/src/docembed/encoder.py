"""Averaged-word-vector document encoder and its CBOW-style training objective.

A document's embedding is the count-weighted mean of its word vectors,
h = (1/T) * U * x. Training extends the CBOW objective by adding the document
vector to the context: for each target word the score is built from the mean
of the context word vectors plus a document vector formed, during training,
from a small random sample of the document's words. The full softmax is kept
as a slow reference; the training path uses negative sampling with a
freq^{3/4} noise distribution.

``negsample_loss_grad`` is the readable single-window implementation;
``backbone_batch`` is the vectorized equivalent used by the trainer. The two
are checked against each other in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

from .contrastive import PredictorWeights
from .corpus import SparseBow, TokenizedDocument

# stream tags for deriving independent generators from one seed
RNG_INIT = 0
RNG_SHUFFLE = 1
RNG_BACKBONE = 2


_STREAM_SENTINEL = 0x57BEA3  # distinct from the augmentation sentinel


def stream_rng(seed: int, purpose: int, *key: int) -> np.random.Generator:
    """Independent generator for a named purpose.

    The sentinel prefix keeps these keys disjoint from the per-document
    augmentation keys, so generators never alias across subsystems.
    """
    return np.random.default_rng(np.random.SeedSequence((_STREAM_SENTINEL, seed, purpose, *key)))


@dataclass
class ModelParams:
    """Trainable state: input vectors, output vectors, predictor MLP.

    ``word_embeddings`` holds one d-vector per word id (the matrix whose
    columns the math writes as U), ``output_embeddings`` the per-word output
    projections. Rows are word ids in both.
    """

    word_embeddings: np.ndarray   # (v, d)
    output_embeddings: np.ndarray  # (v, d)
    predictor: PredictorWeights

    @property
    def dim(self) -> int:
        return self.word_embeddings.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.word_embeddings.shape[0]

    def validate(self):
        if self.word_embeddings.shape != self.output_embeddings.shape:
            raise ValueError("embedding matrices must share a shape")
        for arr in (self.word_embeddings, self.output_embeddings):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite model parameters")
        self.predictor.validate()


def init_params(vocab_size: int, dim: int, seed: int = 0,
                predictor_hidden: int = 64, dtype=np.float32) -> ModelParams:
    """Fresh parameters: U uniform in [-0.5/d, 0.5/d], V zero, seeded predictor."""
    rng = stream_rng(seed, RNG_INIT)
    bound = 0.5 / dim
    word = rng.uniform(-bound, bound, size=(vocab_size, dim)).astype(dtype)
    out = np.zeros((vocab_size, dim), dtype=dtype)
    predictor = PredictorWeights.init(dim, predictor_hidden, stream_rng(seed, RNG_INIT, 1), dtype=dtype)
    return ModelParams(word_embeddings=word, output_embeddings=out, predictor=predictor)


def embed_document(bow: SparseBow, word_embeddings: np.ndarray) -> np.ndarray:
    """Count-weighted mean of word vectors: h = (1/T) sum_j count_j * U_j."""
    if bow.total < 1:
        raise ValueError("cannot embed an empty document")
    vals = bow.values.astype(word_embeddings.dtype)
    return vals @ word_embeddings[bow.indices] / bow.total


@dataclass
class TrainingWindow:
    """One CBOW training example: target word, local context, document sample."""

    target: int
    context: np.ndarray      # word ids within the window (possibly empty)
    doc_sample: np.ndarray   # word ids drawn with replacement from the document


def sample_windows(doc: TokenizedDocument, window: int, doc_sample_size: int,
                   rng: np.random.Generator) -> list[TrainingWindow]:
    """One window per target position, plus a fresh document sample each.

    Contexts truncate at document boundaries; the document sample draws
    ``doc_sample_size`` positions uniformly with replacement.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if doc_sample_size < 1:
        raise ValueError("doc_sample_size must be >= 1")
    tokens = doc.tokens
    n = tokens.size
    out = []
    for t in range(n):
        ctx = np.concatenate([tokens[max(0, t - window):t], tokens[t + 1:t + 1 + window]])
        positions = rng.integers(0, n, size=doc_sample_size)
        out.append(TrainingWindow(target=int(tokens[t]), context=ctx,
                                  doc_sample=tokens[positions]))
    return out


def _window_input(win: TrainingWindow, U: np.ndarray) -> np.ndarray:
    ctx_mean = U[win.context].mean(axis=0) if win.context.size else np.zeros(U.shape[1], U.dtype)
    if win.doc_sample.size:
        h = U[win.doc_sample].mean(axis=0)
    elif win.context.size:
        h = np.zeros(U.shape[1], U.dtype)
    else:
        raise ValueError("window has neither context nor document sample")
    return ctx_mean + h


def softmax_probability(target: int, context: np.ndarray, doc_sample: np.ndarray,
                        params: ModelParams) -> float:
    """Full-softmax probability of the target word (reference path, O(v))."""
    win = TrainingWindow(target=target, context=np.asarray(context, dtype=np.int64),
                         doc_sample=np.asarray(doc_sample, dtype=np.int64))
    s = _window_input(win, params.word_embeddings.astype(np.float64))
    scores = params.output_embeddings.astype(np.float64) @ s
    scores -= scores.max()
    e = np.exp(scores)
    return float(e[target] / e.sum())


class NoiseDistribution:
    """Unigram noise raised to a power (default 3/4), sampled via inverse CDF."""

    def __init__(self, freq: np.ndarray, power: float = 0.75):
        weights = np.asarray(freq, dtype=np.float64) ** power
        total = weights.sum()
        if total <= 0:
            raise ValueError("noise distribution needs positive frequencies")
        self.probs = weights / total
        self._cdf = np.cumsum(self.probs)
        self._cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        u = rng.random(size)
        return np.searchsorted(self._cdf, u, side="right").astype(np.int32)


@dataclass
class SparseGrads:
    """Gradients as (row id, row value) pairs; duplicate ids accumulate."""

    u_indices: np.ndarray
    u_values: np.ndarray
    v_indices: np.ndarray
    v_values: np.ndarray

    def add_to(self, dU: np.ndarray, dV: np.ndarray):
        np.add.at(dU, self.u_indices, self.u_values)
        np.add.at(dV, self.v_indices, self.v_values)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def negsample_loss_grad(win: TrainingWindow, params: ModelParams, k: int,
                        noise, rng: np.random.Generator) -> tuple[float, SparseGrads]:
    """Negative-sampling loss and gradients for one window.

    loss = -log sigma(v_t . s) - sum_j log sigma(-v_nj . s), with s the
    context mean plus the document-sample mean. Gradients touch only the
    target, the drawn negatives, and the words of the context and sample.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    U = params.word_embeddings
    V = params.output_embeddings
    s = _window_input(win, U)
    negatives = np.asarray(noise.sample(rng, k), dtype=np.int64)

    z_pos = float(V[win.target] @ s)
    z_neg = V[negatives] @ s
    loss = float(-_log_sigmoid(z_pos) - _log_sigmoid(-z_neg).sum())

    g_pos = expit(z_pos) - 1.0
    g_neg = expit(z_neg)

    v_indices = np.concatenate([[win.target], negatives])
    v_values = np.concatenate([[g_pos * s], g_neg[:, None] * s[None, :]])

    ds = g_pos * V[win.target] + g_neg @ V[negatives]
    parts_idx, parts_val = [], []
    if win.context.size:
        parts_idx.append(win.context)
        parts_val.append(np.repeat(ds[None, :] / win.context.size, win.context.size, axis=0))
    if win.doc_sample.size:
        parts_idx.append(win.doc_sample)
        parts_val.append(np.repeat(ds[None, :] / win.doc_sample.size, win.doc_sample.size, axis=0))
    u_indices = np.concatenate(parts_idx)
    u_values = np.concatenate(parts_val)

    return loss, SparseGrads(
        u_indices=np.asarray(u_indices, dtype=np.int64),
        u_values=u_values,
        v_indices=np.asarray(v_indices, dtype=np.int64),
        v_values=v_values,
    )


class WindowSet:
    """All training windows of a document collection, in flat arrays.

    Context layout is deterministic, so it is built once; document samples
    and negatives are drawn per batch. Rows are windows; ``doc_of`` points
    each window back to its document for sampling.
    """

    def __init__(self, targets, ctx, ctx_len, doc_of, doc_window_range,
                 flat_tokens, doc_start, doc_len):
        self.targets = targets
        self.ctx = ctx                # (n_windows, 2*window), -1 padded
        self.ctx_len = ctx_len        # in-window context count, may be 0
        self.doc_of = doc_of          # (n_windows,) document index
        self.doc_window_range = doc_window_range  # (n_docs+1,) window offsets
        self.flat_tokens = flat_tokens
        self.doc_start = doc_start
        self.doc_len = doc_len

    @property
    def n_windows(self) -> int:
        return self.targets.size

    @classmethod
    def from_documents(cls, docs: Sequence[TokenizedDocument], window: int) -> "WindowSet":
        if window < 1:
            raise ValueError("window must be >= 1")
        n_docs = len(docs)
        doc_len = np.asarray([d.tokens.size for d in docs], dtype=np.int64)
        doc_start = np.zeros(n_docs + 1, dtype=np.int64)
        np.cumsum(doc_len, out=doc_start[1:])
        flat_tokens = np.concatenate([d.tokens for d in docs]) if n_docs else np.zeros(0, np.int32)

        doc_window_range = np.zeros(n_docs + 1, dtype=np.int64)
        np.cumsum(doc_len, out=doc_window_range[1:])  # one window per token

        n_windows = int(doc_window_range[-1])
        targets = np.empty(n_windows, dtype=np.int32)
        ctx = np.full((n_windows, 2 * window), -1, dtype=np.int32)
        ctx_len = np.empty(n_windows, dtype=np.int32)
        doc_of = np.empty(n_windows, dtype=np.int32)

        for i, doc in enumerate(docs):
            t = doc.tokens
            n = t.size
            lo, hi = doc_window_range[i], doc_window_range[i + 1]
            targets[lo:hi] = t
            doc_of[lo:hi] = i
            pos = np.arange(n)
            left = np.minimum(pos, window)
            right = np.minimum(n - 1 - pos, window)
            ctx_len[lo:hi] = left + right
            padded = np.concatenate([np.full(window, -1, np.int32), t,
                                     np.full(window, -1, np.int32)])
            sliding = np.lib.stride_tricks.sliding_window_view(padded, 2 * window + 1)
            ctx[lo:hi] = np.delete(sliding[:n], window, axis=1)
        return cls(targets, ctx, ctx_len, doc_of, doc_window_range,
                   flat_tokens, doc_start, doc_len)

    def rows_for_documents(self, doc_indices: np.ndarray) -> np.ndarray:
        """Window row indices of the given documents, in document order."""
        parts = [np.arange(self.doc_window_range[i], self.doc_window_range[i + 1])
                 for i in doc_indices]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def _backbone_chunk(window_set: WindowSet, sel: np.ndarray, params: ModelParams,
                    k: int, doc_sample_size: int, noise, rng: np.random.Generator,
                    dropout: float):
    """Loss and dense gradient contribution of one chunk of window rows.

    Draw order per chunk is fixed: document-sample positions, negatives, then
    dropout masks.
    """
    U = params.word_embeddings
    V = params.output_embeddings
    v, d = U.shape
    dtype = U.dtype
    c = sel.size

    targets = window_set.targets[sel].astype(np.int64)
    ctx = window_set.ctx[sel]
    ctx_len = window_set.ctx_len[sel].astype(np.int64)
    docs = window_set.doc_of[sel].astype(np.int64)
    dlen = window_set.doc_len[docs]
    dstart = window_set.doc_start[docs]

    # document sample: positions uniform with replacement, then token lookup
    pos = (rng.random((c, doc_sample_size)) * dlen[:, None]).astype(np.int64)
    samples = window_set.flat_tokens[dstart[:, None] + pos].astype(np.int64)
    negatives = noise.sample(rng, (c, k)).astype(np.int64)

    win_idx = np.arange(c, dtype=np.int64)
    ctx_safe = np.where(ctx >= 0, ctx, 0)
    ctx_mask = (ctx >= 0).astype(dtype)
    # per-window word-count matrices double as forward averagers (C @ U,
    # S @ U) and backward scatterers (C^T d_ctx, S^T d_h)
    C = sparse.csr_matrix(
        (ctx_mask.ravel(), (np.repeat(win_idx, ctx.shape[1]), ctx_safe.ravel().astype(np.int64))),
        shape=(c, v),
    )
    S = sparse.csr_matrix(
        (np.ones(c * doc_sample_size, dtype=dtype),
         (np.repeat(win_idx, doc_sample_size), samples.ravel())),
        shape=(c, v),
    )
    inv_ctx = np.zeros(c, dtype=dtype)
    nonzero = ctx_len > 0
    inv_ctx[nonzero] = 1.0 / ctx_len[nonzero]
    ctx_mean = (C @ U) * inv_ctx[:, None]
    h = (S @ U) / doc_sample_size

    if dropout > 0.0:
        keep = 1.0 - dropout
        mask_c = (rng.random((c, d)) >= dropout).astype(dtype) / keep
        mask_h = (rng.random((c, d)) >= dropout).astype(dtype) / keep
        ctx_mean = ctx_mean * mask_c
        h = h * mask_h
    s = ctx_mean + h

    vt = V[targets]
    vn = V[negatives]
    z_pos = np.einsum("cd,cd->c", vt, s, optimize=True)
    z_neg = np.einsum("ckd,cd->ck", vn, s, optimize=True)
    loss = float(-_log_sigmoid(z_pos).sum(dtype=np.float64)
                 - _log_sigmoid(-z_neg).sum(dtype=np.float64))

    g_pos = (expit(z_pos) - 1.0).astype(dtype)
    g_neg = expit(z_neg).astype(dtype)

    # dV = A^T s with A holding per-(window, word) sigmoid residuals
    a_rows = np.concatenate([win_idx, np.repeat(win_idx, k)])
    a_cols = np.concatenate([targets, negatives.ravel()])
    a_vals = np.concatenate([g_pos, g_neg.ravel()])
    A = sparse.csr_matrix((a_vals, (a_rows, a_cols)), shape=(c, v))
    dV = np.asarray((A.T @ s), dtype=np.float64)

    ds = g_pos[:, None] * vt + np.einsum("ck,ckd->cd", g_neg, vn, optimize=True)
    d_ctx = ds * inv_ctx[:, None]
    d_h = ds / doc_sample_size
    if dropout > 0.0:
        d_ctx = d_ctx * mask_c
        d_h = d_h * mask_h

    dU = np.asarray((C.T @ d_ctx), dtype=np.float64)
    dU += S.T @ d_h

    touched_u = np.zeros(v, dtype=bool)
    touched_v = np.zeros(v, dtype=bool)
    touched_v[targets] = True
    touched_v[negatives.ravel()] = True
    touched_u[ctx[ctx >= 0]] = True
    touched_u[samples.ravel()] = True
    return loss, dU, dV, touched_u, touched_v


def backbone_batch(
    window_set: WindowSet,
    rows: np.ndarray,
    params: ModelParams,
    k: int,
    doc_sample_size: int,
    noise: NoiseDistribution,
    rng_for_chunk,
    dropout: float = 0.0,
    chunk_size: int = 16384,
    threads: int = 1,
):
    """Summed window loss and gradients over ``rows`` (one mini-batch).

    Vectorized equivalent of summing ``negsample_loss_grad`` over every
    window. Rows are processed in fixed-size chunks, each with its own
    generator from ``rng_for_chunk(chunk_index)``, and partial gradients are
    reduced in chunk order — so the result is bit-identical for any thread
    count. Returns ``(loss, dU, dV, touched_u, touched_v)`` with float64
    dense gradients and boolean touched-row masks.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    v, d = params.word_embeddings.shape
    dU = np.zeros((v, d), dtype=np.float64)
    dV = np.zeros((v, d), dtype=np.float64)
    touched_u = np.zeros(v, dtype=bool)
    touched_v = np.zeros(v, dtype=bool)
    total_loss = 0.0

    chunks = [(ci, rows[lo:lo + chunk_size])
              for ci, lo in enumerate(range(0, rows.size, chunk_size))]

    def run(chunk):
        ci, sel = chunk
        return _backbone_chunk(window_set, sel, params, k, doc_sample_size,
                               noise, rng_for_chunk(ci), dropout)

    if threads <= 1 or len(chunks) == 1:
        results = map(run, chunks)
        for loss, du, dv, tu, tv in results:
            total_loss += loss
            dU += du
            dV += dv
            touched_u |= tu
            touched_v |= tv
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            # waves bound peak memory; reduction stays in chunk order
            for lo in range(0, len(chunks), threads):
                for loss, du, dv, tu, tv in ex.map(run, chunks[lo:lo + threads]):
                    total_loss += loss
                    dU += du
                    dV += dv
                    touched_u |= tu
                    touched_v |= tv

    return total_loss, dU, dV, touched_u, touched_v
