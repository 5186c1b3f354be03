import numpy as np
import pytest

from docembed.corpus import SparseBow, TokenizedDocument, to_bow, Vocabulary
from docembed.encoder import (
    ModelParams,
    NoiseDistribution,
    TrainingWindow,
    WindowSet,
    backbone_batch,
    embed_document,
    init_params,
    negsample_loss_grad,
    sample_windows,
    softmax_probability,
)
from docembed.contrastive import PredictorWeights

from conftest import central_difference, relative_error


def tiny_params(v=5, d=3, seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    pred = PredictorWeights.init(d, 4, np.random.default_rng(seed + 1), dtype=dtype)
    return ModelParams(
        word_embeddings=rng.normal(size=(v, d)).astype(dtype),
        output_embeddings=rng.normal(size=(v, d)).astype(dtype),
        predictor=pred,
    )


class FixedNoise:
    """Test stub: ignores the generator and returns preset word ids."""

    def __init__(self, ids):
        self.ids = np.asarray(ids, dtype=np.int64)

    def sample(self, rng, size):
        shape = (size,) if np.isscalar(size) else tuple(size)
        flat = np.resize(self.ids, int(np.prod(shape)))
        return flat.reshape(shape)


class TestEmbedDocument:
    def test_single_word(self):
        p = tiny_params()
        bow = SparseBow(indices=np.array([2]), values=np.array([1]), total=1)
        np.testing.assert_array_equal(embed_document(bow, p.word_embeddings),
                                      p.word_embeddings[2])

    def test_duplicate_invariance(self):
        p = tiny_params()
        one = SparseBow(indices=np.array([2]), values=np.array([1]), total=1)
        two = SparseBow(indices=np.array([2]), values=np.array([2]), total=2)
        np.testing.assert_allclose(embed_document(one, p.word_embeddings),
                                   embed_document(two, p.word_embeddings))

    def test_two_point_mean(self):
        U = np.zeros((2, 2))
        U[0] = (1.0, 0.0)
        U[1] = (0.0, 1.0)
        bow = SparseBow(indices=np.array([0, 1]), values=np.array([1, 1]), total=2)
        np.testing.assert_allclose(embed_document(bow, U), [0.5, 0.5])

    def test_empty_bow_error(self):
        p = tiny_params()
        bow = SparseBow(indices=np.array([], dtype=int), values=np.array([], dtype=int), total=0)
        with pytest.raises(ValueError):
            embed_document(bow, p.word_embeddings)

    def test_matches_naive_token_loop(self):
        # equality against per-token averaging on 1,000 random documents;
        # 1e-12 relative absorbs only summation-order rounding, nothing more
        rng = np.random.default_rng(42)
        v, d = 50, 16
        U = rng.normal(size=(v, d))
        vocab = Vocabulary(words=[f"w{i}" for i in range(v)], freq=np.ones(v))
        for i in range(1000):
            tokens = rng.integers(0, v, size=rng.integers(1, 60))
            doc = TokenizedDocument(doc_id=i, tokens=tokens)
            naive = sum(U[t] for t in tokens) / len(tokens)
            h = embed_document(to_bow(doc, vocab), U)
            np.testing.assert_allclose(h, naive, rtol=1e-12, atol=1e-15)


class TestSampleWindows:
    def test_interior_window(self):
        doc = TokenizedDocument(doc_id=0, tokens=[10, 11, 12])
        wins = sample_windows(doc, window=1, doc_sample_size=2,
                              rng=np.random.default_rng(0))
        assert list(wins[1].context) == [10, 12]

    def test_boundary_truncation(self):
        doc = TokenizedDocument(doc_id=0, tokens=[10, 11, 12])
        wins = sample_windows(doc, window=1, doc_sample_size=2,
                              rng=np.random.default_rng(0))
        assert list(wins[0].context) == [11]
        assert list(wins[2].context) == [11]

    def test_degenerate_document_sample(self):
        doc = TokenizedDocument(doc_id=0, tokens=[7])
        wins = sample_windows(doc, window=2, doc_sample_size=5,
                              rng=np.random.default_rng(0))
        assert list(wins[0].doc_sample) == [7] * 5
        assert wins[0].context.size == 0


class TestSoftmaxProbability:
    def test_uniform_at_zero_init(self):
        pred = PredictorWeights.init(2, 4, np.random.default_rng(0))
        p = ModelParams(word_embeddings=np.zeros((2, 2)),
                        output_embeddings=np.zeros((2, 2)), predictor=pred)
        prob = softmax_probability(0, np.array([1]), np.array([0]), p)
        assert prob == pytest.approx(0.5, abs=1e-15)

    def test_scalar_example(self):
        # d=1, v=2: input sums to 1, output vectors (1) and (0) => e/(e+1)
        pred = PredictorWeights.init(1, 4, np.random.default_rng(0))
        p = ModelParams(word_embeddings=np.array([[0.5]]).repeat(2, axis=0),
                        output_embeddings=np.array([[1.0], [0.0]]), predictor=pred)
        # context mean + doc-sample mean = 0.5 + 0.5 = 1.0
        prob = softmax_probability(0, np.array([0]), np.array([1]), p)
        assert prob == pytest.approx(0.7310585786300049, abs=1e-12)

    def test_sums_to_one(self):
        p = tiny_params(v=7, d=4, seed=3)
        ctx = np.array([1, 2])
        samp = np.array([0, 3, 3])
        total = sum(softmax_probability(t, ctx, samp, p) for t in range(7))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_empty_context_and_sample_error(self):
        p = tiny_params()
        with pytest.raises(ValueError):
            softmax_probability(0, np.array([], dtype=int), np.array([], dtype=int), p)


class TestNegSampling:
    def test_zero_params_loss(self):
        pred = PredictorWeights.init(3, 4, np.random.default_rng(0))
        p = ModelParams(word_embeddings=np.zeros((4, 3)),
                        output_embeddings=np.zeros((4, 3)), predictor=pred)
        win = TrainingWindow(target=0, context=np.array([1]), doc_sample=np.array([2]))
        loss, _ = negsample_loss_grad(win, p, k=1, noise=FixedNoise([3]),
                                      rng=np.random.default_rng(0))
        assert loss == pytest.approx(2.0 * np.log(2.0), abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        p = tiny_params(v=5, d=3, seed=9)
        win = TrainingWindow(target=1, context=np.array([0, 2, 2]),
                             doc_sample=np.array([3, 1]))
        negs = [4, 0]
        loss, grads = negsample_loss_grad(win, p, k=2, noise=FixedNoise(negs),
                                          rng=np.random.default_rng(0))
        dU = np.zeros_like(p.word_embeddings)
        dV = np.zeros_like(p.output_embeddings)
        grads.add_to(dU, dV)

        def loss_of_U(U):
            q = ModelParams(word_embeddings=U, output_embeddings=p.output_embeddings,
                            predictor=p.predictor)
            val, _ = negsample_loss_grad(win, q, k=2, noise=FixedNoise(negs),
                                         rng=np.random.default_rng(0))
            return val

        def loss_of_V(V):
            q = ModelParams(word_embeddings=p.word_embeddings, output_embeddings=V,
                            predictor=p.predictor)
            val, _ = negsample_loss_grad(win, q, k=2, noise=FixedNoise(negs),
                                         rng=np.random.default_rng(0))
            return val

        fd_U = central_difference(loss_of_U, p.word_embeddings.copy())
        fd_V = central_difference(loss_of_V, p.output_embeddings.copy())
        assert relative_error(dU, fd_U) < 1e-4
        assert relative_error(dV, fd_V) < 1e-4

    def test_gradient_sparsity(self):
        p = tiny_params(v=9, d=3, seed=2)
        win = TrainingWindow(target=1, context=np.array([0, 2]), doc_sample=np.array([3]))
        _, grads = negsample_loss_grad(win, p, k=1, noise=FixedNoise([4]),
                                       rng=np.random.default_rng(0))
        dU = np.zeros_like(p.word_embeddings)
        dV = np.zeros_like(p.output_embeddings)
        grads.add_to(dU, dV)
        for untouched in (5, 6, 7, 8):
            assert np.all(dU[untouched] == 0.0)
            assert np.all(dV[untouched] == 0.0)
        assert np.all(dV[[0, 2, 3]] == 0.0)  # context/sample words carry no V grad
        assert np.all(dU[[1, 4]] == 0.0)     # target/negatives carry no U grad

    def test_ranking_matches_full_softmax(self):
        # with every non-target used once as a negative, the negative-sampling
        # loss orders targets exactly like full-softmax cross entropy
        v, d = 4, 3
        p = tiny_params(v=v, d=d, seed=5)
        ctx = np.array([2, 0])
        samp = np.array([1, 1, 3])
        ns_losses, ce_losses = [], []
        for target in range(v):
            win = TrainingWindow(target=target, context=ctx, doc_sample=samp)
            negs = [w for w in range(v) if w != target]
            loss, _ = negsample_loss_grad(win, p, k=v - 1, noise=FixedNoise(negs),
                                          rng=np.random.default_rng(0))
            ns_losses.append(loss)
            ce_losses.append(-np.log(softmax_probability(target, ctx, samp, p)))
        assert list(np.argsort(ns_losses)) == list(np.argsort(ce_losses))


class TestNoiseDistribution:
    def test_power_law_probabilities(self):
        freq = np.array([16.0, 81.0, 1.0])
        noise = NoiseDistribution(freq, power=0.75)
        weights = freq ** 0.75
        np.testing.assert_allclose(noise.probs, weights / weights.sum())

    def test_sampling_distribution(self):
        noise = NoiseDistribution(np.array([100.0, 10.0, 1.0]))
        rng = np.random.default_rng(0)
        draws = noise.sample(rng, 200_000)
        counts = np.bincount(draws, minlength=3) / draws.size
        np.testing.assert_allclose(counts, noise.probs, atol=5e-3)


class TestWindowSetAndBatch:
    def _doc(self, tokens, doc_id=0):
        return TokenizedDocument(doc_id=doc_id, tokens=tokens)

    def test_window_layout(self):
        docs = [self._doc([5, 6, 7], 0), self._doc([8], 1)]
        ws = WindowSet.from_documents(docs, window=1)
        assert ws.n_windows == 4
        assert list(ws.targets) == [5, 6, 7, 8]
        assert list(ws.ctx[0]) == [-1, 6]
        assert list(ws.ctx[1]) == [5, 7]
        assert list(ws.ctx[3]) == [-1, -1]
        assert list(ws.ctx_len) == [1, 2, 1, 0]

    def test_singleton_batch_equals_unit_op(self):
        # a one-word document pins the sample, so unit and batch paths agree
        p = tiny_params(v=6, d=4, seed=1)
        doc = self._doc([2], doc_id=0)
        ws = WindowSet.from_documents([doc], window=2)
        noise = FixedNoise([4, 5, 0])
        loss_b, dU_b, dV_b, _, _ = backbone_batch(
            ws, np.arange(1), p, k=3, doc_sample_size=4, noise=noise,
            rng_for_chunk=lambda ci: np.random.default_rng(ci))

        win = TrainingWindow(target=2, context=np.array([], dtype=int),
                             doc_sample=np.array([2, 2, 2, 2]))
        loss_u, grads = negsample_loss_grad(win, p, k=3, noise=noise,
                                            rng=np.random.default_rng(0))
        dU_u = np.zeros_like(p.word_embeddings)
        dV_u = np.zeros_like(p.output_embeddings)
        grads.add_to(dU_u, dV_u)

        assert loss_b == pytest.approx(loss_u, rel=1e-12)
        np.testing.assert_allclose(dU_b, dU_u, atol=1e-12)
        np.testing.assert_allclose(dV_b, dV_u, atol=1e-12)

    def test_batch_equals_sum_of_unit_ops_on_uniform_docs(self):
        # documents built of one repeated word make every draw degenerate
        p = tiny_params(v=8, d=3, seed=4)
        docs = [self._doc([1, 1, 1], 0), self._doc([6, 6], 1)]
        ws = WindowSet.from_documents(docs, window=1)
        noise = FixedNoise([3, 4])
        loss_b, dU_b, dV_b, _, _ = backbone_batch(
            ws, np.arange(ws.n_windows), p, k=2, doc_sample_size=3, noise=noise,
            rng_for_chunk=lambda ci: np.random.default_rng(100 + ci))

        total, dU_u, dV_u = 0.0, np.zeros_like(p.word_embeddings), np.zeros_like(p.output_embeddings)
        for doc in docs:
            for win in sample_windows(doc, 1, 3, np.random.default_rng(0)):
                loss, grads = negsample_loss_grad(win, p, k=2, noise=noise,
                                                  rng=np.random.default_rng(0))
                total += loss
                grads.add_to(dU_u, dV_u)
        assert loss_b == pytest.approx(total, rel=1e-12)
        np.testing.assert_allclose(dU_b, dU_u, atol=1e-11)
        np.testing.assert_allclose(dV_b, dV_u, atol=1e-11)

    def test_duplicated_document_doubles_contribution(self):
        p = tiny_params(v=8, d=3, seed=4)
        doc = self._doc([1, 1, 1], 0)
        ws1 = WindowSet.from_documents([doc], window=1)
        ws2 = WindowSet.from_documents([doc, self._doc([1, 1, 1], 1)], window=1)
        noise = FixedNoise([5])
        loss1, *_ = backbone_batch(ws1, np.arange(ws1.n_windows), p, k=1,
                                   doc_sample_size=2, noise=noise,
                                   rng_for_chunk=lambda ci: np.random.default_rng(ci))
        loss2, *_ = backbone_batch(ws2, np.arange(ws2.n_windows), p, k=1,
                                   doc_sample_size=2, noise=noise,
                                   rng_for_chunk=lambda ci: np.random.default_rng(ci))
        assert loss2 == pytest.approx(2 * loss1, rel=1e-12)

    def test_seeded_batch_is_reproducible(self):
        p = tiny_params(v=30, d=5, seed=6)
        rng = np.random.default_rng(0)
        docs = [self._doc(rng.integers(0, 30, size=rng.integers(2, 12)), i)
                for i in range(10)]
        ws = WindowSet.from_documents(docs, window=2)
        noise = NoiseDistribution(np.arange(1, 31, dtype=float))

        def run():
            return backbone_batch(
                ws, np.arange(ws.n_windows), p, k=3, doc_sample_size=4, noise=noise,
                rng_for_chunk=lambda ci: np.random.default_rng((42, ci)),
                dropout=0.3)

        la, dUa, dVa, _, _ = run()
        lb, dUb, dVb, _, _ = run()
        assert la == lb
        np.testing.assert_array_equal(dUa, dUb)
        np.testing.assert_array_equal(dVa, dVb)

    def test_thread_count_does_not_change_results(self):
        p = tiny_params(v=30, d=5, seed=6)
        rng = np.random.default_rng(1)
        docs = [self._doc(rng.integers(0, 30, size=rng.integers(2, 12)), i)
                for i in range(12)]
        ws = WindowSet.from_documents(docs, window=2)
        noise = NoiseDistribution(np.arange(1, 31, dtype=float))

        def run(threads):
            return backbone_batch(
                ws, np.arange(ws.n_windows), p, k=3, doc_sample_size=4, noise=noise,
                rng_for_chunk=lambda ci: np.random.default_rng((9, ci)),
                chunk_size=16, threads=threads)

        l1, dU1, dV1, _, _ = run(1)
        l4, dU4, dV4, _, _ = run(4)
        assert l1 == l4
        np.testing.assert_array_equal(dU1, dU4)
        np.testing.assert_array_equal(dV1, dV4)


class TestInitParams:
    def test_shapes_and_ranges(self):
        p = init_params(vocab_size=20, dim=8, seed=3)
        assert p.word_embeddings.shape == (20, 8)
        assert p.output_embeddings.shape == (20, 8)
        assert np.all(p.output_embeddings == 0.0)
        assert np.all(np.abs(p.word_embeddings) <= 0.5 / 8)
        assert p.predictor.w1.shape == (64, 8)

    def test_seeded_init_is_deterministic(self):
        a = init_params(10, 4, seed=5)
        b = init_params(10, 4, seed=5)
        np.testing.assert_array_equal(a.word_embeddings, b.word_embeddings)
        np.testing.assert_array_equal(a.predictor.w1, b.predictor.w1)
