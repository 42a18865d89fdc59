import math

import numpy as np
import pytest

from birdcorpus.audio_io import ClipBuffer
from birdcorpus.dedup import (AcousticEmbedding, apply_removals, embed,
                              embed_recording, find_duplicates)
from birdcorpus.errors import TooFewFrames, UnknownId
from birdcorpus.features import MelSpectrogram, mel_spectrogram
from birdcorpus.synth import make_recording

SR = 16000


def _spec(frames):
    frames = np.asarray(frames, dtype=np.float64)
    return MelSpectrogram(frames=frames, n_mels=frames.shape[0], fft_size=512,
                          hop=128, sample_rate=SR)


def _random_embeddings(n, seed, start_id=1000):
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((n, 256))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    return [AcousticEmbedding(vectors[i], start_id + i) for i in range(n)]


def oracle_pairs(embeddings, k, threshold):
    """Independent O(N^2) mutual-kNN pair scan."""
    items = sorted((e for e in embeddings if e.indexable),
                   key=lambda e: e.source_catalog_id)
    n = len(items)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            dist[i, j] = math.dist(items[i].vector, items[j].vector) if i != j else math.inf
    knn = [set(np.argsort(dist[i], kind="stable")[:k]) for i in range(n)]
    pairs = set()
    for i in range(n):
        for j in range(i + 1, n):
            if dist[i, j] < threshold and j in knn[i] and i in knn[j]:
                pairs.add((items[i].source_catalog_id, items[j].source_catalog_id))
    return pairs


class TestEmbed:
    def test_constant_spectrogram(self):
        frames = np.tile(np.arange(1, 129, dtype=float)[:, None], (1, 10))
        e = embed(_spec(frames))
        assert np.all(e.vector[128:] == 0.0)
        profile = np.arange(1, 129, dtype=float)
        assert np.allclose(e.vector[:128], profile / np.linalg.norm(profile))
        assert abs(np.linalg.norm(e.vector) - 1.0) < 1e-6

    def test_silence_embeds_to_zero_and_not_indexable(self):
        e = embed(_spec(np.zeros((128, 10))))
        assert not e.vector.any()
        assert not e.indexable

    def test_matches_brute_force_statistics(self):
        rng = np.random.default_rng(4)
        frames = rng.uniform(0, 5, (128, 37))
        e = embed(_spec(frames))
        # direct per-bin loops, population std
        means = [sum(row) / len(row) for row in frames]
        stds = [math.sqrt(sum((x - m) ** 2 for x in row) / len(row))
                for row, m in zip(frames, means)]
        expected = np.array(means + stds)
        expected /= math.sqrt(sum(v * v for v in expected))
        assert np.max(np.abs(e.vector - expected)) < 1e-6

    def test_too_few_frames(self):
        with pytest.raises(TooFewFrames):
            embed(_spec(np.ones((128, 1))))

    def test_dimension_is_256(self):
        e = embed(_spec(np.random.default_rng(0).uniform(0, 1, (128, 5))))
        assert e.vector.shape == (256,)


class TestFindDuplicates:
    def test_two_identical_keeps_lower_id(self):
        v = np.random.default_rng(1).standard_normal(256)
        v /= np.linalg.norm(v)
        pairs = find_duplicates([AcousticEmbedding(v.copy(), 200),
                                 AcousticEmbedding(v.copy(), 100)])
        assert len(pairs) == 1
        assert (pairs[0].keep_id, pairs[0].drop_id, pairs[0].kind) == (100, 200, "exact")

    def test_thousand_random_no_duplicates(self):
        embeddings = _random_embeddings(1000, seed=2)
        assert find_duplicates(embeddings) == []
        assert oracle_pairs(embeddings, 6, 1e-3) == set()

    def test_planted_structure_recovered(self):
        embeddings = _random_embeddings(500, seed=3)
        rng = np.random.default_rng(33)
        for j in range(8):
            embeddings.append(AcousticEmbedding(embeddings[j].vector.copy(), 5000 + j))
        for j in range(5):
            v = embeddings[100 + j].vector + rng.standard_normal(256) * 1e-5
            v /= np.linalg.norm(v)
            assert 1e-7 < math.dist(v, embeddings[100 + j].vector) < 1e-3
            embeddings.append(AcousticEmbedding(v, 6000 + j))
        pairs = find_duplicates(embeddings)
        exact = [p for p in pairs if p.kind == "exact"]
        near = [p for p in pairs if p.kind == "near"]
        assert len(exact) == 8
        assert len(near) == 5
        assert all(p.keep_id < p.drop_id for p in pairs)

    def test_matches_oracle_on_mixed_corpus(self):
        embeddings = _random_embeddings(300, seed=8)
        for j in range(6):
            embeddings.append(AcousticEmbedding(embeddings[j * 3].vector.copy(), 9000 + j))
        got = {(p.keep_id, p.drop_id) for p in find_duplicates(embeddings)}
        assert got == oracle_pairs(embeddings, 6, 1e-3)

    def test_order_invariance(self):
        embeddings = _random_embeddings(120, seed=5)
        embeddings.append(AcousticEmbedding(embeddings[0].vector.copy(), 7777))
        forward = find_duplicates(embeddings)
        backward = find_duplicates(list(reversed(embeddings)))
        assert forward == backward

    def test_empty_input(self):
        assert find_duplicates([]) == []

    def test_audio_level_duplicate_detected(self):
        samples = make_recording(42, 3, 6.0, SR, seed=1)
        e1 = embed_recording(ClipBuffer(samples, SR), 42)
        e2 = embed_recording(ClipBuffer(samples.copy(), SR), 43)
        pairs = find_duplicates([e1, e2])
        assert len(pairs) == 1 and pairs[0].kind == "exact"


class TestApplyRemovals:
    def _pair(self, a, b):
        from birdcorpus.dedup import DuplicatePair

        return DuplicatePair(keep_id=min(a, b), drop_id=max(a, b), distance=0.0, kind="exact")

    def test_chain_collapses_to_minimum(self):
        kept = apply_removals([10, 20, 30], [self._pair(10, 20), self._pair(20, 30)])
        assert kept == [10]

    def test_disjoint_pairs_counting(self):
        corpus = list(range(1, 11))
        pairs = [self._pair(1, 2), self._pair(3, 4), self._pair(5, 6)]
        kept = apply_removals(corpus, pairs)
        assert len(kept) == len(corpus) - len(pairs)

    def test_empty_pairs_identity(self):
        assert apply_removals([5, 6, 7], []) == [5, 6, 7]

    def test_idempotent(self):
        pairs = [self._pair(1, 2)]
        once = apply_removals([1, 2, 3], pairs)
        assert apply_removals(once, []) == once

    def test_unknown_id_raises(self):
        with pytest.raises(UnknownId):
            apply_removals([1, 2], [self._pair(1, 99)])

    def test_near_pairs_never_removed(self):
        from birdcorpus.dedup import DuplicatePair

        near = DuplicatePair(keep_id=1, drop_id=2, distance=5e-4, kind="near")
        assert apply_removals([1, 2], [near]) == [1, 2]
