"""Acoustic duplicate detection over mel-statistic embeddings.

Embeddings are per-mel-bin mean and standard deviation across time frames,
concatenated and L2-normalized. Duplicates are unordered pairs closer than
an exact threshold that appear in each other's k-nearest-neighbor lists;
a looser advisory threshold flags near-duplicates without removing them.
Search is exact (chunked brute force): corpus sizes here never justify an
approximate index, and the contract demands exactness at distance zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .audio_io import CLIP_SAMPLES, ClipBuffer
from .errors import TooFewFrames, UnknownId
from .features import MelSpectrogram, mel_spectrogram

EMBED_N_MELS = 128
EXACT_THRESHOLD = 1e-7
NEAR_THRESHOLD = 1e-3
DEFAULT_K = 6


@dataclass
class AcousticEmbedding:
    vector: np.ndarray  # 256 floats, unit norm (all-zero for pure silence)
    source_catalog_id: int

    @property
    def indexable(self) -> bool:
        return bool(np.any(self.vector != 0.0))


@dataclass(frozen=True)
class DuplicatePair:
    keep_id: int
    drop_id: int
    distance: float
    kind: str  # "exact" or "near"


def embed(spec: MelSpectrogram, source_catalog_id: int = 0) -> AcousticEmbedding:
    """Mean/std per mel bin across frames, concatenated, L2-normalized.

    Pure silence embeds to the zero vector and is excluded from indexing.
    """
    if spec.n_frames < 2:
        raise TooFewFrames(f"need >= 2 frames, got {spec.n_frames}")
    if spec.n_mels != EMBED_N_MELS:
        raise ValueError(f"dedup embeddings use {EMBED_N_MELS} mel bins, got {spec.n_mels}")
    mean = spec.frames.mean(axis=1)
    std = spec.frames.std(axis=1)
    vector = np.concatenate([mean, std])
    norm = np.linalg.norm(vector)
    if norm > 0.0:
        vector = vector / norm
    return AcousticEmbedding(vector=vector, source_catalog_id=source_catalog_id)


def embed_recording(buf: ClipBuffer, catalog_id: int) -> AcousticEmbedding:
    """Embedding of the central 3 s of a recording (whole recording if shorter)."""
    samples = buf.samples
    if len(samples) > CLIP_SAMPLES:
        start = (len(samples) - CLIP_SAMPLES) // 2
        samples = samples[start:start + CLIP_SAMPLES]
    window = ClipBuffer(samples, buf.sample_rate)
    return embed(mel_spectrogram(window, n_mels=EMBED_N_MELS), catalog_id)


def _knn_lists(matrix: np.ndarray, ids: np.ndarray, k: int, chunk: int = 512):
    """Exact k nearest neighbors per row; ties broken by ascending catalog id."""
    n = len(matrix)
    sq_norms = np.einsum("ij,ij->i", matrix, matrix)
    neighbor_idx = np.empty((n, min(k, n - 1)), dtype=np.int64)
    neighbor_d2 = np.empty_like(neighbor_idx, dtype=np.float64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq_norms[start:stop, None] + sq_norms[None, :] - 2.0 * (matrix[start:stop] @ matrix.T)
        np.maximum(d2, 0.0, out=d2)
        for row, i in enumerate(range(start, stop)):
            d2[row, i] = np.inf  # mask self
            order = np.lexsort((ids, d2[row]))
            take = order[: neighbor_idx.shape[1]]
            neighbor_idx[i] = take
            neighbor_d2[i] = d2[row, take]
    return neighbor_idx, neighbor_d2


def find_duplicates(embeddings, k: int = DEFAULT_K,
                    exact_threshold: float = EXACT_THRESHOLD,
                    near_threshold: float = NEAR_THRESHOLD) -> list[DuplicatePair]:
    """Mutual-kNN pairs under the thresholds, sorted by (keep_id, drop_id).

    Pairs under exact_threshold are removal candidates ("exact"); pairs under
    near_threshold are advisory ("near"). Zero (silence) embeddings are
    skipped. The result is independent of input order.
    """
    indexable = [e for e in embeddings if e.indexable]
    if len(indexable) < 2:
        return []
    indexable.sort(key=lambda e: e.source_catalog_id)
    ids = np.array([e.source_catalog_id for e in indexable])
    matrix = np.stack([e.vector for e in indexable]).astype(np.float64)

    neighbor_idx, neighbor_d2 = _knn_lists(matrix, ids, k)
    near_sq = near_threshold ** 2
    exact_sq = exact_threshold ** 2

    neighbor_sets = [set(row) for row in neighbor_idx]
    pairs = {}
    for i in range(len(indexable)):
        for j_col, j in enumerate(neighbor_idx[i]):
            d2 = neighbor_d2[i, j_col]
            if d2 >= near_sq:
                continue
            if i not in neighbor_sets[j]:
                continue
            a, b = (i, int(j)) if ids[i] < ids[j] else (int(j), i)
            key = (int(ids[a]), int(ids[b]))
            if key not in pairs:
                kind = "exact" if d2 < exact_sq else "near"
                pairs[key] = DuplicatePair(
                    keep_id=key[0], drop_id=key[1],
                    distance=float(np.sqrt(d2)), kind=kind)
    return [pairs[key] for key in sorted(pairs)]


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # representative is the minimum catalog id (earliest upload)
            lo, hi = (ra, rb) if ra < rb else (rb, ra)
            self.parent[hi] = lo


def apply_removals(corpus, pairs) -> list:
    """Drop the later upload of every exact-duplicate chain.

    corpus is a sequence of objects with a catalog_id attribute (or plain
    ints). Chains a~b~c collapse to the single lowest catalog id. Idempotent.
    """
    def cid(item):
        return item if isinstance(item, int) else item.catalog_id

    present = {cid(item) for item in corpus}
    uf = _UnionFind()
    for pair in pairs:
        if pair.kind != "exact":
            continue
        if pair.keep_id not in present or pair.drop_id not in present:
            raise UnknownId(f"pair ({pair.keep_id}, {pair.drop_id}) not in corpus")
        uf.union(pair.keep_id, pair.drop_id)
    return [item for item in corpus if uf.find(cid(item)) == cid(item)]


def write_duplicate_report(path, pairs) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["keep_id", "drop_id", "distance", "kind"])
        for pair in pairs:
            writer.writerow([pair.keep_id, pair.drop_id, f"{pair.distance:.9g}", pair.kind])
