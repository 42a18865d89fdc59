"""Diversity-aware species balancing.

Long-tailed per-species clip counts are flattened in three phases: a base
allocation (floor of target/species) filled by round-robin selection across
per-species acoustic clusters, a priority-queue backfill ranked by salience
plus quality and cluster-novelty bonuses, and a salience-ordered global trim
that never orphans a species. Inequality is reported as a Gini coefficient
before and after.
"""

from __future__ import annotations

import heapq
import json
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AllZero, EmptyInput, QuotaExceedsSupply
from .features import FeatureSummary

CONTRAST_NORM = 40.0
CONTRAST_WEIGHT = 0.7
CENTROID_WEIGHT = 0.3

QUALITY_BONUS = {"A": 0.10, "B": 0.05}
DIVERSITY_BONUS = 0.05

DEFAULT_K_CLUSTERS = 5
MINIBATCH_THRESHOLD = 10_000


@dataclass
class ScoredClip:
    clip_id: str
    species: str
    salience: float
    quality_rating: str = "unrated"
    cluster_id: int = -1
    embedding: Optional[np.ndarray] = None


@dataclass
class BalanceReport:
    n_species: int
    n_clips_before: int
    n_clips_after: int
    gini_before: float
    gini_after: float
    mean_per_species_after: float
    per_species_counts: dict = field(default_factory=dict)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)


def salience(features: FeatureSummary, f_s: float) -> float:
    """Foreground-clarity score: weighted contrast and centroid terms."""
    return (CONTRAST_WEIGHT * features.mean_contrast / CONTRAST_NORM
            + CENTROID_WEIGHT * features.mean_centroid / f_s)


def _species_seed(seed: int, species: str) -> int:
    return (seed ^ zlib.crc32(species.encode("utf-8"))) & 0x7FFFFFFF


def cluster_species(clips: list[ScoredClip], k: int = DEFAULT_K_CLUSTERS,
                    seed: int = 0) -> np.ndarray:
    """K-means the clips of one species into acoustic clusters.

    k is capped at the clip count (and at the number of distinct embeddings,
    so identical embeddings collapse to one effective cluster). Assignments
    are written back to each clip's cluster_id and returned.
    """
    if not clips:
        return np.array([], dtype=int)
    species = clips[0].species
    if any(c.species != species for c in clips):
        raise ValueError("cluster_species expects clips of a single species")
    matrix = np.stack([np.asarray(c.embedding, dtype=np.float64) for c in clips])
    n_unique = len(np.unique(matrix, axis=0))
    k_eff = min(k, len(clips), n_unique)
    if k_eff <= 1:
        labels = np.zeros(len(clips), dtype=int)
    else:
        from sklearn.cluster import KMeans, MiniBatchKMeans

        cls = MiniBatchKMeans if len(clips) > MINIBATCH_THRESHOLD else KMeans
        model = cls(n_clusters=k_eff, n_init=10, max_iter=100,
                    random_state=_species_seed(seed, species))
        labels = model.fit_predict(matrix)
    for clip, label in zip(clips, labels):
        clip.cluster_id = int(label)
    return labels


def base_allocate(counts: dict[str, int], n_target: int) -> tuple[dict[str, int], int]:
    """Per-species quotas: floor(target/S), species under it fully retained."""
    if n_target < 1 or not counts:
        raise EmptyInput("need a positive target and at least one species")
    n_base = n_target // len(counts)
    return {sp: min(c, n_base) for sp, c in counts.items()}, n_base


def select_within_species(clips: list[ScoredClip], quota: int) -> list[ScoredClip]:
    """Round-robin across clusters, best salience first within each.

    Clusters are visited in descending order of their best clip's salience,
    one clip per cluster per pass, so no cluster gets a second clip while
    another nonempty cluster is unrepresented.
    """
    if quota > len(clips):
        raise QuotaExceedsSupply(f"quota {quota} > supply {len(clips)}")
    if quota <= 0:
        return []
    by_cluster: dict[int, list[ScoredClip]] = {}
    for clip in clips:
        by_cluster.setdefault(clip.cluster_id, []).append(clip)
    for members in by_cluster.values():
        members.sort(key=lambda c: (-c.salience, c.clip_id))
    order = sorted(by_cluster, key=lambda cid: (-by_cluster[cid][0].salience, cid))
    selected: list[ScoredClip] = []
    offset = 0
    while len(selected) < quota:
        progressed = False
        for cid in order:
            members = by_cluster[cid]
            if offset < len(members):
                selected.append(members[offset])
                progressed = True
                if len(selected) == quota:
                    break
        offset += 1
        if not progressed:
            break
    return selected


def _score(clip: ScoredClip, used: set[tuple[str, int]]) -> float:
    bonus = QUALITY_BONUS.get(clip.quality_rating, 0.0)
    if (clip.species, clip.cluster_id) not in used:
        bonus += DIVERSITY_BONUS
    return clip.salience + bonus


def backfill(pool: list[ScoredClip], deficit: int,
             used: set[tuple[str, int]] | None = None) -> list[ScoredClip]:
    """Pop the best-scoring remaining clips until the deficit is covered.

    score = salience + quality bonus (A/B ratings) + diversity bonus for the
    first clip of a not-yet-used (species, cluster). The diversity bonus is
    re-evaluated as selections accumulate (lazy re-push on stale heap
    entries).
    """
    if deficit <= 0 or not pool:
        return []
    used = set(used or ())
    heap = [(-_score(c, used), c.clip_id, c) for c in pool]
    heapq.heapify(heap)
    picked: list[ScoredClip] = []
    while heap and len(picked) < deficit:
        neg_score, _, clip = heapq.heappop(heap)
        current = _score(clip, used)
        if current != -neg_score:
            heapq.heappush(heap, (-current, clip.clip_id, clip))
            continue
        picked.append(clip)
        used.add((clip.species, clip.cluster_id))
    return picked


def global_trim(selected: list[ScoredClip], n_target: int) -> list[ScoredClip]:
    """Keep the n_target highest-salience clips without orphaning a species."""
    if len(selected) < n_target:
        raise ValueError(f"cannot trim {len(selected)} clips to {n_target}")
    if len(selected) == n_target:
        return list(selected)
    ranked = sorted(selected, key=lambda c: (-c.salience, c.clip_id))
    species_count: dict[str, int] = {}
    for clip in ranked:
        species_count[clip.species] = species_count.get(clip.species, 0) + 1
    keep = [True] * len(ranked)
    excess = len(ranked) - n_target
    for i in range(len(ranked) - 1, -1, -1):
        if excess == 0:
            break
        clip = ranked[i]
        if species_count[clip.species] > 1:
            keep[i] = False
            species_count[clip.species] -= 1
            excess -= 1
    if excess:  # every remaining clip is some species' last one
        for i in range(len(ranked) - 1, -1, -1):
            if excess == 0:
                break
            if keep[i]:
                keep[i] = False
                excess -= 1
    return [clip for clip, k in zip(ranked, keep) if k]


def gini(counts) -> float:
    """Inequality of per-species counts: 0 = even, 1 = fully concentrated."""
    values = np.asarray(list(counts.values()) if isinstance(counts, dict) else counts,
                        dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("gini of empty counts")
    if np.any(values < 0):
        raise ValueError("gini needs nonnegative counts")
    total = values.sum()
    if total == 0:
        raise AllZero("gini of all-zero counts")
    ascending = np.sort(values)
    s = len(ascending)
    ranks = np.arange(1, s + 1, dtype=np.float64)
    return float(2.0 * np.dot(ranks, ascending) / (s * total) - (s + 1) / s)


def _species_counts(clips) -> dict[str, int]:
    counts: dict[str, int] = {}
    for clip in clips:
        counts[clip.species] = counts.get(clip.species, 0) + 1
    return counts


def balance_corpus(clips: list[ScoredClip], n_target: int,
                   k_clusters: int = DEFAULT_K_CLUSTERS,
                   seed: int = 0) -> tuple[list[ScoredClip], BalanceReport]:
    """Run the full balancing pass; returns (selected clips, report).

    Selected clips come back sorted by clip_id; the same seed reproduces the
    identical selection.
    """
    counts_before = _species_counts(clips)
    by_species: dict[str, list[ScoredClip]] = {}
    for clip in sorted(clips, key=lambda c: c.clip_id):
        by_species.setdefault(clip.species, []).append(clip)

    for species in sorted(by_species):
        cluster_species(by_species[species], k=k_clusters, seed=seed)

    quotas, _ = base_allocate(counts_before, n_target)
    selected: list[ScoredClip] = []
    for species in sorted(by_species):
        selected.extend(select_within_species(by_species[species], quotas[species]))

    used = {(c.species, c.cluster_id) for c in selected}
    chosen_ids = {c.clip_id for c in selected}
    pool = [c for c in clips if c.clip_id not in chosen_ids]
    selected.extend(backfill(pool, n_target - len(selected), used))

    if len(selected) > n_target:
        selected = global_trim(selected, n_target)
    selected.sort(key=lambda c: c.clip_id)

    counts_after = _species_counts(selected)
    report = BalanceReport(
        n_species=len(counts_before),
        n_clips_before=len(clips),
        n_clips_after=len(selected),
        gini_before=gini(counts_before),
        gini_after=gini(counts_after),
        mean_per_species_after=len(selected) / max(len(counts_after), 1),
        per_species_counts=dict(sorted(counts_after.items())),
    )
    return selected, report
