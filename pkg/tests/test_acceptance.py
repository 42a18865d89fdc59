"""Acceptance suite: one test per release criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the PASS lines.
"""

import csv
import io
import math
import wave

import numpy as np
import pytest

from birdcorpus.audio_io import ClipBuffer
from birdcorpus.audit import plan_audit
from birdcorpus.balance import ScoredClip, balance_corpus, gini, salience
from birdcorpus.dedup import AcousticEmbedding, apply_removals, embed_recording, find_duplicates
from birdcorpus.features import FeatureSummary
from birdcorpus.negatives import (ESC50_EXCLUDED, FSC22_EXCLUDED, NegativeSourceSpec,
                                  QualityGate, load_source, quality_filter)
from birdcorpus.segments import scan_windows, select_clips
from birdcorpus.synth import make_recording, write_negative_fixture

SR = 16000


def _verdict(name, ok=True):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}")
    assert ok


# 1 ---------------------------------------------------------------------------

def test_cochran_fixture():
    """plan_audit(0.04, 0.015, 1.96, 25000) -> n0=656, n*=639 exactly."""
    plan = plan_audit(0.04, 0.015, 1.96, 25000)
    assert plan.n0 == 656
    assert plan.n_star == 639
    _verdict("Cochran fixture: n0=656, n*=639")


# 2 ---------------------------------------------------------------------------

def test_gini_oracle_equivalence():
    """Rank formula matches the mean-absolute-difference form within 1e-9."""
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        length = int(rng.integers(2, 501))
        counts = rng.integers(0, 1000, size=length).astype(float)
        if counts.sum() == 0:
            counts[int(rng.integers(length))] = 1.0
        mad = np.abs(counts[:, None] - counts[None, :]).sum()
        expected = mad / (2 * length * length * counts.mean())
        assert gini(list(counts)) == pytest.approx(expected, abs=1e-9), f"trial {trial}"
    assert gini([17] * 250) == 0.0
    _verdict("Gini oracle equivalence on 1000 random vectors; equal counts = 0")


# 3 ---------------------------------------------------------------------------

def _zipf_corpus(seed=1234, n_species=100, total=5000, exponent=1.2):
    rng = np.random.default_rng(seed)
    weights = 1.0 / np.arange(1, n_species + 1) ** exponent
    weights /= weights.sum()
    species_of = rng.choice(n_species, size=total, p=weights)
    # every species is present at least once
    species_of[:n_species] = np.arange(n_species)
    clips = []
    for i, sp in enumerate(species_of):
        emb = rng.standard_normal(16) + 3.0 * (sp % 7)
        clips.append(ScoredClip(
            clip_id=f"clip{i:05d}", species=f"sp{sp:03d}",
            salience=float(rng.uniform(0, 1)),
            quality_rating=str(rng.choice(["A", "B", "C", "D", "unrated"])),
            embedding=emb / np.linalg.norm(emb)))
    return clips


def _manifest_bytes(selected):
    out = io.StringIO()
    writer = csv.writer(out)
    for clip in selected:
        writer.writerow([clip.clip_id, clip.species, clip.cluster_id,
                         f"{clip.salience:.12f}"])
    return out.getvalue().encode()


def test_balancer_end_to_end():
    """Zipf corpus (S=100, 5000 clips, a=1.2), target 2000: size, coverage, gini."""
    selected, report = balance_corpus(_zipf_corpus(), 2000, k_clusters=5, seed=77)
    assert len(selected) == 2000
    assert len({c.species for c in selected}) == 100
    assert report.gini_after < report.gini_before
    again, _ = balance_corpus(_zipf_corpus(), 2000, k_clusters=5, seed=77)
    assert _manifest_bytes(selected) == _manifest_bytes(again)
    _verdict(f"Balancer end-to-end: 2000 clips, 100 species, "
             f"gini {report.gini_before:.3f} -> {report.gini_after:.3f}, deterministic")


# 4 ---------------------------------------------------------------------------

def _oracle_mutual_knn_pairs(embeddings, k, threshold):
    """Independent brute-force oracle: full distance matrix + mutual top-k."""
    from scipy.spatial.distance import cdist

    items = sorted((e for e in embeddings if e.indexable),
                   key=lambda e: e.source_catalog_id)
    ids = np.array([e.source_catalog_id for e in items])
    matrix = np.stack([e.vector for e in items])
    dist = cdist(matrix, matrix)
    np.fill_diagonal(dist, np.inf)
    knn = []
    for i in range(len(items)):
        order = sorted(range(len(items)), key=lambda j: (dist[i, j], ids[j]))
        knn.append(set(order[:k]))
    pairs = set()
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if dist[i, j] < threshold and j in knn[i] and i in knn[j]:
                pairs.add((int(ids[i]), int(ids[j])))
    return pairs


def test_dedup_injection():
    """500 synthetic recordings + 8 exact + 5 near pairs: removals and advisories."""
    embeddings = []
    for i in range(500):
        samples = make_recording(1000 + i, i % 24, 6.0, SR, seed=9)
        embeddings.append(embed_recording(ClipBuffer(samples, SR), 1000 + i))
    rng = np.random.default_rng(99)
    for j in range(8):  # exact: byte-identical audio under a later catalog id
        samples = make_recording(1000 + j, j % 24, 6.0, SR, seed=9)
        embeddings.append(embed_recording(ClipBuffer(samples, SR), 2000 + j))
    for j in range(5):  # near: tiny embedding perturbation, distance < 1e-3
        v = embeddings[100 + j].vector + rng.standard_normal(256) * 2e-5
        v /= np.linalg.norm(v)
        d = float(np.linalg.norm(v - embeddings[100 + j].vector))
        assert 1e-7 < d < 1e-3
        embeddings.append(AcousticEmbedding(v, 3000 + j))

    pairs = find_duplicates(embeddings, k=6)
    exact = [p for p in pairs if p.kind == "exact"]
    near = [p for p in pairs if p.kind == "near"]
    assert len(near) == 5
    assert {(p.keep_id, p.drop_id) for p in exact} == {(1000 + j, 2000 + j) for j in range(8)}

    corpus = [e.source_catalog_id for e in embeddings]
    kept = apply_removals(corpus, pairs)
    assert len(corpus) - len(kept) == 8
    assert all(p.drop_id not in kept and p.keep_id in kept for p in exact)

    oracle = _oracle_mutual_knn_pairs(embeddings, 6, 1e-3)
    assert {(p.keep_id, p.drop_id) for p in pairs} == oracle
    _verdict("Dedup injection: 8 removals (lower ids kept), 5 advisory near-pairs, "
             "kNN == brute force")


# 5 ---------------------------------------------------------------------------

def _oracle_select(samples):
    n = len(samples)
    window, step = 3 * SR, SR // 10
    first = int(3.0 * SR / step) if n > 12 * SR else 0
    cands = []
    for start in range(first * step, n - window + 1, step):
        seg = samples[start:start + window]
        cands.append((start / SR, float(np.sqrt(np.mean(seg * seg)))))
    cands = [c for c in cands if c[1] >= 0.001]
    cands.sort(key=lambda c: (-c[1], c[0]))
    chosen = []
    for start, _ in cands:
        if all(abs(start - s) >= 1.5 for s in chosen):
            chosen.append(start)
    return sorted(chosen)


def test_segmenter_oracle():
    """Greedy selection matches brute force on 200 random recordings."""
    rng = np.random.default_rng(555)
    for trial in range(200):
        duration = float(rng.uniform(3.0, 60.0))
        n = int(duration * SR)
        samples = rng.normal(0, 0.008, n)
        for _ in range(int(rng.integers(0, 6))):
            burst = int(rng.uniform(0.2, 2.0) * SR)
            at = int(rng.integers(0, max(n - burst, 1)))
            samples[at:at + burst] += rng.uniform(0.05, 0.6)
        chosen = select_clips(scan_windows(ClipBuffer(samples, SR)))
        starts = sorted(c.start_s for c in chosen)
        assert starts == pytest.approx(_oracle_select(samples)), f"trial {trial}"
        assert all(c.rms >= 0.001 for c in chosen)
        for i in range(len(starts)):
            for j in range(i + 1, len(starts)):
                assert abs(starts[i] - starts[j]) >= 1.5
    fifteen = scan_windows(ClipBuffer(np.full(15 * SR, 0.1), SR))
    assert min(c.start_s for c in fifteen) >= 3.0
    _verdict("Segmenter matches brute-force oracle on 200 recordings; "
             "separation and head-skip hold")


# 6 ---------------------------------------------------------------------------

def test_salience_closed_form():
    features = FeatureSummary(rms=0.1, peak=0.5, dynamic_range=0.3,
                              mean_centroid=4000.0, mean_contrast=20.0)
    assert salience(features, 16000.0) == pytest.approx(0.425, abs=1e-12)
    silent = FeatureSummary(rms=0.0, peak=0.0, dynamic_range=0.0,
                            mean_centroid=0.0, mean_contrast=0.0)
    assert salience(silent, 16000.0) == 0.0
    _verdict("Salience closed form: 0.425 within 1e-12; silence = 0")


# 7 ---------------------------------------------------------------------------

def test_negative_gate(tmp_path):
    gate = QualityGate()
    t = np.arange(48000) / SR

    ok, _ = quality_filter(ClipBuffer(np.zeros(48000), SR), gate)
    assert not ok  # digital silence
    ok, _ = quality_filter(ClipBuffer(np.sign(np.sin(2 * np.pi * 110 * t)), SR), gate)
    assert not ok  # hard-clipped noise
    ok, _ = quality_filter(ClipBuffer(0.2 * np.sin(2 * np.pi * 300 * t), SR), gate)
    assert not ok  # low-dynamic-range drone

    rng = np.random.default_rng(31)
    spectrum = rng.standard_normal(24001) + 1j * rng.standard_normal(24001)
    spectrum /= np.sqrt(np.maximum(np.arange(24001), 1.0))
    pink = np.fft.irfft(spectrum, 48000)
    pink *= 0.5 / np.max(np.abs(pink))
    ok, summary = quality_filter(ClipBuffer(pink, SR), gate)
    assert ok and summary.rms >= 0.0001

    write_negative_fixture(tmp_path, seed=17,
                           dcase_sizes={"birdvox": 6, "freefield1010": 4, "warblr": 4})
    esc = load_source(NegativeSourceSpec(name="esc50", root_path=tmp_path / "esc50",
                                         excluded_classes=list(ESC50_EXCLUDED)))
    fsc = load_source(NegativeSourceSpec(name="fsc22", root_path=tmp_path / "fsc22",
                                         excluded_classes=list(FSC22_EXCLUDED)))
    assert all(c.class_label not in ESC50_EXCLUDED for c in esc)
    assert all(c.class_label not in FSC22_EXCLUDED for c in fsc)
    _verdict("Negative gate: silence/clipped/drone rejected, pink noise accepted, "
             "adapters exclude avian classes")


# 8 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def mini_build(tmp_path_factory):
    """200 positive recordings / 20 species + ~300 mock negatives, full chain."""
    from birdcorpus.config import load_config
    from birdcorpus.pipeline import run_stage
    from birdcorpus.synth import write_fixture_config, write_positive_fixture

    root = tmp_path_factory.mktemp("acceptance_fixture")
    ws = tmp_path_factory.mktemp("acceptance_ws")
    write_positive_fixture(root / "positive", n_recordings=200, n_species=20, seed=42,
                           use_mp3=True)
    write_negative_fixture(root / "negative", seed=42,
                           dcase_sizes={"birdvox": 150, "freefield1010": 90, "warblr": 60})
    write_fixture_config(root, n_target=300)
    cfg = load_config(root / "fixture_config.yaml", workspace=ws, overrides={
        "balance": {"n_target": 300},
        "negatives": {"sources": [
            {"name": "birdvox", "root": str(root / "negative" / "birdvox"),
             "quota": 130, "policy": "center_crop", "excluded": [], "priority": []},
            {"name": "freefield1010", "root": str(root / "negative" / "freefield1010"),
             "quota": 80, "policy": "center_crop", "excluded": [], "priority": []},
            {"name": "warblr", "root": str(root / "negative" / "warblr"),
             "quota": 50, "policy": "center_crop", "excluded": [], "priority": []},
            {"name": "fsc22", "root": str(root / "negative" / "fsc22"),
             "quota": 15, "policy": "center_crop",
             "excluded": list(FSC22_EXCLUDED), "priority": ["Rain", "Wind"]},
            {"name": "esc50", "root": str(root / "negative" / "esc50"),
             "quota": 12, "policy": "center_crop",
             "excluded": list(ESC50_EXCLUDED), "priority": ["rain", "wind"]},
            {"name": "datasec", "root": str(root / "negative" / "datasec"),
             "quota": 13, "policy": "highest_rms_window",
             "excluded": ["Birds", "Chicken coop", "Crows seagulls and magpies", "Music"],
             "priority": ["Thunder", "Insects", "Vehicles"]},
        ]}})
    for stage in ("fetch-metadata", "download", "dedup", "extract", "balance",
                  "curate-negatives", "merge", "split"):
        run_stage(stage, cfg)
    return ws


def test_end_to_end_mini_build(mini_build):
    from birdcorpus.manifest import read_manifest

    records = read_manifest(mini_build / "manifests" / "final.csv")
    positives = [r for r in records if r.label == 1]
    negative_rows = [r for r in records if r.label == 0]
    assert len(positives) == len(negative_rows) == 300

    # 80/10/10 within one clip per stratum
    for label_rows in (positives, negative_rows):
        n = len(label_rows)
        for split, ratio in (("train", 0.8), ("val", 0.1), ("test", 0.1)):
            count = sum(1 for r in label_rows if r.split == split)
            assert abs(count - ratio * n) <= 1, (split, count, ratio * n)

    # recording-grouped splits
    by_recording = {}
    for r in positives:
        by_recording.setdefault(r.catalog_id, set()).add(r.split)
    assert all(len(splits) == 1 for splits in by_recording.values())

    # every clip on disk: 48000 samples, 16 kHz, 16-bit mono
    for r in records:
        sub = "pos" if r.label == 1 else "neg"
        path = mini_build / "clips" / sub / f"{r.clip_id}.wav"
        with wave.open(str(path)) as fh:
            assert fh.getnframes() == 48000
            assert fh.getframerate() == 16000
            assert fh.getsampwidth() == 2
            assert fh.getnchannels() == 1
    _verdict("End-to-end mini-build: 300=300 clips, 80/10/10 +-1, "
             "recording-grouped, all WAVs 48000 @ 16 kHz mono 16-bit")


# 9 ---------------------------------------------------------------------------

def test_audit_monte_carlo():
    """Planted 5% error rate: coverage of the planned margin >= 95% over 1000 rounds."""
    population_size, error_rate, margin = 25000, 0.05, 0.015
    plan = plan_audit(error_rate, margin, 1.96, population_size)
    population = np.zeros(population_size, dtype=bool)
    population[:int(population_size * error_rate)] = True
    rng = np.random.default_rng(42)
    hits = 0
    for _ in range(1000):
        sample = rng.choice(population_size, size=plan.n_star, replace=False)
        p_hat = population[sample].mean()
        if abs(p_hat - error_rate) <= margin:
            hits += 1
    assert hits >= 950, f"coverage {hits / 10:.1f}%"
    _verdict(f"Audit Monte Carlo: {hits / 10:.1f}% of rounds within the planned margin "
             f"(n*={plan.n_star})")
