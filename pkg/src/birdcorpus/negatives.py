"""Bird-absent clip curation from six heterogeneous source datasets.

Each source is consumed through a thin adapter that reads the dataset's
published label layout and yields only verified non-bird material. Candidates
then run through segmentation (per-source policy), a quality gate, and a
deterministic allocation that orders categories by ecological relevance and
caps any single category's contribution.
"""

from __future__ import annotations

import csv
import math
import wave
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .audio_io import CLIP_SAMPLES, ClipBuffer, zero_pad_to
from .errors import InsufficientSupply, MissingLabelFile, UnknownLayout
from .features import FeatureSummary, feature_summary
from .segments import scan_windows

SOURCE_NAMES = ("birdvox", "freefield1010", "warblr", "fsc22", "esc50", "datasec")
POLICIES = ("center_crop", "highest_rms_window", "pad_or_crop")

# Table-layout constants for the three multi-category adapters
ESC50_EXCLUDED = ["chirping_birds", "crow", "rooster", "hen"]
FSC22_EXCLUDED = ["BirdChirping", "WingFlapping"]
DATASEC_EXCLUDED = ["Birds", "Chicken coop", "Crows seagulls and magpies", "Music"]


@dataclass
class NegativeSourceSpec:
    name: str
    root_path: Path
    excluded_classes: list[str] = field(default_factory=list)
    quota: int = 0
    segmentation_policy: str = "center_crop"
    category_priority: list[str] = field(default_factory=list)
    per_category_cap: Optional[int] = None

    def __post_init__(self):
        self.root_path = Path(self.root_path)
        if self.name not in SOURCE_NAMES:
            raise UnknownLayout(f"no adapter for source '{self.name}'")
        if self.segmentation_policy not in POLICIES:
            raise ValueError(f"unknown segmentation policy '{self.segmentation_policy}'")


@dataclass
class QualityGate:
    min_rms: float = 0.0001
    max_peak: float = 0.98
    min_dynamic_range: float = 0.1


@dataclass
class NegativeCandidate:
    source: str
    path: Path
    class_label: str
    duration_s: Optional[float] = None


@dataclass
class NegativeClip:
    clip_id: str
    source_dataset: str
    source_file: str
    class_label: str
    policy: str
    start_s: float
    rms: float
    peak: float
    buffer: Optional[ClipBuffer] = None


def _wav_duration(path: Path) -> Optional[float]:
    try:
        with wave.open(str(path), "rb") as fh:
            return fh.getnframes() / fh.getframerate()
    except (OSError, wave.Error):
        return None


def _read_csv(path: Path, source: str) -> list[dict]:
    if not path.exists():
        raise MissingLabelFile(f"{source}: label file {path} not found")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _load_dcase(spec: NegativeSourceSpec) -> list[NegativeCandidate]:
    csvs = sorted(spec.root_path.glob("*.csv"))
    if not csvs:
        raise MissingLabelFile(f"{spec.name}: no metadata CSV under {spec.root_path}")
    rows = _read_csv(csvs[0], spec.name)
    wav_dir = spec.root_path / "wav"
    out = []
    for row in rows:
        if str(row.get("hasbird", "")).strip() != "0":
            continue
        path = wav_dir / f"{row['itemid']}.wav"
        out.append(NegativeCandidate(spec.name, path, "nobird", _wav_duration(path)))
    return out


def _load_esc50(spec: NegativeSourceSpec) -> list[NegativeCandidate]:
    rows = _read_csv(spec.root_path / "meta" / "esc50.csv", spec.name)
    excluded = set(spec.excluded_classes)
    out = []
    for row in rows:
        category = row["category"].strip()
        if category in excluded:
            continue
        path = spec.root_path / "audio" / row["filename"]
        out.append(NegativeCandidate(spec.name, path, category, _wav_duration(path)))
    return out


def _load_fsc22(spec: NegativeSourceSpec) -> list[NegativeCandidate]:
    rows = _read_csv(spec.root_path / "metadata.csv", spec.name)
    excluded = set(spec.excluded_classes)
    out = []
    for row in rows:
        label = row["Class Name"].strip()
        if label in excluded:
            continue
        path = spec.root_path / "audio" / row["Dataset File Name"]
        out.append(NegativeCandidate(spec.name, path, label, _wav_duration(path)))
    return out


def _load_datasec(spec: NegativeSourceSpec) -> list[NegativeCandidate]:
    rows = _read_csv(spec.root_path / "metadata.csv", spec.name)
    excluded = set(spec.excluded_classes)
    out = []
    for row in rows:
        label = row["category"].strip()
        if label in excluded:
            continue
        path = spec.root_path / "audio" / row["filename"]
        out.append(NegativeCandidate(spec.name, path, label, _wav_duration(path)))
    return out


_ADAPTERS = {
    "birdvox": _load_dcase,
    "freefield1010": _load_dcase,
    "warblr": _load_dcase,
    "esc50": _load_esc50,
    "fsc22": _load_fsc22,
    "datasec": _load_datasec,
}


def load_source(spec: NegativeSourceSpec) -> list[NegativeCandidate]:
    """Yield non-bird candidates from the dataset layout under spec.root_path."""
    adapter = _ADAPTERS.get(spec.name)
    if adapter is None:
        raise UnknownLayout(f"no adapter for source '{spec.name}'")
    candidates = adapter(spec)
    candidates.sort(key=lambda c: str(c.path))
    return candidates


def segment_negative(clip: ClipBuffer, policy: str) -> tuple[ClipBuffer, float]:
    """Cut or pad a source clip to exactly 3 s; returns (clip, start_s).

    Inputs shorter than 3 s are center zero-padded under every policy.
    center_crop takes the central window; highest_rms_window scans at 100 ms
    steps and takes the most energetic one.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown segmentation policy '{policy}'")
    n = clip.duration_samples
    if n < CLIP_SAMPLES:
        return zero_pad_to(clip, CLIP_SAMPLES), 0.0
    if n == CLIP_SAMPLES:
        return clip, 0.0
    if policy == "highest_rms_window":
        cands = scan_windows(clip, skip_head=False)
        best = max(cands, key=lambda c: (c.rms, -c.start_s))
        start = int(round(best.start_s * clip.sample_rate))
        return ClipBuffer(clip.samples[start:start + CLIP_SAMPLES].copy(),
                          clip.sample_rate), best.start_s
    start = (n - CLIP_SAMPLES) // 2
    return (ClipBuffer(clip.samples[start:start + CLIP_SAMPLES].copy(), clip.sample_rate),
            round(start / clip.sample_rate, 6))


def quality_filter(clip: ClipBuffer, gate: QualityGate) -> tuple[bool, FeatureSummary]:
    """Threshold check against the gate; returns (passed, features)."""
    summary = feature_summary(clip)
    passed = (summary.rms >= gate.min_rms
              and summary.peak <= gate.max_peak
              and summary.dynamic_range >= gate.min_dynamic_range)
    return passed, summary


def _category_order(categories: list[str], priority: list[str]) -> list[str]:
    listed = [c for c in priority if c in categories]
    rest = sorted(c for c in categories if c not in priority)
    return listed + rest


def allocate_and_diversify(candidates: dict[str, list[NegativeClip]],
                           specs: list[NegativeSourceSpec],
                           seed: int = 0) -> list[NegativeClip]:
    """Draw each source's quota with category priorities and per-category caps.

    candidates maps source name to quality-filtered clips. Within an
    oversized category a seeded random subset is drawn without replacement.
    Raises InsufficientSupply when a source cannot meet its quota under the
    caps.
    """
    manifest: list[NegativeClip] = []
    for spec in specs:
        clips = candidates.get(spec.name, [])
        excluded = set(spec.excluded_classes)
        offending = [c for c in clips if c.class_label in excluded]
        if offending:
            raise ValueError(
                f"{spec.name}: {len(offending)} candidates carry excluded classes")
        if spec.quota == 0:
            continue
        by_category: dict[str, list[NegativeClip]] = {}
        for clip in clips:
            by_category.setdefault(clip.class_label, []).append(clip)
        order = _category_order(sorted(by_category), spec.category_priority)
        cap = spec.per_category_cap or math.ceil(spec.quota / max(len(order), 1))

        taken: list[NegativeClip] = []
        remaining = spec.quota
        for category in order:
            if remaining == 0:
                break
            members = sorted(by_category[category], key=lambda c: c.clip_id)
            take = min(cap, len(members), remaining)
            if take < len(members):
                rng = np.random.default_rng(
                    [seed, zlib.crc32(spec.name.encode()), zlib.crc32(category.encode())])
                idx = np.sort(rng.choice(len(members), size=take, replace=False))
                members = [members[i] for i in idx]
            else:
                members = members[:take]
            taken.extend(members)
            remaining -= take
        if remaining:
            raise InsufficientSupply(
                f"{spec.name}: quota {spec.quota} unreachable "
                f"({spec.quota - remaining} available under caps)")
        manifest.extend(sorted(taken, key=lambda c: c.clip_id))
    return manifest


def write_negative_manifest(path, clips: list[NegativeClip]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "source_dataset", "source_file", "class_label",
                         "policy", "start_s", "rms", "peak"])
        for c in clips:
            writer.writerow([c.clip_id, c.source_dataset, c.source_file, c.class_label,
                             c.policy, f"{c.start_s:.1f}", f"{c.rms:.6g}", f"{c.peak:.6g}"])
