"""Fixed-length clip extraction by sliding-window RMS ranking.

Recordings are scanned with a 3 s window at 100 ms steps; windows are ranked
by RMS and selected greedily under a 1.5 s minimum start-to-start separation.
Recordings longer than 12 s skip start positions in the first 3 s (voice
intros and handling noise live there).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .audio_io import CLIP_SAMPLES, ClipBuffer
from .errors import OutOfRange, TooShort
from .features import repair_clipping

WINDOW_S = 3.0
STEP_S = 0.1
MIN_SEPARATION_S = 1.5
MIN_WINDOW_RMS = 0.001
SKIP_HEAD_THRESHOLD_S = 12.0
SKIP_HEAD_S = 3.0


@dataclass(frozen=True)
class SegmentCandidate:
    start_s: float  # multiple of the scan step
    rms: float
    source_catalog_id: int = 0


def scan_windows(rec: ClipBuffer, catalog_id: int = 0,
                 window_s: float = WINDOW_S, step_s: float = STEP_S,
                 skip_head: bool = True) -> list[SegmentCandidate]:
    """One candidate per step-aligned window position, with its window RMS.

    With skip_head (the positive-branch behavior), recordings longer than
    12 s get no start positions in the first 3 s.
    """
    sr = rec.sample_rate
    window = int(round(window_s * sr))
    step = int(round(step_s * sr))
    n = rec.duration_samples
    if n < window:
        raise TooShort(f"recording is {n / sr:.2f} s, window is {window_s} s")

    first = 0
    if skip_head and n > SKIP_HEAD_THRESHOLD_S * sr:
        first = int(round(SKIP_HEAD_S * sr / step))

    # cumulative sum of squares gives every window RMS in one pass
    css = np.concatenate([[0.0], np.cumsum(np.square(rec.samples))])
    starts = np.arange(first * step, n - window + 1, step)
    energies = css[starts + window] - css[starts]
    rms_values = np.sqrt(np.maximum(energies, 0.0) / window)
    return [
        SegmentCandidate(start_s=round(int(s) / sr, 6), rms=float(r), source_catalog_id=catalog_id)
        for s, r in zip(starts, rms_values)
    ]


def select_clips(cands, max_clips: int | None = None,
                 min_separation_s: float = MIN_SEPARATION_S,
                 min_rms: float = MIN_WINDOW_RMS) -> list[SegmentCandidate]:
    """Greedy pick in descending RMS (ties: earliest start) under separation.

    Candidates below min_rms are never selected. Selection stops at
    max_clips (None = keep everything eligible, full-retention mode).
    """
    eligible = [c for c in cands if c.rms >= min_rms]
    eligible.sort(key=lambda c: (-c.rms, c.start_s))
    selected: list[SegmentCandidate] = []
    for cand in eligible:
        if max_clips is not None and len(selected) >= max_clips:
            break
        if all(abs(cand.start_s - s.start_s) >= min_separation_s for s in selected):
            selected.append(cand)
    selected.sort(key=lambda c: c.start_s)
    return selected


def extract(rec: ClipBuffer, cand: SegmentCandidate,
            clip_samples: int = CLIP_SAMPLES) -> ClipBuffer:
    """Copy the candidate window; repair clipping when the peak is at the rail."""
    start = int(round(cand.start_s * rec.sample_rate))
    if start < 0 or start + clip_samples > rec.duration_samples:
        raise OutOfRange(
            f"window [{cand.start_s}, {cand.start_s + clip_samples / rec.sample_rate}) s "
            f"outside recording of {rec.duration_s:.2f} s")
    clip = ClipBuffer(rec.samples[start:start + clip_samples].copy(), rec.sample_rate)
    return repair_clipping(clip)


def clip_filename(catalog_id: int, start_s: float) -> str:
    return f"XC{catalog_id}_{int(round(start_s * 1000))}.wav"


def write_extraction_log(path, rows) -> None:
    """rows: iterables of (catalog_id, start_s, rms, clipped_flag, clip_path)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["catalog_id", "start_s", "rms", "clipped_flag", "clip_path"])
        for row in rows:
            writer.writerow(row)
