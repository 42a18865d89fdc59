"""Statistical QA: Cochran-sized audit plans, spectrogram grids, verdicts.

Sample sizes follow the proportion-estimation formula with finite-population
correction. The FPC division is applied to the unrounded base size and both
results are then ceiled; this is the variant that guarantees the target
margin while matching the published 656/639 pair for (p=0.04, e=0.015,
z=1.96, N=25000).
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw

from .audio_io import ClipBuffer
from .errors import (DuplicateVerdict, IncompleteRound, InvalidProportion,
                     MissingClip, UnknownClip)
from .features import mel_spectrogram

OUTCOMES = ("correct", "wrong_onset", "noise_dominated", "no_bird")

GRID_ROWS = 5
GRID_COLS = 5
GRID_WIDTH = 3840
GRID_HEIGHT = 2160
GRID_N_MELS = 80
GRID_FFT = 512
GRID_HOP = 128
_DB_RANGE = 80.0

# dark-to-bright perceptual ramp for spectrogram cells
_RAMP_ANCHORS = [
    (0, 0, 4), (40, 11, 84), (101, 21, 110), (159, 42, 99),
    (212, 72, 66), (245, 125, 21), (250, 193, 39), (252, 255, 164),
]


def _colormap() -> np.ndarray:
    anchors = np.array(_RAMP_ANCHORS, dtype=np.float64)
    positions = np.linspace(0, 1, len(anchors))
    xs = np.linspace(0, 1, 256)
    lut = np.stack([np.interp(xs, positions, anchors[:, c]) for c in range(3)], axis=1)
    return lut.astype(np.uint8)


_LUT = _colormap()


@dataclass
class AuditPlan:
    p_hat: float
    margin: float
    confidence_z: float
    population: int
    n0: int
    n_star: int
    seed: int
    sampled_clip_ids: list[str] = field(default_factory=list)
    round_id: int = 1

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AuditVerdict:
    clip_id: str
    outcome: str
    corrected_start_s: Optional[float] = None
    auditor: str = ""
    timestamp: str = ""
    round_id: int = 1

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome '{self.outcome}'")
        if (self.corrected_start_s is not None) != (self.outcome == "wrong_onset"):
            raise ValueError("corrected_start_s is required iff outcome is wrong_onset")
        if not self.timestamp:
            self.timestamp = datetime.now(timezone.utc).isoformat()


def plan_audit(p_hat: float, margin: float, z: float, population: int,
               seed: int = 0, clip_ids: Optional[list[str]] = None,
               round_id: int = 1) -> AuditPlan:
    """Cochran sample size with FPC, plus a seeded without-replacement draw."""
    if not 0.0 < p_hat < 1.0:
        raise InvalidProportion(f"p_hat must be in (0, 1), got {p_hat}")
    if margin <= 0.0:
        raise InvalidProportion(f"margin must be positive, got {margin}")
    if population < 1:
        raise InvalidProportion(f"population must be >= 1, got {population}")
    n0_raw = (z ** 2) * p_hat * (1.0 - p_hat) / (margin ** 2)
    n0 = math.ceil(n0_raw)
    n_star = math.ceil(n0_raw / (1.0 + n0_raw / population))

    sampled: list[str] = []
    if clip_ids:
        ordered = sorted(clip_ids)
        take = min(n_star, len(ordered))
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(ordered), size=take, replace=False)
        sampled = [ordered[i] for i in np.sort(idx)]
    return AuditPlan(p_hat=p_hat, margin=margin, confidence_z=z, population=population,
                     n0=n0, n_star=n_star, seed=seed, sampled_clip_ids=sampled,
                     round_id=round_id)


def spectrogram_pixels(buf: ClipBuffer, width: int, height: int,
                       n_mels: int = GRID_N_MELS) -> np.ndarray:
    """Render one clip as RGB pixels: 80-mel log-power, 0..8 kHz, low freq at bottom."""
    spec = mel_spectrogram(buf, n_mels=n_mels, fft_size=GRID_FFT, hop=GRID_HOP)
    db = 10.0 * np.log10(spec.frames + 1e-10)
    vmax = db.max()
    scaled = np.clip((db - (vmax - _DB_RANGE)) / _DB_RANGE, 0.0, 1.0)
    levels = (scaled * 255).astype(np.uint8)[::-1, :]  # flip: low frequencies at bottom
    rows = np.linspace(0, levels.shape[0] - 1, height).astype(int)
    cols = np.linspace(0, levels.shape[1] - 1, width).astype(int)
    return _LUT[levels[np.ix_(rows, cols)]]


def render_grid(clip_paths: list, out_path=None, page: int = 0,
                labels: Optional[list[str]] = None) -> Image.Image:
    """Paint up to 25 clips into a 5x5 grid at 4K; trailing cells stay blank."""
    if not clip_paths:
        raise MissingClip("no clips to render")
    if len(clip_paths) > GRID_ROWS * GRID_COLS:
        raise ValueError(f"grid holds {GRID_ROWS * GRID_COLS} clips, got {len(clip_paths)}")
    missing = [str(p) for p in clip_paths if not Path(p).exists()]
    if missing:
        raise MissingClip(f"missing clip files: {', '.join(missing[:5])}")

    from .audio_io import decode_and_resample

    canvas = np.zeros((GRID_HEIGHT, GRID_WIDTH, 3), dtype=np.uint8)
    cell_w = GRID_WIDTH // GRID_COLS
    cell_h = GRID_HEIGHT // GRID_ROWS
    label_h = 28
    for i, path in enumerate(clip_paths):
        row, col = divmod(i, GRID_COLS)
        buf = decode_and_resample(path)
        pixels = spectrogram_pixels(buf, cell_w - 4, cell_h - label_h - 4)
        y0 = row * cell_h + 2
        x0 = col * cell_w + 2
        canvas[y0:y0 + pixels.shape[0], x0:x0 + pixels.shape[1]] = pixels

    image = Image.fromarray(canvas)
    draw = ImageDraw.Draw(image)
    for i, path in enumerate(clip_paths):
        row, col = divmod(i, GRID_COLS)
        text = labels[i] if labels else Path(path).stem
        draw.text((col * cell_w + 6, (row + 1) * cell_h - label_h + 4),
                  text, fill=(230, 230, 230))
    draw.text((GRID_WIDTH - 130, GRID_HEIGHT - label_h + 4), f"page {page}",
              fill=(160, 160, 160))
    if out_path is not None:
        image.save(out_path, format="PNG")
    return image


class VerdictLog:
    """Append-only durable CSV of audit verdicts; replay rebuilds state."""

    FIELDS = ["clip_id", "outcome", "corrected_start_s", "auditor", "timestamp", "round"]

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(self.FIELDS)

    def load(self) -> list[AuditVerdict]:
        verdicts = []
        with open(self.path, newline="") as fh:
            for row in csv.DictReader(fh):
                verdicts.append(AuditVerdict(
                    clip_id=row["clip_id"],
                    outcome=row["outcome"],
                    corrected_start_s=(float(row["corrected_start_s"])
                                       if row["corrected_start_s"] else None),
                    auditor=row["auditor"],
                    timestamp=row["timestamp"],
                    round_id=int(row["round"]),
                ))
        return verdicts

    def append(self, verdict: AuditVerdict) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([
                verdict.clip_id, verdict.outcome,
                "" if verdict.corrected_start_s is None else f"{verdict.corrected_start_s:.1f}",
                verdict.auditor, verdict.timestamp, verdict.round_id,
            ])
            fh.flush()
            os.fsync(fh.fileno())


def record_verdict(log: VerdictLog, plan: AuditPlan, verdict: AuditVerdict,
                   existing: Optional[list[AuditVerdict]] = None) -> AuditVerdict:
    """Validate a verdict against the plan and persist it."""
    if verdict.clip_id not in plan.sampled_clip_ids:
        raise UnknownClip(f"{verdict.clip_id} is not in audit round {plan.round_id}")
    existing = existing if existing is not None else log.load()
    for prior in existing:
        if prior.clip_id == verdict.clip_id and prior.round_id == verdict.round_id:
            raise DuplicateVerdict(
                f"{verdict.clip_id} already judged in round {verdict.round_id}")
    verdict.round_id = plan.round_id
    log.append(verdict)
    return verdict


def audit_summary(plan: AuditPlan, verdicts: list[AuditVerdict],
                  z: Optional[float] = None) -> dict:
    """Accuracy estimate with finite-population margin, per-outcome breakdown."""
    z = plan.confidence_z if z is None else z
    relevant = {v.clip_id: v for v in verdicts
                if v.round_id == plan.round_id and v.clip_id in set(plan.sampled_clip_ids)}
    n = len(relevant)
    planned = len(plan.sampled_clip_ids)
    if n < planned:
        raise IncompleteRound(f"{n} of {planned} verdicts recorded")

    by_outcome = {outcome: 0 for outcome in OUTCOMES}
    for v in relevant.values():
        by_outcome[v.outcome] += 1
    n_correct = by_outcome["correct"]
    accuracy = n_correct / n
    p_err = 1.0 - accuracy
    big_n = plan.population
    fpc = math.sqrt((big_n - n) / (big_n - 1)) if big_n > 1 else 0.0
    margin = z * math.sqrt(p_err * (1.0 - p_err) / n) * fpc
    return {
        "round": plan.round_id,
        "n": n,
        "population": big_n,
        "accuracy": accuracy,
        "error_rate": p_err,
        "margin": margin,
        "confidence_z": z,
        "by_outcome": by_outcome,
        "degenerate_zero_errors": p_err == 0.0,
    }
