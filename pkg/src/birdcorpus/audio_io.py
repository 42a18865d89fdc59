"""Decode, resample, pad, and encode audio; home of the canonical clip type.

Every ingest path lands on the same representation: mono float64 samples at
16 kHz. Decoding is deliberately minimal -- channel averaging and polyphase
resampling only, no normalization or conditioning.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from . import _flac, _mp3
from .errors import AlreadyLonger, IOFailure, UndecodableFile, ZeroLengthAudio

TARGET_SR = 16000
CLIP_SECONDS = 3.0
CLIP_SAMPLES = int(TARGET_SR * CLIP_SECONDS)  # 48000

QUALITY_RATINGS = ("A", "B", "C", "D", "E", "unrated")


@dataclass
class ClipBuffer:
    """Fixed-point-free mono audio buffer; the unit all DSP operates on."""

    samples: np.ndarray
    sample_rate: int = TARGET_SR

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("ClipBuffer holds mono audio (1-d samples)")

    @property
    def duration_samples(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self.samples) else 0.0


@dataclass
class RecordingMeta:
    """Provenance of one source recording."""

    catalog_id: int
    species: str
    quality_rating: str = "unrated"
    latitude: Optional[float] = None
    longitude: Optional[float] = None
    country: str = ""
    license: str = ""
    source_url: str = ""
    duration_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.catalog_id <= 0:
            raise ValueError(f"catalog_id must be positive, got {self.catalog_id}")
        if self.quality_rating not in QUALITY_RATINGS:
            self.quality_rating = "unrated"


def _sniff_format(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head[:4] == b"RIFF":
        return "wav"
    if head[:4] == b"fLaC":
        return "flac"
    if head[:3] == b"ID3" or (len(head) >= 2 and head[0] == 0xFF and head[1] & 0xE0 == 0xE0):
        return "mp3"
    # fall back to the extension for headerless or tagged files
    return path.suffix.lower().lstrip(".")


def _decode_raw(path: Path) -> tuple[np.ndarray, int]:
    kind = _sniff_format(path)
    if kind == "wav":
        try:
            rate, data = wavfile.read(str(path))
        except Exception as exc:
            raise UndecodableFile(f"{path}: {exc}") from exc
        if data.dtype == np.int16:
            samples = data.astype(np.float64) / 32768.0
        elif data.dtype == np.int32:
            samples = data.astype(np.float64) / 2147483648.0
        elif data.dtype == np.uint8:
            samples = (data.astype(np.float64) - 128.0) / 128.0
        else:
            samples = data.astype(np.float64)
        return samples, int(rate)
    if kind == "flac":
        pcm, rate = _flac.read_flac(path)
        return pcm.astype(np.float64) / 32768.0, rate
    if kind == "mp3":
        return _mp3.decode_mp3(path)
    raise UndecodableFile(f"{path}: unrecognized container ({kind or 'no extension'})")


def decode_and_resample(path, target_sr: int = TARGET_SR) -> ClipBuffer:
    """Decode a WAV/FLAC/MP3 file to a mono buffer at target_sr.

    Multichannel input is averaged to mono before resampling. Resampling is
    polyphase (anti-aliased); audio already at target_sr passes through
    untouched. No amplitude normalization is applied.
    """
    path = Path(path)
    if not path.exists():
        raise UndecodableFile(f"{path}: no such file")
    samples, rate = _decode_raw(path)
    if samples.size == 0:
        raise ZeroLengthAudio(f"{path}: decoded to zero samples")
    if samples.ndim > 1:
        samples = samples.mean(axis=1)
    if rate != target_sr:
        g = math.gcd(target_sr, rate)
        samples = resample_poly(samples, target_sr // g, rate // g)
    if not np.all(np.isfinite(samples)):
        raise UndecodableFile(f"{path}: non-finite samples after decode")
    return ClipBuffer(samples=samples, sample_rate=target_sr)


def zero_pad_to(buf: ClipBuffer, target_samples: int) -> ClipBuffer:
    """Center the buffer inside target_samples, zeros on both sides."""
    n = buf.duration_samples
    if n > target_samples:
        raise AlreadyLonger(f"buffer has {n} samples, target {target_samples}")
    if n == target_samples:
        return buf
    lead = (target_samples - n) // 2
    trail = target_samples - n - lead
    return ClipBuffer(
        samples=np.concatenate([np.zeros(lead), buf.samples, np.zeros(trail)]),
        sample_rate=buf.sample_rate,
    )


def _to_int16(samples: np.ndarray) -> np.ndarray:
    # scale by 32768 and clip so decode (/32768) round-trips within 1 LSB;
    # +1.0 saturates to 32767
    scaled = np.round(np.clip(samples, -1.0, 1.0) * 32768.0)
    return np.clip(scaled, -32768, 32767).astype(np.int16)


def write_wav(buf: ClipBuffer, path) -> None:
    """Write 16-bit little-endian PCM mono WAV with the canonical 44-byte header."""
    pcm = _to_int16(buf.samples)
    try:
        with wave.open(str(path), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(buf.sample_rate)
            fh.writeframes(pcm.astype("<i2").tobytes())
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def write_flac(buf: ClipBuffer, path) -> None:
    """Write the intermediate lossless store format (FLAC, mono, 16-bit)."""
    try:
        _flac.write_flac(path, _to_int16(buf.samples), buf.sample_rate)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def read_clip(path) -> ClipBuffer:
    """Decode without resampling checks: thin wrapper for pipeline-written files."""
    return decode_and_resample(path)
