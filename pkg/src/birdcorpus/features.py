"""Acoustic descriptors consumed by dedup, balancing, and quality gating.

All framing is left-aligned with no padding: frame i covers samples
[i*hop, i*hop + fft_size). A 3 s clip at 16 kHz with fft 512 / hop 128 yields
exactly 372 frames (locked by a golden test). Windows are periodic Hann.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .audio_io import ClipBuffer
from .errors import BufferTooShort, EmptyBuffer

# octave band edges for spectral contrast, Hz; the top band is clipped to
# Nyquist at 16 kHz
CONTRAST_BAND_EDGES = (200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0, 12800.0)
CONTRAST_FRACTION = 0.02

CLIP_PEAK_TRIGGER = 0.9999
CLIP_TARGET_PEAK = 0.95

_EPS = 1e-10


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # [n_mels, n_frames], power (magnitude squared)
    n_mels: int
    fft_size: int
    hop: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]


@dataclass
class FeatureSummary:
    rms: float
    peak: float
    dynamic_range: float
    mean_centroid: float
    mean_contrast: float


def _frame(samples: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    if len(samples) < fft_size:
        raise BufferTooShort(
            f"need at least {fft_size} samples for one frame, got {len(samples)}")
    return sliding_window_view(samples, fft_size)[::hop]


def stft_magnitude(buf: ClipBuffer, fft_size: int = 512, hop: int = 128) -> np.ndarray:
    """Magnitude STFT, shape [fft_size//2 + 1, n_frames]."""
    frames = _frame(buf.samples, fft_size, hop)
    window = get_window("hann", fft_size, fftbins=True)
    return np.abs(np.fft.rfft(frames * window, axis=1)).T


def _hz_to_mel(freq):
    # Slaney scale: linear below 1 kHz, logarithmic above
    freq = np.asarray(freq, dtype=np.float64)
    mel = freq / (200.0 / 3.0)
    log_step = np.log(6.4) / 27.0
    above = freq >= 1000.0
    mel = np.where(above, 15.0 + np.log(np.maximum(freq, 1e-9) / 1000.0) / log_step, mel)
    return mel


def _mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    freq = mel * (200.0 / 3.0)
    log_step = np.log(6.4) / 27.0
    above = mel >= 15.0
    return np.where(above, 1000.0 * np.exp(log_step * (mel - 15.0)), freq)


def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters spanning 0..sample_rate/2, area-normalized."""
    n_bins = fft_size // 2 + 1
    fft_freqs = np.arange(n_bins) * sample_rate / fft_size
    mel_points = np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_points = _mel_to_hz(mel_points)
    bank = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (fft_freqs - left) / max(center - left, 1e-12)
        falling = (right - fft_freqs) / max(right - center, 1e-12)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling))
        bank[m] *= 2.0 / (right - left)
    return bank


def mel_spectrogram(buf: ClipBuffer, n_mels: int = 128, fft_size: int = 512,
                    hop: int = 128) -> MelSpectrogram:
    """Power STFT projected through a mel filterbank."""
    if fft_size & (fft_size - 1):
        raise ValueError(f"fft_size must be a power of two, got {fft_size}")
    if hop > fft_size:
        raise ValueError("hop must not exceed fft_size")
    mag = stft_magnitude(buf, fft_size, hop)
    bank = mel_filterbank(n_mels, fft_size, buf.sample_rate)
    return MelSpectrogram(
        frames=bank @ (mag ** 2),
        n_mels=n_mels,
        fft_size=fft_size,
        hop=hop,
        sample_rate=buf.sample_rate,
    )


def rms(buf: ClipBuffer) -> float:
    if buf.duration_samples == 0:
        raise EmptyBuffer("rms of empty buffer")
    return float(np.sqrt(np.mean(np.square(buf.samples))))


def window_rms(samples: np.ndarray, window: int) -> np.ndarray:
    """RMS over consecutive non-overlapping windows (remainder dropped)."""
    n = len(samples) // window
    if n == 0:
        return np.array([np.sqrt(np.mean(np.square(samples)))]) if len(samples) else np.array([])
    trimmed = samples[: n * window].reshape(n, window)
    return np.sqrt(np.mean(np.square(trimmed), axis=1))


def spectral_centroid_mean(buf: ClipBuffer, fft_size: int = 512, hop: int = 128) -> float:
    """Magnitude-weighted mean frequency per frame, averaged over non-silent frames."""
    if buf.duration_samples == 0:
        raise EmptyBuffer("centroid of empty buffer")
    mag = stft_magnitude(buf, fft_size, hop)
    freqs = np.arange(mag.shape[0]) * buf.sample_rate / fft_size
    totals = mag.sum(axis=0)
    live = totals > 0.0
    if not live.any():
        return 0.0
    centroids = (freqs[:, None] * mag[:, live]).sum(axis=0) / totals[live]
    return float(centroids.mean())


def _contrast_band_bins(fft_size: int, sample_rate: int) -> list[np.ndarray]:
    n_bins = fft_size // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / fft_size
    nyquist = sample_rate / 2.0
    bands = []
    for lo, hi in zip(CONTRAST_BAND_EDGES[:-1], CONTRAST_BAND_EDGES[1:]):
        hi = min(hi, nyquist)
        if hi <= lo:
            break
        last = hi >= nyquist
        mask = (freqs >= lo) & ((freqs <= hi) if last else (freqs < hi))
        idx = np.nonzero(mask)[0]
        if len(idx):
            bands.append(idx)
    return bands


def spectral_contrast_mean(buf: ClipBuffer, fft_size: int = 512, hop: int = 128) -> float:
    """Octave-band peak-minus-valley level difference in dB.

    Per frame and band: peak is the mean of the top 2% of bin magnitudes
    (at least one bin), valley the mean of the bottom 2%; the level
    difference is 10*log10(peak/valley). Averaged over bands, then over
    non-silent frames. Silence scores 0 dB.
    """
    if buf.duration_samples == 0:
        raise EmptyBuffer("contrast of empty buffer")
    mag = stft_magnitude(buf, fft_size, hop)
    bands = _contrast_band_bins(fft_size, buf.sample_rate)
    totals = mag.sum(axis=0)
    live = totals > 0.0
    if not live.any():
        return 0.0
    mag = mag[:, live]
    per_band = np.zeros((len(bands), mag.shape[1]))
    for b, idx in enumerate(bands):
        band = np.sort(mag[idx, :], axis=0)
        k = max(1, int(round(CONTRAST_FRACTION * len(idx))))
        valley = band[:k].mean(axis=0)
        peak = band[-k:].mean(axis=0)
        per_band[b] = 10.0 * np.log10((peak + _EPS) / (valley + _EPS))
    return float(per_band.mean(axis=0).mean())


def repair_clipping(buf: ClipBuffer) -> ClipBuffer:
    """Rescale and soft-limit clipped audio; identity when peak < 0.9999.

    Triggered buffers are scaled so the peak sits at 0.95, then shaped with
    a tanh limiter. The mapping is monotone and the output peak stays
    below 0.95.
    """
    peak = buf.peak()
    if peak < CLIP_PEAK_TRIGGER:
        return buf
    scaled = buf.samples * (CLIP_TARGET_PEAK / peak)
    limited = CLIP_TARGET_PEAK * np.tanh(scaled / CLIP_TARGET_PEAK)
    return ClipBuffer(samples=limited, sample_rate=buf.sample_rate)


def feature_summary(buf: ClipBuffer, subwindow_s: float = 0.1) -> FeatureSummary:
    """RMS/peak/dynamic-range plus the two salience features, in one pass.

    dynamic_range is peak minus the lowest RMS over 100 ms sub-windows --
    a project definition used by the negative-branch quality gate.
    """
    if buf.duration_samples == 0:
        raise EmptyBuffer("feature summary of empty buffer")
    peak = buf.peak()
    floors = window_rms(buf.samples, max(1, int(round(subwindow_s * buf.sample_rate))))
    return FeatureSummary(
        rms=rms(buf),
        peak=peak,
        dynamic_range=float(peak - floors.min()),
        mean_centroid=spectral_centroid_mean(buf),
        mean_contrast=spectral_contrast_mean(buf),
    )
