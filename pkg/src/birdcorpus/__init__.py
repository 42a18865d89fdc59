"""birdcorpus: curation toolkit for balanced bird presence/absence audio datasets."""

__version__ = "0.1.0"

from .audio_io import ClipBuffer, RecordingMeta, decode_and_resample, write_wav, zero_pad_to
from .balance import BalanceReport, ScoredClip, balance_corpus, gini, salience
from .dedup import AcousticEmbedding, DuplicatePair, apply_removals, embed, find_duplicates
from .features import FeatureSummary, MelSpectrogram, feature_summary, mel_spectrogram, rms
from .segments import SegmentCandidate, extract, scan_windows, select_clips

__all__ = [
    "ClipBuffer", "RecordingMeta", "decode_and_resample", "write_wav", "zero_pad_to",
    "BalanceReport", "ScoredClip", "balance_corpus", "gini", "salience",
    "AcousticEmbedding", "DuplicatePair", "apply_removals", "embed", "find_duplicates",
    "FeatureSummary", "MelSpectrogram", "feature_summary", "mel_spectrogram", "rms",
    "SegmentCandidate", "extract", "scan_windows", "select_clips",
]
