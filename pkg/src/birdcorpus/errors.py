"""Exception types raised across the pipeline.

Everything derives from BirdcorpusError so callers can catch the whole
family at stage boundaries while tests assert the precise class.
"""


class BirdcorpusError(Exception):
    pass


# --- audio io ---

class UndecodableFile(BirdcorpusError):
    pass


class ZeroLengthAudio(BirdcorpusError):
    pass


class AlreadyLonger(BirdcorpusError):
    pass


class IOFailure(BirdcorpusError):
    pass


# --- dsp features ---

class EmptyBuffer(BirdcorpusError):
    pass


class BufferTooShort(BirdcorpusError):
    pass


# --- dedup ---

class TooFewFrames(BirdcorpusError):
    pass


class UnknownId(BirdcorpusError):
    pass


# --- segment extraction ---

class TooShort(BirdcorpusError):
    pass


class OutOfRange(BirdcorpusError):
    pass


# --- balancing ---

class QuotaExceedsSupply(BirdcorpusError):
    pass


class EmptyInput(BirdcorpusError):
    pass


class AllZero(BirdcorpusError):
    pass


# --- negative curation ---

class MissingLabelFile(BirdcorpusError):
    pass


class UnknownLayout(BirdcorpusError):
    pass


class InsufficientSupply(BirdcorpusError):
    pass


# --- catalog ingest ---

class NetworkFailure(BirdcorpusError):
    pass


class MalformedResponse(BirdcorpusError):
    pass


# --- pipeline ---

class MissingDependency(BirdcorpusError):
    pass


class ConfigInvalid(BirdcorpusError):
    pass


class EmptyWorkspace(BirdcorpusError):
    pass


# --- audit ---

class InvalidProportion(BirdcorpusError):
    pass


class MissingClip(BirdcorpusError):
    pass


class UnknownClip(BirdcorpusError):
    pass


class DuplicateVerdict(BirdcorpusError):
    pass


class IncompleteRound(BirdcorpusError):
    pass
