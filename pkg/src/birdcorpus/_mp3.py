"""MP3 decode/encode through the system mpg123 and LAME shared libraries.

ctypes bindings kept to the opaque-handle parts of both APIs so no struct
layouts are assumed. Decode is what the ingest path needs; encode exists so
the test fixtures can produce real MP3 inputs.
"""

from __future__ import annotations

import ctypes
import ctypes.util
from pathlib import Path

import numpy as np

from .errors import UndecodableFile

_MPG123_OK = 0
_MPG123_DONE = -12


def _load(candidates):
    for name in candidates:
        try:
            return ctypes.CDLL(name)
        except OSError:
            continue
    found = ctypes.util.find_library(candidates[0].split(".")[0].replace("lib", ""))
    if found:
        try:
            return ctypes.CDLL(found)
        except OSError:
            pass
    return None


_mpg123 = _load(["libmpg123.so.0", "libmpg123.so", "libmpg123.dylib"])
_lame = _load(["libmp3lame.so.0", "libmp3lame.so", "libmp3lame.dylib"])

if _mpg123 is not None:
    _mpg123.mpg123_init.restype = ctypes.c_int
    _mpg123.mpg123_new.restype = ctypes.c_void_p
    _mpg123.mpg123_new.argtypes = [ctypes.c_char_p, ctypes.POINTER(ctypes.c_int)]
    _mpg123.mpg123_open.argtypes = [ctypes.c_void_p, ctypes.c_char_p]
    _mpg123.mpg123_open.restype = ctypes.c_int
    _mpg123.mpg123_getformat.argtypes = [
        ctypes.c_void_p,
        ctypes.POINTER(ctypes.c_long),
        ctypes.POINTER(ctypes.c_int),
        ctypes.POINTER(ctypes.c_int),
    ]
    _mpg123.mpg123_getformat.restype = ctypes.c_int
    _mpg123.mpg123_read.argtypes = [
        ctypes.c_void_p,
        ctypes.c_void_p,
        ctypes.c_size_t,
        ctypes.POINTER(ctypes.c_size_t),
    ]
    _mpg123.mpg123_read.restype = ctypes.c_int
    _mpg123.mpg123_close.argtypes = [ctypes.c_void_p]
    _mpg123.mpg123_delete.argtypes = [ctypes.c_void_p]
    _mpg123.mpg123_init()

if _lame is not None:
    _lame.lame_init.restype = ctypes.c_void_p
    _lame.lame_init.argtypes = []
    for _fn in (
        "lame_set_in_samplerate",
        "lame_set_num_channels",
        "lame_set_brate",
        "lame_set_mode",
        "lame_set_quality",
    ):
        getattr(_lame, _fn).argtypes = [ctypes.c_void_p, ctypes.c_int]
        getattr(_lame, _fn).restype = ctypes.c_int
    _lame.lame_init_params.argtypes = [ctypes.c_void_p]
    _lame.lame_init_params.restype = ctypes.c_int
    _lame.lame_encode_buffer.argtypes = [
        ctypes.c_void_p,
        ctypes.c_void_p,
        ctypes.c_void_p,
        ctypes.c_int,
        ctypes.c_char_p,
        ctypes.c_int,
    ]
    _lame.lame_encode_buffer.restype = ctypes.c_int
    _lame.lame_encode_flush.argtypes = [ctypes.c_void_p, ctypes.c_char_p, ctypes.c_int]
    _lame.lame_encode_flush.restype = ctypes.c_int
    _lame.lame_close.argtypes = [ctypes.c_void_p]


def mp3_decode_available() -> bool:
    return _mpg123 is not None


def mp3_encode_available() -> bool:
    return _lame is not None


def decode_mp3(path) -> tuple[np.ndarray, int]:
    """Decode an MP3 file to float samples in [-1, 1].

    Returns (samples, sample_rate); samples shape is (n,) for mono or
    (n, channels) otherwise.
    """
    if _mpg123 is None:
        raise UndecodableFile("mpg123 shared library not available for MP3 decode")
    handle = _mpg123.mpg123_new(None, ctypes.byref(ctypes.c_int()))
    if not handle:
        raise UndecodableFile("mpg123_new failed")
    try:
        if _mpg123.mpg123_open(handle, str(path).encode()) != _MPG123_OK:
            raise UndecodableFile(f"mpg123 could not open {path}")
        rate = ctypes.c_long()
        channels = ctypes.c_int()
        encoding = ctypes.c_int()
        if _mpg123.mpg123_getformat(
            handle, ctypes.byref(rate), ctypes.byref(channels), ctypes.byref(encoding)
        ) != _MPG123_OK:
            raise UndecodableFile(f"mpg123 could not read format of {path}")

        # Default output format is signed 16-bit; read it all and scale.
        chunks = []
        buf = ctypes.create_string_buffer(1 << 17)
        done = ctypes.c_size_t()
        while True:
            status = _mpg123.mpg123_read(handle, buf, len(buf), ctypes.byref(done))
            if done.value:
                chunks.append(buf.raw[: done.value])
            if status == _MPG123_DONE:
                break
            if status != _MPG123_OK:
                raise UndecodableFile(f"mpg123 read error {status} on {path}")
        raw = b"".join(chunks)
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
        if channels.value > 1:
            samples = samples.reshape(-1, channels.value)
        return samples, int(rate.value)
    finally:
        _mpg123.mpg123_close(handle)
        _mpg123.mpg123_delete(handle)


def encode_mp3(path, samples: np.ndarray, sample_rate: int, bitrate_kbps: int = 128) -> None:
    """Encode mono float samples to an MP3 file (test-fixture helper)."""
    if _lame is None:
        raise UndecodableFile("LAME shared library not available for MP3 encode")
    pcm = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm16 = np.round(pcm * 32767.0).astype("<i2")
    handle = _lame.lame_init()
    try:
        _lame.lame_set_in_samplerate(handle, int(sample_rate))
        _lame.lame_set_num_channels(handle, 1)
        _lame.lame_set_brate(handle, int(bitrate_kbps))
        _lame.lame_set_mode(handle, 3)  # mono
        _lame.lame_set_quality(handle, 2)
        if _lame.lame_init_params(handle) < 0:
            raise UndecodableFile("lame_init_params failed")
        out = ctypes.create_string_buffer(int(1.25 * len(pcm16)) + 7200)
        n = _lame.lame_encode_buffer(handle, pcm16.ctypes.data, None, len(pcm16), out, len(out))
        if n < 0:
            raise UndecodableFile(f"lame_encode_buffer failed ({n})")
        tail = ctypes.create_string_buffer(7200)
        n_tail = _lame.lame_encode_flush(handle, tail, len(tail))
        Path(path).write_bytes(out.raw[:n] + tail.raw[:n_tail])
    finally:
        _lame.lame_close(handle)
