"""Minimal FLAC reader/writer for the pipeline's intermediate lossless store.

The writer emits spec-valid FLAC (STREAMINFO with real MD5, correct CRC-8 and
CRC-16, verbatim subframes) restricted to mono 16-bit streams, which is the
only shape the pipeline stores. Verbatim subframes trade compression for a
dependency-free codec; any standard FLAC tool can read the output. The reader
accepts the same subset (plus constant subframes) and rejects anything a
general-purpose encoder would produce, with a clear error.
"""

from __future__ import annotations

import ctypes
import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import UndecodableFile, ZeroLengthAudio

BLOCK_SIZE = 4096

# ---------------------------------------------------------------------------
# CRCs: FLAC uses CRC-8 poly 0x07 and CRC-16 poly 0x8005, MSB-first, init 0.
# libavutil computes both at C speed (its 16-bit result arrives byte-swapped);
# the pure-Python tables below are the fallback and the import-time check.

_CRC8_TABLE = []
_CRC16_TABLE = []
for _b in range(256):
    _c8 = _b
    _c16 = _b << 8
    for _ in range(8):
        _c8 = ((_c8 << 1) ^ 0x07) & 0xFF if _c8 & 0x80 else (_c8 << 1) & 0xFF
        _c16 = ((_c16 << 1) ^ 0x8005) & 0xFFFF if _c16 & 0x8000 else (_c16 << 1) & 0xFFFF
    _CRC8_TABLE.append(_c8)
    _CRC16_TABLE.append(_c16)


def _crc8_py(data: bytes, crc: int = 0) -> int:
    for b in data:
        crc = _CRC8_TABLE[crc ^ b]
    return crc


def _crc16_py(data: bytes, crc: int = 0) -> int:
    for b in data:
        crc = _CRC16_TABLE[((crc >> 8) ^ b) & 0xFF] ^ ((crc << 8) & 0xFFFF)
    return crc


def _load_av_crc():
    for name in ("libavutil.so.56", "libavutil.so", "libavutil.57.dylib", "libavutil.dylib"):
        try:
            av = ctypes.CDLL(name)
            break
        except OSError:
            av = None
    if av is None:
        return None, None
    try:
        av.av_crc_get_table.restype = ctypes.c_void_p
        av.av_crc_get_table.argtypes = [ctypes.c_int]
        av.av_crc.restype = ctypes.c_uint32
        av.av_crc.argtypes = [ctypes.c_void_p, ctypes.c_uint32, ctypes.c_char_p, ctypes.c_size_t]
        t8 = av.av_crc_get_table(0)   # AV_CRC_8_ATM
        t16 = av.av_crc_get_table(1)  # AV_CRC_16_ANSI

        def crc8(data: bytes, crc: int = 0) -> int:
            return av.av_crc(t8, crc, data, len(data))

        def crc16(data: bytes, crc: int = 0) -> int:
            swapped = av.av_crc(t16, ((crc & 0xFF) << 8) | (crc >> 8), data, len(data))
            return ((swapped & 0xFF) << 8) | (swapped >> 8)

        if crc8(b"123456789") != 0xF4 or crc16(b"123456789") != 0xFEE8:
            return None, None
        return crc8, crc16
    except (OSError, AttributeError):
        return None, None


_crc8, _crc16 = _load_av_crc()
if _crc8 is None:
    _crc8, _crc16 = _crc8_py, _crc16_py

# ---------------------------------------------------------------------------

_SAMPLE_RATE_CODES = {
    88200: 0b0001, 176400: 0b0010, 192000: 0b0011, 8000: 0b0100,
    16000: 0b0101, 22050: 0b0110, 24000: 0b0111, 32000: 0b1000,
    44100: 0b1001, 48000: 0b1010, 96000: 0b1011,
}


def _utf8_number(value: int) -> bytes:
    if value < 0x80:
        return bytes([value])
    for extra, lead, bits in ((1, 0xC0, 11), (2, 0xE0, 16), (3, 0xF0, 21),
                              (4, 0xF8, 26), (5, 0xFC, 31)):
        if value < (1 << bits):
            out = [lead | (value >> (6 * extra))]
            for k in range(extra - 1, -1, -1):
                out.append(0x80 | ((value >> (6 * k)) & 0x3F))
            return bytes(out)
    raise ValueError(f"frame number too large: {value}")


def _read_utf8_number(data: bytes, pos: int) -> tuple[int, int]:
    first = data[pos]
    if first < 0x80:
        return first, pos + 1
    n_extra = 0
    mask = 0x40
    while first & mask:
        n_extra += 1
        mask >>= 1
    value = first & (mask - 1)
    for i in range(1, n_extra + 1):
        cont = data[pos + i]
        if cont & 0xC0 != 0x80:
            raise UndecodableFile("malformed coded frame number")
        value = (value << 6) | (cont & 0x3F)
    return value, pos + n_extra + 1


def write_flac(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono int16 samples as a FLAC file (verbatim subframes)."""
    pcm = np.asarray(samples)
    if pcm.dtype != np.int16:
        raise ValueError("write_flac expects int16 samples")
    if pcm.ndim != 1:
        raise ValueError("write_flac expects a mono signal")
    total = len(pcm)
    md5 = hashlib.md5(pcm.astype("<i2").tobytes()).digest()

    info = BLOCK_SIZE
    info = (info << 16) | BLOCK_SIZE
    info = (info << 24) | 0          # min frame size unknown
    info = (info << 24) | 0          # max frame size unknown
    info = (info << 20) | sample_rate
    info = (info << 3) | 0           # channels - 1
    info = (info << 5) | 15          # bits per sample - 1
    info = (info << 36) | total
    streaminfo = info.to_bytes(18, "big") + md5

    sr_code = _SAMPLE_RATE_CODES.get(sample_rate, 0b0000)
    parts = [b"fLaC", bytes([0x80, 0, 0, 34]), streaminfo]

    pcm_be = pcm.astype(">i2")
    for frame_index, start in enumerate(range(0, total, BLOCK_SIZE)):
        block = pcm_be[start:start + BLOCK_SIZE]
        n = len(block)
        # blocksize code 0b0111: explicit 16-bit (value-1) field after the
        # frame number; keeps one code path for full and final frames
        header = bytearray([0xFF, 0xF8, (0b0111 << 4) | sr_code, 0b0000_100_0])
        header += _utf8_number(frame_index)
        header += struct.pack(">H", n - 1)
        header.append(_crc8(bytes(header)))
        frame = bytes(header) + b"\x02" + block.tobytes()  # 0x02: verbatim subframe
        parts.append(frame + struct.pack(">H", _crc16(frame)))

    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise UndecodableFile(f"cannot write {path}: {exc}") from exc


def read_flac(path) -> tuple[np.ndarray, int]:
    """Read a pipeline-written FLAC file; returns (int16 samples, rate)."""
    data = Path(path).read_bytes()
    if data[:4] != b"fLaC":
        raise UndecodableFile(f"{path}: not a FLAC stream")
    pos = 4

    sample_rate = channels = bps = total = None
    while True:
        if pos + 4 > len(data):
            raise UndecodableFile(f"{path}: truncated metadata")
        last = data[pos] & 0x80
        block_type = data[pos] & 0x7F
        length = int.from_bytes(data[pos + 1:pos + 4], "big")
        body = data[pos + 4:pos + 4 + length]
        if block_type == 0:
            v = int.from_bytes(body[:18], "big")
            total = v & ((1 << 36) - 1)
            bps = ((v >> 36) & 0x1F) + 1
            channels = ((v >> 41) & 0x7) + 1
            sample_rate = (v >> 44) & ((1 << 20) - 1)
        pos += 4 + length
        if last:
            break
    if sample_rate is None:
        raise UndecodableFile(f"{path}: missing STREAMINFO")
    if channels != 1 or bps != 16:
        raise UndecodableFile(
            f"{path}: store reader supports mono 16-bit only "
            f"(got {channels} ch, {bps} bps)")
    if total == 0:
        raise ZeroLengthAudio(f"{path}: zero-length stream")

    out = np.empty(total, dtype=np.int16)
    filled = 0
    while filled < total:
        frame_start = pos
        if data[pos] != 0xFF or (data[pos + 1] & 0xFC) != 0xF8:
            raise UndecodableFile(f"{path}: lost frame sync at byte {pos}")
        bs_code = data[pos + 2] >> 4
        sr_code = data[pos + 2] & 0x0F
        chan_code = data[pos + 3] >> 4
        size_code = (data[pos + 3] >> 1) & 0x7
        if chan_code != 0 or size_code != 0b100:
            raise UndecodableFile(f"{path}: unsupported frame layout")
        pos += 4
        _, pos = _read_utf8_number(data, pos)
        if bs_code == 0b0110:
            block_size = data[pos] + 1
            pos += 1
        elif bs_code == 0b0111:
            block_size = struct.unpack(">H", data[pos:pos + 2])[0] + 1
            pos += 2
        elif bs_code == 0b0001:
            block_size = 192
        elif 0b0010 <= bs_code <= 0b0101:
            block_size = 576 << (bs_code - 2)
        elif bs_code >= 0b1000:
            block_size = 256 << (bs_code - 8)
        else:
            raise UndecodableFile(f"{path}: reserved blocksize code")
        if sr_code == 0b1100:
            pos += 1
        elif sr_code in (0b1101, 0b1110):
            pos += 2
        header_crc = data[pos]
        if _crc8(data[frame_start:pos]) != header_crc:
            raise UndecodableFile(f"{path}: frame header CRC mismatch")
        pos += 1

        subframe_type = (data[pos] >> 1) & 0x3F
        wasted = data[pos] & 1
        if wasted:
            raise UndecodableFile(f"{path}: wasted-bits frames unsupported")
        pos += 1
        if subframe_type == 0b000001:  # verbatim
            raw = data[pos:pos + 2 * block_size]
            block = np.frombuffer(raw, dtype=">i2").astype(np.int16)
            pos += 2 * block_size
        elif subframe_type == 0b000000:  # constant
            value = struct.unpack(">h", data[pos:pos + 2])[0]
            block = np.full(block_size, value, dtype=np.int16)
            pos += 2
        else:
            raise UndecodableFile(
                f"{path}: compressed FLAC subframes unsupported by the store "
                "reader (file not written by this pipeline?)")
        crc = struct.unpack(">H", data[pos:pos + 2])[0]
        if _crc16(data[frame_start:pos]) != crc:
            raise UndecodableFile(f"{path}: frame CRC mismatch")
        pos += 2

        take = min(block_size, total - filled)
        out[filled:filled + take] = block[:take]
        filled += take

    return out, sample_rate
