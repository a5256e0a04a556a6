"""Minimal RIFF/WAVE codec: integer PCM (8/16/24/32-bit) and IEEE float32/64."""
from __future__ import annotations

import struct

import numpy as np

from .dsp import Signal
from .errors import CorruptHeader, UnsupportedEncoding

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        yield cid, body
        pos += 8 + size + (size & 1)


def decode_wav(data: bytes) -> Signal:
    """Decode WAV bytes to a mono Signal scaled to [-1, 1].

    Multi-channel files keep channel 0. An empty data chunk yields an empty
    Signal; rejecting it is the caller's business.
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeader("not a RIFF/WAVE container")
    fmt = payload = None
    for cid, body in _chunks(data):
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            payload = body
            break
    if fmt is None or len(fmt) < 16:
        raise CorruptHeader("missing or short fmt chunk")
    if payload is None:
        raise CorruptHeader("missing data chunk")
    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise CorruptHeader("short WAVE_FORMAT_EXTENSIBLE header")
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels < 1 or rate <= 0 or bits == 0:
        raise CorruptHeader(f"invalid header: channels={channels} rate={rate} bits={bits}")
    width = bits // 8
    if block_align != channels * width:
        raise CorruptHeader(f"block align {block_align} inconsistent with {channels}x{bits} bit")

    nframes = len(payload) // block_align
    raw = payload[: nframes * block_align]
    if tag == WAVE_FORMAT_PCM:
        if bits == 8:
            x = (np.frombuffer(raw, np.uint8).astype(float) - 128.0) / 128.0
        elif bits == 16:
            x = np.frombuffer(raw, "<i2") / 32768.0
        elif bits == 24:
            b = np.frombuffer(raw, np.uint8).reshape(-1, 3).astype(np.int32)
            v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
            x = np.where(v >= 1 << 23, v - (1 << 24), v) / float(1 << 23)
        elif bits == 32:
            x = np.frombuffer(raw, "<i4") / float(1 << 31)
        else:
            raise UnsupportedEncoding(f"{bits}-bit integer PCM")
    elif tag == WAVE_FORMAT_IEEE_FLOAT:
        if bits == 32:
            x = np.frombuffer(raw, "<f4").astype(float)
        elif bits == 64:
            x = np.frombuffer(raw, "<f8").copy()
        else:
            raise UnsupportedEncoding(f"{bits}-bit float")
    else:
        raise UnsupportedEncoding(f"format tag 0x{tag:04x}")
    x = np.asarray(x, dtype=float).reshape(-1, channels)[:, 0]
    return Signal(np.ascontiguousarray(x), float(rate))


def encode_wav(samples, rate: float, encoding: str = "float32") -> bytes:
    """Encode mono samples; ``encoding`` is 'float32' or 'pcm16'."""
    x = np.asarray(samples, dtype=float)
    if encoding == "float32":
        tag, bits, payload = WAVE_FORMAT_IEEE_FLOAT, 32, x.astype("<f4").tobytes()
    elif encoding == "pcm16":
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        tag, bits, payload = WAVE_FORMAT_PCM, 16, q.tobytes()
    else:
        raise UnsupportedEncoding(encoding)
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, int(rate), int(rate) * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body
