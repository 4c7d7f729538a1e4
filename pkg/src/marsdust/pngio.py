"""Minimal PNG codec: 8/16-bit, grayscale and RGB, no alpha, no interlace.

Built on stdlib zlib rather than an imaging library because the pipeline
needs 16-bit RGB round trips and precise, typed decode errors.  The encoder
always emits filter type 0 scanlines; the decoder understands all five
standard filters so externally produced files load too.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import DecodeError

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def write_png(path, samples: np.ndarray, bit_depth: int) -> None:
    """Write integer samples shaped (height, width, channels) as a PNG file.

    ``samples`` must already be quantized: uint8 for bit_depth 8, uint16 for 16.
    Channels must be 1 (grayscale) or 3 (RGB).
    """
    height, width, channels = samples.shape
    color_type = 0 if channels == 1 else 2
    if bit_depth == 8:
        raw = np.ascontiguousarray(samples, dtype=np.uint8)
    else:
        raw = np.ascontiguousarray(samples, dtype=">u2")  # PNG samples are big-endian
    row_bytes = raw.reshape(height, -1).view(np.uint8).reshape(height, -1)
    scanlines = np.empty((height, 1 + row_bytes.shape[1]), dtype=np.uint8)
    scanlines[:, 0] = 0  # filter type None
    scanlines[:, 1:] = row_bytes
    ihdr = struct.pack(">IIBBBBB", width, height, bit_depth, color_type, 0, 0, 0)
    idat = zlib.compress(scanlines.tobytes(), 6)
    Path(path).write_bytes(
        _SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat) + _chunk(b"IEND", b"")
    )


def read_png(path) -> tuple[np.ndarray, int]:
    """Decode a PNG file to (samples, bit_depth).

    Samples are uint8 or uint16 shaped (height, width, channels).  Raises
    DecodeError naming the offending property for anything outside the
    supported subset (8/16-bit gray or RGB, non-interlaced, no alpha).
    """
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DecodeError(f"cannot read {path}: {exc}") from exc
    if not blob.startswith(_SIGNATURE):
        raise DecodeError(f"{path}: not a PNG file (bad signature)")

    pos = len(_SIGNATURE)
    ihdr = None
    idat = bytearray()
    while True:
        if pos + 8 > len(blob):
            raise DecodeError(f"{path}: truncated chunk header")
        (length,) = struct.unpack_from(">I", blob, pos)
        tag = blob[pos + 4 : pos + 8]
        body_end = pos + 8 + length
        if body_end + 4 > len(blob):
            raise DecodeError(f"{path}: truncated {tag.decode('latin1')} chunk")
        payload = blob[pos + 8 : body_end]
        (crc,) = struct.unpack_from(">I", blob, body_end)
        if crc != (zlib.crc32(tag + payload) & 0xFFFFFFFF):
            raise DecodeError(f"{path}: CRC mismatch in {tag.decode('latin1')} chunk")
        pos = body_end + 4
        if tag == b"IHDR":
            ihdr = payload
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break

    if ihdr is None or len(ihdr) != 13:
        raise DecodeError(f"{path}: missing or malformed IHDR")
    width, height, depth, color_type, compression, filt, interlace = struct.unpack(
        ">IIBBBBB", ihdr
    )
    if color_type == 3:
        raise DecodeError(f"{path}: palette (indexed) color not supported")
    if color_type in (4, 6):
        raise DecodeError(f"{path}: alpha channel not supported (color type {color_type})")
    if color_type not in (0, 2):
        raise DecodeError(f"{path}: unsupported color type {color_type}")
    if depth not in (8, 16):
        raise DecodeError(f"{path}: unsupported bit depth {depth}")
    if interlace != 0:
        raise DecodeError(f"{path}: interlaced PNG not supported")
    if compression != 0 or filt != 0:
        raise DecodeError(f"{path}: unsupported compression/filter method")
    if width < 1 or height < 1:
        raise DecodeError(f"{path}: invalid dimensions {width}x{height}")

    channels = 1 if color_type == 0 else 3
    bpp = channels * (depth // 8)
    row_bytes = width * bpp
    try:
        plain = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise DecodeError(f"{path}: corrupt compressed image data ({exc})") from exc
    if len(plain) != height * (1 + row_bytes):
        raise DecodeError(f"{path}: image data length mismatch")

    raw = np.frombuffer(plain, dtype=np.uint8).reshape(height, 1 + row_bytes)
    recon = _unfilter(raw, row_bytes, bpp, path)
    if depth == 8:
        arr = recon.reshape(height, width, channels)
    else:
        arr = recon.reshape(height, -1).view(">u2").astype(np.uint16)
        arr = arr.reshape(height, width, channels)
    return arr, depth


def _unfilter(raw: np.ndarray, row_bytes: int, bpp: int, path) -> np.ndarray:
    height = raw.shape[0]
    recon = np.zeros((height, row_bytes), dtype=np.uint8)
    prev = np.zeros(row_bytes, dtype=np.int64)
    for y in range(height):
        ftype = int(raw[y, 0])
        line = raw[y, 1:].astype(np.int64)
        if ftype == 0:
            rec = line
        elif ftype == 1:  # Sub: per-lane prefix sum mod 256
            rec = np.cumsum(line.reshape(-1, bpp), axis=0).reshape(-1) % 256
        elif ftype == 2:  # Up
            rec = (line + prev) % 256
        elif ftype == 3:  # Average
            rec = _unfilter_average(line, prev, bpp)
        elif ftype == 4:  # Paeth
            rec = _unfilter_paeth(line, prev, bpp)
        else:
            raise DecodeError(f"{path}: invalid scanline filter type {ftype}")
        recon[y] = rec
        prev = rec
    return recon


def _unfilter_average(line: np.ndarray, prev: np.ndarray, bpp: int) -> np.ndarray:
    width = line.size // bpp
    rec = line.reshape(width, bpp).copy()
    up = prev.reshape(width, bpp)
    left = np.zeros(bpp, dtype=np.int64)
    for x in range(width):
        rec[x] = (rec[x] + (left + up[x]) // 2) % 256
        left = rec[x]
    return rec.reshape(-1)


def _unfilter_paeth(line: np.ndarray, prev: np.ndarray, bpp: int) -> np.ndarray:
    width = line.size // bpp
    rec = line.reshape(width, bpp).copy()
    up = prev.reshape(width, bpp)
    left = np.zeros(bpp, dtype=np.int64)
    upleft = np.zeros(bpp, dtype=np.int64)
    for x in range(width):
        p = left + up[x] - upleft
        pa, pb, pc = np.abs(p - left), np.abs(p - up[x]), np.abs(p - upleft)
        pred = np.where((pa <= pb) & (pa <= pc), left, np.where(pb <= pc, up[x], upleft))
        rec[x] = (rec[x] + pred) % 256
        left = rec[x]
        upleft = up[x].astype(np.int64)
    return rec.reshape(-1)
