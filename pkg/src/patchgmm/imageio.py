"""Binary PGM/PPM image I/O and reference quality metrics.

Pixels are real-valued float64 everywhere inside the library; quantization to
8 bits happens only when a file is written. Only the binary netpbm variants
(P5 grayscale, P6 color) with maxval 255 are supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PEAK = 255.0

_WHITESPACE = b" \t\n\r\x0b\x0c"


class PnmParseError(ValueError):
    """Malformed PGM/PPM stream. `offset` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedPnmError(ValueError):
    """Well-formed netpbm file outside the supported subset (binary, maxval 255)."""


@dataclass
class Image:
    """Real-valued pixel grid: gray (h, w) or RGB (h, w, 3), nominal range [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        if data.ndim == 2:
            pass
        elif data.ndim == 3 and data.shape[2] == 3:
            pass
        else:
            raise ValueError(
                f"expected pixel array of shape (h, w) or (h, w, 3), got {data.shape}"
            )
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"empty image of shape {data.shape}")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    def copy(self) -> "Image":
        return Image(self.data.copy())


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int, int]:
    """Scan the next header token, skipping whitespace and '#' comments.

    Returns (token, token_start, position_after_token).
    """
    n = len(buf)
    while pos < n:
        b = buf[pos]
        if b in _WHITESPACE:
            pos += 1
        elif b == 0x23:  # '#': comment runs to end of line
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
        else:
            break
    if pos >= n:
        raise PnmParseError("unexpected end of file inside header", n)
    start = pos
    while pos < n and buf[pos] not in _WHITESPACE:
        pos += 1
    return buf[start:pos], start, pos


def _int_token(buf: bytes, pos: int, what: str) -> tuple[int, int]:
    token, start, end = _next_token(buf, pos)
    if not token.isdigit():
        raise PnmParseError(f"expected integer {what}, got {token!r}", start)
    return int(token), end


def read_image(path) -> Image:
    """Read a binary PGM (P5) or PPM (P6) file with maxval 255.

    Raises PnmParseError (with a byte offset) on malformed input and
    UnsupportedPnmError on other netpbm flavors or maxval != 255.
    """
    buf = Path(path).read_bytes()
    if len(buf) < 2:
        raise PnmParseError("file too short for a netpbm magic number", 0)
    magic = buf[:2]
    if magic in (b"P1", b"P2", b"P3", b"P4"):
        raise UnsupportedPnmError(
            f"unsupported netpbm flavor {magic.decode('ascii')}; only binary P5/P6 are handled"
        )
    if magic not in (b"P5", b"P6"):
        raise PnmParseError(f"bad magic number {magic!r}", 0)
    channels = 1 if magic == b"P5" else 3

    width, pos = _int_token(buf, 2, "width")
    height, pos = _int_token(buf, pos, "height")
    if width < 1 or height < 1:
        raise PnmParseError(f"degenerate image size {width}x{height}", 2)
    maxval_tok, maxval_start, pos = _next_token(buf, pos)
    if not maxval_tok.isdigit():
        raise PnmParseError(f"expected integer maxval, got {maxval_tok!r}", maxval_start)
    maxval = int(maxval_tok)
    if maxval != 255:
        raise UnsupportedPnmError(f"maxval {maxval} not supported; only 255")
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise PnmParseError("expected single whitespace byte after maxval", pos)
    pos += 1

    expected = width * height * channels
    payload = buf[pos : pos + expected]
    if len(payload) < expected:
        raise PnmParseError(
            f"truncated pixel payload: expected {expected} bytes, found {len(payload)}",
            len(buf),
        )
    data = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    if channels == 1:
        data = data.reshape(height, width)
    else:
        data = data.reshape(height, width, 3)
    return Image(data)


def quantize(data: np.ndarray) -> np.ndarray:
    """Map real pixels to uint8: clamp to [0, 255], then round half up."""
    return np.floor(np.clip(data, 0.0, PEAK) + 0.5).astype(np.uint8)


def write_image(image: Image, path) -> None:
    """Write a binary PGM (gray) or PPM (color) file with maxval 255."""
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    Path(path).write_bytes(header + quantize(image.data).tobytes())


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB over all samples (all channels pooled).

    Identical images give +inf. Shape mismatch raises ValueError.
    """
    if a.data.shape != b.data.shape:
        raise ValueError(f"image shapes differ: {a.data.shape} vs {b.data.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def isnr(degraded: Image, restored: Image, reference: Image) -> float:
    """Improvement in SNR: psnr(restored, reference) - psnr(degraded, reference).

    Equal PSNRs (including both infinite) give exactly 0.
    """
    p_restored = psnr(restored, reference)
    p_degraded = psnr(degraded, reference)
    if p_restored == p_degraded:
        return 0.0
    return p_restored - p_degraded
