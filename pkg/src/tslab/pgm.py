"""Binary PGM (P5) reading and writing.

8-bit files cover ordinary images; 16-bit (big-endian, per the PNM spec)
preserves sub-1/255 adversarial perturbations.  Parse errors report the
byte offset at which the file stopped making sense.
"""

from __future__ import annotations

import numpy as np

from .core import PixelGrid

__all__ = ["PgmError", "read_pgm", "write_pgm"]


class PgmError(ValueError):
    """Malformed or unsupported PGM data; offset is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    length = len(data)
    while pos < length:
        byte = data[pos : pos + 1]
        if byte == b"#":  # comment runs to end of line
            while pos < length and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif byte.isspace():
            pos += 1
        else:
            break
    if pos >= length:
        raise PgmError("unexpected end of header", pos)
    start = pos
    while pos < length and not data[pos : pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def _header_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    token, end = _next_token(data, pos)
    if not token.isdigit():
        raise PgmError(f"expected integer {what}, got {token!r}", pos)
    return int(token), end


def read_pgm(path) -> PixelGrid:
    with open(path, "rb") as handle:
        data = handle.read()
    magic, pos = _next_token(data, 0)
    if magic == b"P2":
        raise PgmError("ASCII (P2) PGM is not supported; use binary P5", 0)
    if magic != b"P5":
        raise PgmError(f"not a binary PGM file (magic {magic!r})", 0)
    width, pos = _header_int(data, pos, "width")
    height, pos = _header_int(data, pos, "height")
    maxval, pos = _header_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise PgmError(f"invalid dimensions {width}x{height}", pos)
    if not 0 < maxval < 65536:
        raise PgmError(f"maxval {maxval} out of range", pos)
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PgmError("missing whitespace before pixel data", pos)
    pos += 1  # exactly one whitespace byte separates header and payload

    count = width * height
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = count * dtype.itemsize
    payload = data[pos : pos + expected]
    if len(payload) < expected:
        raise PgmError(
            f"truncated pixel data: expected {expected} bytes, got {len(payload)}",
            pos + len(payload),
        )
    raw = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if raw.max(initial=0.0) > maxval:
        raise PgmError("pixel value exceeds declared maxval", pos)
    return PixelGrid(height, width, raw / maxval)


def write_pgm(grid: PixelGrid, path, maxval: int = 255) -> None:
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    quantized = np.rint(grid.values * maxval).clip(0, maxval).astype(dtype)
    header = f"P5\n{grid.width} {grid.height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(quantized.tobytes())
