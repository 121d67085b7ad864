"""Binary PPM (P6) and PGM (P5) image files, maxval 255.

Arrays are [3,H,W] for color and [1,H,W] for gray, float in [0, 1]; files
store rounded 8-bit samples, so write/read round-trips are exact at 8-bit
resolution. Readers accept `#` comments and arbitrary whitespace in the
header, per the format family's conventions.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

__all__ = ["write_ppm", "write_pgm", "read_image", "quantize", "dequantize"]


def quantize(img: np.ndarray) -> np.ndarray:
    """[0,1] float planes to rounded uint8."""
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0),
                   0, 255).astype(np.uint8)


def dequantize(raw: np.ndarray) -> np.ndarray:
    return (raw.astype(np.float32) / 255.0)


def _write(path, magic: bytes, planes: np.ndarray) -> None:
    c, h, w = planes.shape
    raw = quantize(planes)
    body = np.moveaxis(raw, 0, -1).tobytes()  # interleave samples per pixel
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(body)


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DataError(f"write_ppm: need [3,H,W], got {img.shape}")
    _write(path, b"P6", img)


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3 or img.shape[0] != 1:
        raise DataError(f"write_pgm: need [1,H,W] or [H,W], got {img.shape}")
    _write(path, b"P5", img)


def _header_tokens(blob: bytes, count: int) -> tuple[list[int], int]:
    """Parse `count` whitespace/comment-separated integers; returns offset."""
    tokens: list[int] = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(blob):
            raise DataError("truncated image header")
        ch = blob[pos:pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            nl = blob.find(b"\n", pos)
            pos = len(blob) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(blob) and blob[end:end + 1] not in b" \t\r\n":
                end += 1
            try:
                tokens.append(int(blob[pos:end]))
            except ValueError:
                raise DataError(
                    f"bad token {blob[pos:end]!r} in image header") from None
            pos = end
    return tokens, pos + 1  # consume the single whitespace after maxval


def read_image(path) -> np.ndarray:
    """Read a P6/P5 file into [3,H,W] or [1,H,W] float32 in [0, 1]."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"cannot read image {path}: {e}") from e
    magic = blob[:2]
    if magic == b"P6":
        channels = 3
    elif magic == b"P5":
        channels = 1
    else:
        raise DataError(f"{path}: unsupported image magic {magic!r}")
    (w, h, maxval), offset = _header_tokens(blob[2:], 3)
    offset += 2
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 is supported, got {maxval}")
    need = w * h * channels
    body = blob[offset:offset + need]
    if len(body) != need:
        raise DataError(
            f"{path}: expected {need} pixel bytes, found {len(body)}")
    raw = np.frombuffer(body, dtype=np.uint8).reshape(h, w, channels)
    return dequantize(np.moveaxis(raw, -1, 0))
