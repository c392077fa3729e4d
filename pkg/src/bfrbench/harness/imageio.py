"""Raster I/O.

Binary PPM (P6) is the bit-exact interchange format; PGM (P5) loads as a
replicated 3-channel image. PNG works when Pillow is installed and maps to
the identical v/255 float grid. Images are (H, W, 3) float64 arrays in [0,1].
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import FormatError


def to_u8(img: np.ndarray) -> np.ndarray:
    """Quantize floats to bytes: round half up on v*255, clamped to [0,255]."""
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5),
                   0, 255).astype(np.uint8)


def _parse_pnm_header(buf: bytes, path: str):
    """Returns (magic, width, height, maxval, data_offset)."""
    if len(buf) < 2 or buf[:1] != b"P" or buf[1:2] not in (b"5", b"6"):
        raise FormatError(f"{path}: not a binary PGM/PPM file (bad magic at byte 0)")
    magic = buf[:2].decode()
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and '#' comments
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        token = buf[start:pos]
        if not token.isdigit():
            raise FormatError(f"{path}: malformed header token at byte {start}")
        fields.append(int(token))
    if pos >= len(buf):
        raise FormatError(f"{path}: truncated header at byte {pos}")
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (only 255)")
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: non-positive dimensions {width}x{height}")
    return magic, width, height, maxval, pos


def load_image(path) -> np.ndarray:
    """Decode a PPM/PGM/PNG file to an (H, W, 3) float64 array in [0,1]."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
        fh.seek(0)
        if head[:2] in (b"P6", b"P5"):
            buf = fh.read()
        elif head[:8] == b"\x89PNG\r\n\x1a\n":
            return _load_png(path)
        else:
            raise FormatError(f"{path}: unrecognized image format (bad magic at byte 0)")
    magic, width, height, _, offset = _parse_pnm_header(buf, path)
    channels = 3 if magic == "P6" else 1
    need = width * height * channels
    raw = buf[offset:offset + need]
    if len(raw) < need:
        raise FormatError(
            f"{path}: truncated pixel data at byte {offset + len(raw)} "
            f"(expected {need} bytes)")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
    if channels == 1:
        arr = np.repeat(arr, 3, axis=2)
    return arr.astype(np.float64) / 255.0


def _load_png(path: str) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:
        raise FormatError(f"{path}: PNG support requires Pillow") from exc
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.astype(np.float64) / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Write an image as binary PPM (or PNG when the suffix is .png)."""
    path = os.fspath(path)
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"save_image expects (H, W, 3), got {img.shape}")
    data = to_u8(img)
    if path.lower().endswith(".png"):
        try:
            from PIL import Image
        except ImportError as exc:
            raise FormatError(f"{path}: PNG support requires Pillow") from exc
        Image.fromarray(data, mode="RGB").save(path, format="PNG")
        return
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())
