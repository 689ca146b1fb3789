"""Binary 8-bit PGM (P5) image I/O. Pixels map to floats in [0, 1]."""

from __future__ import annotations

import numpy as np


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()

    # Header tokens: magic, width, height, maxval; '#' starts a comment.
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            pos = data.index(b"\n", pos) + 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval <= 255:
        raise ValueError(f"{path}: unsupported maxval {maxval} (need 8-bit)")
    pos += 1  # single whitespace after maxval
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise ValueError(f"{path}: raster truncated")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return img.astype(float) / maxval


def write_pgm(path: str, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("expected a 2-D image")
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (image.shape[1], image.shape[0]))
        fh.write(pixels.tobytes())
