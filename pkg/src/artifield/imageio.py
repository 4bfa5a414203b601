"""Binary PPM (P6) and PGM (P5) image I/O with 8-bit quantization."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError


def _quantize(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise InvalidArgumentError("image contains non-finite values")
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def save_ppm(path, rgb: np.ndarray):
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InvalidArgumentError("expected an (H, W, 3) image")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(_quantize(rgb).tobytes())


def save_pgm(path, gray: np.ndarray):
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise InvalidArgumentError("expected an (H, W) image")
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(_quantize(gray).tobytes())


def _read_header(fh, magic: bytes):
    if fh.read(2) != magic:
        raise InvalidArgumentError(f"not a {magic.decode()} file")
    fields = []
    while len(fields) < 3:
        line = fh.readline()
        if not line:
            raise InvalidArgumentError("truncated image header")
        body = line.split(b"#", 1)[0]
        fields.extend(int(tok) for tok in body.split())
    w, h, maxval = fields[:3]
    if maxval != 255:
        raise InvalidArgumentError("only 8-bit images are supported")
    return w, h


def load_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        w, h = _read_header(fh, b"P6")
        data = np.frombuffer(fh.read(w * h * 3), dtype=np.uint8)
    if data.size != w * h * 3:
        raise InvalidArgumentError("truncated PPM payload")
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        w, h = _read_header(fh, b"P5")
        data = np.frombuffer(fh.read(w * h), dtype=np.uint8)
    if data.size != w * h:
        raise InvalidArgumentError("truncated PGM payload")
    return data.reshape(h, w).astype(np.float64) / 255.0
