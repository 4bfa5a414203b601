"""Sinusoidal positional encoding for low-dimensional geometric inputs."""

from __future__ import annotations

import numpy as np

DEFAULT_FREQUENCIES = 6


def positional_encoding(x: np.ndarray, frequencies: int = DEFAULT_FREQUENCIES) -> np.ndarray:
    """Concatenate x with sin/cos at octave frequencies.

    Output layout per row: raw coordinates, then the sin block for
    k = 0..L-1 (each of width d), then the matching cos block; total width
    d + 2*L*d.  Accepts (d,) or (N, d) input.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    freqs = (2.0 ** np.arange(frequencies)) * np.pi  # (L,)
    ang = x[:, None, :] * freqs[None, :, None]  # (N, L, d)
    n = len(x)
    out = np.concatenate(
        [x, np.sin(ang).reshape(n, -1), np.cos(ang).reshape(n, -1)], axis=1
    )
    return out[0] if single else out


def encoding_width(d: int, frequencies: int = DEFAULT_FREQUENCIES) -> int:
    return d + 2 * frequencies * d
