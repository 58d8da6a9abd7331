"""Sinusoidal positional encoding applied per scalar coordinate.

Each scalar p maps to (sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{L-1} pi p),
cos(2^{L-1} pi p)).  The raw value is excluded by default; the encoded length
is exactly 2L per scalar and 6L per 3-vector.  Inputs are expected in [-1, 1]
(the encoding is 2-periodic in p, so out-of-range values alias); they are
accepted regardless, and optionally flagged in debug mode.
"""

from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np

# Flip on to warn when coordinates leave the [-1, 1] band the encoding
# assumes; off by default to keep hot paths silent.
DEBUG_RANGE_CHECK = False


@dataclass(frozen=True)
class EncodingConfig:
    """Frequency counts for position and viewing-direction encodings."""

    L_position: int = 10
    L_direction: int = 4
    include_input: bool = False  # append the raw coordinate (off: encoded dims are 6L)

    def __post_init__(self):
        if self.L_position < 0 or self.L_direction < 0:
            raise ValueError("frequency counts must be >= 0")

    @property
    def position_dim(self) -> int:
        return 6 * self.L_position + (3 if self.include_input else 0)

    @property
    def direction_dim(self) -> int:
        return 6 * self.L_direction + (3 if self.include_input else 0)

    @staticmethod
    def for_frequency_sweep(L_position: int) -> "EncodingConfig":
        """Config for the frequency-count sweep: direction frequencies scale
        proportionally with the position count (4/10 ratio, at least 1)."""
        return EncodingConfig(L_position, max(1, round(L_position * 4 / 10)))


def encode_scalar(p, L: int) -> np.ndarray:
    """Encode scalar(s); output shape is p.shape + (2L,)."""
    if L < 0:
        raise ValueError(f"L must be >= 0, got {L}")
    p = np.asarray(p)
    if DEBUG_RANGE_CHECK and np.any(np.abs(p) > 1.0):
        warnings.warn("positional-encoding input outside [-1, 1]; values alias")
    out = np.empty(p.shape + (2 * L,), dtype=p.dtype if p.dtype.kind == "f" else np.float64)
    for k in range(L):
        arg = (2.0 ** k * np.pi) * p
        out[..., 2 * k] = np.sin(arg)
        out[..., 2 * k + 1] = np.cos(arg)
    return out


def encode_vec3(v: np.ndarray, L: int) -> np.ndarray:
    """Encode 3-vector(s) component-major: all 2L values of x, then y, then z.

    Input shape (..., 3) -> output shape (..., 6L).
    """
    v = np.asarray(v)
    if v.shape[-1] != 3:
        raise ValueError(f"expected trailing dim 3, got shape {v.shape}")
    enc = encode_scalar(v, L)  # (..., 3, 2L)
    return enc.reshape(v.shape[:-1] + (6 * L,))
