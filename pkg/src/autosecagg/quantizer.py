"""Unbounded stochastic quantization with mod-k wrapping, and the clip baseline.

The autotuned pipeline never clips: a rotated value ``z`` becomes
``round(z / b) mod k``. Wrapping only distorts the aggregate if the true
integer sum leaves the centered window, see ``centered_lift``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROUNDING_MODES = ("stochastic", "nearest")


@dataclass(frozen=True)
class QuantizerParams:
    bin_size: float
    modulus: int

    def __post_init__(self):
        if not (self.bin_size > 0 and np.isfinite(self.bin_size)):
            raise ValueError(f"bin_size must be positive and finite, got {self.bin_size}")
        if int(self.modulus) != self.modulus or self.modulus < 2:
            raise ValueError(f"modulus must be an integer >= 2, got {self.modulus}")


@dataclass(frozen=True)
class ClipQuantizerParams:
    clip_range: float
    levels: int

    def __post_init__(self):
        if not (self.clip_range > 0 and np.isfinite(self.clip_range)):
            raise ValueError(f"clip_range must be positive and finite, got {self.clip_range}")
        if int(self.levels) != self.levels or self.levels < 2:
            raise ValueError(f"levels must be an integer >= 2, got {self.levels}")

    @property
    def bin_width(self) -> float:
        return 2.0 * self.clip_range / (self.levels - 1)


def _check_finite(r: np.ndarray) -> None:
    if not np.all(np.isfinite(r)):
        raise ValueError("input contains non-finite values")


def stochastic_round(r, rng: np.random.Generator):
    """Round down with probability ceil(r) - r, else up. Unbiased.

    Accepts a scalar (returns int) or an array (returns int64 array).
    """
    arr = np.asarray(r, dtype=np.float64)
    _check_finite(arr)
    if np.any(np.abs(arr) >= 2.0**62):
        raise ValueError("magnitude too large to round into int64")
    lo = np.floor(arr)
    up = rng.random(arr.shape) < (arr - lo)
    out = lo.astype(np.int64) + up
    if out.ndim == 0:
        return int(out)
    return out


def round_to_int(r, rng: np.random.Generator | None, rounding: str = "stochastic") -> np.ndarray:
    if rounding == "stochastic":
        if rng is None:
            raise ValueError("stochastic rounding needs a generator")
        return np.asarray(stochastic_round(r, rng), dtype=np.int64)
    if rounding == "nearest":
        arr = np.asarray(r, dtype=np.float64)
        _check_finite(arr)
        return np.rint(arr).astype(np.int64)
    raise ValueError(f"unknown rounding mode {rounding!r}; expected one of {ROUNDING_MODES}")


def quantize(z, bin_size: float, rng, rounding: str = "stochastic") -> np.ndarray:
    """Unbounded integer quantization ``round(z / b)`` (no wrap)."""
    return round_to_int(np.asarray(z, dtype=np.float64) / bin_size, rng, rounding)


def quantize_mod(z, params: QuantizerParams, rng, rounding: str = "stochastic") -> np.ndarray:
    """``round(z / b) mod k`` as int64 residues in [0, k)."""
    return np.mod(quantize(z, params.bin_size, rng, rounding), params.modulus)


def centered_window(k: int) -> tuple[int, int]:
    """Half-open integer window ``[lo, hi)`` of k values used by ``centered_lift``."""
    return -(k // 2), (k + 1) // 2


def centered_lift(y, k: int) -> np.ndarray:
    """Representative of each residue in ``centered_window(k)``."""
    y = np.asarray(y, dtype=np.int64)
    lo, _ = centered_window(k)
    return np.mod(y - lo, k) + lo


def dequantize_sum(y_bar, params: QuantizerParams) -> np.ndarray:
    y_bar = np.asarray(y_bar)
    if y_bar.size and (y_bar.min() < 0 or y_bar.max() >= params.modulus):
        raise ValueError(f"entries must lie in [0, {params.modulus})")
    return centered_lift(y_bar, params.modulus).astype(np.float64) * params.bin_size


def wrap_half_range(params: QuantizerParams) -> float:
    """Half the wrap period in value units, ``k * b / 2``."""
    return params.modulus * params.bin_size / 2.0


def clip_quantize(x, params: ClipQuantizerParams, rng, rounding: str = "stochastic") -> np.ndarray:
    """Clip to [-t, t] and map linearly so -t -> 0 and +t -> levels - 1."""
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    t = params.clip_range
    scaled = (np.clip(x, -t, t) + t) * (params.levels - 1) / (2.0 * t)
    q = round_to_int(scaled, rng, rounding)
    return np.clip(q, 0, params.levels - 1)


def clip_dequantize_sum(q_sum, n_users: int, params: ClipQuantizerParams) -> np.ndarray:
    """Invert the affine map for a sum of ``n_users`` clip-quantized vectors."""
    return np.asarray(q_sum, dtype=np.float64) * params.bin_width - n_users * params.clip_range


def stochastic_binary_quantize(x, rng) -> np.ndarray:
    """Per-vector 1-bit stochastic quantization onto {min(x), max(x)}.

    Returns the dequantized vector. Unbiased; this is the coarse scheme used
    to measure how much rotation helps.
    """
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return x.copy()
    p = (x - lo) / (hi - lo)
    return np.where(rng.random(x.shape) < p, hi, lo)
