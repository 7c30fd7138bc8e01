"""Randomized Hadamard rotation ``R = H D``.

``D`` is a diagonal of i.i.d. random signs regenerated from a seed, ``H`` the
orthonormal Walsh-Hadamard matrix. Inputs whose length is not a power of two
are zero-padded; ``inverse_rotate`` truncates back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DimensionError


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    if n < 1:
        raise DimensionError(f"dimension must be positive, got {n}")
    return 1 << (n - 1).bit_length()


def fwht_(v: np.ndarray) -> np.ndarray:
    """In-place orthonormal fast Walsh-Hadamard transform of a float vector.

    Butterflies run over strided views of ``v`` itself; the only scratch is
    one half-length temporary per stage. Returns ``v``.
    """
    n = v.shape[0]
    if not v.flags.c_contiguous:
        raise ValueError("fwht_ needs a contiguous array")
    if not is_power_of_two(n):
        raise DimensionError(f"length must be a power of two, got {n}")
    h = 1
    while h < n:
        blocks = v.reshape(-1, 2, h)
        lo = blocks[:, 0, :]
        hi = blocks[:, 1, :]
        tmp = lo - hi
        lo += hi
        hi[...] = tmp
        h *= 2
    v *= 1.0 / np.sqrt(n)
    return v


def fwht(v) -> np.ndarray:
    """Orthonormal Walsh-Hadamard transform; its own inverse."""
    out = np.array(v, dtype=np.float64, copy=True).reshape(-1)
    return fwht_(out)


def hadamard_matrix(n: int) -> np.ndarray:
    """Dense normalized Sylvester-Hadamard matrix. For tests and small n only."""
    if not is_power_of_two(n):
        raise DimensionError(f"length must be a power of two, got {n}")
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h / np.sqrt(n)


def sample_rademacher(seed: int, n: int) -> np.ndarray:
    """Deterministic vector of ``n`` random signs (float64 +-1)."""
    if n < 1:
        raise DimensionError(f"dimension must be positive, got {n}")
    bits = rng.stream(seed, "rademacher").integers(0, 2, size=n, dtype=np.int8)
    return (2.0 * bits - 1.0).astype(np.float64)


@dataclass(frozen=True)
class RotationConfig:
    seed: int
    original_dim: int
    padded_dim: int = field(default=0)

    def __post_init__(self):
        if self.original_dim < 1:
            raise DimensionError(f"original_dim must be positive, got {self.original_dim}")
        if self.padded_dim == 0:
            object.__setattr__(self, "padded_dim", next_power_of_two(self.original_dim))
        if not is_power_of_two(self.padded_dim) or self.padded_dim < self.original_dim:
            raise DimensionError(
                f"padded_dim {self.padded_dim} must be a power of two >= {self.original_dim}"
            )

    @property
    def signs(self) -> np.ndarray:
        return sample_rademacher(self.seed, self.padded_dim)

    def matrix(self) -> np.ndarray:
        """Dense ``H D`` (padded_dim x padded_dim)."""
        return hadamard_matrix(self.padded_dim) * self.signs[None, :]


def rotate(x, config: RotationConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != config.original_dim:
        raise DimensionError(f"expected length {config.original_dim}, got {x.shape}")
    z = np.zeros(config.padded_dim)
    z[: config.original_dim] = x
    z *= config.signs
    return fwht_(z)


def inverse_rotate(z, config: RotationConfig) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] != config.padded_dim:
        raise DimensionError(f"expected length {config.padded_dim}, got {z.shape}")
    x = fwht(z)
    x *= config.signs
    return x[: config.original_dim].copy()


def rotate_many(xs: np.ndarray, config: RotationConfig) -> np.ndarray:
    """Rotate each row of ``xs``; shape (m, original_dim) -> (m, padded_dim)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[1] != config.original_dim:
        raise DimensionError(f"expected rows of length {config.original_dim}, got {xs.shape}")
    signs = config.signs
    return np.stack([fwht_(_pad(row, config.padded_dim) * signs) for row in xs])


def _pad(x: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[: x.shape[0]] = x
    return out
