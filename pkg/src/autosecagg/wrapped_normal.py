"""Wrapped-normal density and the moment estimator of its variance.

Angles live on [-pi, pi). A value in [-t, t) maps to the circle by ``pi / t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import EstimateUndefined


@dataclass(frozen=True)
class WrappedNormalFit:
    r_bar_sq: float
    r_e_sq: float
    sigma_sq_hat: float
    sample_count: int
    mu: float = 0.0

    @property
    def sigma_hat(self) -> float:
        return math.sqrt(self.sigma_sq_hat)


def scale_to_circle(v, t: float) -> np.ndarray:
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    v = np.asarray(v, dtype=np.float64)
    if v.size and (v.min() < -t or v.max() >= t):
        raise ValueError(f"entries must lie in [-{t}, {t})")
    return v * (math.pi / t)


def resultant_length_sq(samples) -> float:
    """Squared mean resultant length of angles, in [0, 1]."""
    samples = np.asarray(samples, dtype=np.float64)
    c = np.cos(samples).mean()
    s = np.sin(samples).mean()
    return float(min(c * c + s * s, 1.0))


def fit_sigma(samples) -> WrappedNormalFit:
    """Moment fit of WrappedNormal(0, sigma) to angles.

    Uses the bias-corrected squared resultant
    ``R_e^2 = d / (d - 1) * (R_bar^2 - 1 / d)`` and ``sigma^2 = ln(1 / R_e^2)``.
    Raises EstimateUndefined when ``R_e^2 <= 0``; clamps ``R_e^2 > 1`` to 1.
    """
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    d = samples.shape[0]
    if d < 2:
        raise ValueError(f"need at least 2 samples, got {d}")
    r_bar_sq = resultant_length_sq(samples)
    r_e_sq = d / (d - 1) * (r_bar_sq - 1.0 / d)
    if r_e_sq <= 0:
        raise EstimateUndefined(
            f"R_e^2 = {r_e_sq:.3g} <= 0 over {d} samples; data too dispersed to fit"
        )
    sigma_sq = 0.0 if r_e_sq >= 1.0 else -math.log(r_e_sq)
    return WrappedNormalFit(r_bar_sq, r_e_sq, sigma_sq, d)


def normal_tail_quantile(sigma: float, alpha: float) -> float:
    """t with P(|N(0, sigma^2)| > t) = alpha."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return float(sigma * ndtri(1.0 - alpha / 2.0))


def two_sided_tail(t: float, sigma: float) -> float:
    """P(|N(0, sigma^2)| > t)."""
    if sigma == 0:
        return 0.0
    return float(2.0 * ndtr(-t / sigma))


def series_terms(sigma: float) -> int:
    return math.ceil(6.0 * sigma / (2.0 * math.pi)) + 2


def wrapped_normal_pdf(x, mu: float = 0.0, sigma: float = 1.0):
    """Density of N(mu, sigma^2) wrapped onto [-pi, pi)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    if x.size and (x.min() < -math.pi or x.max() >= math.pi):
        raise ValueError("x must lie in [-pi, pi)")
    kk = np.arange(-series_terms(sigma), series_terms(sigma) + 1)
    shifted = x[..., None] - mu + 2.0 * math.pi * kk
    dens = np.exp(-0.5 * (shifted / sigma) ** 2).sum(axis=-1) / (sigma * math.sqrt(2.0 * math.pi))
    return float(dens) if dens.ndim == 0 else dens


def sample_wrapped_normal(rng: np.random.Generator, sigma: float, size, mu: float = 0.0) -> np.ndarray:
    """Draw N(mu, sigma^2) and wrap onto [-pi, pi)."""
    raw = rng.normal(mu, sigma, size)
    return np.mod(raw + math.pi, 2.0 * math.pi) - math.pi
