"""Per-round autotuning of the quantization bin size.

One round: rotate every user's vector with a fresh ``H D``, quantize with the
current bin size and reduce mod k, securely sum, fit a zero-mean wrapped
normal to the dequantized sum, and pick the next range ``t`` so a single
entry of the true rotated sum falls outside ``[-t, t]`` with probability
alpha. The next bin size is ``2 t / (k - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .errors import DimensionError, EstimateUndefined
from .hadamard import RotationConfig, inverse_rotate, rotate_many
from .quantizer import (
    QuantizerParams,
    centered_window,
    dequantize_sum,
    quantize,
    wrap_half_range,
)
from .secagg import SecAggSession, secure_sum
from .wrapped_normal import (
    WrappedNormalFit,
    fit_sigma,
    normal_tail_quantile,
    scale_to_circle,
    two_sided_tail,
)

T_FLOOR = 1e-8


def expected_distortions(alpha: float, d: int) -> float:
    """Expected number of entries corrupted by wrapping."""
    return alpha * d


def bin_size_from_range(t: float, k: int) -> float:
    return 2.0 * t / (k - 1)


@dataclass(frozen=True)
class AutotuneConfig:
    alpha: float
    modulus: int = 2**8
    initial_t: float = 1.0
    seed: int = 0
    # "fresh": new rotation every round; "fixed": one rotation for the whole run
    rotation_seed_policy: str = "fresh"
    rounding: str = "stochastic"
    t_floor: float = T_FLOOR
    # weight on the previous t when smoothing; 0 disables smoothing
    ema: float = 0.0
    # multiply t by this on rounds where the fit is undefined; 1 keeps t as is
    undefined_growth: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.modulus) != self.modulus or self.modulus < 2:
            raise ValueError(f"modulus must be an integer >= 2, got {self.modulus}")
        if not self.initial_t > 0:
            raise ValueError(f"initial_t must be positive, got {self.initial_t}")
        if self.rotation_seed_policy not in ("fresh", "fixed"):
            raise ValueError(f"unknown rotation_seed_policy {self.rotation_seed_policy!r}")
        if not 0 <= self.ema < 1:
            raise ValueError(f"ema must lie in [0, 1), got {self.ema}")
        if not self.undefined_growth >= 1:
            raise ValueError(f"undefined_growth must be >= 1, got {self.undefined_growth}")

    def rotation_seed(self, round_idx: int) -> int:
        if self.rotation_seed_policy == "fixed":
            return rng.derive_seed(self.seed, "rotation")
        return rng.derive_seed(self.seed, "rotation", round_idx)


@dataclass(frozen=True)
class RoundReport:
    """Diagnostics of one autotuned round.

    ``actual_wrap_fraction`` needs the clear integer sum, so it is only filled
    in by simulations that ask for it.
    """

    round: int
    n_users: int
    t_used: float
    bin_used: float
    t_next: float
    bin_next: float
    fit: WrappedNormalFit | None
    sigma_circle: float | None
    sigma_value: float | None
    predicted_wrap_fraction: float | None
    update_norms: tuple[float, ...] = ()
    rotated_norms: tuple[float, ...] = ()
    actual_wrap_fraction: float | None = None

    @property
    def undefined(self) -> bool:
        return self.fit is None


@dataclass(frozen=True)
class AutotuneState:
    round: int
    current_t: float
    current_bin: float
    last_fit: WrappedNormalFit | None = None
    last_report: RoundReport | None = field(default=None, compare=False)

    @classmethod
    def initial(cls, config: AutotuneConfig) -> "AutotuneState":
        return cls(0, config.initial_t, bin_size_from_range(config.initial_t, config.modulus))


def run_round(
    state: AutotuneState,
    config: AutotuneConfig,
    user_vectors,
    diagnostics: bool = False,
) -> tuple[np.ndarray, AutotuneState]:
    """One aggregation round; returns the estimate of the plain sum and the next state.

    Diagnostics for the round are attached as ``new_state.last_report``.
    """
    xs = [np.asarray(x, dtype=np.float64) for x in user_vectors]
    if not xs:
        raise ValueError("need at least one user vector")
    d = xs[0].shape[0]
    if any(x.ndim != 1 or x.shape[0] != d for x in xs):
        raise DimensionError("all user vectors must be 1-D with the same length")
    n = len(xs)
    k = config.modulus

    rot = RotationConfig(config.rotation_seed(state.round), d)
    zs = rotate_many(np.stack(xs), rot)

    params = QuantizerParams(state.current_bin, k)
    qs = [
        quantize(z, params.bin_size, rng.stream(config.seed, "quant", state.round, u), config.rounding)
        for u, z in enumerate(zs)
    ]
    session = SecAggSession(n, rot.padded_dim, k, rng.derive_seed(config.seed, "secagg", state.round))
    y_bar = secure_sum([np.mod(q, k) for q in qs], session)

    dequantized = dequantize_sum(y_bar, params)
    estimate = inverse_rotate(dequantized, rot)

    half_range = wrap_half_range(params)
    angles = scale_to_circle(dequantized, half_range)
    try:
        fit = fit_sigma(angles)
    except EstimateUndefined:
        fit = None

    if fit is None:
        sigma_circle = sigma_value = predicted = None
        t_next = state.current_t * config.undefined_growth
    else:
        sigma_circle = fit.sigma_hat
        sigma_value = sigma_circle * half_range / math.pi
        t_star = normal_tail_quantile(sigma_value, config.alpha) if sigma_value > 0 else 0.0
        t_next = config.ema * state.current_t + (1.0 - config.ema) * t_star
        predicted = two_sided_tail(half_range, sigma_value)
    t_next = max(t_next, config.t_floor)
    bin_next = bin_size_from_range(t_next, k)

    actual = None
    if diagnostics:
        lo, hi = centered_window(k)
        total = np.sum(qs, axis=0)
        actual = float(np.mean((total < lo) | (total >= hi)))

    report = RoundReport(
        round=state.round,
        n_users=n,
        t_used=state.current_t,
        bin_used=state.current_bin,
        t_next=t_next,
        bin_next=bin_next,
        fit=fit,
        sigma_circle=sigma_circle,
        sigma_value=sigma_value,
        predicted_wrap_fraction=predicted,
        update_norms=tuple(float(np.linalg.norm(x)) for x in xs) if diagnostics else (),
        rotated_norms=tuple(float(np.linalg.norm(z)) for z in zs) if diagnostics else (),
        actual_wrap_fraction=actual,
    )
    new_state = AutotuneState(
        round=state.round + 1,
        current_t=t_next,
        current_bin=bin_next,
        last_fit=fit if fit is not None else state.last_fit,
        last_report=report,
    )
    return estimate, new_state


def group_config(config: AutotuneConfig, group: int) -> AutotuneConfig:
    """Config for one parameter group, with independent random streams."""
    return replace(config, seed=rng.derive_seed(config.seed, "group", group))
