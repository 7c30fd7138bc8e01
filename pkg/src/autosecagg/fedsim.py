"""Desk-scale federated averaging with pluggable aggregators.

The model is multinomial logistic regression, optionally with one tanh
hidden layer, trained on a synthetic Gaussian-cluster task split i.i.d.
across clients. Aggregators take the cohort's raw update vectors and return
an estimate of their sum plus diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Protocol

import numpy as np

from . import rng
from .autotune import AutotuneConfig, AutotuneState, group_config, run_round
from .errors import DataError, DimensionError
from .hadamard import RotationConfig, inverse_rotate, rotate_many
from .quantizer import ClipQuantizerParams, clip_dequantize_sum, clip_quantize
from .secagg import SecAggSession, secure_sum


# --------------------------------------------------------------------------
# Model


@dataclass(frozen=True)
class ModelParams:
    values: np.ndarray
    shapes: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        if self.values.size != sum(math.prod(s) for _, s in self.shapes):
            raise DimensionError("values length does not match layer shapes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("model parameters must be finite")

    @property
    def dim(self) -> int:
        return self.values.size

    def layers(self, values: np.ndarray | None = None) -> dict[str, np.ndarray]:
        values = self.values if values is None else values
        out, pos = {}, 0
        for name, shape in self.shapes:
            size = math.prod(shape)
            out[name] = values[pos : pos + size].reshape(shape)
            pos += size
        return out

    def layer_slices(self) -> list[slice]:
        slices, pos = [], 0
        for _, shape in self.shapes:
            size = math.prod(shape)
            slices.append(slice(pos, pos + size))
            pos += size
        return slices

    def with_values(self, values: np.ndarray) -> "ModelParams":
        return ModelParams(np.asarray(values, dtype=np.float64), self.shapes)


def init_model(input_dim: int, n_classes: int, hidden: int = 0, seed: int = 0) -> ModelParams:
    """Zero-initialized softmax regression, or a small tanh MLP when ``hidden > 0``."""
    if hidden <= 0:
        shapes = (("w", (input_dim, n_classes)), ("b", (n_classes,)))
        return ModelParams(np.zeros(input_dim * n_classes + n_classes), shapes)
    g = rng.stream(seed, "init")
    w1 = g.normal(0.0, 1.0 / math.sqrt(input_dim), (input_dim, hidden))
    w2 = g.normal(0.0, 1.0 / math.sqrt(hidden), (hidden, n_classes))
    shapes = (
        ("w1", (input_dim, hidden)),
        ("b1", (hidden,)),
        ("w2", (hidden, n_classes)),
        ("b2", (n_classes,)),
    )
    values = np.concatenate([w1.ravel(), np.zeros(hidden), w2.ravel(), np.zeros(n_classes)])
    return ModelParams(values, shapes)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(params: ModelParams, values: np.ndarray, x: np.ndarray):
    p = params.layers(values)
    if "w" in p:
        return x @ p["w"] + p["b"], None
    h = np.tanh(x @ p["w1"] + p["b1"])
    return h @ p["w2"] + p["b2"], h


def loss_and_grad(params: ModelParams, values: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its gradient as a flat vector."""
    logits, h = forward(params, values, x)
    logp = _log_softmax(logits)
    m = x.shape[0]
    loss = -logp[np.arange(m), y].mean()
    g = np.exp(logp)
    g[np.arange(m), y] -= 1.0
    g /= m
    if h is None:
        grads = [x.T @ g, g.sum(axis=0)]
    else:
        w2 = params.layers(values)["w2"]
        gh = (g @ w2.T) * (1.0 - h * h)
        grads = [x.T @ gh, gh.sum(axis=0), h.T @ g, g.sum(axis=0)]
    return float(loss), np.concatenate([a.ravel() for a in grads])


def loss(params: ModelParams, values: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward(params, values, x)
    return float(-_log_softmax(logits)[np.arange(x.shape[0]), y].mean())


def accuracy(params: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward(params, params.values, x)
    return float(np.mean(logits.argmax(axis=1) == y))


# --------------------------------------------------------------------------
# Data


@dataclass(frozen=True)
class ClientDataset:
    client_id: int
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.labels) == 0:
            raise DataError(f"client {self.client_id} has no examples")
        if len(self.features) != len(self.labels):
            raise DataError("features and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)


def make_synthetic_task(
    n_clients: int,
    examples_per_client: int,
    input_dim: int,
    n_classes: int,
    seed: int,
    eval_size: int = 2000,
    class_sep: float = 1.0,
) -> tuple[list[ClientDataset], ClientDataset]:
    """Gaussian clusters around random class means, split i.i.d. and balanced.

    Class means are drawn from N(0, class_sep^2 I); each example adds unit
    isotropic noise, so the classes overlap a little and a linear model is
    near optimal.
    """
    for name, v in [("n_clients", n_clients), ("examples_per_client", examples_per_client),
                    ("input_dim", input_dim), ("n_classes", n_classes), ("eval_size", eval_size)]:
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    g = rng.stream(seed, "task")
    means = g.normal(0.0, class_sep, (n_classes, input_dim))

    def draw(m: int):
        y = g.integers(0, n_classes, m)
        return means[y] + g.normal(0.0, 1.0, (m, input_dim)), y

    x, y = draw(n_clients * examples_per_client)
    clients = [
        ClientDataset(c, x[c * examples_per_client : (c + 1) * examples_per_client],
                      y[c * examples_per_client : (c + 1) * examples_per_client])
        for c in range(n_clients)
    ]
    ex, ey = draw(eval_size)
    return clients, ClientDataset(-1, ex, ey)


def pooled(clients: list[ClientDataset]) -> tuple[np.ndarray, np.ndarray]:
    return (np.concatenate([c.features for c in clients]),
            np.concatenate([c.labels for c in clients]))


# --------------------------------------------------------------------------
# Client and server steps


def local_update(
    params: ModelParams,
    data: ClientDataset,
    lr: float,
    batch_size: int,
    epochs: int = 1,
    seed: int = 0,
) -> np.ndarray:
    """Mini-batch SGD on one client; returns trained minus received parameters."""
    if len(data.labels) == 0:
        raise DataError("empty dataset")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if lr < 0:
        raise ValueError(f"lr must be non-negative, got {lr}")
    g = rng.stream(seed, "shuffle")
    w = params.values.copy()
    m = len(data)
    for _ in range(epochs):
        order = g.permutation(m)
        for start in range(0, m, batch_size):
            idx = order[start : start + batch_size]
            _, grad = loss_and_grad(params, w, data.features[idx], data.labels[idx])
            w -= lr * grad
    return w - params.values


@dataclass(frozen=True)
class CohortSpec:
    n_total: int
    participation_fraction: float
    round_seed: int = 0

    def __post_init__(self):
        if self.n_total < 1:
            raise ValueError(f"n_total must be >= 1, got {self.n_total}")
        if not 0 < self.participation_fraction <= 1:
            raise ValueError(f"participation_fraction must lie in (0, 1], got {self.participation_fraction}")

    @property
    def size(self) -> int:
        return max(1, round(self.n_total * self.participation_fraction))

    def sample(self, round_idx: int) -> np.ndarray:
        g = rng.stream(self.round_seed, "cohort", round_idx)
        return np.sort(g.choice(self.n_total, size=self.size, replace=False))


@dataclass
class AggregateResult:
    estimate: np.ndarray
    diagnostics: dict = field(default_factory=dict)


class Aggregator(Protocol):
    name: str

    def __call__(self, updates: list[np.ndarray], round_idx: int) -> AggregateResult: ...

    def bits_per_entry(self, n_users: int) -> float: ...


class ClearAggregator:
    """Plain float sum, no privacy. The FedAvg reference."""

    name = "clear"

    def __call__(self, updates, round_idx):
        return AggregateResult(np.sum(updates, axis=0))

    def bits_per_entry(self, n_users):
        return 32.0


class ClipQuantizeAggregator:
    """Clip to [-t, t], quantize to ``levels`` values, secure sum with k = n * levels."""

    name = "clip"

    def __init__(self, clip_range: float, levels: int, seed: int = 0, rotate: bool = False,
                 rounding: str = "stochastic"):
        self.params = ClipQuantizerParams(clip_range, levels)
        self.seed = seed
        self.rotate = rotate
        self.rounding = rounding

    def __call__(self, updates, round_idx):
        xs = np.stack(updates)
        n, d = xs.shape
        rot = None
        if self.rotate:
            rot = RotationConfig(rng.derive_seed(self.seed, "rotation", round_idx), d)
            xs = rotate_many(xs, rot)
        k = n * self.params.levels
        qs = [clip_quantize(x, self.params, rng.stream(self.seed, "quant", round_idx, u), self.rounding)
              for u, x in enumerate(xs)]
        session = SecAggSession(n, xs.shape[1], k, rng.derive_seed(self.seed, "secagg", round_idx))
        total = secure_sum(qs, session)
        est = clip_dequantize_sum(total, n, self.params)
        if rot is not None:
            est = inverse_rotate(est, rot)
        clipped = float(np.mean(np.abs(xs) > self.params.clip_range))
        return AggregateResult(est, {"t": self.params.clip_range, "b": self.params.bin_width,
                                     "clip_fraction": clipped})

    def bits_per_entry(self, n_users):
        return float(math.ceil(math.log2(n_users * self.params.levels)))


class AutotunedAggregator:
    """Rotate, quantize-then-mod, secure sum, refit the bin size each round.

    With ``groups`` set, each slice of the flat update is tuned on its own.
    """

    name = "autotune"

    def __init__(self, config: AutotuneConfig, groups: list[slice] | None = None,
                 diagnostics: bool = True):
        self.groups = groups or [slice(None)]
        self.configs = [config] if groups is None else [group_config(config, i) for i in range(len(groups))]
        self.states = [AutotuneState.initial(c) for c in self.configs]
        self.diagnostics = diagnostics
        self.modulus = config.modulus

    def __call__(self, updates, round_idx):
        xs = np.stack(updates)
        est = np.empty(xs.shape[1])
        reports = []
        for i, (sl, cfg) in enumerate(zip(self.groups, self.configs)):
            part, self.states[i] = run_round(self.states[i], cfg, xs[:, sl], self.diagnostics)
            est[sl] = part
            reports.append(self.states[i].last_report)
        return AggregateResult(est, _merge_reports(reports))

    def bits_per_entry(self, n_users):
        return float(math.ceil(math.log2(self.modulus)))


def _merge_reports(reports) -> dict:
    first = reports[0]
    if len(reports) == 1:
        r = first
        return {
            "sigma_circle": r.sigma_circle,
            "sigma_value": r.sigma_value,
            "t": r.t_used,
            "b": r.bin_used,
            "t_next": r.t_next,
            "b_next": r.bin_next,
            "wrap_fraction_est": r.predicted_wrap_fraction,
            "wrap_fraction_actual": r.actual_wrap_fraction,
            "undefined": r.undefined,
            "update_norms": r.update_norms,
            "rotated_norms": r.rotated_norms,
        }
    # per-layer tuning: report the worst group so one row still summarizes the round
    defined = [r for r in reports if not r.undefined]
    worst = max(defined, key=lambda r: r.predicted_wrap_fraction) if defined else first
    return {
        "sigma_circle": worst.sigma_circle,
        "sigma_value": worst.sigma_value,
        "t": worst.t_used,
        "b": worst.bin_used,
        "t_next": worst.t_next,
        "b_next": worst.bin_next,
        "wrap_fraction_est": worst.predicted_wrap_fraction,
        "wrap_fraction_actual": max((r.actual_wrap_fraction or 0.0) for r in reports)
        if first.actual_wrap_fraction is not None else None,
        "undefined": any(r.undefined for r in reports),
        "groups": reports,
    }


def server_round(params: ModelParams, cohort_updates, aggregator, round_idx: int = 0):
    """Apply the mean update. Returns (new params, AggregateResult)."""
    updates = [np.asarray(u, dtype=np.float64) for u in cohort_updates]
    if not updates:
        raise ValueError("empty cohort")
    if any(u.shape != (params.dim,) for u in updates):
        raise DimensionError(f"every update must have length {params.dim}")
    result = aggregator(updates, round_idx)
    return params.with_values(params.values + result.estimate / len(updates)), result


# --------------------------------------------------------------------------
# Training loop


@dataclass(frozen=True)
class RoundRecord:
    round: int
    cohort: np.ndarray
    eval_accuracy: float
    train_loss: float
    diagnostics: dict
    clear_sum_mse: float | None = None


def federated_training(
    params: ModelParams,
    clients: list[ClientDataset],
    eval_set: ClientDataset,
    cohort: CohortSpec,
    aggregator,
    rounds: int,
    lr: float = 0.1,
    batch_size: int = 10,
    epochs: int = 1,
    seed: int = 0,
    paired: bool = False,
) -> Iterator[tuple[ModelParams, RoundRecord]]:
    """Run FedAvg for ``rounds`` rounds, yielding params and a record after each.

    ``paired`` also sums the raw updates in the clear and reports the
    per-entry MSE of the aggregator's estimate. A real deployment cannot do this.
    """
    train_x, train_y = pooled(clients)
    for r in range(rounds):
        ids = cohort.sample(r)
        updates = [
            local_update(params, clients[c], lr, batch_size, epochs, rng.derive_seed(seed, "client", int(c), r))
            for c in ids
        ]
        params, result = server_round(params, updates, aggregator, r)
        mse = None
        if paired:
            mse = float(np.mean((result.estimate - np.sum(updates, axis=0)) ** 2))
        record = RoundRecord(
            round=r,
            cohort=ids,
            eval_accuracy=accuracy(params, eval_set.features, eval_set.labels),
            train_loss=loss(params, params.values, train_x, train_y),
            diagnostics=result.diagnostics,
            clear_sum_mse=mse,
        )
        yield params, record
