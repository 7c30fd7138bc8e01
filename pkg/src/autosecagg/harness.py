"""Experiment configs, metrics files and communication accounting."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import fedsim
from .autotune import AutotuneConfig
from .errors import ConfigError, IoError

SCHEMA_VERSION = 1

METRIC_COLUMNS = (
    "round",
    "eval_accuracy",
    "train_loss",
    "sigma_circle",
    "sigma_value",
    "t",
    "b",
    "sigma_over_t",
    "wrap_fraction_est",
    "wrap_fraction_actual",
    "bits_per_entry",
    "clear_sum_mse",
    "fit_undefined",
)

AGGREGATORS = ("clear", "clip", "autotune")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "run"
    # task
    n_clients: int = 100
    examples_per_client: int = 50
    input_dim: int = 32
    n_classes: int = 10
    class_sep: float = 1.0
    eval_size: int = 2000
    hidden: int = 0
    # cohort and local optimizer
    participation: float = 0.1
    lr: float = 0.1
    batch_size: int = 10
    epochs: int = 1
    # aggregation
    aggregator: str = "autotune"
    alpha: float = 0.05
    modulus: int = 2**8
    initial_t: float = 1.0
    rounding: str = "stochastic"
    rotation_seed_policy: str = "fresh"
    ema: float = 0.0
    undefined_growth: float = 1.0
    per_layer: bool = False
    clip_range: float = 0.05
    clip_bits: int = 8
    clip_rotate: bool = False
    # run
    rounds: int = 200
    seed: int = 0
    output: str = "runs"
    paired: bool = False
    jsonl: bool = False

    def validate(self) -> "ExperimentConfig":
        """Raise ConfigError naming the first bad field; returns self."""
        for f in fields(self):
            value = getattr(self, f.name)
            expected = {"int": int, "float": (int, float), "str": str, "bool": bool}[f.type]
            if isinstance(value, bool) and f.type != "bool" or not isinstance(value, expected):
                raise ConfigError(f"{f.name}: expected {f.type}, got {value!r}")
        positive = ("n_clients", "examples_per_client", "input_dim", "n_classes", "eval_size",
                    "batch_size", "epochs", "initial_t", "clip_range", "clip_bits")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive, got {getattr(self, name)!r}")
        checks = [
            ("hidden", self.hidden >= 0, "must be >= 0"),
            ("participation", 0 < self.participation <= 1, "must lie in (0, 1]"),
            ("lr", self.lr >= 0, "must be >= 0"),
            ("aggregator", self.aggregator in AGGREGATORS, f"must be one of {AGGREGATORS}"),
            ("alpha", 0 < self.alpha < 1, "must lie in (0, 1)"),
            ("modulus", 2 <= self.modulus <= 2**32, "must lie in [2, 2**32]"),
            ("rounding", self.rounding in ("stochastic", "nearest"), "must be stochastic or nearest"),
            ("rotation_seed_policy", self.rotation_seed_policy in ("fresh", "fixed"), "must be fresh or fixed"),
            ("ema", 0 <= self.ema < 1, "must lie in [0, 1)"),
            ("undefined_growth", self.undefined_growth >= 1, "must be >= 1"),
            ("clip_bits", self.clip_bits <= 24, "must be <= 24"),
            ("rounds", self.rounds >= 0, "must be >= 0"),
            ("seed", 0 <= self.seed < 2**64, "must lie in [0, 2**64)"),
            ("name", bool(self.name) and "/" not in self.name, "must be a non-empty file stem"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{name}: {msg}, got {getattr(self, name)!r}")
        return self

    def autotune_config(self) -> AutotuneConfig:
        return AutotuneConfig(
            alpha=self.alpha,
            modulus=self.modulus,
            initial_t=self.initial_t,
            seed=self.seed,
            rotation_seed_policy=self.rotation_seed_policy,
            rounding=self.rounding,
            ema=self.ema,
            undefined_growth=self.undefined_growth,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, value):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"{key}: unknown config key")
    kind = _FIELD_TYPES[key]
    if kind == "float" and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def config_from_mapping(mapping: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    updates = {}
    for key, value in mapping.items():
        if isinstance(value, dict):
            raise ConfigError(f"{key}: nested tables are not allowed; the config is flat key = value")
        updates[key] = _coerce(key, value)
    return dataclasses.replace(base, **updates).validate()


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value read as a TOML literal, else as a bare string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = (s.strip() for s in text.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            mapping = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    mapping.update(parse_override(o) for o in overrides)
    return config_from_mapping(mapping)


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for f in fields(config):
        v = getattr(config, f.name)
        lines.append(f"{f.name} = {json.dumps(v)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    eval_accuracy: float
    train_loss: float
    sigma_circle: float | None
    sigma_value: float | None
    t: float | None
    b: float | None
    sigma_over_t: float | None
    wrap_fraction_est: float | None
    wrap_fraction_actual: float | None
    bits_per_entry: float
    clear_sum_mse: float | None
    fit_undefined: bool | None

    def row(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in METRIC_COLUMNS]

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in METRIC_COLUMNS}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    return repr(v)


def metrics_from_record(record: fedsim.RoundRecord, bits: float) -> RoundMetrics:
    d = record.diagnostics
    sigma_value, t = d.get("sigma_value"), d.get("t")
    return RoundMetrics(
        round=record.round,
        eval_accuracy=record.eval_accuracy,
        train_loss=record.train_loss,
        sigma_circle=d.get("sigma_circle"),
        sigma_value=sigma_value,
        t=t,
        b=d.get("b"),
        sigma_over_t=sigma_value / t if sigma_value is not None and t else None,
        wrap_fraction_est=d.get("wrap_fraction_est", d.get("clip_fraction")),
        wrap_fraction_actual=d.get("wrap_fraction_actual"),
        bits_per_entry=bits,
        clear_sum_mse=record.clear_sum_mse,
        fit_undefined=d.get("undefined"),
    )


def read_metrics(path) -> list[dict]:
    """Parse a metrics CSV back into dicts of floats (None for empty cells)."""
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing schema line")
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if v != "" else None) for k, v in r.items()} for r in rows]


# --------------------------------------------------------------------------
# Running


def build_aggregator(config: ExperimentConfig, params: fedsim.ModelParams):
    if config.aggregator == "clear":
        return fedsim.ClearAggregator()
    if config.aggregator == "clip":
        return fedsim.ClipQuantizeAggregator(
            config.clip_range, 2**config.clip_bits, config.seed, config.clip_rotate, config.rounding
        )
    groups = params.layer_slices() if config.per_layer else None
    return fedsim.AutotunedAggregator(config.autotune_config(), groups, diagnostics=config.paired)


def iter_metrics(config: ExperimentConfig):
    """Run the configured training and yield one RoundMetrics per round."""
    config.validate()
    clients, eval_set = fedsim.make_synthetic_task(
        config.n_clients, config.examples_per_client, config.input_dim, config.n_classes,
        config.seed, config.eval_size, config.class_sep,
    )
    params = fedsim.init_model(config.input_dim, config.n_classes, config.hidden, config.seed)
    aggregator = build_aggregator(config, params)
    cohort = fedsim.CohortSpec(config.n_clients, config.participation, config.seed)
    bits = aggregator.bits_per_entry(cohort.size)
    for _, record in fedsim.federated_training(
        params, clients, eval_set, cohort, aggregator, config.rounds,
        config.lr, config.batch_size, config.epochs, config.seed, config.paired,
    ):
        yield metrics_from_record(record, bits)


def run_experiment(config: ExperimentConfig, out_dir=None) -> Path:
    """Write ``<out>/<name>.csv`` (and ``.jsonl`` when enabled); return the CSV path."""
    config.validate()
    out = Path(out_dir if out_dir is not None else config.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{config.name}.csv"
        jsonl = open(out / f"{config.name}.jsonl", "w") if config.jsonl else None
        try:
            with open(csv_path, "w", newline="") as fh:
                fh.write(f"# autosecagg-metrics schema={SCHEMA_VERSION}\n")
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(METRIC_COLUMNS)
                for m in iter_metrics(config):
                    writer.writerow(m.row())
                    if jsonl:
                        jsonl.write(json.dumps(m.as_dict()) + "\n")
        finally:
            if jsonl:
                jsonl.close()
        (out / f"{config.name}.config.toml").write_text(dump_config(config))
    except OSError as exc:
        raise IoError(f"writing metrics under {out}: {exc}") from exc
    return csv_path


def sweep(config: ExperimentConfig, param: str, values, out_dir=None) -> list[Path]:
    """One run per value of ``param``; file stems get a ``_<param>-<value>`` suffix."""
    paths = []
    for v in values:
        cfg = config_from_mapping({param: v, "name": f"{config.name}_{param}-{v}"}, base=config)
        paths.append(run_experiment(cfg, out_dir))
    return paths


# --------------------------------------------------------------------------
# Communication accounting


def ceil_log2(n: int) -> int:
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return (n - 1).bit_length()


@dataclass(frozen=True)
class BandwidthReport:
    n_users: int
    levels: int
    dim: int
    clip_bits: int
    secagg_bits: int
    autotune_bits: int
    secagg_expansion: float
    autotune_expansion: float
    autotune_vs_secagg: float

    @property
    def bits_per_vector(self) -> dict[str, int]:
        return {
            "clip": self.clip_bits * self.dim,
            "secagg": self.secagg_bits * self.dim,
            "autotune": self.autotune_bits * self.dim,
        }

    def lines(self) -> list[str]:
        return [
            f"users n = {self.n_users}, levels = {self.levels}, dim = {self.dim}",
            f"clip baseline (clear):   {self.clip_bits} bits/entry",
            f"secagg with k = n*levels: {self.secagg_bits} bits/entry  "
            f"({self.secagg_expansion:g}x over clear)",
            f"autotuned fixed k:        {self.autotune_bits} bits/entry  "
            f"({self.autotune_expansion:g}x over clear, {self.autotune_vs_secagg:g}x of secagg)",
        ]


def bandwidth_report(n: int, levels: int, d: int = 1, autotune_modulus: int = 2**8) -> BandwidthReport:
    """Bits per entry for the clip baseline, its overflow-free SecAgg modulus, and fixed-k autotuning."""
    for name, v in [("n", n), ("levels", levels), ("d", d), ("autotune_modulus", autotune_modulus)]:
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    clip_bits = max(1, ceil_log2(levels))
    secagg_bits = ceil_log2(n * levels) if n * levels > 1 else 1
    secagg_bits = max(secagg_bits, clip_bits)
    auto_bits = max(1, ceil_log2(autotune_modulus))
    return BandwidthReport(
        n_users=n,
        levels=levels,
        dim=d,
        clip_bits=clip_bits,
        secagg_bits=secagg_bits,
        autotune_bits=auto_bits,
        secagg_expansion=secagg_bits / clip_bits,
        autotune_expansion=auto_bits / clip_bits,
        autotune_vs_secagg=auto_bits / secagg_bits,
    )
