"""Training loop, run configuration, and checkpoint serialization."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .data import (Dataset, SplitSpec, channel_stats, load_dataset,
                   split_dataset, standardize)
from .exceptions import ConfigError, NumericError
from .metrics import EvalReport, compute_report
from .network import (ArchitectureConfig, ClassProbabilities, NetworkParams,
                      forward, init_params)
from .optim import Adam
from .tensor import Tensor, logsumexp

CHECKPOINT_DIR_ENV = "RESOGRAPH_CHECKPOINT_DIR"

LOG_HEADER = "epoch\ttrain_loss\tval_accuracy\tval_precision\tval_recall\tval_f1\tval_auroc"


@dataclass(frozen=True)
class RunConfig:
    """Flat configuration of one training run; every field has a config key."""

    dataset: str = ""
    split_mode: str = "subject_based"
    train_ratio: float = 0.6
    val_ratio: float = 0.2
    test_ratio: float = 0.2
    split_seed: int = 0
    seed: int = 0
    kernel_sizes: tuple = (2, 4, 8)
    embed_dim: int = 64
    heads: int = 4
    head_dim: int = 16
    attn_dim: int = 32
    layers: int = 2
    batch_size: int = 32
    epochs: int = 10
    learning_rate: float = 1e-4
    disable_da: bool = False
    disable_fcn: bool = False
    single_resolution: bool = False
    checkpoint_dir: str = "checkpoints"

    def __post_init__(self):
        object.__setattr__(self, "kernel_sizes",
                           tuple(int(k) for k in self.kernel_sizes))
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")

    def effective_kernels(self) -> tuple:
        return self.kernel_sizes[:1] if self.single_resolution else self.kernel_sizes

    def architecture(self) -> ArchitectureConfig:
        return ArchitectureConfig(
            kernel_sizes=self.effective_kernels(),
            embed_dim=self.embed_dim,
            heads=self.heads,
            head_dim=self.head_dim,
            attn_dim=self.attn_dim,
            layers=self.layers,
        )

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.split_mode,
                         (self.train_ratio, self.val_ratio, self.test_ratio),
                         self.split_seed)

    def resolved_checkpoint_dir(self) -> str:
        return os.environ.get(CHECKPOINT_DIR_ENV) or self.checkpoint_dir


_BOOL_VALUES = {"true": True, "1": True, "yes": True,
                "false": False, "0": False, "no": False}


def _parse_bool(raw: str) -> bool:
    try:
        return _BOOL_VALUES[raw.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {raw!r}") from None


def _parse_kernels(raw: str) -> tuple:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"kernel_sizes must be comma-separated ints, got {raw!r}") from None


_CONVERTERS = {
    "dataset": str,
    "split_mode": str,
    "train_ratio": float,
    "val_ratio": float,
    "test_ratio": float,
    "split_seed": int,
    "seed": int,
    "kernel_sizes": _parse_kernels,
    "embed_dim": int,
    "heads": int,
    "head_dim": int,
    "attn_dim": int,
    "layers": int,
    "batch_size": int,
    "epochs": int,
    "learning_rate": float,
    "disable_da": _parse_bool,
    "disable_fcn": _parse_bool,
    "single_resolution": _parse_bool,
    "checkpoint_dir": str,
}


def parse_config_text(text: str, base: RunConfig = None) -> RunConfig:
    """key=value lines -> RunConfig; '#' comments and blanks are skipped."""
    updates = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {line_no} is not key=value: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        updates[key] = value
    return apply_overrides(base or RunConfig(), updates)


def load_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text())


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Apply string key=value overrides on top of an existing config."""
    parsed = {}
    for key, raw in overrides.items():
        converter = _CONVERTERS.get(key)
        if converter is None:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            parsed[key] = converter(raw) if isinstance(raw, str) else raw
        except ConfigError:
            raise
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return replace(config, **parsed)


def config_to_text(config: RunConfig) -> str:
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


# -- loss ------------------------------------------------------------------


def cross_entropy(probabilities: ClassProbabilities, labels) -> Tensor:
    """Mean negative log-likelihood, fused log-softmax over the stored logits."""
    logits = probabilities.logits
    k = logits.shape[-1]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    if logits.ndim == 1:
        if labels.size != 1:
            raise ValueError(f"{labels.size} labels for a single sample")
        onehot = Tensor(np.eye(k)[labels[0]])
        return logsumexp(logits, axis=-1) - (logits * onehot).sum()
    if labels.size != logits.shape[0]:
        raise ValueError(f"{labels.size} labels for {logits.shape[0]} samples")
    onehot = Tensor(np.eye(k)[labels])
    per_sample = logsumexp(logits, axis=-1) - (logits * onehot).sum(axis=-1)
    return per_sample.mean()


# -- evaluation ------------------------------------------------------------


def predict_probabilities(params: NetworkParams, values: np.ndarray,
                          batch_size: int, disable_da: bool = False,
                          disable_fcn: bool = False) -> np.ndarray:
    """Forward [N, T, C] in batches; returns probabilities [N, K]."""
    chunks = []
    for start in range(0, len(values), batch_size):
        xb = Tensor(values[start : start + batch_size])
        out = forward(xb, params, disable_da=disable_da, disable_fcn=disable_fcn)
        chunks.append(out.probabilities.data)
    return np.concatenate(chunks, axis=0)


def evaluate(params: NetworkParams, dataset: Dataset, config: RunConfig) -> EvalReport:
    probs = predict_probabilities(params, dataset.values, config.batch_size,
                                  config.disable_da, config.disable_fcn)
    return compute_report(probs, dataset.labels, dataset.classes)


# -- training --------------------------------------------------------------


@dataclass
class FitResult:
    params: NetworkParams
    best_epoch: int
    best_f1: float
    history: list
    rng: np.random.Generator


def fit_model(train_ds: Dataset, val_ds, config: RunConfig, log=None) -> FitResult:
    """Train on `train_ds`; select the epoch with best validation macro F1.

    `val_ds` may be None or empty, in which case the final epoch wins and
    validation columns are logged as nan. The test split never enters here.
    """
    rng = np.random.default_rng(config.seed)
    params = init_params(config.architecture(), train_ds.channels,
                         train_ds.classes, train_ds.timesteps, rng)
    optimizer = Adam(params.parameters(), lr=config.learning_rate)
    history = [LOG_HEADER]
    if log:
        log(LOG_HEADER)

    have_val = val_ds is not None and len(val_ds) > 0
    best_f1 = -1.0
    best_epoch = 0
    best_snapshot = None
    n = len(train_ds)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            xb = Tensor(train_ds.values[batch])
            try:
                out = forward(xb, params, disable_da=config.disable_da,
                              disable_fcn=config.disable_fcn)
                loss = cross_entropy(out, train_ds.labels[batch])
            except NumericError as exc:
                raise NumericError(
                    f"training diverged at epoch {epoch}, "
                    f"batch {start // config.batch_size}: {exc}"
                ) from None
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise NumericError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch {start // config.batch_size}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total_loss += loss_value * len(batch)
        train_loss = total_loss / n

        if have_val:
            report = evaluate(params, val_ds, config)
            line = (f"{epoch}\t{train_loss:.6f}\t{report.accuracy:.6f}"
                    f"\t{report.precision_macro:.6f}\t{report.recall_macro:.6f}"
                    f"\t{report.f1_macro:.6f}\t{report.auroc_macro:.6f}")
            if report.f1_macro > best_f1:
                best_f1 = report.f1_macro
                best_epoch = epoch
                best_snapshot = [p.data.copy() for p in params.parameters()]
        else:
            line = f"{epoch}\t{train_loss:.6f}\tnan\tnan\tnan\tnan\tnan"
            best_epoch = epoch
        history.append(line)
        if log:
            log(line)

    if best_snapshot is not None:
        for p, data in zip(params.parameters(), best_snapshot):
            p.data = data
    return FitResult(params, best_epoch, best_f1, history, rng)


@dataclass
class TrainResult:
    checkpoint_path: str
    best_epoch: int
    best_f1: float
    history: list


def train(config: RunConfig, log=None) -> TrainResult:
    """Full run from an on-disk dataset: split, standardize, fit, checkpoint."""
    if not config.dataset:
        raise ConfigError("config has no dataset path")
    dataset = load_dataset(config.dataset)
    train_ds, val_ds, _ = split_dataset(dataset, config.split_spec())
    train_ds, val_ds, _stats = standardize(train_ds, val_ds)
    result = fit_model(train_ds, val_ds, config, log=log)
    ckpt_dir = Path(config.resolved_checkpoint_dir())
    save_checkpoint(ckpt_dir, result.params, config, result.best_epoch, result.rng)
    return TrainResult(str(ckpt_dir), result.best_epoch, result.best_f1, result.history)


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(path, params: NetworkParams, config: RunConfig,
                    epoch: int, rng: np.random.Generator) -> None:
    """Write `meta` (text) + `params.bin` (float64 little-endian payload)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    named = params.named_parameters()
    lines = [f"config.{line}" for line in config_to_text(config).splitlines()]
    lines.append(f"data_timesteps={params.input_length}")
    lines.append(f"data_channels={params.channels}")
    lines.append(f"data_classes={params.classes}")
    lines.append(f"epoch={epoch}")
    lines.append(f"rng_state={json.dumps(rng.bit_generator.state)}")
    for name, tensor in named:
        shape = ",".join(str(d) for d in tensor.shape)
        lines.append(f"tensor={name}:{shape}")
    (path / "meta").write_text("\n".join(lines) + "\n")
    payload = b"".join(
        np.ascontiguousarray(t.data, dtype="<f8").tobytes() for _, t in named
    )
    (path / "params.bin").write_bytes(payload)


@dataclass
class Checkpoint:
    params: NetworkParams
    config: RunConfig
    epoch: int
    rng_state: dict


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    meta_path = path / "meta"
    if not meta_path.is_file():
        raise ConfigError(f"no checkpoint meta in {path}")
    config_lines = []
    manifest = []
    scalars = {}
    for raw in meta_path.read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("config."):
            config_lines.append(line[len("config."):])
        elif line.startswith("tensor="):
            name, _, shape_text = line[len("tensor="):].partition(":")
            shape = tuple(int(d) for d in shape_text.split(",") if d)
            manifest.append((name, shape))
        else:
            key, _, value = line.partition("=")
            scalars[key] = value
    config = parse_config_text("\n".join(config_lines))
    for key in ("data_timesteps", "data_channels", "data_classes", "epoch"):
        if key not in scalars:
            raise ConfigError(f"checkpoint meta is missing {key}")
    t = int(scalars["data_timesteps"])
    c = int(scalars["data_channels"])
    k = int(scalars["data_classes"])
    params = init_params(config.architecture(), c, k, t, np.random.default_rng(0))
    named = params.named_parameters()
    if [(n, tuple(p.shape)) for n, p in named] != manifest:
        raise ConfigError("checkpoint manifest does not match its configuration")
    payload = (path / "params.bin").read_bytes()
    expected = sum(int(np.prod(s)) * 8 for _, s in manifest)
    if len(payload) != expected:
        raise ConfigError(
            f"params.bin holds {len(payload)} bytes, manifest implies {expected}"
        )
    offset = 0
    for _, tensor in named:
        count = tensor.size
        block = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        tensor.data = block.reshape(tensor.shape).copy()  # writable, frombuffer is not
        offset += count * 8
    rng_state = json.loads(scalars["rng_state"]) if "rng_state" in scalars else None
    return Checkpoint(params, config, int(scalars["epoch"]), rng_state)


def evaluate_checkpoint(checkpoint: Checkpoint, split: str) -> EvalReport:
    """Rebuild the run's splits from its config and evaluate one of them."""
    config = checkpoint.config
    if split not in ("train", "val", "test"):
        raise ConfigError(f"unknown split {split!r}")
    dataset = load_dataset(config.dataset)
    if dataset.timesteps != checkpoint.params.input_length or \
            dataset.channels != checkpoint.params.channels or \
            dataset.classes != checkpoint.params.classes:
        raise ConfigError(
            f"checkpoint expects T={checkpoint.params.input_length} "
            f"C={checkpoint.params.channels} K={checkpoint.params.classes}, dataset has "
            f"T={dataset.timesteps} C={dataset.channels} K={dataset.classes}"
        )
    train_ds, val_ds, test_ds = split_dataset(dataset, config.split_spec())
    stats = channel_stats(train_ds)
    chosen = {"train": train_ds, "val": val_ds, "test": test_ds}[split]
    scaled = Dataset.from_arrays(
        stats.apply(chosen.values), chosen.labels, chosen.subject_ids,
        [s.sample_id for s in chosen.samples], chosen.classes, chosen.class_names,
    )
    return evaluate(checkpoint.params, scaled, config)
