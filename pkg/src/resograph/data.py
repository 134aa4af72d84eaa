"""Datasets of fixed-length multichannel series, on disk and in memory.

On-disk layout (one directory per dataset):

    meta        key=value lines: timesteps, channels, classes, class_names
                (comma separated), samples
    values.bin  float32 little-endian, sample-major then time then channel,
                so the file is exactly samples*T*C*4 bytes
    labels.csv  header sample_id,subject_id,label; one row per sample in
                payload order

Values are stored 32-bit and widened to float64 on load; all computation
stays 64-bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DatasetFormatError, SplitError
from .tensor import Tensor

_META_KEYS = ("timesteps", "channels", "classes", "class_names", "samples")


@dataclass
class SeriesSample:
    """One recording: values [T, C], an integer label, and identity."""

    values: Tensor
    label: int
    subject_id: str
    sample_id: str


@dataclass
class Dataset:
    samples: list
    timesteps: int
    channels: int
    classes: int
    class_names: list

    # stacked [N, T, C] view shared with the per-sample tensors
    values: np.ndarray = field(repr=False, default=None)
    labels: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.samples)

    @property
    def subject_ids(self) -> list:
        return [s.subject_id for s in self.samples]

    @staticmethod
    def from_arrays(values: np.ndarray, labels, subject_ids, sample_ids,
                    classes: int, class_names=None) -> "Dataset":
        values = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
        if values.ndim != 3:
            raise DatasetFormatError(f"values must be [N, T, C], got shape {values.shape}")
        n, t, c = values.shape
        labels = np.asarray(labels, dtype=np.int64)
        if not (len(labels) == len(subject_ids) == len(sample_ids) == n):
            raise DatasetFormatError(
                f"{n} samples but {len(labels)} labels, {len(subject_ids)} subjects, "
                f"{len(sample_ids)} ids"
            )
        if len(set(sample_ids)) != n:
            raise DatasetFormatError("duplicate sample_id values")
        if n and (labels.min() < 0 or labels.max() >= classes):
            raise DatasetFormatError(
                f"labels must lie in [0, {classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        if not np.isfinite(values).all():
            raise DatasetFormatError("non-finite values in series data")
        if class_names is None:
            class_names = [f"class_{i}" for i in range(classes)]
        if len(class_names) != classes:
            raise DatasetFormatError(
                f"{len(class_names)} class names for {classes} classes"
            )
        samples = [
            SeriesSample(Tensor(values[i]), int(labels[i]), str(subject_ids[i]),
                         str(sample_ids[i]))
            for i in range(n)
        ]
        return Dataset(samples, t, c, classes, list(class_names), values, labels)

    def subset(self, indices) -> "Dataset":
        indices = list(indices)
        return Dataset.from_arrays(
            self.values[indices],
            self.labels[indices],
            [self.samples[i].subject_id for i in indices],
            [self.samples[i].sample_id for i in indices],
            self.classes,
            self.class_names,
        )


def save_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    names = ",".join(dataset.class_names)
    if any("," in n or "\n" in n for n in dataset.class_names):
        raise DatasetFormatError("class names must not contain commas or newlines")
    meta = (
        f"timesteps={dataset.timesteps}\n"
        f"channels={dataset.channels}\n"
        f"classes={dataset.classes}\n"
        f"class_names={names}\n"
        f"samples={len(dataset)}\n"
    )
    (path / "meta").write_text(meta)
    (path / "values.bin").write_bytes(
        np.ascontiguousarray(dataset.values, dtype="<f4").tobytes()
    )
    with open(path / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "subject_id", "label"])
        for s in dataset.samples:
            writer.writerow([s.sample_id, s.subject_id, s.label])


def _parse_meta(text: str) -> dict:
    parsed = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DatasetFormatError(f"meta line {line_no} is not key=value: {raw!r}")
        key, value = line.split("=", 1)
        parsed[key.strip()] = value.strip()
    missing = [k for k in _META_KEYS if k not in parsed]
    if missing:
        raise DatasetFormatError(f"meta is missing keys: {', '.join(missing)}")
    out = {}
    for key in ("timesteps", "channels", "classes", "samples"):
        try:
            out[key] = int(parsed[key])
        except ValueError:
            raise DatasetFormatError(f"meta {key}={parsed[key]!r} is not an integer") from None
        if out[key] < 0 or (key != "samples" and out[key] == 0):
            raise DatasetFormatError(f"meta {key}={out[key]} out of range")
    out["class_names"] = parsed["class_names"].split(",") if parsed["class_names"] else []
    return out


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta_path = path / "meta"
    if not meta_path.is_file():
        raise DatasetFormatError(f"no meta file in {path}")
    meta = _parse_meta(meta_path.read_text())
    n, t, c = meta["samples"], meta["timesteps"], meta["channels"]

    payload = (path / "values.bin").read_bytes() if (path / "values.bin").is_file() else None
    if payload is None:
        raise DatasetFormatError(f"no values.bin in {path}")
    expected = n * t * c * 4
    if len(payload) != expected:
        raise DatasetFormatError(
            f"values.bin holds {len(payload)} bytes, meta implies {expected} "
            f"({n} samples x {t} x {c} float32)"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(n, t, c).astype(np.float64)

    labels_path = path / "labels.csv"
    if not labels_path.is_file():
        raise DatasetFormatError(f"no labels.csv in {path}")
    sample_ids, subject_ids, labels = [], [], []
    with open(labels_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["sample_id", "subject_id", "label"]:
            raise DatasetFormatError("labels.csv header must be sample_id,subject_id,label")
        for row_no, row in enumerate(reader, 2):
            if len(row) != 3:
                raise DatasetFormatError(f"labels.csv row {row_no} has {len(row)} fields")
            sample_ids.append(row[0])
            subject_ids.append(row[1])
            try:
                labels.append(int(row[2]))
            except ValueError:
                raise DatasetFormatError(
                    f"labels.csv row {row_no}: label {row[2]!r} is not an integer"
                ) from None
    if len(sample_ids) != n:
        raise DatasetFormatError(f"labels.csv lists {len(sample_ids)} samples, meta says {n}")
    return Dataset.from_arrays(values, labels, subject_ids, sample_ids,
                               meta["classes"], meta["class_names"])


# -- synthetic corpus ------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings for the synthetic classification corpus.

    Each class gets a fixed signature: a sum of sinusoids at class-specific
    integer frequencies (cycles per window) with per-channel phases, each
    scaled by `signature_amplitude`. Every sample is signature + white noise
    + baseline wander, where the wander is a slow sinusoid plus a per-channel
    constant offset, both scaled by `wander_amplitude`. Subjects each carry
    `samples_per_subject` samples of a single class.

    The default amplitude keeps the per-sinusoid signal well below the noise
    floor so difficulty is governed by `noise_sigma` and `wander_amplitude`
    rather than saturating at any tested setting.
    """

    timesteps: int = 128
    channels: int = 4
    classes: int = 3
    subjects_per_class: tuple = (5,)
    samples_per_subject: int = 10
    noise_sigma: float = 0.5
    signature_amplitude: float = 0.25
    wander_amplitude: float = 0.0
    wander_period_range: tuple = None
    signature_freqs: tuple = None     # per class, cycles per window
    sinusoids_per_class: int = 3

    def __post_init__(self):
        per_class = self.subjects_per_class
        if isinstance(per_class, int):
            per_class = (per_class,) * self.classes
        per_class = tuple(int(v) for v in per_class)
        if len(per_class) == 1:
            per_class = per_class * self.classes
        if len(per_class) != self.classes:
            raise SplitError(
                f"{len(per_class)} subject counts for {self.classes} classes"
            )
        object.__setattr__(self, "subjects_per_class", per_class)
        if self.timesteps < 2 or self.channels < 1 or self.classes < 2:
            raise SplitError("synth config needs T >= 2, C >= 1, K >= 2")
        if min(per_class) < 1 or self.samples_per_subject < 1:
            raise SplitError("need at least one subject per class and one sample per subject")
        if not self.signature_amplitude > 0.0:
            raise SplitError("signature_amplitude must be positive")

    def class_frequencies(self) -> tuple:
        if self.signature_freqs is not None:
            return tuple(tuple(f) for f in self.signature_freqs)
        # disjoint interleaved sets, e.g. K=3: (3,9,15), (5,11,17), (7,13,19)
        pool = [3 + 2 * i for i in range(self.classes * self.sinusoids_per_class)]
        return tuple(
            tuple(pool[k::self.classes][: self.sinusoids_per_class])
            for k in range(self.classes)
        )


def synth_generate(config: SynthConfig, seed: int) -> Dataset:
    """Deterministic synthetic dataset; identical (config, seed) -> identical data."""
    rng = np.random.default_rng(seed)
    t, c = config.timesteps, config.channels
    time_axis = np.arange(t)
    freqs = config.class_frequencies()
    signatures = np.zeros((config.classes, t, c))
    for k in range(config.classes):
        for f in freqs[k]:
            phases = rng.uniform(0.0, 2.0 * np.pi, size=c)
            signatures[k] += config.signature_amplitude * np.sin(
                2.0 * np.pi * f * time_axis[:, None] / t + phases[None, :]
            )

    lo, hi = config.wander_period_range or (float(t), 4.0 * float(t))
    values, labels, subject_ids, sample_ids = [], [], [], []
    subject_no = 0
    for k, n_subjects in enumerate(config.subjects_per_class):
        for _ in range(n_subjects):
            subject = f"s{subject_no:04d}"
            subject_no += 1
            for r in range(config.samples_per_subject):
                x = signatures[k] + rng.normal(0.0, config.noise_sigma, size=(t, c))
                if config.wander_amplitude > 0.0:
                    a = config.wander_amplitude
                    offsets = rng.uniform(-a, a, size=c)
                    periods = rng.uniform(lo, hi, size=c)
                    drift_phase = rng.uniform(0.0, 2.0 * np.pi, size=c)
                    drift = a * np.sin(
                        2.0 * np.pi * time_axis[:, None] / periods[None, :]
                        + drift_phase[None, :]
                    )
                    x = x + offsets[None, :] + drift
                values.append(x)
                labels.append(k)
                subject_ids.append(subject)
                sample_ids.append(f"{subject}_r{r:03d}")
    return Dataset.from_arrays(
        np.stack(values), labels, subject_ids, sample_ids, config.classes
    )


# -- splits ----------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    """How to cut a dataset: mode 'sample_based' or 'subject_based', ratios, seed."""

    mode: str
    ratios: tuple = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("sample_based", "subject_based"):
            raise SplitError(f"unknown split mode {self.mode!r}")
        ratios = tuple(float(r) for r in self.ratios)
        object.__setattr__(self, "ratios", ratios)
        if len(ratios) != 3 or any(r < 0 for r in ratios):
            raise SplitError(f"ratios must be three non-negative numbers, got {ratios}")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise SplitError(f"ratios must sum to 1, got {sum(ratios)}")


def _largest_remainder(total: int, ratios) -> list:
    """Integer counts summing to `total`, proportional to `ratios`."""
    quotas = [total * r for r in ratios]
    counts = [int(q) for q in quotas]
    short = total - sum(counts)
    remainders = sorted(
        range(len(ratios)), key=lambda i: (quotas[i] - counts[i], -i), reverse=True
    )
    for i in remainders[:short]:
        counts[i] += 1
    return counts


def split_dataset(dataset: Dataset, spec: SplitSpec):
    """Partition into (train, val, test) datasets according to `spec`."""
    if spec.mode == "sample_based":
        return _split_samples(dataset, spec)
    return _split_subjects(dataset, spec)


def _check_counts(counts, ratios, what: str):
    for count, ratio in zip(counts, ratios):
        if ratio > 0 and count == 0:
            raise SplitError(
                f"ratio {ratio} demands a non-empty partition but only got {count} {what}"
            )


def _split_samples(dataset: Dataset, spec: SplitSpec):
    n = len(dataset)
    if n == 0:
        raise SplitError("cannot split an empty dataset")
    order = np.random.default_rng(spec.seed).permutation(n)
    counts = _largest_remainder(n, spec.ratios)
    _check_counts(counts, spec.ratios, "samples")
    edges = np.cumsum(counts)[:-1]
    parts = np.split(order, edges)
    return tuple(dataset.subset(sorted(p.tolist())) for p in parts)


def _split_subjects(dataset: Dataset, spec: SplitSpec):
    subjects = sorted(set(dataset.subject_ids))
    if len(subjects) < 3:
        raise SplitError(f"subject-based split needs >= 3 subjects, got {len(subjects)}")
    order = np.random.default_rng(spec.seed).permutation(len(subjects))
    counts = _largest_remainder(len(subjects), spec.ratios)
    _check_counts(counts, spec.ratios, "subjects")
    edges = np.cumsum(counts)[:-1]
    parts = np.split(order, edges)
    out = []
    for part in parts:
        chosen = {subjects[i] for i in part.tolist()}
        indices = [i for i, s in enumerate(dataset.subject_ids) if s in chosen]
        if not indices and part.size:
            raise SplitError("subject partition maps to zero samples")
        out.append(dataset.subset(indices))
    train, val, test = out
    return train, val, test


# -- standardization -------------------------------------------------------

_STD_FLOOR = 1e-8


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and floored standard deviation from a training split."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


def channel_stats(dataset: Dataset) -> ChannelStats:
    if len(dataset) == 0:
        raise SplitError("cannot compute channel stats of an empty dataset")
    flat = dataset.values.reshape(-1, dataset.channels)
    std = flat.std(axis=0)
    return ChannelStats(flat.mean(axis=0), np.maximum(std, _STD_FLOOR))


def standardize(train: Dataset, *others: Dataset):
    """Scale every split with the train split's per-channel stats.

    Returns (train', others'..., stats). A constant channel divides by the
    1e-8 floor and therefore maps to zero.
    """
    stats = channel_stats(train)
    scaled = []
    for ds in (train,) + others:
        scaled.append(Dataset.from_arrays(
            stats.apply(ds.values), ds.labels,
            ds.subject_ids, [s.sample_id for s in ds.samples],
            ds.classes, ds.class_names,
        ))
    return (*scaled, stats)
