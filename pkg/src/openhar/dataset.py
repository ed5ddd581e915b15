"""Labelled recording ingestion, resampling, windowing, and fold planning.

Input CSVs carry one row per timestep with subject, label, and channel
columns; a small key-value schema file maps those roles onto column names
and declares the sample rate. Recordings are cut at every (subject, label)
change, so one file typically yields one recording per activity segment.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import FormatError, SampleParseError, SchemaError


@dataclass
class Recording:
    """One subject's contiguous multichannel stream with per-timestep labels."""

    subject_id: str
    channels: np.ndarray  # (C, T)
    channel_names: list[str]
    sample_rate_hz: float
    labels: np.ndarray  # (T,) strings

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=float)
        if self.channels.ndim != 2:
            raise ValueError("channels must be a (C, T) matrix")
        c, t = self.channels.shape
        if c < 1 or t < 1:
            raise ValueError("need at least one channel and one sample")
        if len(self.channel_names) != c:
            raise ValueError("one name per channel required")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        labels = np.asarray(self.labels, dtype=object)
        if labels.ndim == 0:
            labels = np.full(t, str(labels), dtype=object)
        if labels.shape != (t,):
            raise ValueError("labels must match the sample count")
        self.labels = labels

    @property
    def duration_seconds(self) -> float:
        return self.channels.shape[1] / self.sample_rate_hz


@dataclass
class Window:
    """Fixed-length multichannel segment; the classification unit."""

    data: np.ndarray  # (C, L)
    label: str
    subject_id: str
    window_id: int


@dataclass
class FoldPlan:
    """Subject-wise cross-validation plan: (train_subjects, test_subjects) pairs."""

    folds: list[tuple[tuple[str, ...], tuple[str, ...]]]

    def to_json(self) -> str:
        payload = [
            {"train": list(tr), "test": list(te)} for tr, te in self.folds
        ]
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        payload = json.loads(text)
        return cls([(tuple(f["train"]), tuple(f["test"])) for f in payload])


@dataclass
class DatasetSchema:
    """Column-role mapping for CSV ingestion."""

    subject_column: str
    label_column: str
    channel_columns: list[str]
    sample_rate_hz: float
    timestamp_column: str | None = None

    @classmethod
    def from_file(cls, path) -> "DatasetSchema":
        entries: dict[str, str] = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
        for required in ("subject", "label", "channels", "sample_rate_hz"):
            if required not in entries:
                raise SchemaError(f"{path}: schema is missing {required!r}")
        try:
            rate = float(entries["sample_rate_hz"])
        except ValueError:
            raise SchemaError(f"{path}: sample_rate_hz must be numeric") from None
        if rate <= 0:
            raise SchemaError(f"{path}: sample_rate_hz must be positive")
        channels = [c.strip() for c in entries["channels"].split(",") if c.strip()]
        if not channels:
            raise SchemaError(f"{path}: 'channels' lists no columns")
        return cls(
            subject_column=entries["subject"],
            label_column=entries["label"],
            channel_columns=channels,
            sample_rate_hz=rate,
            timestamp_column=entries.get("timestamp") or None,
        )


def _numeric_column(frame: pd.DataFrame, col: str, path) -> np.ndarray:
    try:
        return frame[col].to_numpy(dtype=float)
    except (TypeError, ValueError):
        pass
    # slow path only to locate the offending row for the error message
    for i, cell in enumerate(frame[col]):
        try:
            float(cell)
        except (TypeError, ValueError):
            raise SampleParseError(
                f"{path}: non-numeric value {cell!r} in column {col!r} "
                f"at data row {i}"
            ) from None
    raise SampleParseError(f"{path}: column {col!r} is not numeric")


def load_recordings(path, schema: DatasetSchema) -> list[Recording]:
    """Read CSV file(s) into one Recording per (subject, label) segment.

    ``path`` may be a single CSV or a directory of them (read in sorted
    order). Rows are taken in file order; a new recording starts whenever
    the subject or the label changes.
    """
    root = Path(path)
    if not root.exists():
        raise FileNotFoundError(f"dataset path does not exist: {root}")
    files = sorted(root.glob("*.csv")) if root.is_dir() else [root]
    if root.is_dir() and not files:
        warnings.warn(f"no CSV files found under {root}")
        return []

    recordings: list[Recording] = []
    for file in files:
        try:
            frame = pd.read_csv(file, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            warnings.warn(f"{file} is empty; skipping")
            continue
        if frame.empty:
            warnings.warn(f"{file} has no data rows; skipping")
            continue
        for role, col in (
            ("subject", schema.subject_column),
            ("label", schema.label_column),
        ):
            if col not in frame.columns:
                raise SchemaError(f"{file}: missing {role} column {col!r}")
        for col in schema.channel_columns:
            if col not in frame.columns:
                raise SchemaError(f"{file}: missing channel column {col!r}")

        values = np.vstack(
            [_numeric_column(frame, col, file) for col in schema.channel_columns]
        )
        subjects = frame[schema.subject_column].to_numpy(dtype=object)
        labels = frame[schema.label_column].to_numpy(dtype=object)

        change = (subjects[1:] != subjects[:-1]) | (labels[1:] != labels[:-1])
        bounds = [0] + (np.nonzero(change)[0] + 1).tolist() + [len(subjects)]
        for start, stop in zip(bounds[:-1], bounds[1:]):
            recordings.append(
                Recording(
                    subject_id=str(subjects[start]),
                    channels=values[:, start:stop],
                    channel_names=list(schema.channel_columns),
                    sample_rate_hz=schema.sample_rate_hz,
                    labels=labels[start:stop].copy(),
                )
            )
    return recordings


def resample(rec: Recording, target_hz: float) -> Recording:
    """Linear interpolation of all channels onto a uniform target grid.

    Output length is round(T * target_hz / source_hz); labels follow the
    nearest source timestep.
    """
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    src_hz = rec.sample_rate_hz
    t = rec.channels.shape[1]
    t_new = int(round(t * target_hz / src_hz))
    if t_new < 1:
        raise ValueError("recording too short for the requested rate")
    pos_target = np.arange(t_new) / target_hz
    pos_source = np.arange(t) / src_hz
    channels = np.vstack(
        [np.interp(pos_target, pos_source, ch) for ch in rec.channels]
    )
    nearest = np.clip(np.rint(pos_target * src_hz).astype(int), 0, t - 1)
    return Recording(
        subject_id=rec.subject_id,
        channels=channels,
        channel_names=list(rec.channel_names),
        sample_rate_hz=float(target_hz),
        labels=rec.labels[nearest].copy(),
    )


def make_windows(
    rec: Recording,
    window_seconds: float,
    overlap_fraction: float,
    id_start: int = 0,
) -> list[Window]:
    """Slice a recording into fixed-length windows with fractional overlap.

    A window keeps the strict-majority label of the timesteps it covers;
    windows where no label wins a strict majority are dropped. Recordings
    shorter than one window yield an empty list.
    """
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    length = int(round(window_seconds * rec.sample_rate_hz))
    if length < 1:
        raise ValueError("window_seconds too small for the sample rate")
    stride = max(1, int(round(length * (1.0 - overlap_fraction))))
    t = rec.channels.shape[1]
    if t < length:
        return []
    windows: list[Window] = []
    count = (t - length) // stride + 1
    for i in range(count):
        start = i * stride
        seg_labels = rec.labels[start : start + length]
        values, counts = np.unique(seg_labels.astype(str), return_counts=True)
        top = int(np.argmax(counts))
        if 2 * counts[top] <= length:  # no strict majority
            continue
        windows.append(
            Window(
                data=rec.channels[:, start : start + length].copy(),
                label=str(values[top]),
                subject_id=rec.subject_id,
                window_id=id_start + len(windows),
            )
        )
    return windows


def windows_from_recordings(
    recordings: list[Recording], window_seconds: float, overlap_fraction: float
) -> list[Window]:
    """Window every recording, assigning globally unique sequential ids."""
    out: list[Window] = []
    for rec in recordings:
        out.extend(
            make_windows(rec, window_seconds, overlap_fraction, id_start=len(out))
        )
    return out


def subject_kfold(
    windows: list[Window], subjects_per_fold: int, seed: int
) -> FoldPlan:
    """Shuffle subjects by seed and cut them into disjoint test groups.

    The last group may be smaller when the subject count does not divide
    evenly. Deterministic for a fixed seed.
    """
    if subjects_per_fold < 1:
        raise ValueError("subjects_per_fold must be positive")
    subjects = sorted({w.subject_id for w in windows})
    if len(subjects) < 2 * subjects_per_fold:
        raise ValueError(
            f"need at least {2 * subjects_per_fold} subjects for "
            f"subjects_per_fold={subjects_per_fold}, have {len(subjects)}"
        )
    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    folds = []
    for i in range(0, len(order), subjects_per_fold):
        test = tuple(sorted(order[i : i + subjects_per_fold]))
        train = tuple(sorted(set(subjects) - set(test)))
        folds.append((train, test))
    return FoldPlan(folds)


def hold_out_classes(
    windows: list[Window], ood_classes
) -> tuple[list[Window], list[Window]]:
    """Partition windows into (in-distribution, held-out) by class name."""
    ood = {str(c) for c in ood_classes}
    known = {w.label for w in windows}
    unknown = sorted(ood - known)
    if unknown:
        raise ValueError(
            f"unknown OOD classes {unknown}; known classes are {sorted(known)}"
        )
    id_windows = [w for w in windows if w.label not in ood]
    ood_windows = [w for w in windows if w.label in ood]
    return id_windows, ood_windows


# --- normalization ----------------------------------------------------------


def channel_stats(windows: list[Window]) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population std over all samples in the windows.

    Channels with (near-)zero variance get std 1 so normalization is a
    no-op there.
    """
    if not windows:
        raise ValueError("cannot compute statistics of zero windows")
    c = windows[0].data.shape[0]
    total = 0
    acc = np.zeros(c)
    acc_sq = np.zeros(c)
    for w in windows:
        acc += w.data.sum(axis=1)
        acc_sq += (w.data**2).sum(axis=1)
        total += w.data.shape[1]
    mean = acc / total
    var = np.maximum(acc_sq / total - mean**2, 0.0)
    std = np.sqrt(var)
    std = np.where(std < 1e-12, 1.0, std)
    return mean, std


def normalize_windows(
    windows: list[Window], mean: np.ndarray, std: np.ndarray
) -> list[Window]:
    return [
        Window(
            data=(w.data - mean[:, None]) / std[:, None],
            label=w.label,
            subject_id=w.subject_id,
            window_id=w.window_id,
        )
        for w in windows
    ]


# --- window archive ---------------------------------------------------------


def save_window_archive(
    path, windows: list[Window], channel_names: list[str], sample_rate_hz: float
) -> None:
    """Binary window archive (npz); byte-stable for identical inputs."""
    if not windows:
        raise ValueError("refusing to write an empty window archive")
    data = np.stack([w.data for w in windows])
    np.savez_compressed(
        path,
        data=data,
        window_id=np.array([w.window_id for w in windows], dtype=np.int64),
        subject=np.array([w.subject_id for w in windows], dtype=str),
        label=np.array([w.label for w in windows], dtype=str),
        channel_names=np.array(channel_names, dtype=str),
        sample_rate_hz=np.float64(sample_rate_hz),
    )


def load_window_archive(path) -> tuple[list[Window], list[str], float]:
    try:
        payload = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read window archive {path}: {exc}") from None
    required = {"data", "window_id", "subject", "label", "channel_names"}
    if not required <= set(payload.files):
        raise FormatError(f"window archive {path} is missing {sorted(required - set(payload.files))}")
    windows = [
        Window(
            data=payload["data"][i],
            label=str(payload["label"][i]),
            subject_id=str(payload["subject"][i]),
            window_id=int(payload["window_id"][i]),
        )
        for i in range(payload["data"].shape[0])
    ]
    names = [str(n) for n in payload["channel_names"]]
    rate = float(payload["sample_rate_hz"])
    return windows, names, rate


def write_manifest(path, windows: list[Window]) -> None:
    """CSV manifest (window_id, subject, label) next to the archive."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_id", "subject", "label"])
        for w in windows:
            writer.writerow([w.window_id, w.subject_id, w.label])
