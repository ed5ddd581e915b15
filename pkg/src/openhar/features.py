"""Window-to-vector feature extraction: handcrafted stats, ECDF samples,
or externally computed embeddings matched by window id."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Window
from .errors import FormatError


@dataclass
class FeatureVector:
    values: np.ndarray
    feature_names: list[str]
    window_id: int


@dataclass(frozen=True)
class FeatureConfig:
    kind: str = "handcrafted"  # handcrafted | ecdf | external
    ecdf_points: int = 15
    external_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("handcrafted", "ecdf", "external"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.ecdf_points < 1:
            raise ValueError("ecdf_points must be positive")
        if self.kind == "external" and not self.external_path:
            raise ValueError("kind='external' requires external_path")


_STAT_NAMES = ("mean", "std", "range", "mad", "kurtosis", "skewness", "errnorm")


def _channel_stats(x: np.ndarray) -> list[float]:
    mu = float(x.mean())
    d = x - mu
    m2 = float((d**2).mean())
    std = float(np.sqrt(m2))
    spread = float(x.max() - x.min())
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med)))
    if m2 < 1e-24:  # flat channel: moments degenerate to 0 by convention
        kurt = 0.0
        skew = 0.0
    else:
        m3 = float((d**3).mean())
        m4 = float((d**4).mean())
        kurt = m4 / m2**2 - 3.0
        skew = m3 / m2**1.5
    errnorm = float(np.abs(d).mean())
    return [mu, std, spread, mad, kurt, skew, errnorm]


def handcrafted_features(w: Window, channel_names: list[str] | None = None) -> FeatureVector:
    """Seven order statistics and moments per channel.

    Per channel: mean, population std, range, median absolute deviation,
    excess kurtosis, skewness, and mean absolute deviation from the mean.
    """
    c, length = w.data.shape
    if length < 2:
        raise ValueError("need at least 2 samples per window")
    names = channel_names or [f"ch{i}" for i in range(c)]
    values: list[float] = []
    feature_names: list[str] = []
    for ci in range(c):
        values.extend(_channel_stats(w.data[ci]))
        feature_names.extend(f"{names[ci]}.{s}" for s in _STAT_NAMES)
    return FeatureVector(np.array(values), feature_names, w.window_id)


def ecdf_features(
    w: Window, n_points: int = 15, channel_names: list[str] | None = None
) -> FeatureVector:
    """Empirical CDF reads at n equally spaced quantile positions per channel.

    Positions are q_i = (i + 0.5) / n, read nearest-rank off the sorted
    samples, followed by the channel mean.
    """
    c, length = w.data.shape
    if n_points < 1:
        raise ValueError("n_points must be positive")
    if length < n_points:
        raise ValueError(f"window length {length} < n_points {n_points}")
    names = channel_names or [f"ch{i}" for i in range(c)]
    values: list[float] = []
    feature_names: list[str] = []
    for ci in range(c):
        srt = np.sort(w.data[ci])
        for i in range(n_points):
            idx = min((2 * i + 1) * length // (2 * n_points), length - 1)
            values.append(float(srt[idx]))
            feature_names.append(f"{names[ci]}.ecdf{i}")
        values.append(float(w.data[ci].mean()))
        feature_names.append(f"{names[ci]}.mean")
    return FeatureVector(np.array(values), feature_names, w.window_id)


def import_embeddings(path, windows: list[Window]) -> list[FeatureVector]:
    """Load externally computed vectors, one 'window_id, v0, ...' per line."""
    entries: dict[int, np.ndarray] = {}
    width: int | None = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        try:
            wid = int(parts[0])
            vec = np.array([float(p) for p in parts[1:]])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: malformed embedding record") from None
        if wid in entries:
            raise FormatError(f"{path}:{lineno}: duplicate window id {wid}")
        if vec.size == 0:
            raise FormatError(f"{path}:{lineno}: empty embedding vector")
        if width is None:
            width = vec.size
        elif vec.size != width:
            raise FormatError(
                f"{path}:{lineno}: vector length {vec.size} != expected {width}"
            )
        entries[wid] = vec
    missing = [w.window_id for w in windows if w.window_id not in entries]
    if missing:
        raise FormatError(f"{path}: missing embeddings for window ids {missing}")
    names = [f"e{j}" for j in range(width or 0)]
    return [FeatureVector(entries[w.window_id], names, w.window_id) for w in windows]


def export_features(features: list[FeatureVector], path) -> None:
    """Write the same line format import_embeddings reads (round-trippable)."""
    with open(path, "w") as fh:
        for fv in features:
            vals = ",".join(repr(float(v)) for v in fv.values)
            fh.write(f"{fv.window_id},{vals}\n")


def extract_features(
    windows: list[Window],
    config: FeatureConfig,
    channel_names: list[str] | None = None,
) -> list[FeatureVector]:
    """Dispatch on the configured feature kind; validates a uniform width."""
    if config.kind == "handcrafted":
        out = [handcrafted_features(w, channel_names) for w in windows]
    elif config.kind == "ecdf":
        out = [ecdf_features(w, config.ecdf_points, channel_names) for w in windows]
    else:
        out = import_embeddings(config.external_path, windows)
    widths = {fv.values.size for fv in out}
    if len(widths) > 1:
        raise FormatError(f"inconsistent feature widths {sorted(widths)}")
    for fv in out:
        if not np.all(np.isfinite(fv.values)):
            raise FormatError(f"non-finite feature values for window {fv.window_id}")
    return out


def feature_matrix(features: list[FeatureVector]) -> tuple[np.ndarray, list[int]]:
    """Stack vectors into an (N, F) matrix plus the window-id order."""
    if not features:
        raise ValueError("no feature vectors given")
    mat = np.stack([fv.values for fv in features])
    ids = [fv.window_id for fv in features]
    return mat, ids
