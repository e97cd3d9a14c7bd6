"""Log-Mel filterbank features under the LF and MF configurations.

LF targets low-frequency rumbles (1 kHz rate, long windows); MF covers bird
and primate vocalizations (8 kHz rate, short windows). Outputs are fixed
shape so a downstream model sees uniform input dimensions, and a scalar
global mean/variance fitted on the training set normalizes all features.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .audio import AudioClip
from .errors import (
    ConfigMismatchError,
    DegenerateResolutionError,
    EmptyInputError,
    ParamError,
    SampleRateMismatchError,
)

LOG_ENERGY_FLOOR = 1e-10
LOG_FLOOR_VALUE = float(np.log(LOG_ENERGY_FLOOR))
NORM_EPSILON = 1e-8

FEATURE_MAGIC = b"PFGF"
FEATURE_VERSION = 1


@dataclass(frozen=True)
class MelConfig:
    name: str  # "LF" or "MF"
    sample_rate_hz: int
    win_s: float
    hop_s: float
    n_mels: int
    f_min_hz: float
    f_max_hz: float
    target_frames: int

    def __post_init__(self) -> None:
        if not (0 < self.f_min_hz < self.f_max_hz <= self.sample_rate_hz / 2):
            raise ParamError(f"{self.name}: need 0 < f_min < f_max <= Nyquist")
        if self.target_frames <= 0 or self.n_mels <= 0:
            raise ParamError(f"{self.name}: target_frames and n_mels must be positive")

    @property
    def win_len(self) -> int:
        return int(round(self.win_s * self.sample_rate_hz))

    @property
    def hop_len(self) -> int:
        return int(round(self.hop_s * self.sample_rate_hz))

    @property
    def n_fft(self) -> int:
        n = 1
        while n < self.win_len:
            n *= 2
        return n


LF_CONFIG = MelConfig(
    name="LF", sample_rate_hz=1000, win_s=0.750, hop_s=0.035,
    n_mels=128, f_min_hz=3.0, f_max_hz=250.0, target_frames=256,
)
MF_CONFIG = MelConfig(
    name="MF", sample_rate_hz=8000, win_s=0.100, hop_s=0.019,
    n_mels=128, f_min_hz=50.0, f_max_hz=4000.0, target_frames=512,
)

MEL_CONFIGS = {"LF": LF_CONFIG, "MF": MF_CONFIG}


@dataclass
class FeatureMatrix:
    """Fixed-shape log-Mel matrix [target_frames, n_mels] for one segment."""

    values: np.ndarray
    config_name: str
    normalized: bool = False
    segment_id: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ParamError(f"expected a 2-D matrix, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ParamError("feature matrix contains non-finite values")


@dataclass(frozen=True)
class GlobalStats:
    """Scalar mean/variance over every cell of the training matrices."""

    mean: float
    variance: float
    n_samples_seen: int
    config_name: str
    fit_segment_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.variance < 0:
            raise ParamError("variance must be >= 0")

    def to_record(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "n_samples_seen": self.n_samples_seen,
            "config_name": self.config_name,
            "fit_segment_ids": sorted(self.fit_segment_ids),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "GlobalStats":
        return cls(
            mean=float(rec["mean"]),
            variance=float(rec["variance"]),
            n_samples_seen=int(rec["n_samples_seen"]),
            config_name=rec["config_name"],
            fit_segment_ids=tuple(rec.get("fit_segment_ids", ())),
        )


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_centers(config: MelConfig) -> np.ndarray:
    """Center frequency (Hz) of each Mel band."""
    edges = np.linspace(hz_to_mel(config.f_min_hz), hz_to_mel(config.f_max_hz), config.n_mels + 2)
    return mel_to_hz(edges[1:-1])


def mel_filterbank(config: MelConfig, n_fft_bins: int) -> np.ndarray:
    """Triangular filters [n_mels, n_fft_bins], centers equally spaced in Mel.

    Adjacent filters cross exactly at each other's centers. Raises if the FFT
    resolution cannot give every band at least one positive weight.
    """
    expected_bins = config.n_fft // 2 + 1
    if n_fft_bins != expected_bins:
        raise ParamError(f"n_fft_bins {n_fft_bins} inconsistent with FFT size {config.n_fft}")
    freqs = np.fft.rfftfreq(config.n_fft, 1.0 / config.sample_rate_hz)
    in_range = np.count_nonzero((freqs >= config.f_min_hz) & (freqs <= config.f_max_hz))
    if in_range < config.n_mels:
        raise DegenerateResolutionError(
            f"{config.name}: {in_range} FFT bins inside [{config.f_min_hz}, "
            f"{config.f_max_hz}] Hz for {config.n_mels} Mel bands"
        )

    edges_hz = mel_to_hz(
        np.linspace(hz_to_mel(config.f_min_hz), hz_to_mel(config.f_max_hz), config.n_mels + 2)
    )
    fb = np.zeros((config.n_mels, n_fft_bins))
    for i in range(config.n_mels):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        fb[i] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    if np.any(fb.sum(axis=1) == 0.0):
        raise DegenerateResolutionError(f"{config.name}: some Mel filters have no FFT support")
    return fb


def featurize(clip: AudioClip, config: MelConfig, segment_id: str = "") -> FeatureMatrix:
    """Log-Mel matrix for one clip, padded/truncated to config.target_frames."""
    if clip.sample_rate_hz != config.sample_rate_hz:
        raise SampleRateMismatchError(
            f"clip at {clip.sample_rate_hz} Hz but {config.name} expects {config.sample_rate_hz} Hz"
        )
    win_len, hop_len, n_fft = config.win_len, config.hop_len, config.n_fft
    if len(clip.samples) < win_len:
        raise ParamError("clip shorter than one analysis window")

    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, win_len)[::hop_len]
    w = np.hanning(win_len + 1)[:-1]
    spec = np.fft.rfft(frames * w, n=n_fft, axis=1)
    power = np.abs(spec) ** 2
    coef = np.full(power.shape[1], 2.0)
    coef[0] = 1.0
    coef[-1] = 1.0
    power *= coef / (win_len**2 * np.mean(w**2))

    fb = mel_filterbank(config, n_fft // 2 + 1)
    mel_energy = power @ fb.T
    logmel = np.log(np.maximum(mel_energy, LOG_ENERGY_FLOOR))

    n_frames = logmel.shape[0]
    if n_frames >= config.target_frames:
        logmel = logmel[: config.target_frames]  # truncate trailing frames
    else:
        pad = np.full((config.target_frames - n_frames, config.n_mels), LOG_FLOOR_VALUE)
        logmel = np.vstack([logmel, pad])
    return FeatureMatrix(
        values=logmel.astype(np.float32),
        config_name=config.name,
        normalized=False,
        segment_id=segment_id or clip.source_id,
    )


def raw_frame_count(duration_s: float, config: MelConfig) -> int:
    """Frame count before padding/truncation: floor((dur - win)/hop) + 1."""
    n = int(round(duration_s * config.sample_rate_hz))
    return (n - config.win_len) // config.hop_len + 1


class StatsAccumulator:
    """One-pass mean/variance accumulator with associative merge."""

    def __init__(self, config_name: str = ""):
        self.config_name = config_name
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.segment_ids: list[str] = []

    def update(self, feature: FeatureMatrix) -> None:
        if self.config_name and feature.config_name != self.config_name:
            raise ConfigMismatchError(
                f"stats for {self.config_name} fed a {feature.config_name} matrix"
            )
        self.config_name = self.config_name or feature.config_name
        x = feature.values.astype(np.float64)
        n_b = x.size
        mean_b = float(x.mean())
        m2_b = float(((x - mean_b) ** 2).sum())
        self._combine(n_b, mean_b, m2_b)
        self.segment_ids.append(feature.segment_id)

    def merge(self, other: "StatsAccumulator") -> None:
        if other.n == 0:
            return
        if self.config_name and other.config_name != self.config_name:
            raise ConfigMismatchError("cannot merge accumulators from different configs")
        self.config_name = self.config_name or other.config_name
        self._combine(other.n, other.mean, other.m2)
        self.segment_ids.extend(other.segment_ids)

    def _combine(self, n_b: int, mean_b: float, m2_b: float) -> None:
        n_a, mean_a, m2_a = self.n, self.mean, self.m2
        n = n_a + n_b
        delta = mean_b - mean_a
        self.mean = mean_a + delta * n_b / n
        self.m2 = m2_a + m2_b + delta * delta * n_a * n_b / n
        self.n = n

    def finalize(self) -> GlobalStats:
        if self.n == 0:
            raise EmptyInputError("no matrices seen; cannot compute statistics")
        return GlobalStats(
            mean=self.mean,
            variance=self.m2 / self.n,
            n_samples_seen=self.n,
            config_name=self.config_name,
            fit_segment_ids=tuple(self.segment_ids),
        )


def fit_global_stats(features: Iterable[FeatureMatrix]) -> GlobalStats:
    """Scalar mean/variance over all cells of a (training) feature stream."""
    acc = StatsAccumulator()
    for feature in features:
        acc.update(feature)
    return acc.finalize()


def apply_global_stats(feature: FeatureMatrix, stats: GlobalStats) -> FeatureMatrix:
    """Normalize one matrix with the fitted global statistics."""
    if feature.config_name != stats.config_name:
        raise ConfigMismatchError(
            f"feature from {feature.config_name}, stats from {stats.config_name}"
        )
    scaled = (feature.values.astype(np.float64) - stats.mean) / np.sqrt(stats.variance + NORM_EPSILON)
    return replace(feature, values=scaled.astype(np.float32), normalized=True)


def write_feature_shard(
    path: str | Path,
    features: list[FeatureMatrix],
    meta: list[dict] | None = None,
) -> None:
    """Binary shard: PFGF magic, version, config, shape, float32 LE matrices.

    A sidecar <path>.meta.jsonl holds one metadata record per matrix, in order.
    """
    path = Path(path)
    if not features:
        raise EmptyInputError("refusing to write an empty shard")
    config_name = features[0].config_name
    normalized = features[0].normalized
    shape = features[0].values.shape
    for f in features:
        if f.config_name != config_name or f.values.shape != shape or f.normalized != normalized:
            raise ConfigMismatchError("all matrices in a shard must share config/shape/normalization")

    records = meta if meta is not None else [{"segment_id": f.segment_id} for f in features]
    if len(records) != len(features):
        raise ParamError("one metadata record per matrix required")

    # write to temp names, rename on success
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<I", FEATURE_VERSION))
        name = config_name.encode()
        fh.write(struct.pack("<H", len(name)))
        fh.write(name)
        fh.write(struct.pack("<B", 1 if normalized else 0))
        fh.write(struct.pack("<III", shape[0], shape[1], len(features)))
        for f in features:
            fh.write(f.values.astype("<f4").tobytes(order="C"))
    meta_path = path.with_suffix(path.suffix + ".meta.jsonl")
    meta_tmp = meta_path.with_name(f".{meta_path.name}.tmp")
    with open(meta_tmp, "w") as fh:
        for i, rec in enumerate(records):
            fh.write(json.dumps({"index": i, **rec}, sort_keys=True) + "\n")
    os.replace(tmp, path)
    os.replace(meta_tmp, meta_path)


def read_feature_shard(path: str | Path) -> tuple[list[FeatureMatrix], list[dict]]:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != FEATURE_MAGIC:
            raise ParamError(f"{path}: not a feature shard")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FEATURE_VERSION:
            raise ParamError(f"{path}: unsupported shard version {version}")
        (name_len,) = struct.unpack("<H", fh.read(2))
        config_name = fh.read(name_len).decode()
        (norm_flag,) = struct.unpack("<B", fh.read(1))
        frames, mels, count = struct.unpack("<III", fh.read(12))
        features = []
        for _ in range(count):
            buf = fh.read(frames * mels * 4)
            values = np.frombuffer(buf, dtype="<f4").reshape(frames, mels)
            features.append(
                FeatureMatrix(values=values.copy(), config_name=config_name,
                              normalized=bool(norm_flag))
            )
    meta_path = path.with_suffix(path.suffix + ".meta.jsonl")
    records: list[dict] = []
    if meta_path.exists():
        with open(meta_path) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        for f, rec in zip(features, records):
            f.segment_id = rec.get("segment_id", "")
    return features, records
