"""Training-time augmentation: spectrogram masks, propagation attenuation,
SNR-controlled mixup, and class-frequency augmentation probability.

Every random op takes a seeded generator and reports what it drew, so an
augmented sample can be replayed bit-exactly from its provenance record.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .audio import AudioClip
from .errors import ParamError, SampleRateMismatchError, ZeroBackgroundError
from .features import LOG_FLOOR_VALUE, FeatureMatrix, MelConfig, mel_band_centers

LN10_OVER_10 = float(np.log(10.0) / 10.0)  # dB -> natural-log energy units

ALPHA_RANGE_DB_PER_HZ = (0.002, 0.004)
SNR_RANGE_DB = (3.0, 15.0)

LIMITER_KNEE = 0.95


@dataclass(frozen=True)
class MaskParams:
    n_time_masks: int = 2
    max_time_frac: float = 0.10
    n_freq_masks: int = 2
    max_freq_bands: int = 16

    def __post_init__(self) -> None:
        if self.n_time_masks < 0 or self.n_freq_masks < 0:
            raise ParamError("mask counts must be >= 0")
        if not (0.0 <= self.max_time_frac <= 1.0):
            raise ParamError("max_time_frac must be in [0, 1]")
        if self.max_freq_bands < 0:
            raise ParamError("max_freq_bands must be >= 0")


@dataclass(frozen=True)
class MixupParams:
    snr_db: float
    background_id: str = ""

    def __post_init__(self) -> None:
        lo, hi = SNR_RANGE_DB
        if not (lo <= self.snr_db <= hi):
            raise ParamError(f"snr_db must be in [{lo}, {hi}] dB, got {self.snr_db}")


@dataclass(frozen=True)
class AttenuationParams:
    alpha_db_per_hz: float
    rng_seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = ALPHA_RANGE_DB_PER_HZ
        if not (lo <= self.alpha_db_per_hz <= hi):
            raise ParamError(f"alpha must be in [{lo}, {hi}] dB/Hz, got {self.alpha_db_per_hz}")


def spec_masks(
    feature: FeatureMatrix,
    params: MaskParams,
    rng: np.random.Generator,
) -> tuple[FeatureMatrix, list[dict]]:
    """Apply up to n time and n frequency masks; returns the drawn rectangles.

    Mask fill is the log floor for raw features and 0 for normalized ones;
    cells outside the rectangles are bit-identical to the input.
    """
    values = feature.values.copy()
    n_frames, n_bands = values.shape
    fill = 0.0 if feature.normalized else LOG_FLOOR_VALUE
    drawn: list[dict] = []

    max_time = int(params.max_time_frac * n_frames)
    for _ in range(params.n_time_masks):
        extent = int(rng.integers(0, max_time + 1))
        start = int(rng.integers(0, n_frames - extent + 1))
        if extent > 0:
            values[start : start + extent, :] = fill
        drawn.append({"axis": "time", "start": start, "extent": extent})

    max_freq = min(params.max_freq_bands, n_bands)
    for _ in range(params.n_freq_masks):
        extent = int(rng.integers(0, max_freq + 1))
        start = int(rng.integers(0, n_bands - extent + 1))
        if extent > 0:
            values[:, start : start + extent] = fill
        drawn.append({"axis": "freq", "start": start, "extent": extent})

    return replace(feature, values=values), drawn


def band_attenuation_db(band_centers_hz: np.ndarray, alpha_db_per_hz: float) -> np.ndarray:
    """Linear-in-frequency attenuation A(f) = alpha * f, in dB per band."""
    if alpha_db_per_hz < 0:
        raise ParamError("alpha must be >= 0")
    return alpha_db_per_hz * np.asarray(band_centers_hz, dtype=np.float64)


def propagation_attenuation(
    matrix: np.ndarray,
    band_centers_hz: np.ndarray,
    alpha_db_per_hz: float,
) -> np.ndarray:
    """Attenuate each band of a natural-log energy matrix by A(f) = alpha * f dB.

    Equivalent to scaling linear energies by 10^(-A/10); the time axis is
    untouched, and the op is exactly invertible by the negated gain.
    """
    matrix = np.asarray(matrix)
    att_db = band_attenuation_db(band_centers_hz, alpha_db_per_hz)
    if matrix.shape[1] != att_db.shape[0]:
        raise ParamError(
            f"matrix has {matrix.shape[1]} bands but {att_db.shape[0]} centers given"
        )
    return matrix - (att_db * LN10_OVER_10)[np.newaxis, :]


def attenuate_feature(
    feature: FeatureMatrix,
    config: MelConfig,
    alpha_db_per_hz: float,
) -> FeatureMatrix:
    """propagation_attenuation applied to a FeatureMatrix via its Mel centers."""
    if feature.config_name != config.name:
        raise ParamError(f"feature is {feature.config_name}, config is {config.name}")
    out = propagation_attenuation(
        feature.values.astype(np.float64), mel_band_centers(config), alpha_db_per_hz
    )
    return replace(feature, values=out.astype(np.float32))


def _soft_limit(samples: np.ndarray) -> np.ndarray:
    """tanh-shaped limiter above the knee; identity below it, output in (-1, 1)."""
    out = samples.copy()
    over = np.abs(samples) > LIMITER_KNEE
    span = 1.0 - LIMITER_KNEE
    out[over] = np.sign(samples[over]) * (
        LIMITER_KNEE + span * np.tanh((np.abs(samples[over]) - LIMITER_KNEE) / span)
    )
    return out


def mixup(
    positive: AudioClip,
    background: AudioClip,
    params: MixupParams,
) -> tuple[AudioClip, dict]:
    """Add background at a controlled SNR below the positive signal.

    Returns the mixed clip and an info record with the applied gain and
    whether the peak limiter fired.
    """
    if positive.sample_rate_hz != background.sample_rate_hz:
        raise SampleRateMismatchError("mixup inputs at different sample rates")
    if len(positive.samples) != len(background.samples):
        raise ParamError("mixup inputs must have equal lengths")
    rms_pos = float(np.sqrt(np.mean(positive.samples**2)))
    rms_bg = float(np.sqrt(np.mean(background.samples**2)))
    if rms_bg <= 0.0:
        raise ZeroBackgroundError("background RMS is zero; SNR undefined")

    gain = (rms_pos / rms_bg) * 10.0 ** (-params.snr_db / 20.0)
    mixed = positive.samples + gain * background.samples
    limited = bool(np.max(np.abs(mixed)) > 1.0)
    if limited:
        mixed = _soft_limit(mixed)
    clip = AudioClip(
        samples=mixed,
        sample_rate_hz=positive.sample_rate_hz,
        source_id=positive.source_id,
        start_offset_s=positive.start_offset_s,
    )
    info = {
        "snr_db": params.snr_db,
        "background_id": params.background_id or background.source_id,
        "gain": gain,
        "limiter_fired": limited,
    }
    return clip, info


def augmentation_probability(
    class_count: int,
    max_class_count: int,
    p_base: float,
    p_max: float,
) -> float:
    """Inverse-frequency augmentation probability, clamped to [p_base, p_max]."""
    if class_count <= 0:
        raise ParamError("class_count must be >= 1")
    if class_count > max_class_count:
        raise ParamError("class_count cannot exceed max_class_count")
    if not (0.0 <= p_base <= p_max <= 1.0):
        raise ParamError("need 0 <= p_base <= p_max <= 1")
    return float(min(max(p_base * max_class_count / class_count, p_base), p_max))


def handheld_attenuation_pass(
    features: list[FeatureMatrix],
    source_kinds: list[str],
    config: MelConfig,
    rng: np.random.Generator,
    alpha_range: tuple[float, float] = ALPHA_RANGE_DB_PER_HZ,
) -> tuple[list[FeatureMatrix], list[float | None]]:
    """Simulate forest propagation loss on handheld-sourced segments only.

    Each handheld feature gets an alpha drawn uniformly from alpha_range;
    everything else passes through untouched. Returns outputs plus the drawn
    alpha per item (None for untouched items).
    """
    if len(features) != len(source_kinds):
        raise ParamError("one source kind per feature required")
    lo, hi = alpha_range
    if not (0 <= lo <= hi):
        raise ParamError("invalid alpha range")
    out: list[FeatureMatrix] = []
    alphas: list[float | None] = []
    for feature, kind in zip(features, source_kinds):
        if kind == "handheld":
            alpha = float(rng.uniform(lo, hi))
            out.append(attenuate_feature(feature, config, alpha))
            alphas.append(alpha)
        else:
            out.append(feature)
            alphas.append(None)
    return out, alphas
