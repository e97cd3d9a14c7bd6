"""Audio ingestion, resampling, excerpt assembly, and sample-level normalization.

Everything downstream (detection, features, augmentation) consumes
:class:`AudioClip` instances produced here. All operations are pure given
their inputs and seeds, so they are safe to parallelize over files.
"""
from __future__ import annotations

import math
import wave
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import (
    AudioFormatError,
    AudioIOError,
    EmptyInputError,
    ParamError,
    SampleRateMismatchError,
    UnsupportedDirectionError,
)

# 16-bit PCM scaling: divide by 32768 (asymmetric), so fixtures are bit-exact.
PCM16_SCALE = 32768.0

DEFAULT_FADE_S = 0.05


@dataclass
class AudioClip:
    """Mono waveform with provenance.

    samples are float64 in [-1, 1]; start_offset_s locates the clip within
    its source recording.
    """

    samples: np.ndarray
    sample_rate_hz: int
    source_id: str = ""
    start_offset_s: float = 0.0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise AudioFormatError(f"expected mono samples, got shape {self.samples.shape}")
        if self.sample_rate_hz <= 0:
            raise ParamError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.start_offset_s < 0:
            raise ParamError(f"start_offset_s must be >= 0, got {self.start_offset_s}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise AudioFormatError("samples contain non-finite values")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def slice_seconds(self, t_start_s: float, t_end_s: float) -> "AudioClip":
        """Cut [t_start_s, t_end_s) out of this clip, clamped to its extent."""
        i0 = max(0, int(round(t_start_s * self.sample_rate_hz)))
        i1 = min(len(self.samples), int(round(t_end_s * self.sample_rate_hz)))
        if i1 <= i0:
            raise ParamError(f"empty slice [{t_start_s}, {t_end_s})")
        return AudioClip(
            samples=self.samples[i0:i1].copy(),
            sample_rate_hz=self.sample_rate_hz,
            source_id=self.source_id,
            start_offset_s=self.start_offset_s + i0 / self.sample_rate_hz,
        )


@dataclass(frozen=True)
class ResampleSpec:
    """Polyphase windowed-sinc resampler settings (downsampling only)."""

    target_rate_hz: int
    filter_taps: int = 256  # taps per polyphase branch; 64 leaves aliases only ~13 dB down
    cutoff_fraction: float = 0.9  # of the target Nyquist

    def __post_init__(self) -> None:
        if self.target_rate_hz <= 0:
            raise ParamError("target_rate_hz must be positive")
        if self.filter_taps <= 0:
            raise ParamError("filter_taps must be positive")
        if not (0.0 < self.cutoff_fraction <= 1.0):
            raise ParamError("cutoff_fraction must be in (0, 1]")


def load_audio(path: str | Path) -> AudioClip:
    """Read a mono 16-bit PCM RIFF/WAVE file into an AudioClip."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            if n_channels != 1:
                raise AudioFormatError(f"{path}: expected 1 channel, got {n_channels}")
            if sampwidth != 2:
                raise AudioFormatError(f"{path}: expected 16-bit samples, got {8 * sampwidth}-bit")
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: not a readable RIFF/WAVE file ({exc})") from exc
    except EOFError as exc:
        raise AudioIOError(f"{path}: truncated file") from exc
    except OSError as exc:
        raise AudioIOError(f"{path}: {exc}") from exc

    data = np.frombuffer(raw, dtype="<i2")
    if len(data) != n_frames:
        raise AudioIOError(f"{path}: truncated data chunk ({len(data)} of {n_frames} frames)")
    return AudioClip(
        samples=data.astype(np.float64) / PCM16_SCALE,
        sample_rate_hz=rate,
        source_id=str(path.resolve()),
        start_offset_s=0.0,
    )


def save_audio(clip: AudioClip, path: str | Path) -> None:
    """Write a clip as mono 16-bit PCM RIFF/WAVE."""
    scaled = np.clip(np.round(clip.samples * PCM16_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate_hz)
        wf.writeframes(scaled.tobytes())


def _design_lowpass(up: int, down: int, taps_per_phase: int, cutoff_fraction: float,
                    source_rate: int, target_rate: int) -> np.ndarray:
    """Kaiser-windowed sinc lowpass for the polyphase resampler.

    Designed at the upsampled rate (source_rate * up); cutoff is
    cutoff_fraction of the target Nyquist.
    """
    n_taps = taps_per_phase * up + 1  # odd length, linear phase
    cutoff_hz = cutoff_fraction * target_rate / 2.0
    fc = cutoff_hz / (source_rate * up)  # cycles per upsampled sample
    n = np.arange(n_taps) - (n_taps - 1) / 2.0
    h = 2.0 * fc * np.sinc(2.0 * fc * n)
    h *= np.kaiser(n_taps, 8.0)
    h /= h.sum()  # unity DC gain before the up-factor applied by the polyphase stage
    return h


def resample(clip: AudioClip, spec: ResampleSpec) -> AudioClip:
    """Downsample a clip with an anti-aliased windowed-sinc polyphase filter."""
    if len(clip.samples) == 0:
        raise EmptyInputError("cannot resample an empty clip")
    if spec.target_rate_hz > clip.sample_rate_hz:
        raise UnsupportedDirectionError(
            f"upsampling {clip.sample_rate_hz} -> {spec.target_rate_hz} Hz is not supported"
        )
    if spec.target_rate_hz == clip.sample_rate_hz:
        return replace(clip, samples=clip.samples.copy())

    g = math.gcd(spec.target_rate_hz, clip.sample_rate_hz)
    up = spec.target_rate_hz // g
    down = clip.sample_rate_hz // g
    h = _design_lowpass(up, down, spec.filter_taps, spec.cutoff_fraction,
                        clip.sample_rate_hz, spec.target_rate_hz)
    out = resample_poly(clip.samples, up, down, window=h)  # scipy scales by `up` itself
    return AudioClip(
        samples=out,
        sample_rate_hz=spec.target_rate_hz,
        source_id=clip.source_id,
        start_offset_s=clip.start_offset_s,
    )


def _equal_power_ramps(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Quarter-cosine fade-in/fade-out gain pair with g_in^2 + g_out^2 = 1."""
    t = (np.arange(n) + 0.5) / n
    g_in = np.sin(0.5 * np.pi * t)
    g_out = np.cos(0.5 * np.pi * t)
    return g_in, g_out


def assemble_excerpt(
    vocalization: AudioClip,
    background: AudioClip,
    total_dur_s: float,
    fade_dur_s: float = DEFAULT_FADE_S,
    placement_rng: np.random.Generator | None = None,
) -> AudioClip:
    """Place a vocalization inside a fixed-length excerpt over background audio.

    The vocalization is positioned uniformly at random over valid offsets and
    blended into the background with equal-power crossfades at both internal
    boundaries. Vocalizations longer than the excerpt are center-cropped.
    """
    if vocalization.sample_rate_hz != background.sample_rate_hz:
        raise SampleRateMismatchError(
            f"vocalization at {vocalization.sample_rate_hz} Hz, "
            f"background at {background.sample_rate_hz} Hz"
        )
    rate = vocalization.sample_rate_hz
    total_len = int(round(total_dur_s * rate))
    if len(background.samples) < total_len:
        raise ParamError("background shorter than the requested excerpt")
    if fade_dur_s < 0:
        raise ParamError("fade_dur_s must be >= 0")

    voc = vocalization.samples
    if len(voc) > total_len:  # documented behavior: center-crop long vocalizations
        start = (len(voc) - total_len) // 2
        voc = voc[start:start + total_len]
    if fade_dur_s > 0.5 * len(voc) / rate:
        raise ParamError("fade_dur_s exceeds half the vocalization duration")

    rng = placement_rng if placement_rng is not None else np.random.default_rng()
    offset = int(rng.integers(0, total_len - len(voc) + 1))

    out = background.samples[:total_len].astype(np.float64).copy()
    fade_len = int(round(fade_dur_s * rate))
    lo, hi = offset, offset + len(voc)
    mixed = voc.copy()
    if fade_len > 0 and lo > 0:  # fade in only at an internal boundary
        g_in, g_out = _equal_power_ramps(fade_len)
        mixed[:fade_len] = g_in * voc[:fade_len] + g_out * out[lo:lo + fade_len]
    if fade_len > 0 and hi < total_len:
        g_in, g_out = _equal_power_ramps(fade_len)
        mixed[-fade_len:] = g_out[::-1] * out[hi - fade_len:hi] + g_in[::-1] * voc[-fade_len:]
    out[lo:hi] = mixed

    return AudioClip(
        samples=out,
        sample_rate_hz=rate,
        source_id=f"{vocalization.source_id}+{background.source_id}",
        start_offset_s=0.0,
    )


def zscore_normalize(clip: AudioClip) -> AudioClip:
    """Zero-mean unit-variance normalization; silent clips come back as zeros."""
    if len(clip.samples) == 0:
        raise EmptyInputError("cannot normalize an empty clip")
    mean = float(np.mean(clip.samples))
    std = float(np.std(clip.samples))
    if std < 1e-12:
        return replace(clip, samples=np.zeros_like(clip.samples))
    return replace(clip, samples=(clip.samples - mean) / std)
