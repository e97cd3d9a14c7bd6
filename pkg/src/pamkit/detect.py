"""Energy-based candidate detection.

Band-limited RMS is tracked over sliding windows and compared against a
per-file noise floor (the median of the band timeline). Runs of elevated
windows that satisfy per-species duration gates become candidate segments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioClip
from .errors import BandConfigError, ParamError

DB_FLOOR = -120.0  # log-of-zero guard, dB re full-scale sine
FULL_SCALE_SINE_POWER = 0.5  # mean square of a unit-amplitude sine


@dataclass(frozen=True)
class BandSpec:
    """Species-specific frequency band and duration gates."""

    species_id: str
    f_low_hz: float
    f_high_hz: float
    min_dur_s: float
    max_dur_s: float

    def __post_init__(self) -> None:
        if not (0 <= self.f_low_hz < self.f_high_hz):
            raise ParamError(f"{self.species_id}: need 0 <= f_low < f_high")
        if not (0 < self.min_dur_s <= self.max_dur_s):
            raise ParamError(f"{self.species_id}: need 0 < min_dur_s <= max_dur_s")


@dataclass(frozen=True)
class CandidateSegment:
    """A time interval flagged by the detector for one band."""

    source_id: str
    t_start_s: float
    t_end_s: float
    species_hint: str
    peak_rms_db: float
    noise_floor_db: float

    def to_record(self) -> dict:
        return {
            "source_id": self.source_id,
            "t_start_s": round(self.t_start_s, 6),
            "t_end_s": round(self.t_end_s, 6),
            "species_hint": self.species_hint,
            "peak_rms_db": round(self.peak_rms_db, 3),
            "noise_floor_db": round(self.noise_floor_db, 3),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CandidateSegment":
        return cls(
            source_id=rec["source_id"],
            t_start_s=float(rec["t_start_s"]),
            t_end_s=float(rec["t_end_s"]),
            species_hint=rec["species_hint"],
            peak_rms_db=float(rec["peak_rms_db"]),
            noise_floor_db=float(rec["noise_floor_db"]),
        )


def _window_power_spectra(samples: np.ndarray, win_len: int, hop_len: int) -> np.ndarray:
    """Hann-windowed one-sided power spectra for every window position.

    Returns [n_frames, n_bins] of mean-square power per bin, normalized so a
    unit-amplitude in-band sine sums to 0.5 across its bins.
    """
    frames = np.lib.stride_tricks.sliding_window_view(samples, win_len)[::hop_len]
    w = np.hanning(win_len + 1)[:-1]  # periodic Hann
    spec = np.fft.rfft(frames * w, axis=1)
    power = np.abs(spec) ** 2
    coef = np.full(power.shape[1], 2.0)
    coef[0] = 1.0
    if win_len % 2 == 0:
        coef[-1] = 1.0
    power *= coef / (win_len**2 * np.mean(w**2))
    return power


def band_rms_timeline(
    clip: AudioClip,
    band: BandSpec,
    win_s: float = 1.0,
    hop_s: float = 0.125,
) -> list[tuple[float, float]]:
    """Band-limited RMS level per window, in dB re a full-scale sine.

    Length is floor((duration - win) / hop) + 1; silent windows clamp to
    DB_FLOOR.
    """
    rate = clip.sample_rate_hz
    nyquist = rate / 2.0
    if band.f_high_hz > nyquist:
        raise BandConfigError(
            f"{band.species_id}: f_high {band.f_high_hz} Hz above Nyquist {nyquist} Hz"
        )
    win_len = int(round(win_s * rate))
    hop_len = int(round(hop_s * rate))
    if win_len <= 0 or hop_len <= 0:
        raise ParamError("win_s and hop_s must be positive")
    if len(clip.samples) < win_len:
        raise ParamError(
            f"clip of {clip.duration_s:.3f} s shorter than the {win_s} s analysis window"
        )

    power = _window_power_spectra(clip.samples, win_len, hop_len)
    freqs = np.fft.rfftfreq(win_len, 1.0 / rate)
    mask = (freqs >= band.f_low_hz) & (freqs <= band.f_high_hz)
    band_power = power[:, mask].sum(axis=1)
    db = 10.0 * np.log10(np.maximum(band_power / FULL_SCALE_SINE_POWER, 1e-300))
    db = np.maximum(db, DB_FLOOR)
    centers = (np.arange(len(db)) * hop_len + win_len / 2.0) / rate
    return list(zip(centers.tolist(), db.tolist()))


def _active_runs(active: np.ndarray) -> list[tuple[int, int]]:
    """Index ranges [i0, i1] (inclusive) of consecutive True entries."""
    runs = []
    start = None
    for i, flag in enumerate(active):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(active) - 1))
    return runs


def detect_candidates(
    clip: AudioClip,
    bands: list[BandSpec],
    threshold_db: float = 3.0,
    win_s: float = 1.0,
    hop_s: float = 0.125,
) -> list[CandidateSegment]:
    """Flag segments whose band RMS exceeds the per-band noise floor.

    The noise floor is the median of the band timeline; windows at or above
    floor + threshold_db merge into runs, and runs inside the band's duration
    gates become candidates, sorted by start time.
    """
    out: list[CandidateSegment] = []
    duration = clip.duration_s
    for band in bands:
        timeline = band_rms_timeline(clip, band, win_s=win_s, hop_s=hop_s)
        db = np.array([v for _, v in timeline])
        centers = np.array([t for t, _ in timeline])
        floor = float(np.median(db))
        active = db >= floor + threshold_db
        for i0, i1 in _active_runs(active):
            t_start = max(0.0, centers[i0] - win_s / 2.0)
            t_end = min(duration, centers[i1] + win_s / 2.0)
            dur = t_end - t_start
            if band.min_dur_s <= dur <= band.max_dur_s:
                out.append(
                    CandidateSegment(
                        source_id=clip.source_id,
                        t_start_s=float(t_start),
                        t_end_s=float(t_end),
                        species_hint=band.species_id,
                        peak_rms_db=float(db[i0 : i1 + 1].max()),
                        noise_floor_db=floor,
                    )
                )
    out.sort(key=lambda c: (c.t_start_s, c.species_hint))
    return out
