import numpy as np
import pytest

from pamkit.audio import AudioClip, save_audio


def make_tone(freq_hz, dur_s, rate_hz, amp=0.5, phase=0.0):
    t = np.arange(int(round(dur_s * rate_hz))) / rate_hz
    return amp * np.sin(2 * np.pi * freq_hz * t + phase)


def write_wav(path, samples, rate_hz):
    save_audio(AudioClip(np.asarray(samples, dtype=np.float64), rate_hz, str(path)), path)
    return path


def tone_amplitude_db(samples, rate_hz, freq_hz, halfwidth_bins=3):
    """Window-normalized amplitude (dB re 1.0) of the tone nearest freq_hz."""
    x = np.asarray(samples, dtype=np.float64)
    w = np.hanning(len(x))
    spec = np.fft.rfft(x * w)
    freqs = np.fft.rfftfreq(len(x), 1.0 / rate_hz)
    k = int(np.argmin(np.abs(freqs - freq_hz)))
    lo, hi = max(0, k - halfwidth_bins), k + halfwidth_bins + 1
    amp = 2.0 * np.sqrt(np.sum(np.abs(spec[lo:hi]) ** 2)) / np.sqrt(np.sum(w**2) * len(x))
    return 20.0 * np.log10(amp + 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
