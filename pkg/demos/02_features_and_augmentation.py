"""Log-Mel features under the LF/MF configurations, plus the augmentation ops.

Shows fixed-shape featurization, global normalization statistics, and each
augmentation: SpecAugment-style masks, forest propagation attenuation, and
SNR-controlled mixup.
"""
import numpy as np

from pamkit.audio import AudioClip
from pamkit.augment import (
    MaskParams,
    MixupParams,
    attenuate_feature,
    augmentation_probability,
    mixup,
    spec_masks,
)
from pamkit.features import (
    LF_CONFIG,
    MF_CONFIG,
    apply_global_stats,
    featurize,
    fit_global_stats,
)

rng = np.random.default_rng(1)

# featurize a 10 s clip under both configurations
for config in (LF_CONFIG, MF_CONFIG):
    rate = config.sample_rate_hz
    t = np.arange(10 * rate) / rate
    freq = 0.4 * config.f_max_hz
    clip = AudioClip(0.3 * np.sin(2 * np.pi * freq * t), rate, "demo")
    feature = featurize(clip, config)
    print(
        f"{config.name}: rate {rate} Hz, window {config.win_s*1000:.0f} ms, "
        f"hop {config.hop_s*1000:.0f} ms -> matrix {feature.values.shape}"
    )

# global stats fitted on a small "training set"
train = []
for i in range(8):
    clip = AudioClip(rng.normal(0, 0.1, 10 * 8000), 8000, f"train{i}")
    train.append(featurize(clip, MF_CONFIG, segment_id=f"train{i}"))
stats = fit_global_stats(train)
print(f"\nglobal stats: mean {stats.mean:.3f}, variance {stats.variance:.3f}, "
      f"{stats.n_samples_seen} cells")
normed = apply_global_stats(train[0], stats)
print(f"normalized matrix mean {normed.values.mean():.3f}, std {normed.values.std():.3f}")

# SpecAugment-style masks: only drawn rectangles change
masked, drawn = spec_masks(train[0], MaskParams(2, 0.1, 2, 16), np.random.default_rng(7))
changed = (masked.values != train[0].values).mean()
print(f"\nmasks drawn: {drawn}")
print(f"cells changed: {changed:.1%}")

# propagation attenuation A(f) = alpha * f, and its exact inverse
attenuated = attenuate_feature(train[0], MF_CONFIG, alpha_db_per_hz=0.003)
drop_db = (train[0].values - attenuated.values).max() * 10 / np.log(10)
print(f"attenuation at the top band: {drop_db:.1f} dB")

# mixup at a controlled SNR
pos = AudioClip(0.2 * np.sin(2 * np.pi * 800 * np.arange(80000) / 8000), 8000, "pos")
bg = AudioClip(rng.normal(0, 0.05, 80000), 8000, "bg")
mixed, info = mixup(pos, bg, MixupParams(snr_db=9.0, background_id="bg"))
print(f"\nmixup gain {info['gain']:.4f}, limiter fired: {info['limiter_fired']}")

# class-frequency augmentation probability: rare classes get augmented more
for count in (8000, 2000, 600):
    p = augmentation_probability(count, 8000, p_base=0.05, p_max=0.8)
    print(f"class with {count:5d} samples -> augmentation probability {p:.3f}")
