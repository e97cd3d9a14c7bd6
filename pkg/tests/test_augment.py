import numpy as np
import pytest
from scipy import stats as scipy_stats

from pamkit.audio import AudioClip
from pamkit.augment import (
    LN10_OVER_10,
    MaskParams,
    MixupParams,
    attenuate_feature,
    augmentation_probability,
    band_attenuation_db,
    handheld_attenuation_pass,
    mixup,
    propagation_attenuation,
    spec_masks,
)
from pamkit.errors import ParamError, ZeroBackgroundError
from pamkit.features import LOG_FLOOR_VALUE, MF_CONFIG, FeatureMatrix, mel_band_centers

from conftest import make_tone


def random_feature(rng, frames=64, bands=32, normalized=False):
    return FeatureMatrix(rng.normal(-5, 2, (frames, bands)).astype(np.float32), "MF",
                         normalized=normalized)


def mask_union_cells(drawn, frames, bands):
    covered = np.zeros((frames, bands), dtype=bool)
    for m in drawn:
        if m["axis"] == "time":
            covered[m["start"] : m["start"] + m["extent"], :] = True
        else:
            covered[:, m["start"] : m["start"] + m["extent"]] = True
    return covered


class TestSpecMasks:
    def test_zero_params_identity(self, rng):
        f = random_feature(rng)
        out, drawn = spec_masks(f, MaskParams(0, 0.0, 0, 0), np.random.default_rng(0))
        assert np.array_equal(out.values, f.values)
        assert drawn == []

    def test_full_width_time_mask(self, rng):
        f = random_feature(rng, frames=16, bands=8)
        # max_time_frac 1.0 with many attempts eventually draws a full mask;
        # force it by drawing until extent == frames
        g = np.random.default_rng(3)
        for _ in range(200):
            out, drawn = spec_masks(f, MaskParams(1, 1.0, 0, 0), g)
            if drawn[0]["extent"] == 16:
                assert np.allclose(out.values, LOG_FLOOR_VALUE)
                return
        pytest.fail("never drew a full-width mask")

    def test_masked_cells_match_logged_draws(self, rng):
        f = random_feature(rng)
        out, drawn = spec_masks(f, MaskParams(2, 0.3, 2, 10), np.random.default_rng(11))
        covered = mask_union_cells(drawn, *f.values.shape)
        changed = out.values != f.values
        # outside the drawn rectangles: bit-identical
        assert not np.any(changed & ~covered)
        # inside: the mask value everywhere
        assert np.allclose(out.values[covered], LOG_FLOOR_VALUE)
        assert int(np.sum(out.values == LOG_FLOOR_VALUE) - np.sum(f.values == LOG_FLOOR_VALUE)) \
            == int(covered.sum()) - int((f.values[covered] == LOG_FLOOR_VALUE).sum())

    def test_normalized_features_masked_with_zero(self, rng):
        f = random_feature(rng, normalized=True)
        out, drawn = spec_masks(f, MaskParams(2, 0.5, 0, 0), np.random.default_rng(5))
        covered = mask_union_cells(drawn, *f.values.shape)
        if covered.any():
            assert np.allclose(out.values[covered], 0.0)

    def test_deterministic_with_seed(self, rng):
        f = random_feature(rng)
        a, da = spec_masks(f, MaskParams(), np.random.default_rng(9))
        b, db = spec_masks(f, MaskParams(), np.random.default_rng(9))
        assert np.array_equal(a.values, b.values)
        assert da == db


class TestPropagationAttenuation:
    def test_zero_alpha_identity(self, rng):
        m = rng.normal(0, 1, (10, 5))
        centers = np.array([100.0, 200.0, 400.0, 800.0, 1600.0])
        assert np.array_equal(propagation_attenuation(m, centers, 0.0), m)

    def test_six_db_at_two_khz(self):
        # alpha 0.003 dB/Hz at 2000 Hz gives A = 6 dB
        m = np.zeros((4, 1))
        out = propagation_attenuation(m, np.array([2000.0]), 0.003)
        attenuation_db = (m - out)[0, 0] / LN10_OVER_10
        assert attenuation_db == pytest.approx(6.0, abs=1e-12)
        # linear-energy factor 10^(-6/10), amplitude factor 10^(-6/20)
        assert np.exp(out[0, 0]) / np.exp(m[0, 0]) == pytest.approx(10 ** (-0.6), rel=1e-9)
        assert 10 ** (-6.0 / 20.0) == pytest.approx(0.5012, abs=1e-4)

    def test_invertible_within_tolerance(self, rng):
        m = rng.normal(-4, 2, (20, 128))
        centers = mel_band_centers(MF_CONFIG)
        att = propagation_attenuation(m, centers, 0.0035)
        restored = att + band_attenuation_db(centers, 0.0035)[None, :] * LN10_OVER_10
        assert np.max(np.abs(restored - m)) / LN10_OVER_10 < 1e-6  # dB per cell

    def test_negative_alpha_rejected(self):
        with pytest.raises(ParamError):
            propagation_attenuation(np.zeros((2, 2)), np.array([10.0, 20.0]), -0.001)

    def test_time_axis_untouched(self, rng):
        m = rng.normal(0, 1, (30, 4))
        out = propagation_attenuation(m, np.array([10.0, 20.0, 40.0, 80.0]), 0.003)
        deltas = m - out
        assert np.allclose(deltas, deltas[0:1, :])  # constant along time


class TestMixup:
    def test_equal_rms_gain(self, rng):
        pos = AudioClip(make_tone(500, 1.0, 8000, amp=0.3), 8000, "p")
        bg_samples = rng.normal(0, 1, 8000)
        bg_samples *= np.sqrt(np.mean(pos.samples**2) / np.mean(bg_samples**2))
        bg = AudioClip(bg_samples, 8000, "b")
        _, info = mixup(pos, bg, MixupParams(snr_db=6.0))
        assert info["gain"] == pytest.approx(10 ** (-6.0 / 20.0), rel=1e-9)
        assert info["gain"] == pytest.approx(0.5012, abs=1e-4)

    def test_out_of_range_snr_rejected(self):
        with pytest.raises(ParamError):
            MixupParams(snr_db=0.0)
        with pytest.raises(ParamError):
            MixupParams(snr_db=15.5)

    def test_measured_snr_matches_target(self, rng):
        pos = AudioClip(rng.normal(0, 0.1, 16000), 8000, "p")
        bg = AudioClip(rng.normal(0, 0.05, 16000), 8000, "b")
        for snr in (3.0, 9.0, 15.0):
            mixed, info = mixup(pos, bg, MixupParams(snr_db=snr))
            addend = info["gain"] * bg.samples
            measured = 20 * np.log10(
                np.sqrt(np.mean(pos.samples**2)) / np.sqrt(np.mean(addend**2))
            )
            assert measured == pytest.approx(snr, abs=0.01)

    def test_positive_recoverable_when_no_limiter(self, rng):
        pos = AudioClip(rng.normal(0, 0.05, 8000), 8000, "p")
        bg = AudioClip(rng.normal(0, 0.05, 8000), 8000, "b")
        mixed, info = mixup(pos, bg, MixupParams(snr_db=10.0))
        assert not info["limiter_fired"]
        recovered = mixed.samples - info["gain"] * bg.samples
        # one rounding step each way: recovery is exact to machine precision
        assert np.max(np.abs(recovered - pos.samples)) < 1e-15

    def test_limiter_keeps_samples_in_range(self):
        pos = AudioClip(np.full(100, 0.98), 8000, "p")
        bg = AudioClip(np.full(100, 0.98), 8000, "b")
        mixed, info = mixup(pos, bg, MixupParams(snr_db=3.0))
        assert info["limiter_fired"]
        assert np.max(np.abs(mixed.samples)) <= 1.0

    def test_zero_background_rejected(self):
        pos = AudioClip(np.ones(100) * 0.1, 8000, "p")
        bg = AudioClip(np.zeros(100), 8000, "b")
        with pytest.raises(ZeroBackgroundError):
            mixup(pos, bg, MixupParams(snr_db=5.0))


class TestAugmentationProbability:
    def test_most_frequent_class_gets_base(self):
        assert augmentation_probability(100, 100, 0.1, 0.8) == pytest.approx(0.1)

    def test_clamped_at_p_max(self):
        assert augmentation_probability(10, 100, 0.1, 0.8) == pytest.approx(0.8)

    def test_rarer_class_gets_strictly_higher(self):
        # class sizes mirroring a strongly imbalanced pair (8131 vs 599)
        p_common = augmentation_probability(8131, 8131, 0.05, 0.8)
        p_rare = augmentation_probability(599, 8131, 0.05, 0.8)
        assert p_rare > p_common
        assert p_common == pytest.approx(0.05)
        assert p_rare == pytest.approx(min(0.05 * 8131 / 599, 0.8))

    def test_monotone_in_class_count(self):
        ps = [augmentation_probability(c, 1000, 0.05, 0.9) for c in (1, 10, 100, 500, 1000)]
        assert all(a >= b for a, b in zip(ps, ps[1:]))

    def test_zero_count_rejected(self):
        with pytest.raises(ParamError):
            augmentation_probability(0, 10, 0.1, 0.8)


class TestHandheldPass:
    def test_no_handheld_identity(self, rng):
        fs = [random_feature(rng, bands=128) for _ in range(4)]
        out, alphas = handheld_attenuation_pass(
            fs, ["passive"] * 4, MF_CONFIG, np.random.default_rng(0)
        )
        assert all(np.array_equal(a.values, b.values) for a, b in zip(fs, out))
        assert alphas == [None] * 4

    def test_all_handheld_all_changed(self, rng):
        fs = [random_feature(rng, bands=128) for _ in range(4)]
        out, alphas = handheld_attenuation_pass(
            fs, ["handheld"] * 4, MF_CONFIG, np.random.default_rng(0)
        )
        for orig, att, alpha in zip(fs, out, alphas):
            assert alpha is not None and 0.002 <= alpha <= 0.004
            assert not np.array_equal(orig.values, att.values)

    def test_drawn_alphas_uniform(self, rng):
        fs = [random_feature(rng, frames=2, bands=128)] * 10_000
        _, alphas = handheld_attenuation_pass(
            fs, ["handheld"] * 10_000, MF_CONFIG, np.random.default_rng(17)
        )
        drawn = np.array([a for a in alphas if a is not None])
        stat = scipy_stats.kstest(drawn, scipy_stats.uniform(0.002, 0.002).cdf)
        assert stat.pvalue > 0.01
