import numpy as np
import pytest

from tinyeats.core.errors import FeatureFileError, FeatureShapeError, SignalError
from tinyeats.services import dsp_frontend as dsp
from tinyeats.services.dsp_frontend import AudioSignal, FeatureWindow


def _sine(freq: float, rate: int, seconds: float) -> np.ndarray:
    return np.sin(2 * np.pi * freq * np.arange(int(rate * seconds)) / rate)


class TestDecimate:
    def test_zero_signal(self):
        out = dsp.decimate(AudioSignal(np.zeros(80000), dsp.RAW_RATE))
        assert out.rate == dsp.PROCESSED_RATE
        assert len(out) == 2000
        assert np.all(out.samples == 0)

    def test_output_length_is_floor(self):
        assert len(dsp.decimate(AudioSignal(np.ones(80039), dsp.RAW_RATE))) == 2000

    def test_low_frequency_sine_passes(self):
        out = dsp.decimate(AudioSignal(_sine(5.0, dsp.RAW_RATE, 4.0), dsp.RAW_RATE))
        settled = out.samples[10:]
        assert abs(np.max(np.abs(settled)) - 1.0) < 0.01

    def test_rejects_wrong_rate_and_short_input(self):
        with pytest.raises(SignalError):
            dsp.decimate(AudioSignal(np.zeros(4000), dsp.PROCESSED_RATE))
        with pytest.raises(SignalError):
            dsp.decimate(AudioSignal(np.zeros(39), dsp.RAW_RATE))
        with pytest.raises(SignalError):
            dsp.decimate(AudioSignal(np.zeros(0), dsp.RAW_RATE))

    def test_taps_have_unit_dc_gain(self):
        taps = dsp.antialias_taps()
        assert taps.shape == (101,)
        assert taps.sum() == pytest.approx(1.0, abs=1e-12)


class TestHighpass:
    def test_zero_in_zero_out(self):
        out = dsp.highpass(AudioSignal(np.zeros(1000), dsp.PROCESSED_RATE))
        assert np.all(out.samples == 0)

    def test_constant_is_removed(self):
        out = dsp.highpass(AudioSignal(np.ones(2000), dsp.PROCESSED_RATE))
        assert np.max(np.abs(out.samples[500:])) < 1e-3

    def test_passband_sine(self):
        out = dsp.highpass(AudioSignal(_sine(100.0, dsp.PROCESSED_RATE, 4.0), dsp.PROCESSED_RATE))
        amplitude = np.sqrt(2.0 * np.mean(out.samples[1000:] ** 2))
        assert 0.95 <= amplitude <= 1.05


class TestSegment:
    @pytest.mark.parametrize("length,count", [(4000, 2), (2500, 1), (1999, 0)])
    def test_window_counts(self, length, count):
        windows = dsp.segment(AudioSignal(np.arange(length, dtype=float), dsp.PROCESSED_RATE))
        assert len(windows) == count
        for i, w in enumerate(windows):
            assert w.shape == (2000,)
            assert w[0] == i * 2000


class TestStft:
    def test_zero_window(self):
        np.testing.assert_allclose(dsp.stft_logmag(np.zeros(2000)), -6.0, atol=1e-12)

    def test_pure_cosine_peak(self):
        window = np.zeros(2000)
        window[:128] = np.cos(2 * np.pi * 8 * np.arange(128) / 128)
        mags = dsp.frame_magnitudes(window)
        assert mags.shape == (15, 65)
        assert np.argmax(mags[0]) == 8
        assert mags[0, 8] == pytest.approx(64.0, abs=1e-9)

    def test_matches_naive_dft(self):
        window = np.random.default_rng(0).standard_normal(2000)
        frames = window[:1920].reshape(15, 128)
        n = np.arange(128)
        basis = np.exp(-2j * np.pi * np.outer(np.arange(65), n) / 128)
        naive = np.abs(frames @ basis.T)
        np.testing.assert_allclose(dsp.frame_magnitudes(window), naive, atol=1e-9)

    def test_parseval_per_frame(self):
        window = np.random.default_rng(1).standard_normal(2000)
        mags = dsp.frame_magnitudes(window)
        frames = window[:1920].reshape(15, 128)
        two_sided = mags[:, 0] ** 2 + mags[:, 64] ** 2 + 2 * np.sum(mags[:, 1:64] ** 2, axis=1)
        np.testing.assert_allclose(two_sided / 128, np.sum(frames**2, axis=1), rtol=1e-6)

    def test_rejects_wrong_length(self):
        with pytest.raises(SignalError):
            dsp.stft_logmag(np.zeros(1999))


class TestNormalize:
    def test_map_endpoints(self):
        logmag = np.full((15, 65), -2.0)
        logmag[0, 0] = -6.0
        logmag[0, 1] = 2.0
        logmag[0, 2] = 10.0
        w = dsp.normalize_features(logmag)
        assert w.values[0, 0] == -1.0
        assert w.values[0, 1] == 1.0
        assert w.values[0, 2] == 1.0
        assert w.values[1, 1] == 0.0

    def test_feature_window_validation(self):
        with pytest.raises(FeatureShapeError):
            FeatureWindow(values=np.zeros((15, 64)))
        with pytest.raises(FeatureShapeError):
            FeatureWindow(values=np.full((15, 65), 1.5))


class TestPipeline:
    def test_extract_features_counts_and_determinism(self):
        samples = np.random.default_rng(2).uniform(-0.5, 0.5, 20000 * 9)
        signal = AudioSignal(samples, dsp.RAW_RATE)
        first = dsp.extract_features(signal)
        second = dsp.extract_features(AudioSignal(samples.copy(), dsp.RAW_RATE))
        assert len(first) == 2
        for a, b in zip(first, second):
            assert a.values.tobytes() == b.values.tobytes()
            assert np.all(np.abs(a.values) <= 1.0)

    def test_low_band_has_lower_centroid(self):
        low = dsp.extract_features(AudioSignal(_sine(60.0, dsp.RAW_RATE, 4.0), dsp.RAW_RATE))[0]
        high = dsp.extract_features(AudioSignal(_sine(190.0, dsp.RAW_RATE, 4.0), dsp.RAW_RATE))[0]
        assert dsp.spectral_centroid(low) < dsp.spectral_centroid(high)


class TestFeatureFile:
    def _windows(self):
        rng = np.random.default_rng(3)
        return [FeatureWindow(values=rng.uniform(-1, 1, (15, 65))) for _ in range(3)]

    def test_write_then_read(self, tmp_path):
        windows = self._windows()
        path = tmp_path / "f.tefw"
        size = dsp.write_feature_file(windows, path)
        assert size == 14 + 3 * 15 * 65 * 4 + 4
        loaded = dsp.read_feature_file(path)
        assert len(loaded) == 3
        np.testing.assert_allclose(loaded[1].values, windows[1].values, atol=1e-7)

    @pytest.mark.parametrize("offset", [0, 4, 8, 12, 100])
    def test_corruption_detected(self, tmp_path, offset):
        path = tmp_path / "f.tefw"
        dsp.write_feature_file(self._windows(), path)
        blob = bytearray(path.read_bytes())
        blob[offset] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(FeatureFileError):
            dsp.read_feature_file(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "f.tefw"
        dsp.write_feature_file(self._windows(), path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FeatureFileError):
            dsp.read_feature_file(path)
