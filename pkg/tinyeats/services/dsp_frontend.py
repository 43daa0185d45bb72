"""Audio front end: 20 kHz capture -> normalized 15x65 STFT feature windows.

Pipeline per signal: ``decimate`` (FIR anti-alias, keep every 40th sample),
``highpass`` (20 Hz Butterworth biquad at 500 Hz), ``segment`` (4 s windows),
``stft_logmag`` (15 rectangular 128-point frames, no overlap) and
``normalize_features`` (fixed affine map of [-6, 2] onto [-1, 1]).
"""
import logging
import struct
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy import signal as sps

from tinyeats.core.errors import FeatureFileError, FeatureShapeError, SignalError

logger = logging.getLogger(__name__)

RAW_RATE = 20000
PROCESSED_RATE = 500
DECIMATION = RAW_RATE // PROCESSED_RATE
ANTIALIAS_TAPS = 101
ANTIALIAS_CUTOFF_HZ = 200.0
HIGHPASS_CUTOFF_HZ = 20.0
WINDOW_SECONDS = 4
WINDOW_SAMPLES = WINDOW_SECONDS * PROCESSED_RATE
FFT_SIZE = 128
N_FRAMES = WINDOW_SAMPLES // FFT_SIZE
N_BINS = FFT_SIZE // 2 + 1
LOG_EPSILON = 1e-6
LOGMAG_FLOOR = -6.0
LOGMAG_CEIL = 2.0

TEFW_MAGIC = b"TEFW"
TEFW_VERSION = 1
_TEFW_HEADER = struct.Struct("<4sHIHH")
_CRC = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class AudioSignal:
    """A sampled waveform tagged with its rate (20000 Hz raw or 500 Hz processed)."""

    samples: np.ndarray
    rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise SignalError(f"audio must be one-dimensional, got shape {samples.shape}")
        if self.rate not in (RAW_RATE, PROCESSED_RATE):
            raise SignalError(f"unsupported sample rate {self.rate} Hz")
        if not np.all(np.isfinite(samples)):
            raise SignalError("audio contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.rate


@dataclass(frozen=True, eq=False)
class FeatureWindow:
    """Normalized log-magnitude STFT of one 4 s window: 15 frames x 65 bins in [-1, 1]."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (N_FRAMES, N_BINS):
            raise FeatureShapeError(f"feature window must be {N_FRAMES}x{N_BINS}, got {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(np.abs(values) > 1.0):
            raise FeatureShapeError("feature values must be finite and within [-1, 1]")
        object.__setattr__(self, "values", values)


def _require_rate(signal: AudioSignal, rate: int) -> None:
    if signal.rate != rate:
        raise SignalError(f"expected a {rate} Hz signal, got {signal.rate} Hz")


@lru_cache(maxsize=1)
def antialias_taps() -> np.ndarray:
    """101-tap Hamming windowed-sinc low-pass, 200 Hz cutoff at 20 kHz, unit DC gain."""
    return sps.firwin(ANTIALIAS_TAPS, ANTIALIAS_CUTOFF_HZ, window="hamming", fs=RAW_RATE)


@lru_cache(maxsize=1)
def highpass_coefficients() -> Tuple[np.ndarray, np.ndarray]:
    """Second-order Butterworth high-pass (bilinear transform) at 20 Hz for 500 Hz audio."""
    b, a = sps.butter(2, HIGHPASS_CUTOFF_HZ, btype="highpass", fs=PROCESSED_RATE)
    return b, a


def decimate(signal: AudioSignal) -> AudioSignal:
    """Anti-alias filter a 20 kHz signal causally and keep every 40th sample."""
    _require_rate(signal, RAW_RATE)
    if len(signal) == 0:
        raise SignalError("cannot decimate an empty signal")
    if len(signal) < DECIMATION:
        raise SignalError(f"signal too short to decimate: {len(signal)} < {DECIMATION} samples")
    n_out = len(signal) // DECIMATION
    # upfirdn evaluates the causal convolution only at the kept indices 0, 40, 80, ...
    filtered = sps.upfirdn(antialias_taps(), signal.samples, up=1, down=DECIMATION)
    return AudioSignal(samples=filtered[:n_out], rate=PROCESSED_RATE)


def highpass(signal: AudioSignal) -> AudioSignal:
    """Causal 20 Hz high-pass on a 500 Hz signal; same length and rate."""
    _require_rate(signal, PROCESSED_RATE)
    if len(signal) == 0:
        return signal
    b, a = highpass_coefficients()
    return AudioSignal(samples=sps.lfilter(b, a, signal.samples), rate=PROCESSED_RATE)


def segment(signal: AudioSignal) -> List[np.ndarray]:
    """Split into consecutive 2000-sample windows; a shorter remainder is dropped."""
    _require_rate(signal, PROCESSED_RATE)
    count = len(signal) // WINDOW_SAMPLES
    if count * WINDOW_SAMPLES < len(signal):
        logger.debug(f"Discarding {len(signal) - count * WINDOW_SAMPLES} trailing samples")
    return [signal.samples[i * WINDOW_SAMPLES:(i + 1) * WINDOW_SAMPLES].copy() for i in range(count)]


def frame_magnitudes(window: np.ndarray) -> np.ndarray:
    """One-sided FFT magnitudes of the 15 rectangular frames (last 80 samples unused)."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (WINDOW_SAMPLES,):
        raise SignalError(f"window must hold exactly {WINDOW_SAMPLES} samples, got {window.shape}")
    if not np.all(np.isfinite(window)):
        raise SignalError("window contains non-finite samples")
    frames = window[: N_FRAMES * FFT_SIZE].reshape(N_FRAMES, FFT_SIZE)
    return np.abs(np.fft.rfft(frames, n=FFT_SIZE, axis=1))


def stft_logmag(window: np.ndarray) -> np.ndarray:
    """``log10(|FFT| + 1e-6)`` per frame and bin; shape (15, 65)."""
    return np.log10(frame_magnitudes(window) + LOG_EPSILON)


def normalize_features(
    logmag: np.ndarray, floor: float = LOGMAG_FLOOR, ceil: float = LOGMAG_CEIL
) -> FeatureWindow:
    """Map log-magnitudes from [floor, ceil] onto [-1, 1], clipping outliers."""
    logmag = np.asarray(logmag, dtype=np.float64)
    if not np.all(np.isfinite(logmag)):
        raise FeatureShapeError("log-magnitude matrix contains non-finite entries")
    scaled = 2.0 * (logmag - floor) / (ceil - floor) - 1.0
    return FeatureWindow(values=np.clip(scaled, -1.0, 1.0))


def extract_features(
    signal: AudioSignal, norm: Tuple[float, float] = (LOGMAG_FLOOR, LOGMAG_CEIL)
) -> List[FeatureWindow]:
    """Run the whole front end on a raw 20 kHz signal.

    ``norm`` is the (floor, ceil) log-magnitude range; models carry their own.
    """
    processed = highpass(decimate(signal))
    floor, ceil = norm
    return [normalize_features(stft_logmag(w), floor, ceil) for w in segment(processed)]


def spectral_centroid(window: FeatureWindow) -> float:
    """Magnitude-weighted mean bin index over the whole window."""
    logmag = (window.values + 1.0) * (LOGMAG_CEIL - LOGMAG_FLOOR) / 2.0 + LOGMAG_FLOOR
    power = np.power(10.0, logmag).sum(axis=0)
    return float(np.dot(np.arange(N_BINS), power) / power.sum())


def write_feature_file(windows: Sequence[FeatureWindow], path: Union[str, Path]) -> int:
    """Write windows in the TEFW format; returns the byte count."""
    header = _TEFW_HEADER.pack(TEFW_MAGIC, TEFW_VERSION, len(windows), N_FRAMES, N_BINS)
    payload = b"".join(np.asarray(w.values, dtype="<f4").tobytes(order="C") for w in windows)
    body = header + payload
    blob = body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)
    Path(path).write_bytes(blob)
    logger.info(f"Wrote {len(windows)} feature windows to {path} ({len(blob)} bytes)")
    return len(blob)


def read_feature_file(path: Union[str, Path]) -> List[FeatureWindow]:
    """Parse a TEFW file, validating magic, version, shape and CRC."""
    blob = Path(path).read_bytes()
    if len(blob) < _TEFW_HEADER.size + _CRC.size:
        raise FeatureFileError(f"{path}: truncated feature file ({len(blob)} bytes)")
    magic, version, count, rows, cols = _TEFW_HEADER.unpack_from(blob, 0)
    if magic != TEFW_MAGIC:
        raise FeatureFileError(f"{path}: bad magic {magic!r}")
    if version != TEFW_VERSION:
        raise FeatureFileError(f"{path}: unsupported feature file version {version}")
    if (rows, cols) != (N_FRAMES, N_BINS):
        raise FeatureFileError(f"{path}: window shape {rows}x{cols} is not {N_FRAMES}x{N_BINS}")
    expected = _TEFW_HEADER.size + count * rows * cols * 4 + _CRC.size
    if len(blob) != expected:
        raise FeatureFileError(f"{path}: expected {expected} bytes, found {len(blob)}")
    (stored_crc,) = _CRC.unpack_from(blob, len(blob) - _CRC.size)
    if zlib.crc32(blob[: -_CRC.size]) & 0xFFFFFFFF != stored_crc:
        raise FeatureFileError(f"{path}: CRC mismatch")
    data = np.frombuffer(blob, dtype="<f4", count=count * rows * cols, offset=_TEFW_HEADER.size)
    return [FeatureWindow(values=v.astype(np.float64)) for v in data.reshape(count, rows, cols)]
