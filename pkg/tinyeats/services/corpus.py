"""Synthetic eating/non-eating corpus, WAV and manifest ingestion, and dataset splits.

Eating recordings are amplitude-modulated bursts of 30-120 Hz noise repeating
at a chewing-like 1.2-1.8 Hz; non-eating recordings are continuous 140-240 Hz
noise under a slowly wandering envelope. Both carry white noise 20 dB below the
signal and are peak-normalized to 0.9.
"""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Dict, List, Sequence, Tuple, Union

import numpy as np
import soundfile as sf
from scipy import signal as sps

from tinyeats.core.errors import (
    DataError,
    ManifestError,
    NonPcmError,
    SignalError,
    SplitError,
    StereoError,
    UnsupportedDepthError,
    UsageError,
    WavFormatError,
    WrongRateError,
)
from tinyeats.core.rng import XorShift64Star
from tinyeats.services.dsp_frontend import (
    RAW_RATE,
    WINDOW_SECONDS,
    AudioSignal,
    FeatureWindow,
    extract_features,
)

logger = logging.getLogger(__name__)

FILE_SECONDS = 120
PEAK = 0.9
NOISE_DB = -20.0
EATING_BAND_HZ = (30.0, 120.0)
NONEATING_BAND_HZ = (140.0, 240.0)
CHEW_RATE_HZ = (1.2, 1.8)
BURST_SECONDS = (0.18, 0.3)
ENVELOPE_STEP_SECONDS = 0.3
MANIFEST_NAME = "manifest.csv"
MANIFEST_HEADER = ["path", "label"]

_PCM_SUBTYPES = {"PCM_16", "PCM_24"}
_OTHER_PCM_SUBTYPES = {"PCM_S8", "PCM_U8", "PCM_32"}
_FULL_SCALE = float(1 << 31)

WavSource = Union[str, Path, BinaryIO]


@dataclass(frozen=True, eq=False)
class LabeledExample:
    """One feature window with its class label and the file it came from."""

    features: FeatureWindow = field(repr=False)
    label: int
    source: str
    window_index: int = 0

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label}")


@dataclass
class DatasetSplits:
    train: List[LabeledExample]
    validation: List[LabeledExample]
    test: List[LabeledExample]

    def __post_init__(self):
        for name, part in (("train", self.train), ("validation", self.validation), ("test", self.test)):
            if not part:
                raise SplitError(f"{name} split is empty")
        sources = [{e.source for e in part} for part in (self.train, self.validation, self.test)]
        if sources[0] & sources[1] or sources[0] & sources[2] or sources[1] & sources[2]:
            raise SplitError("splits share a source recording")
        if {e.label for e in self.train} != {0, 1}:
            raise SplitError("train split must contain both labels")

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: int


def _band_noise(rng: np.random.Generator, n: int, band: Tuple[float, float]) -> np.ndarray:
    sos = sps.butter(4, band, btype="bandpass", fs=RAW_RATE, output="sos")
    noise = sps.sosfilt(sos, rng.standard_normal(n))
    return noise / np.sqrt(np.mean(noise**2))


def _finish(rng: np.random.Generator, shaped: np.ndarray) -> AudioSignal:
    rms = np.sqrt(np.mean(shaped**2))
    mixed = shaped + rng.standard_normal(shaped.shape[0]) * rms * 10.0 ** (NOISE_DB / 20.0)
    return AudioSignal(samples=mixed * (PEAK / np.max(np.abs(mixed))), rate=RAW_RATE)


def _check_duration(duration_s: float) -> int:
    if duration_s < WINDOW_SECONDS:
        raise SignalError(f"duration must be at least {WINDOW_SECONDS} s, got {duration_s}")
    return int(round(duration_s * RAW_RATE))


def synth_eating(seed: int, duration_s: float = FILE_SECONDS) -> AudioSignal:
    """Chewing surrogate: Hann-shaped bursts of low-band noise at a seeded chew rate."""
    n = _check_duration(duration_s)
    rng = np.random.default_rng(seed)
    carrier = _band_noise(rng, n, EATING_BAND_HZ)
    rate = rng.uniform(*CHEW_RATE_HZ)
    envelope = np.zeros(n)
    t = rng.uniform(0.0, 1.0 / rate)
    while t < duration_s:
        width = int(rng.uniform(*BURST_SECONDS) * RAW_RATE)
        start = int(t * RAW_RATE)
        stop = min(start + width, n)
        envelope[start:stop] = np.hanning(width)[: stop - start] * rng.uniform(0.7, 1.0)
        t += rng.uniform(0.9, 1.1) / rate
    return _finish(rng, carrier * envelope)


def synth_noneating(seed: int, duration_s: float = FILE_SECONDS) -> AudioSignal:
    """Continuous 140-240 Hz noise under a piecewise-linear random envelope."""
    n = _check_duration(duration_s)
    rng = np.random.default_rng(seed)
    carrier = _band_noise(rng, n, NONEATING_BAND_HZ)
    knots = np.arange(0.0, duration_s + ENVELOPE_STEP_SECONDS, ENVELOPE_STEP_SECONDS)
    levels = rng.uniform(0.3, 1.0, knots.shape[0])
    envelope = np.interp(np.arange(n) / RAW_RATE, knots, levels)
    return _finish(rng, carrier * envelope)


def write_wav(signal: AudioSignal, path: WavSource) -> None:
    """16-bit PCM mono WAV; samples are rounded to the nearest 1/32768 and clipped."""
    pcm = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype(np.int16)
    sf.write(str(path) if isinstance(path, Path) else path, pcm, signal.rate, subtype="PCM_16", format="WAV")


def load_wav(source: WavSource) -> AudioSignal:
    """Read a mono 16- or 24-bit PCM WAV recorded at 20 kHz, scaled to [-1, 1)."""
    name = source if isinstance(source, (str, Path)) else "<stream>"
    try:
        f = sf.SoundFile(source if not isinstance(source, Path) else str(source))
    except RuntimeError as e:
        raise WavFormatError(f"{name}: not a readable RIFF/WAVE file ({e})") from e
    with f:
        if f.format not in ("WAV", "WAVEX"):
            raise WavFormatError(f"{name}: container is {f.format}, expected RIFF/WAVE")
        if f.subtype not in _PCM_SUBTYPES | _OTHER_PCM_SUBTYPES:
            raise NonPcmError(f"{name}: encoding {f.subtype} is not integer PCM")
        if f.channels != 1:
            raise StereoError(f"{name}: {f.channels} channels, expected mono")
        if f.subtype not in _PCM_SUBTYPES:
            raise UnsupportedDepthError(f"{name}: {f.subtype} is not 16- or 24-bit")
        if f.samplerate != RAW_RATE:
            raise WrongRateError(f"{name}: sample rate {f.samplerate} Hz, expected {RAW_RATE}")
        # int32 reads are left-justified, so one divisor covers both depths.
        data = f.read(dtype="int32", always_2d=False)
    return AudioSignal(samples=data.astype(np.float64) / _FULL_SCALE, rate=RAW_RATE)


def _file_seed(seed: int, label: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, label, index]).generate_state(1, np.uint64)[0])


def build_corpus(n_eat_files: int, n_non_files: int, seed: int, out_dir: Union[str, Path]) -> Path:
    """Write 120 s synthetic WAVs plus ``manifest.csv``; returns the manifest path."""
    if n_eat_files < 1 or n_non_files < 1:
        raise UsageError(f"file counts must be at least 1, got {n_eat_files} and {n_non_files}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, count, prefix, synth in (
        (1, n_eat_files, "eating", synth_eating),
        (0, n_non_files, "noneating", synth_noneating),
    ):
        for i in range(count):
            name = f"{prefix}_{i:03d}.wav"
            write_wav(synth(_file_seed(seed, label, i), FILE_SECONDS), out / name)
            rows.append((name, label))
    manifest = out / MANIFEST_NAME
    with open(manifest, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)
    logger.info(f"Wrote {n_eat_files} eating and {n_non_files} non-eating recordings to {out}")
    return manifest


def load_manifest(path: Union[str, Path]) -> List[ManifestEntry]:
    """Parse a ``path,label`` CSV; relative paths resolve against the manifest's folder."""
    path = Path(path)
    base = path.parent
    entries = []
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None:
                return []
            if [h.strip() for h in header] != MANIFEST_HEADER:
                raise ManifestError(f"{path}:1: header must be 'path,label', got {','.join(header)!r}")
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != 2:
                    raise ManifestError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
                label_text = row[1].strip()
                if label_text not in ("0", "1"):
                    raise ManifestError(f"{path}:{lineno}: label must be 0 or 1, got {label_text!r}")
                wav = Path(row[0].strip())
                if not wav.is_absolute():
                    wav = base / wav
                if not wav.is_file():
                    raise ManifestError(f"{path}:{lineno}: missing file {wav}")
                entries.append(ManifestEntry(path=wav, label=int(label_text)))
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    logger.info(f"Loaded {len(entries)} manifest rows from {path}")
    return entries


def _featurize_one(entry: ManifestEntry) -> List[LabeledExample]:
    windows = extract_features(load_wav(entry.path))
    return [
        LabeledExample(features=w, label=entry.label, source=str(entry.path), window_index=i)
        for i, w in enumerate(windows)
    ]


def featurize(entries: Sequence[ManifestEntry], workers: int = 1) -> List[LabeledExample]:
    """Run the front end on every file; output order follows the manifest."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_file = list(pool.map(_featurize_one, entries))
    else:
        per_file = [_featurize_one(e) for e in entries]
    examples = [ex for chunk in per_file for ex in chunk]
    logger.info(f"Featurized {len(entries)} files into {len(examples)} windows")
    return examples


def _largest_remainder(n: int, ratios: Sequence[float], assigned: Sequence[int]) -> List[int]:
    quotas = [n * r for r in ratios]
    counts = [int(math.floor(q + 1e-9)) for q in quotas]
    remainders = [round(q - c, 9) for q, c in zip(quotas, counts)]
    # Ties go to the split that has received fewer groups so far, then the earlier split.
    order = sorted(range(len(ratios)), key=lambda i: (-remainders[i], assigned[i], i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split(
    examples: Sequence[LabeledExample],
    ratios: Sequence[float] = (0.7, 0.15, 0.15),
    seed: int = 0,
) -> DatasetSplits:
    """Stratified, seeded train/validation/test split at source-file granularity."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise UsageError(f"ratios must be three positive numbers summing to 1, got {tuple(ratios)}")

    groups: Dict[str, List[LabeledExample]] = {}
    for ex in examples:
        groups.setdefault(ex.source, []).append(ex)
    by_label: Dict[int, List[str]] = {0: [], 1: []}
    for source, members in groups.items():
        labels = {ex.label for ex in members}
        if len(labels) != 1:
            raise SplitError(f"source {source} mixes labels {sorted(labels)}")
        by_label[labels.pop()].append(source)

    rng = XorShift64Star(seed)
    parts: List[List[LabeledExample]] = [[], [], []]
    assigned = [0, 0, 0]
    for label in (0, 1):
        sources = by_label[label]
        rng.shuffle(sources)
        counts = _largest_remainder(len(sources), ratios, assigned)
        start = 0
        for k, count in enumerate(counts):
            for source in sources[start:start + count]:
                parts[k].extend(groups[source])
            assigned[k] += count
            start += count

    try:
        splits = DatasetSplits(train=parts[0], validation=parts[1], test=parts[2])
    except SplitError as e:
        raise SplitError(f"insufficient examples for a {tuple(ratios)} split: {e}") from e
    logger.info(f"Split {len(examples)} windows into train/validation/test = {splits.sizes()}")
    return splits
