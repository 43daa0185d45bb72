"""Per-tensor symmetric 8-bit weight quantization.

``q = round_half_away(w * 127 / max|w|)`` in [-127, 127] with one positive
scale per tensor. The scale is also carried as an integer (mult, shift) pair,
``mult * 2**-shift ~= scale``, so the integer engine never needs a float.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from tinyeats.core.errors import BudgetExceededError, QuantizationError
from tinyeats.core.qmath import MULT_MAX, MULT_MIN, SHIFT_MAX
from tinyeats.config import settings
from tinyeats.services.grunet import TENSOR_NAMES, FloatModel
from tinyeats.services.dsp_frontend import LOGMAG_CEIL, LOGMAG_FLOOR

logger = logging.getLogger(__name__)

QMAX = 127


def _split_scale(scale: float) -> Tuple[int, int]:
    mantissa, exponent = math.frexp(scale)
    mult = int(round(mantissa * (1 << 31)))
    if mult == MULT_MAX:
        mult //= 2
        exponent += 1
    return mult, 31 - exponent


def scale_to_mult_shift(scale: float) -> Tuple[int, int]:
    """Split a positive scale into ``mult`` in [2**30, 2**31) and a right shift."""
    if not math.isfinite(scale) or scale <= 0:
        raise QuantizationError(f"scale must be positive and finite, got {scale}")
    mult, shift = _split_scale(scale)
    if not 0 <= shift <= SHIFT_MAX:
        raise QuantizationError(f"scale {scale} needs shift {shift}, outside [0, {SHIFT_MAX}]")
    return mult, shift


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True, eq=False)
class QuantTensor:
    """int8 values with their per-tensor scale and integer requantization pair."""

    values: np.ndarray = field(repr=False)
    scale: float
    mult: int
    shift: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.int8)
        if values.ndim != 2:
            raise QuantizationError(f"quantized tensor must be a matrix, got shape {values.shape}")
        if np.any(values == -128):
            raise QuantizationError("int8 value -128 is outside the symmetric range")
        if not MULT_MIN <= self.mult < MULT_MAX:
            raise QuantizationError(f"mult {self.mult} outside [2^29, 2^31)")
        if not 0 <= self.shift <= SHIFT_MAX:
            raise QuantizationError(f"shift {self.shift} outside [0, {SHIFT_MAX}]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class QuantModel:
    """One QuantTensor per FloatModel tensor plus the feature-map constants."""

    tensors: Dict[str, QuantTensor] = field(repr=False)
    norm: Tuple[float, float] = (LOGMAG_FLOOR, LOGMAG_CEIL)

    def __post_init__(self):
        if tuple(self.tensors) != TENSOR_NAMES:
            raise QuantizationError(f"quantized tensors must be {TENSOR_NAMES}")
        # Building the dequantized view enforces the architecture's shape rules.
        self.dequantize().check_architecture()
        size = self.payload_bytes()
        if size > settings.QUANT_BUDGET_BYTES:
            raise BudgetExceededError(
                f"quantized payload {size} bytes exceeds budget {settings.QUANT_BUDGET_BYTES}"
            )

    def __getitem__(self, name: str) -> QuantTensor:
        return self.tensors[name]

    def weight_count(self) -> int:
        return sum(t.values.size for t in self.tensors.values())

    def payload_bytes(self) -> int:
        # Lazily imported: the container layout lives in model_store.
        from tinyeats.services.model_store import quant_container_size

        return quant_container_size(self)

    def dequantize(self) -> FloatModel:
        return FloatModel.from_tensors(
            {name: dequantize_tensor(t) for name, t in self.tensors.items()}, self.norm
        )


def quantize_tensor(w) -> QuantTensor:
    """Symmetric per-tensor quantization; an all-zero tensor gets scale 1.

    A tensor so small that its scale needs a shift beyond 62 is quantized as
    all-zero: every rescaled product would round to 0.
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise QuantizationError("cannot quantize a tensor with non-finite entries")
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    if peak / QMAX == 0.0 or _split_scale(peak / QMAX)[1] > SHIFT_MAX:
        if peak > 0.0:
            logger.debug(f"Tensor peak {peak:.3g} is below the int8 grid; quantized as zeros")
        scale = 1.0
        values = np.zeros(w.shape)
    else:
        scale = peak / QMAX
        values = round_half_away(w * QMAX / peak)
    values = np.clip(values, -QMAX, QMAX).astype(np.int8)
    mult, shift = scale_to_mult_shift(scale)
    return QuantTensor(values=values, scale=scale, mult=mult, shift=shift)


def dequantize_tensor(q: QuantTensor) -> np.ndarray:
    return q.values.astype(np.float64) * q.scale


def fake_quant(w) -> np.ndarray:
    """Quantize-dequantize round trip (identity in the backward pass)."""
    return dequantize_tensor(quantize_tensor(w))


def quantize_model(m: FloatModel) -> QuantModel:
    """Quantize every tensor independently; the norm constants are copied."""
    m.check_architecture()
    qm = QuantModel(tensors={name: quantize_tensor(t) for name, t in m.tensors().items()}, norm=m.norm)
    logger.info(f"Quantized {qm.weight_count()} weights into a {qm.payload_bytes()}-byte container")
    return qm
