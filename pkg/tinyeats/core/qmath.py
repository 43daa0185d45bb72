"""Q15 fixed-point kernels for the integer inference path.

Q15 values are 16-bit signed integers read as ``raw / 32768``. Accumulators
(AccQ15) are wider signed integers on the same scale. Every kernel accepts a
Python ``int`` or an integer numpy array and works elementwise; scalar inputs
give ``int`` results. Nothing here touches floating point except
``q15_from_real``, which is the boundary where real features enter.
"""
from typing import Union

import numpy as np

from tinyeats.core.errors import (
    AccumulatorOverflowError,
    FixedPointRangeError,
    SignalError,
)

IntLike = Union[int, np.ndarray]

Q15_MIN = -32768
Q15_MAX = 32767
Q15_ONE = 32768
ACC_LIMIT = 1 << 30
MULT_MIN = 1 << 29
MULT_MAX = 1 << 31
SHIFT_MAX = 62
INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1


def _like(template, values: np.ndarray) -> IntLike:
    if isinstance(template, np.ndarray):
        return values
    return int(values)


def saturate(x: IntLike) -> IntLike:
    """Clamp to the Q15 range."""
    return _like(x, np.clip(np.asarray(x, dtype=np.int64), Q15_MIN, Q15_MAX))


def q15_from_real(x) -> IntLike:
    """Round half away from zero of ``x * 32768``, clamped to Q15."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise SignalError("cannot convert a non-finite value to Q15")
    scaled = arr * Q15_ONE
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    out = np.clip(rounded, Q15_MIN, Q15_MAX).astype(np.int64)
    if np.ndim(x) == 0 and not isinstance(x, np.ndarray):
        return int(out)
    return out


def q15_mul_acc(a: IntLike, b: IntLike) -> IntLike:
    """Rounded Q15 product without saturation (result is an AccQ15)."""
    prod = np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64)
    return _like(a if isinstance(a, np.ndarray) else b, (prod + 16384) >> 15)


def q15_mul(a: IntLike, b: IntLike) -> IntLike:
    """``(a*b + 16384) >> 15`` saturated to Q15."""
    out = np.clip(np.asarray(q15_mul_acc(a, b), dtype=np.int64), Q15_MIN, Q15_MAX)
    return _like(a if isinstance(a, np.ndarray) else b, out)


def sat_add(a: IntLike, b: IntLike) -> IntLike:
    total = np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64)
    return _like(a if isinstance(a, np.ndarray) else b, np.clip(total, Q15_MIN, Q15_MAX))


def softsign_q(x: IntLike) -> IntLike:
    """Integer soft-sign: ``x*32768 / (32768 + |x|)``, truncated toward zero.

    Raises:
        AccumulatorOverflowError: if any ``|x| >= 2**30``.
    """
    arr = np.asarray(x, dtype=np.int64)
    mag = np.abs(arr)
    if np.any(mag >= ACC_LIMIT):
        raise AccumulatorOverflowError(f"soft-sign input exceeds 2^30: max |x| = {int(mag.max())}")
    q = (mag << 15) // (mag + Q15_ONE)
    return _like(x, np.where(arr < 0, -q, q))


def shifted_softsign_q(x: IntLike) -> IntLike:
    """Gate activation ``(softsign + 1) / 2`` in Q15; result in [0, 32767]."""
    s = np.asarray(softsign_q(x), dtype=np.int64)
    return _like(x, (s + Q15_ONE) >> 1)


def rescale(acc: IntLike, mult: IntLike, shift: IntLike) -> IntLike:
    """Round-half-away-from-zero of ``acc * mult / 2**shift`` (64-bit intermediate).

    Args:
        acc: 32-bit signed accumulator(s).
        mult: multiplier(s) in [2**29, 2**31).
        shift: right shift(s) in [0, 62].

    Raises:
        FixedPointRangeError: if any argument leaves its range.
    """
    acc_arr = np.asarray(acc, dtype=np.int64)
    mult_arr = np.asarray(mult, dtype=np.int64)
    shift_arr = np.asarray(shift, dtype=np.int64)
    if np.any((shift_arr < 0) | (shift_arr > SHIFT_MAX)):
        raise FixedPointRangeError(f"shift out of range [0, {SHIFT_MAX}]: {shift}")
    if np.any((mult_arr < MULT_MIN) | (mult_arr >= MULT_MAX)):
        raise FixedPointRangeError(f"mult out of range [2^29, 2^31): {mult}")
    if np.any((acc_arr < INT32_MIN) | (acc_arr > INT32_MAX)):
        raise FixedPointRangeError("accumulator does not fit in 32 bits")
    prod = acc_arr * mult_arr
    half = np.where(shift_arr > 0, np.left_shift(1, np.maximum(shift_arr - 1, 0)), 0)
    neg = ((prod < 0) & (shift_arr > 0)).astype(np.int64)
    out = (prod + half - neg) >> shift_arr
    return _like(acc if isinstance(acc, np.ndarray) else mult, out)


def rescale_unchecked(acc: np.ndarray, mult: np.ndarray, shift: np.ndarray, half: np.ndarray) -> np.ndarray:
    """``rescale`` for prepared per-row parameters with every shift >= 1.

    ``half`` must equal ``1 << (shift - 1)``. Ranges are validated once when a
    model is prepared for inference, not on every call.
    """
    prod = acc * mult
    return (prod + half - (prod < 0)) >> shift


def softsign_unchecked(x: np.ndarray) -> np.ndarray:
    """``softsign_q`` for arrays already known to satisfy ``|x| < 2**30``."""
    mag = np.abs(x)
    q = (mag << 15) // (mag + Q15_ONE)
    return np.where(x < 0, -q, q)
