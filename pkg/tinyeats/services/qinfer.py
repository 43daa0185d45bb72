"""Integer-only inference engine: int8 weights, Q15 activations.

Every pre-activation is a 32-bit accumulation of int8 x Q15 products, rescaled
once per vector with the tensor's (mult, shift) pair. No floating-point value
is read on this path; the tensor scales are used only by the float reference.
"""
import logging
import time
import weakref
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from tinyeats.core import qmath
from tinyeats.core.errors import (
    AccumulatorOverflowError,
    DimensionError,
    EmptySplitError,
    FeatureShapeError,
    QuantizationError,
)
from tinyeats.services.corpus import LabeledExample
from tinyeats.services.dsp_frontend import N_BINS, N_FRAMES, FeatureWindow
from tinyeats.services.grunet import FloatModel, predict_batch
from tinyeats.services.quantizer import QuantModel, QuantTensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QFeatureWindow:
    """15x65 Q15 feature matrix."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (N_FRAMES, N_BINS):
            raise FeatureShapeError(f"quantized window must be {N_FRAMES}x{N_BINS}, got {values.shape}")
        if not np.issubdtype(values.dtype, np.integer):
            raise FeatureShapeError("quantized window must hold integers")
        if values.min() < qmath.Q15_MIN or values.max() > qmath.Q15_MAX:
            raise FeatureShapeError("quantized window leaves the Q15 range")
        object.__setattr__(self, "values", values.astype(np.int64))


@dataclass(frozen=True, eq=False)
class QGruState:
    """Q15 GRU state vector."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.int64)
        if h.ndim != 1 or h.min(initial=0) < qmath.Q15_MIN or h.max(initial=0) > qmath.Q15_MAX:
            raise DimensionError("Q15 state must be a vector within the Q15 range")
        object.__setattr__(self, "h", h)

    @classmethod
    def zeros(cls, hidden_size: int) -> "QGruState":
        return cls(h=np.zeros(hidden_size, dtype=np.int64))


@dataclass(frozen=True)
class _Requant:
    """Per-row integer rescale parameters for one pre-activation vector."""

    mult: np.ndarray
    shift: np.ndarray
    half: np.ndarray

    @classmethod
    def of(cls, *tensors: QuantTensor) -> "_Requant":
        mult = np.concatenate([np.full(t.shape[0], t.mult, dtype=np.int64) for t in tensors])
        shift = np.concatenate([np.full(t.shape[0], t.shift, dtype=np.int64) for t in tensors])
        if np.any(shift < 1):
            raise QuantizationError("integer engine needs every rescale shift >= 1")
        return cls(mult=mult, shift=shift, half=np.left_shift(1, shift - 1))

    def apply(self, acc: np.ndarray) -> np.ndarray:
        return qmath.rescale_unchecked(acc, self.mult, self.shift, self.half)


def _check_bounds(name: str, t: QuantTensor) -> None:
    """Worst case over Q15 inputs: the accumulator fits 32 bits and the rescaled value stays below 2^30."""
    worst_acc = int(np.abs(t.values.astype(np.int64)).sum(axis=1).max(initial=0)) * qmath.Q15_ONE
    if worst_acc > qmath.INT32_MAX:
        raise AccumulatorOverflowError(f"{name}: worst-case accumulator {worst_acc} exceeds 32 bits")
    worst_pre = (worst_acc * t.mult + (1 << t.shift)) >> t.shift
    if worst_pre >= qmath.ACC_LIMIT:
        raise AccumulatorOverflowError(f"{name}: worst-case pre-activation {worst_pre} reaches 2^30")


@dataclass(frozen=True)
class QGruLayer:
    """One quantized GRU layer split into input and recurrent weight blocks.

    ``step`` is the reference formulation built from the saturating qmath kernels.
    """

    n_in: int
    hidden: int
    w_rz_x: np.ndarray
    w_rz_h: np.ndarray
    w_h_x: np.ndarray
    w_h_h: np.ndarray
    rq_rz: _Requant
    rq_h: _Requant

    @classmethod
    def from_tensors(cls, w_r: QuantTensor, w_z: QuantTensor, w_h: QuantTensor) -> "QGruLayer":
        hidden, width = w_r.shape
        n_in = width - hidden
        for name, t in (("W_r", w_r), ("W_z", w_z), ("W_h", w_h)):
            _check_bounds(name, t)
        rz = np.concatenate([w_r.values, w_z.values]).astype(np.int64)
        wh = w_h.values.astype(np.int64)
        return cls(
            n_in=n_in,
            hidden=hidden,
            w_rz_x=np.ascontiguousarray(rz[:, :n_in]),
            w_rz_h=np.ascontiguousarray(rz[:, n_in:]),
            w_h_x=np.ascontiguousarray(wh[:, :n_in]),
            w_h_h=np.ascontiguousarray(wh[:, n_in:]),
            rq_rz=_Requant.of(w_r, w_z),
            rq_h=_Requant.of(w_h),
        )

    def step(self, acc_rz_x: np.ndarray, acc_h_x: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Advance one step given the input-side accumulators for this step."""
        gates = qmath.shifted_softsign_q(self.rq_rz.apply(acc_rz_x + self.w_rz_h @ h))
        r, z = gates[: self.hidden], gates[self.hidden:]
        rh = qmath.q15_mul(r, h)
        h_tilde = qmath.softsign_q(self.rq_h.apply(acc_h_x + self.w_h_h @ rh))
        return qmath.sat_add(h_tilde, qmath.q15_mul_acc(z, h - h_tilde))

    def run(self, xs: np.ndarray) -> np.ndarray:
        """All states for a (T, n_in) Q15 sequence starting from h = 0."""
        acc_rz = xs @ self.w_rz_x.T
        acc_h = xs @ self.w_h_x.T
        h = np.zeros(self.hidden, dtype=np.int64)
        states = np.empty((xs.shape[0], self.hidden), dtype=np.int64)
        for t in range(xs.shape[0]):
            h = self.step(acc_rz[t], acc_h[t], h)
            states[t] = h
        return states


@dataclass(frozen=True)
class QEngine:
    """A QuantModel prepared for repeated integer inference.

    Both GRU layers advance together: at wavefront k the first layer consumes
    frame k while the second consumes the first layer's state from frame k-1,
    so a 15-frame window takes 16 fused steps over the stacked state [h1, h2].
    The zero blocks add nothing to any accumulator, so every integer matches
    the layer-by-layer reference. Saturation is omitted where it cannot bind:
    gates are at most 32767, which keeps r*h inside Q15, and the update
    h~ + z*(h - h~) lands between h~ and h.
    """

    gru1: QGruLayer
    gru2: QGruLayer
    w_fc: np.ndarray
    w_out: np.ndarray
    rq_fc: _Requant
    rq_out: _Requant
    wx_gates: np.ndarray
    wx_cand: np.ndarray
    w_gates: np.ndarray
    w_cand: np.ndarray
    rq_gates: _Requant
    rq_cand: _Requant

    @classmethod
    def prepare(cls, qm: QuantModel) -> "QEngine":
        t = qm.tensors
        _check_bounds("fc", t["fc"])
        _check_bounds("out", t["out"])
        g1 = QGruLayer.from_tensors(t["gru1.W_r"], t["gru1.W_z"], t["gru1.W_h"])
        g2 = QGruLayer.from_tensors(t["gru2.W_r"], t["gru2.W_z"], t["gru2.W_h"])
        hid, n_in = g1.hidden, g1.n_in

        # Gate rows are ordered r1, r2, z1, z2 so r and z are contiguous halves.
        wx_gates = np.zeros((4 * hid, n_in), dtype=np.int64)
        wx_gates[0:hid] = g1.w_rz_x[:hid]
        wx_gates[2 * hid:3 * hid] = g1.w_rz_x[hid:]
        w_gates = np.zeros((4 * hid, 2 * hid), dtype=np.int64)
        w_gates[0:hid, :hid] = g1.w_rz_h[:hid]
        w_gates[hid:2 * hid, :hid] = g2.w_rz_x[:hid]
        w_gates[hid:2 * hid, hid:] = g2.w_rz_h[:hid]
        w_gates[2 * hid:3 * hid, :hid] = g1.w_rz_h[hid:]
        w_gates[3 * hid:, :hid] = g2.w_rz_x[hid:]
        w_gates[3 * hid:, hid:] = g2.w_rz_h[hid:]

        # Candidate rows act on [h1, h2, r1*h1, r2*h2].
        wx_cand = np.zeros((2 * hid, n_in), dtype=np.int64)
        wx_cand[:hid] = g1.w_h_x
        w_cand = np.zeros((2 * hid, 4 * hid), dtype=np.int64)
        w_cand[:hid, 2 * hid:3 * hid] = g1.w_h_h
        w_cand[hid:, :hid] = g2.w_h_x
        w_cand[hid:, 3 * hid:] = g2.w_h_h

        return cls(
            gru1=g1,
            gru2=g2,
            w_fc=t["fc"].values.astype(np.int64),
            w_out=t["out"].values.astype(np.int64),
            rq_fc=_Requant.of(t["fc"]),
            rq_out=_Requant.of(t["out"]),
            wx_gates=wx_gates,
            wx_cand=wx_cand,
            w_gates=w_gates,
            w_cand=w_cand,
            rq_gates=_Requant.of(t["gru1.W_r"], t["gru2.W_r"], t["gru1.W_z"], t["gru2.W_z"]),
            rq_cand=_Requant.of(t["gru1.W_h"], t["gru2.W_h"]),
        )

    def _head(self, h2: np.ndarray) -> np.ndarray:
        f = qmath.softsign_q(self.rq_fc.apply(self.w_fc @ h2))
        return self.rq_out.apply(self.w_out @ f)

    def reference_scores(self, xs: np.ndarray) -> np.ndarray:
        """Layer-by-layer evaluation with the saturating kernels."""
        h1 = self.gru1.run(xs)
        h2 = self.gru2.run(h1)
        return self._head(h2[-1])

    def scores(self, xs: np.ndarray) -> np.ndarray:
        steps = xs.shape[0]
        hid2 = 2 * self.gru1.hidden
        acc_gates = np.zeros((steps + 1, self.wx_gates.shape[0]), dtype=np.int64)
        acc_gates[:steps] = xs @ self.wx_gates.T
        acc_cand = np.zeros((steps + 1, hid2), dtype=np.int64)
        acc_cand[:steps] = xs @ self.wx_cand.T

        g_mult, g_shift, g_half = self.rq_gates.mult, self.rq_gates.shift, self.rq_gates.half
        c_mult, c_shift, c_half = self.rq_cand.mult, self.rq_cand.shift, self.rq_cand.half
        rescale, softsign = qmath.rescale_unchecked, qmath.softsign_unchecked
        s = np.zeros(hid2, dtype=np.int64)
        for k in range(steps + 1):
            gates = (softsign(rescale(self.w_gates @ s + acc_gates[k], g_mult, g_shift, g_half)) + 32768) >> 1
            rh = (gates[:hid2] * s + 16384) >> 15
            a = self.w_cand @ np.concatenate((s, rh)) + acc_cand[k]
            h_tilde = softsign(rescale(a, c_mult, c_shift, c_half))
            s = h_tilde + ((gates[hid2:] * (s - h_tilde) + 16384) >> 15)
        return self._head(s[self.gru1.hidden:])


_ENGINES: "weakref.WeakKeyDictionary[QuantModel, QEngine]" = weakref.WeakKeyDictionary()


def engine_for(qm: QuantModel) -> QEngine:
    engine = _ENGINES.get(qm)
    if engine is None:
        engine = QEngine.prepare(qm)
        _ENGINES[qm] = engine
    return engine


def quantize_features(w: FeatureWindow) -> QFeatureWindow:
    """Elementwise Q15 conversion of a normalized feature window."""
    return QFeatureWindow(values=qmath.q15_from_real(w.values))


def layer_for(qm: QuantModel, layer: str) -> QGruLayer:
    """The prepared ``gru1`` or ``gru2`` layer of a model."""
    return getattr(engine_for(qm), layer)


def qgru_step(xq, hq: QGruState, qp: QGruLayer) -> QGruState:
    """One integer GRU step: gates via shifted soft-sign, candidate via soft-sign."""
    xq = np.asarray(xq, dtype=np.int64)
    if xq.shape != (qp.n_in,) or hq.h.shape != (qp.hidden,):
        raise DimensionError(
            f"qgru_step expects x of length {qp.n_in} and h of length {qp.hidden}, "
            f"got {xq.shape} and {hq.h.shape}"
        )
    h = qp.step(qp.w_rz_x @ xq, qp.w_h_x @ xq, hq.h)
    return QGruState(h=h)


def qforward(qw: QFeatureWindow, qm: QuantModel) -> Tuple[int, Tuple[int, int]]:
    """Label and the two Q15-scale integer scores; equal scores resolve to label 0."""
    scores = engine_for(qm).scores(qw.values)
    s0, s1 = int(scores[0]), int(scores[1])
    return (1 if s1 > s0 else 0), (s0, s1)


def qpredict(w: FeatureWindow, qm: QuantModel) -> int:
    return qforward(quantize_features(w), qm)[0]


def _windows(split: Sequence[Union[FeatureWindow, LabeledExample]]) -> List[FeatureWindow]:
    if len(split) == 0:
        raise EmptySplitError("cannot compare paths on an empty split")
    return [e.features if isinstance(e, LabeledExample) else e for e in split]


def label_trace(
    fm: FloatModel, qm: QuantModel, split: Sequence[LabeledExample]
) -> List[Tuple[int, int, int, int]]:
    """Per-window (index, true label, float label, integer label)."""
    windows = _windows(split)
    float_labels = predict_batch(np.stack([w.values for w in windows]), fm)
    return [
        (i, ex.label, int(float_labels[i]), qpredict(w, qm))
        for i, (ex, w) in enumerate(zip(split, windows))
    ]


def agreement(fm: FloatModel, qm: QuantModel, split: Sequence[Union[FeatureWindow, LabeledExample]]) -> float:
    """Fraction of windows where the float and integer paths emit the same label."""
    windows = _windows(split)
    float_labels = predict_batch(np.stack([w.values for w in windows]), fm)
    same = sum(int(f) == qpredict(w, qm) for f, w in zip(float_labels, windows))
    rate = same / len(windows)
    logger.info(f"Float/integer label agreement: {same}/{len(windows)} = {rate:.4f}")
    return rate


def time_per_window_ms(qw: QFeatureWindow, qm: QuantModel, repeats: int = 50) -> float:
    """Median wall time of one integer inference, in milliseconds."""
    engine = engine_for(qm)
    engine.scores(qw.values)
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        engine.scores(qw.values)
        samples.append((time.perf_counter() - start) * 1000.0)
    return float(np.median(samples))
