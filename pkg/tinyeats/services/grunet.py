"""Floating-point reference of the soft-sign GRU classifier.

Architecture: GRU(65->16) -> GRU(16->16) -> FC(16->8, soft-sign) -> FC(8->2) ->
softmax. There are no bias terms. Gates use the shifted soft-sign
``(x/(1+|x|) + 1)/2`` and the candidate state uses the plain soft-sign.

Forward and backward passes are vectorised over a leading batch axis; the
single-window functions are thin wrappers. Gradients are exact (backprop
through time over the whole sequence).
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple, Union

import numpy as np

from tinyeats.core.errors import DataError, DimensionError
from tinyeats.services.dsp_frontend import LOGMAG_CEIL, LOGMAG_FLOOR, N_BINS, FeatureWindow

logger = logging.getLogger(__name__)

INPUT_SIZE = N_BINS
HIDDEN_SIZE = 16
FC_SIZE = 8
N_CLASSES = 2
PROB_FLOOR = 1e-12

TENSOR_NAMES = (
    "gru1.W_r",
    "gru1.W_z",
    "gru1.W_h",
    "gru2.W_r",
    "gru2.W_z",
    "gru2.W_h",
    "fc",
    "out",
)

GradientSet = Dict[str, np.ndarray]


def _checked(name: str, values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GruLayerParams:
    """Weights of one GRU layer, each acting on the concatenation [x, h]."""

    W_r: np.ndarray = field(repr=False)
    W_z: np.ndarray = field(repr=False)
    W_h: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("W_r", "W_z", "W_h"):
            object.__setattr__(self, name, _checked(name, getattr(self, name)))
        shapes = {self.W_r.shape, self.W_z.shape, self.W_h.shape}
        if len(shapes) != 1:
            raise DimensionError(f"gate matrices disagree in shape: {sorted(shapes)}")
        hidden, width = self.W_r.shape
        if width <= hidden:
            raise DimensionError(f"gate matrix {self.W_r.shape} leaves no room for the input")

    @property
    def hidden_size(self) -> int:
        return self.W_r.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_r.shape[1] - self.W_r.shape[0]

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "GruLayerParams":
        shape = (hidden_size, input_size + hidden_size)
        return cls(W_r=np.zeros(shape), W_z=np.zeros(shape), W_h=np.zeros(shape))


@dataclass(frozen=True, eq=False)
class FloatModel:
    """Real-valued parameters of the whole network plus the feature-map constants."""

    gru1: GruLayerParams
    gru2: GruLayerParams
    fc: np.ndarray = field(repr=False)
    out: np.ndarray = field(repr=False)
    norm: Tuple[float, float] = (LOGMAG_FLOOR, LOGMAG_CEIL)

    def __post_init__(self):
        object.__setattr__(self, "fc", _checked("fc", self.fc))
        object.__setattr__(self, "out", _checked("out", self.out))
        object.__setattr__(self, "norm", (float(self.norm[0]), float(self.norm[1])))
        if self.gru2.input_size != self.gru1.hidden_size:
            raise DimensionError("gru2 input does not match gru1 hidden size")
        if self.fc.shape[1] != self.gru2.hidden_size:
            raise DimensionError("fc columns do not match gru2 hidden size")
        if self.out.shape[1] != self.fc.shape[0]:
            raise DimensionError("out columns do not match fc rows")
        if self.out.shape[0] != N_CLASSES:
            raise DimensionError(f"output layer must have {N_CLASSES} rows")

    @property
    def dims(self) -> Tuple[int, int, int, int, int]:
        """(input, hidden1, hidden2, fc, classes)."""
        return (
            self.gru1.input_size,
            self.gru1.hidden_size,
            self.gru2.hidden_size,
            self.fc.shape[0],
            self.out.shape[0],
        )

    def check_architecture(self) -> None:
        """Raise unless this is the deployable 65-16-16-8-2 network."""
        expected = (INPUT_SIZE, HIDDEN_SIZE, HIDDEN_SIZE, FC_SIZE, N_CLASSES)
        if self.dims != expected:
            raise DimensionError(f"model dimensions {self.dims} differ from {expected}")

    def tensors(self) -> Dict[str, np.ndarray]:
        return {
            "gru1.W_r": self.gru1.W_r,
            "gru1.W_z": self.gru1.W_z,
            "gru1.W_h": self.gru1.W_h,
            "gru2.W_r": self.gru2.W_r,
            "gru2.W_z": self.gru2.W_z,
            "gru2.W_h": self.gru2.W_h,
            "fc": self.fc,
            "out": self.out,
        }

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray], norm=(LOGMAG_FLOOR, LOGMAG_CEIL)) -> "FloatModel":
        missing = set(TENSOR_NAMES) - set(tensors)
        if missing:
            raise DimensionError(f"missing tensors: {sorted(missing)}")
        return cls(
            gru1=GruLayerParams(tensors["gru1.W_r"], tensors["gru1.W_z"], tensors["gru1.W_h"]),
            gru2=GruLayerParams(tensors["gru2.W_r"], tensors["gru2.W_z"], tensors["gru2.W_h"]),
            fc=tensors["fc"],
            out=tensors["out"],
            norm=norm,
        )

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "FloatModel":
        """Apply ``fn`` to every weight tensor."""
        return FloatModel.from_tensors({k: fn(v) for k, v in self.tensors().items()}, self.norm)

    @classmethod
    def zeros(
        cls, input_size: int = INPUT_SIZE, hidden_size: int = HIDDEN_SIZE, fc_size: int = FC_SIZE
    ) -> "FloatModel":
        return cls(
            gru1=GruLayerParams.zeros(input_size, hidden_size),
            gru2=GruLayerParams.zeros(hidden_size, hidden_size),
            fc=np.zeros((fc_size, hidden_size)),
            out=np.zeros((N_CLASSES, fc_size)),
        )


@dataclass(frozen=True, eq=False)
class GruState:
    """Carried GRU cell state h."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        if h.ndim != 1 or not np.all(np.isfinite(h)):
            raise DimensionError("GRU state must be a finite vector")
        object.__setattr__(self, "h", h)

    @classmethod
    def zeros(cls, hidden_size: int = HIDDEN_SIZE) -> "GruState":
        return cls(h=np.zeros(hidden_size))


def softsign(x):
    return x / (1.0 + np.abs(x))


def shifted_softsign(x):
    return (softsign(x) + 1.0) / 2.0


def softsign_grad(x):
    return 1.0 / np.square(1.0 + np.abs(x))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _step(x: np.ndarray, h_prev: np.ndarray, p: GruLayerParams) -> Tuple[np.ndarray, dict]:
    """One batched step; x is (B, F), h_prev is (B, H)."""
    c = np.concatenate([x, h_prev], axis=1)
    a_r = c @ p.W_r.T
    a_z = c @ p.W_z.T
    r = shifted_softsign(a_r)
    z = shifted_softsign(a_z)
    c2 = np.concatenate([x, r * h_prev], axis=1)
    a_h = c2 @ p.W_h.T
    h_tilde = softsign(a_h)
    h = h_tilde + z * (h_prev - h_tilde)
    cache = dict(c=c, c2=c2, h_prev=h_prev, a_r=a_r, a_z=a_z, r=r, z=z, a_h=a_h, h_tilde=h_tilde)
    return h, cache


def _step_backward(dh: np.ndarray, cache: dict, p: GruLayerParams, grads: Dict[str, np.ndarray]):
    """Backprop one step; accumulates weight gradients and returns (dx, dh_prev)."""
    n_in = p.input_size
    h_prev, z, r = cache["h_prev"], cache["z"], cache["r"]
    dz = dh * (h_prev - cache["h_tilde"])
    dh_tilde = dh * (1.0 - z)
    dh_prev = dh * z

    da_h = dh_tilde * softsign_grad(cache["a_h"])
    grads["W_h"] += da_h.T @ cache["c2"]
    dc2 = da_h @ p.W_h
    dx = dc2[:, :n_in].copy()
    drh = dc2[:, n_in:]
    dh_prev += drh * r
    dr = drh * h_prev

    da_r = dr * 0.5 * softsign_grad(cache["a_r"])
    da_z = dz * 0.5 * softsign_grad(cache["a_z"])
    grads["W_r"] += da_r.T @ cache["c"]
    grads["W_z"] += da_z.T @ cache["c"]
    dc = da_r @ p.W_r + da_z @ p.W_z
    dx += dc[:, :n_in]
    dh_prev += dc[:, n_in:]
    return dx, dh_prev


def gru_step(x, h_prev: GruState, p: GruLayerParams) -> GruState:
    """Advance one GRU layer by one time step."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.input_size,) or h_prev.h.shape != (p.hidden_size,):
        raise DimensionError(
            f"gru_step expects x of length {p.input_size} and h of length {p.hidden_size}, "
            f"got {x.shape} and {h_prev.h.shape}"
        )
    h, _ = _step(x[None, :], h_prev.h[None, :], p)
    return GruState(h=h[0])


def _as_batch(x) -> np.ndarray:
    if isinstance(x, FeatureWindow):
        return x.values[None, :, :]
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise DimensionError(f"expected a (batch, time, features) array, got shape {arr.shape}")
    return arr


def _layer_forward(xs: np.ndarray, p: GruLayerParams) -> Tuple[np.ndarray, List[dict]]:
    batch, steps, n_in = xs.shape
    if n_in != p.input_size:
        raise DimensionError(f"layer expects {p.input_size} inputs, got {n_in}")
    h = np.zeros((batch, p.hidden_size))
    outputs = np.empty((batch, steps, p.hidden_size))
    caches = []
    for t in range(steps):
        h, cache = _step(xs[:, t, :], h, p)
        outputs[:, t, :] = h
        caches.append(cache)
    return outputs, caches


def _layer_backward(d_out: np.ndarray, caches: List[dict], p: GruLayerParams):
    grads = {name: np.zeros_like(getattr(p, name)) for name in ("W_r", "W_z", "W_h")}
    batch, steps, _ = d_out.shape
    dxs = np.empty((batch, steps, p.input_size))
    dh_next = np.zeros((batch, p.hidden_size))
    for t in reversed(range(steps)):
        dx, dh_next = _step_backward(d_out[:, t, :] + dh_next, caches[t], p, grads)
        dxs[:, t, :] = dx
    return dxs, grads


def _forward_full(xs: np.ndarray, m: FloatModel):
    h1, c1 = _layer_forward(xs, m.gru1)
    h2, c2 = _layer_forward(h1, m.gru2)
    last = h2[:, -1, :]
    a_fc = last @ m.fc.T
    f = softsign(a_fc)
    logits = f @ m.out.T
    cache = dict(c1=c1, c2=c2, h1=h1, h2=h2, last=last, a_fc=a_fc, f=f)
    return logits, softmax(logits), cache


def forward_batch(xs, m: FloatModel) -> Tuple[np.ndarray, np.ndarray]:
    """Logits and class probabilities for a (B, T, F) batch."""
    logits, probs, _ = _forward_full(_as_batch(xs), m)
    return logits, probs


def forward(w: Union[FeatureWindow, np.ndarray], m: FloatModel) -> Tuple[np.ndarray, np.ndarray]:
    """Classify one window; returns (logits, probs), each of length 2."""
    logits, probs = forward_batch(w, m)
    return logits[0], probs[0]


def predict(w: Union[FeatureWindow, np.ndarray], m: FloatModel) -> int:
    """Arg-max class; equal logits resolve to class 0 (non-eating)."""
    logits, _ = forward(w, m)
    return int(np.argmax(logits))


def predict_batch(xs, m: FloatModel) -> np.ndarray:
    logits, _ = forward_batch(xs, m)
    return np.argmax(logits, axis=1)


def _check_label(label: int) -> int:
    if label not in (0, 1):
        raise DataError(f"label must be 0 or 1, got {label!r}")
    return int(label)


def loss_weighted_ce(probs, label: int, class_weights) -> float:
    """Class-weighted cross-entropy ``-w[label] * ln(probs[label])``."""
    label = _check_label(label)
    p = max(float(probs[label]), PROB_FLOOR)
    return -float(class_weights[label]) * float(np.log(p))


def batch_losses(probs: np.ndarray, labels: np.ndarray, class_weights) -> np.ndarray:
    weights = np.asarray(class_weights, dtype=np.float64)[labels]
    picked = np.maximum(probs[np.arange(len(labels)), labels], PROB_FLOOR)
    return -weights * np.log(picked)


def logit_gradient(probs, label: int, class_weight: float = 1.0) -> np.ndarray:
    """d loss / d logits for softmax cross-entropy: ``w * (probs - onehot)``."""
    label = _check_label(label)
    onehot = np.zeros(N_CLASSES)
    onehot[label] = 1.0
    return class_weight * (np.asarray(probs, dtype=np.float64) - onehot)


def backward_batch(xs, labels, m: FloatModel, class_weights) -> Tuple[float, GradientSet]:
    """Mean weighted loss over the batch and its exact gradient for every tensor."""
    xs = _as_batch(xs)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != xs.shape[0]:
        raise DimensionError(f"{xs.shape[0]} inputs but {labels.shape[0]} labels")
    if np.any((labels != 0) & (labels != 1)):
        raise DataError("labels must be 0 or 1")
    batch = xs.shape[0]
    logits, probs, cache = _forward_full(xs, m)
    losses = batch_losses(probs, labels, class_weights)

    weights = np.asarray(class_weights, dtype=np.float64)[labels]
    onehot = np.eye(N_CLASSES)[labels]
    d_logits = (weights[:, None] * (probs - onehot)) / batch

    grads: GradientSet = {}
    grads["out"] = d_logits.T @ cache["f"]
    d_f = d_logits @ m.out
    d_afc = d_f * softsign_grad(cache["a_fc"])
    grads["fc"] = d_afc.T @ cache["last"]
    d_last = d_afc @ m.fc

    d_h2 = np.zeros_like(cache["h2"])
    d_h2[:, -1, :] = d_last
    d_h1, g2 = _layer_backward(d_h2, cache["c2"], m.gru2)
    _, g1 = _layer_backward(d_h1, cache["c1"], m.gru1)
    for name, value in g1.items():
        grads[f"gru1.{name}"] = value
    for name, value in g2.items():
        grads[f"gru2.{name}"] = value
    return float(losses.mean()), grads


def backward(w: Union[FeatureWindow, np.ndarray], label: int, m: FloatModel, class_weights) -> GradientSet:
    """Gradient of the weighted loss of one window with respect to every tensor."""
    _check_label(label)
    _, grads = backward_batch(w, [label], m, class_weights)
    return grads
