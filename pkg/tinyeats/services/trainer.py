"""Class-weighted training with best-checkpoint retention, and evaluation metrics.

Training is plain mini-batch SGD with momentum. After every epoch the model is
scored on the validation split; the retained checkpoint is the one with the
highest validation accuracy, then the lowest validation loss, then the
earliest epoch. Quantization-aware training runs the same loop with every
weight tensor passed through ``fake_quant`` in the forward pass while the
update is applied to the latent real weights (straight-through estimator).
"""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from tinyeats.core.errors import ClassAbsentError, EmptySplitError, NonFiniteLossError
from tinyeats.core.rng import XorShift64Star
from tinyeats.schemas.training import ConfusionCounts, EpochRecord, Metrics, TrainConfig
from tinyeats.services import grunet
from tinyeats.services.corpus import DatasetSplits, LabeledExample
from tinyeats.services.grunet import FC_SIZE, HIDDEN_SIZE, INPUT_SIZE, TENSOR_NAMES, FloatModel
from tinyeats.services.quantizer import QuantModel, fake_quant

logger = logging.getLogger(__name__)

WeightTransform = Callable[[np.ndarray], np.ndarray]
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass
class TrainResult:
    """Retained model plus the full per-epoch history."""

    model: FloatModel
    history: List[EpochRecord]
    best_epoch: int
    class_weights: Tuple[float, float]


def _labels(split: Sequence[Union[LabeledExample, int]]) -> np.ndarray:
    return np.array([e.label if isinstance(e, LabeledExample) else int(e) for e in split], dtype=np.int64)


def _stack(split: Sequence[LabeledExample]) -> np.ndarray:
    return np.stack([e.features.values for e in split])


def class_weights(train_split: Sequence[Union[LabeledExample, int]]) -> Tuple[float, float]:
    """Inverse-frequency weights ``N / (2 * N_c)`` for the two classes."""
    labels = _labels(train_split)
    counts = np.bincount(labels, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise ClassAbsentError(f"both classes must be present in training data, counts = {counts.tolist()}")
    total = int(counts.sum())
    return (total / (2.0 * counts[0]), total / (2.0 * counts[1]))


def init_model(
    seed: int, input_size: int = INPUT_SIZE, hidden_size: int = HIDDEN_SIZE, fc_size: int = FC_SIZE
) -> FloatModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from a seeded xorshift64* stream."""
    rng = XorShift64Star(seed)
    template = FloatModel.zeros(input_size, hidden_size, fc_size)
    tensors = {}
    for name, zeros in template.tensors().items():
        bound = 1.0 / math.sqrt(zeros.shape[1])
        tensors[name] = rng.uniform(-bound, bound, zeros.shape)
    return FloatModel.from_tensors(tensors)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def confusion_counts(predictions: Sequence[int], labels: Sequence[int]) -> ConfusionCounts:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    return ConfusionCounts(
        tp=int(np.sum((pred == 1) & (true == 1))),
        fp=int(np.sum((pred == 1) & (true == 0))),
        fn=int(np.sum((pred == 0) & (true == 1))),
        tn=int(np.sum((pred == 0) & (true == 0))),
    )


def compute_metrics(counts: ConfusionCounts) -> Metrics:
    if counts.total == 0:
        raise EmptySplitError("no windows were evaluated")
    flags = []
    if counts.tp + counts.fp == 0:
        precision = 0.0
        flags.append("precision_undefined")
    else:
        precision = counts.tp / (counts.tp + counts.fp)
    if counts.tp + counts.fn == 0:
        recall = 0.0
        flags.append("recall_undefined")
    else:
        recall = counts.tp / (counts.tp + counts.fn)
    if flags:
        logger.warning(f"Metric denominators were zero: {', '.join(flags)}")
    return Metrics(
        accuracy=(counts.tp + counts.tn) / counts.total,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        flags=flags,
    )


def predict_split(model: Union[FloatModel, QuantModel], split: Sequence[LabeledExample]) -> np.ndarray:
    """Per-window labels; quantized models run on the integer engine."""
    if isinstance(model, QuantModel):
        from tinyeats.services.qinfer import qpredict

        return np.array([qpredict(e.features, model) for e in split], dtype=np.int64)
    return grunet.predict_batch(_stack(split), model)


def evaluate(model: Union[FloatModel, QuantModel], split: Sequence[LabeledExample]) -> Tuple[ConfusionCounts, Metrics]:
    """Confusion counts and metrics of arg-max predictions over a split."""
    if len(split) == 0:
        raise EmptySplitError("cannot evaluate an empty split")
    counts = confusion_counts(predict_split(model, split), _labels(split))
    return counts, compute_metrics(counts)


def evaluate_loss(model: FloatModel, split: Sequence[LabeledExample], weights: Tuple[float, float]) -> float:
    """Mean class-weighted loss over a split."""
    if len(split) == 0:
        raise EmptySplitError("cannot evaluate an empty split")
    _, probs = grunet.forward_batch(_stack(split), model)
    return float(grunet.batch_losses(probs, _labels(split), weights).mean())


def _epoch_rng(seed: int, epoch: int) -> XorShift64Star:
    return XorShift64Star((seed + epoch * _GOLDEN) & ((1 << 64) - 1))


def _fit(
    splits: DatasetSplits,
    config: TrainConfig,
    transform: Optional[WeightTransform],
) -> TrainResult:
    if not splits.train or not splits.validation:
        raise EmptySplitError("training and validation splits must be non-empty")
    weights = class_weights(splits.train)
    x_train, y_train = _stack(splits.train), _labels(splits.train)
    x_val, y_val = _stack(splits.validation), _labels(splits.validation)
    n = len(y_train)

    def view(params: Dict[str, np.ndarray]) -> FloatModel:
        if transform is None:
            return FloatModel.from_tensors(params)
        return FloatModel.from_tensors({k: transform(v) for k, v in params.items()})

    params = {k: np.array(v) for k, v in init_model(config.seed).tensors().items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    history: List[EpochRecord] = []
    best: Optional[Tuple[float, float, int]] = None
    best_model: Optional[FloatModel] = None

    logger.info(
        f"Training on {n} windows ({int(y_train.sum())} eating), validating on {len(y_val)}; "
        f"class weights = ({weights[0]:.4f}, {weights[1]:.4f}), qat = {transform is not None}"
    )
    for epoch in range(1, config.epochs + 1):
        order = np.array(_epoch_rng(config.seed, epoch).permutation(n), dtype=np.int64)
        loss_sum = 0.0
        for batch_no, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, grads = grunet.backward_batch(x_train[idx], y_train[idx], view(params), weights)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLossError(
                    f"non-finite loss or gradient at epoch {epoch}, batch {batch_no}: loss = {loss}"
                )
            loss_sum += loss * len(idx)
            for name in TENSOR_NAMES:
                velocity[name] = config.momentum * velocity[name] - config.learning_rate * grads[name]
                params[name] = params[name] + velocity[name]

        current = view(params)
        _, probs = grunet.forward_batch(x_val, current)
        val_loss = float(grunet.batch_losses(probs, y_val, weights).mean())
        if not math.isfinite(val_loss):
            raise NonFiniteLossError(f"non-finite validation loss at epoch {epoch}")
        val_acc = float(np.mean(np.argmax(probs, axis=1) == y_val))
        record = EpochRecord(epoch=epoch, train_loss=loss_sum / n, val_loss=val_loss, val_accuracy=val_acc)
        history.append(record)
        logger.info(
            f"epoch {epoch}: train_loss={record.train_loss:.4f} val_loss={val_loss:.4f} "
            f"val_accuracy={val_acc:.4f}"
        )
        if best is None or val_acc > best[0] or (val_acc == best[0] and val_loss < best[1]):
            best = (val_acc, val_loss, epoch)
            best_model = current

    assert best is not None and best_model is not None
    logger.info(f"Retained epoch {best[2]}: val_accuracy={best[0]:.4f} val_loss={best[1]:.4f}")
    return TrainResult(model=best_model, history=history, best_epoch=best[2], class_weights=weights)


def train(splits: DatasetSplits, config: TrainConfig) -> TrainResult:
    """Float training with best-validation-accuracy checkpoint retention."""
    return _fit(splits, config, transform=None)


def train_qat(
    splits: DatasetSplits, config: TrainConfig, weight_transform: WeightTransform = fake_quant
) -> TrainResult:
    """Quantization-aware training; the retained model already lies on the int8 grid."""
    return _fit(splits, config, transform=weight_transform)


def write_history(history: Sequence[EpochRecord], path: Union[str, Path]) -> None:
    """Per-epoch history as CSV: epoch, train_loss, val_loss, val_accuracy."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
        for record in history:
            writer.writerow([record.epoch, repr(record.train_loss), repr(record.val_loss), repr(record.val_accuracy)])
    logger.info(f"Wrote {len(history)} history rows to {path}")
