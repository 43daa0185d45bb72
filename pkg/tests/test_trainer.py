import csv
import math

import numpy as np
import pytest
from pydantic import ValidationError

from tinyeats.core.errors import ClassAbsentError, EmptySplitError, NonFiniteLossError
from tinyeats.schemas.training import ConfusionCounts, TrainConfig
from tinyeats.services import grunet, qinfer, trainer
from tinyeats.services.corpus import DatasetSplits, LabeledExample
from tinyeats.services.dsp_frontend import N_BINS, N_FRAMES, FeatureWindow
from tinyeats.services.grunet import FloatModel
from tinyeats.services.quantizer import fake_quant, quantize_model


def _example(rng: np.random.Generator, label: int, source: str) -> LabeledExample:
    values = rng.uniform(-0.3, 0.3, (N_FRAMES, N_BINS))
    values[:, :20] += 0.6 if label else -0.6
    return LabeledExample(features=FeatureWindow(values), label=label, source=source)


@pytest.fixture(scope="module")
def separable_splits() -> DatasetSplits:
    rng = np.random.default_rng(5)

    def part(prefix, n):
        return [_example(rng, i % 2, f"{prefix}_{i}.wav") for i in range(n)]

    return DatasetSplits(train=part("train", 40), validation=part("val", 10), test=part("test", 10))


class TestClassWeights:
    def test_balanced(self):
        assert trainer.class_weights([0] * 50 + [1] * 50) == (1.0, 1.0)

    def test_imbalanced(self):
        w0, w1 = trainer.class_weights([0] * 70 + [1] * 30)
        assert w0 == pytest.approx(0.7142857, abs=1e-6)
        assert w1 == pytest.approx(1.6666667, abs=1e-6)

    def test_missing_class(self):
        with pytest.raises(ClassAbsentError):
            trainer.class_weights([0] * 10)


class TestInitModel:
    def test_deterministic(self):
        a, b = trainer.init_model(7).tensors(), trainer.init_model(7).tensors()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_seeds_differ(self):
        a, b = trainer.init_model(7).tensors(), trainer.init_model(8).tensors()
        assert not np.array_equal(a["gru1.W_r"], b["gru1.W_r"])

    def test_seed_pairs_differ_almost_everywhere(self):
        for seed in range(10):
            a = np.concatenate([w.ravel() for w in trainer.init_model(seed).tensors().values()])
            b = np.concatenate([w.ravel() for w in trainer.init_model(seed + 1).tensors().values()])
            assert np.mean(a != b) >= 0.99

    def test_bounds(self):
        for name, w in trainer.init_model(3).tensors().items():
            bound = 1.0 / math.sqrt(w.shape[1])
            assert np.all(np.abs(w) <= bound), name
        assert np.max(np.abs(trainer.init_model(3).tensors()["gru1.W_h"])) <= 1.0 / 9.0


class TestMetrics:
    def test_example_counts(self):
        m = trainer.compute_metrics(ConfusionCounts(tp=3, fp=1, fn=2, tn=4))
        assert m.accuracy == pytest.approx(0.7)
        assert m.precision == pytest.approx(0.75)
        assert m.recall == pytest.approx(0.6)
        assert m.f1 == pytest.approx(0.6667, abs=1e-4)
        assert m.flags == []

    def test_f1(self):
        assert trainer.f1_score(0.9468, 0.9512) == pytest.approx(0.9490, abs=1e-4)
        assert trainer.f1_score(0.0, 0.0) == 0.0

    def test_undefined_denominators(self):
        m = trainer.compute_metrics(ConfusionCounts(tn=5))
        assert (m.precision, m.recall, m.f1, m.accuracy) == (0.0, 0.0, 0.0, 1.0)
        assert m.flags == ["precision_undefined", "recall_undefined"]

    def test_empty(self):
        with pytest.raises(EmptySplitError):
            trainer.compute_metrics(ConfusionCounts())

    def test_confusion_counts(self):
        counts = trainer.confusion_counts([1, 1, 0, 0, 1], [1, 0, 1, 0, 1])
        assert (counts.tp, counts.fp, counts.fn, counts.tn) == (2, 1, 1, 1)

    def test_zero_model_loss(self, separable_splits):
        loss = trainer.evaluate_loss(FloatModel.zeros(), separable_splits.test, (1.0, 1.0))
        assert loss == pytest.approx(math.log(2.0))

    def test_quantized_model_uses_integer_path(self, quant_model, separable_splits):
        counts, metrics = trainer.evaluate(quant_model, separable_splits.test)
        assert counts.total == 10
        assert 0.0 <= metrics.accuracy <= 1.0


class TestTrainConfig:
    def test_epoch_defaults(self):
        assert TrainConfig().epochs == 100
        assert TrainConfig(qat=True).epochs == 200
        assert TrainConfig(epochs=5, qat=True).epochs == 5

    def test_zero_epochs_rejected(self):
        with pytest.raises(ValidationError):
            TrainConfig(epochs=0)


class TestTraining:
    config = TrainConfig(epochs=10, seed=4, batch_size=8)

    def test_retains_best_validation_epoch(self, separable_splits):
        result = trainer.train(separable_splits, self.config)
        assert len(result.history) == 10
        best = result.history[result.best_epoch - 1]
        top = max(r.val_accuracy for r in result.history)
        assert best.val_accuracy == top
        assert best.val_loss == min(r.val_loss for r in result.history if r.val_accuracy == top)
        _, metrics = trainer.evaluate(result.model, separable_splits.validation)
        assert metrics.accuracy == best.val_accuracy

    def test_learns_separable_data(self, separable_splits):
        result = trainer.train(separable_splits, self.config)
        assert result.history[-1].train_loss < result.history[0].train_loss

    def test_deterministic(self, separable_splits):
        a = trainer.train(separable_splits, self.config).model.tensors()
        b = trainer.train(separable_splits, self.config).model.tensors()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_identity_transform_matches_float_training(self, separable_splits):
        config = TrainConfig(epochs=3, seed=4, batch_size=8)
        plain = trainer.train(separable_splits, config)
        identity = trainer.train_qat(separable_splits, config, weight_transform=lambda w: w)
        assert plain.best_epoch == identity.best_epoch
        for name, w in plain.model.tensors().items():
            np.testing.assert_array_equal(w, identity.model.tensors()[name])

    def test_qat_model_lies_on_int8_grid(self, separable_splits):
        result = trainer.train_qat(separable_splits, TrainConfig(epochs=3, seed=4, batch_size=8, qat=True))
        for w in result.model.tensors().values():
            np.testing.assert_allclose(fake_quant(w), w, rtol=0, atol=1e-12)

    def test_quantized_qat_model_keeps_validation_accuracy(self, separable_splits):
        result = trainer.train_qat(separable_splits, TrainConfig(epochs=10, seed=4, batch_size=8, qat=True))
        retained = result.history[result.best_epoch - 1]
        qm = quantize_model(result.model)
        _, metrics = trainer.evaluate(qm, separable_splits.validation)
        assert abs(metrics.accuracy - retained.val_accuracy) <= 0.1
        assert qinfer.agreement(result.model, qm, separable_splits.validation) >= 0.9

    def test_non_finite_loss_aborts(self, separable_splits, monkeypatch):
        real = grunet.backward_batch

        def diverging(*args):
            _, grads = real(*args)
            return float("nan"), grads

        monkeypatch.setattr(grunet, "backward_batch", diverging)
        with pytest.raises(NonFiniteLossError, match="epoch 1, batch 0"):
            trainer.train(separable_splits, TrainConfig(epochs=1, seed=4))

    def test_write_history(self, separable_splits, tmp_path):
        result = trainer.train(separable_splits, TrainConfig(epochs=2, seed=4, batch_size=8))
        path = tmp_path / "history.csv"
        trainer.write_history(result.history, path)
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["epoch", "train_loss", "val_loss", "val_accuracy"]
        assert [r[0] for r in rows[1:]] == ["1", "2"]
        assert float(rows[1][1]) == result.history[0].train_loss
