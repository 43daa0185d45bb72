"""Shared fixtures: seeded models and a small synthetic corpus built once per session."""
from pathlib import Path

import numpy as np
import pytest

from tinyeats.services import corpus, trainer
from tinyeats.services.dsp_frontend import N_BINS, N_FRAMES, FeatureWindow
from tinyeats.services.grunet import FloatModel
from tinyeats.services.quantizer import QuantModel, quantize_model


def random_model(seed: int, gain: float = 1.0) -> FloatModel:
    """init_model weights, optionally amplified to exercise wider pre-activations."""
    return trainer.init_model(seed).map(lambda w: w * gain)


def random_window(seed: int) -> FeatureWindow:
    rng = np.random.default_rng(seed)
    return FeatureWindow(values=rng.uniform(-1.0, 1.0, (N_FRAMES, N_BINS)))


@pytest.fixture
def float_model() -> FloatModel:
    return random_model(11, gain=3.0)


@pytest.fixture
def quant_model(float_model) -> QuantModel:
    return quantize_model(float_model)


@pytest.fixture
def zero_quant_model() -> QuantModel:
    return quantize_model(FloatModel.zeros())


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Path:
    """Two eating and two non-eating 120 s recordings plus their manifest."""
    out = tmp_path_factory.mktemp("corpus")
    return corpus.build_corpus(2, 2, seed=3, out_dir=out)


@pytest.fixture(scope="session")
def small_examples(small_corpus):
    return corpus.featurize(corpus.load_manifest(small_corpus))
