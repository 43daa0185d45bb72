import io

import numpy as np
import pytest
import soundfile as sf
from fastapi.testclient import TestClient

from main import app
from tinyeats.config import settings
from tinyeats.services import corpus, model_store, qinfer
from tinyeats.services.dsp_frontend import extract_features
from tinyeats.services.inference_service import inference_service
from tinyeats.services.quantizer import QuantModel


@pytest.fixture
def client():
    yield TestClient(app)
    inference_service.model = None
    inference_service.model_path = None


@pytest.fixture
def served_model(quant_model, monkeypatch):
    monkeypatch.setattr(inference_service, "model", quant_model)
    return quant_model


def _wav_bytes(seconds: int = 8) -> bytes:
    buf = io.BytesIO()
    corpus.write_wav(corpus.synth_eating(4, duration_s=seconds), buf)
    return buf.getvalue()


def test_root(client):
    body = client.get("/").json()
    assert body["infer"] == f"{settings.API_PREFIX}/infer"


def test_health_reports_model_state(client, served_model):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert body["model_loaded"] is True


def test_infer_matches_integer_engine(client, served_model):
    payload = _wav_bytes()
    response = client.post(
        f"{settings.API_PREFIX}/infer", files={"file": ("meal.wav", payload, "audio/wav")}
    )
    assert response.status_code == 200
    body = response.json()
    assert body["filename"] == "meal.wav"
    assert len(body["windows"]) == 2
    windows = extract_features(corpus.load_wav(io.BytesIO(payload)))
    for entry, window in zip(body["windows"], windows):
        label, scores = qinfer.qforward(qinfer.quantize_features(window), served_model)
        assert entry["label"] == label
        assert entry["scores"] == list(scores)
    assert body["eating_windows"] == sum(w["label"] for w in body["windows"])


def test_infer_rejects_bad_audio(client, served_model):
    buf = io.BytesIO()
    sf.write(buf, np.zeros((100, 2), dtype=np.int16), 20000, subtype="PCM_16", format="WAV")
    response = client.post(
        f"{settings.API_PREFIX}/infer", files={"file": ("stereo.wav", buf.getvalue(), "audio/wav")}
    )
    assert response.status_code == 422
    assert "channels" in response.json()["detail"]


def test_infer_without_model(client, monkeypatch):
    monkeypatch.setattr(settings, "MODEL_PATH", None)
    response = client.post(
        f"{settings.API_PREFIX}/infer", files={"file": ("meal.wav", _wav_bytes(4), "audio/wav")}
    )
    assert response.status_code == 503
    assert "MODEL_PATH" in response.json()["detail"]


def test_model_footprint(client, served_model):
    body = client.get(f"{settings.API_PREFIX}/model").json()
    assert body["container_bytes"] == 5741
    assert body["weight_bytes"] == 5568


def test_startup_loads_configured_model(quant_model, tmp_path, monkeypatch):
    path = tmp_path / "model.tegm"
    model_store.save_model(quant_model, path)
    monkeypatch.setattr(settings, "MODEL_PATH", str(path))
    with TestClient(app) as client:
        assert client.get("/health").json()["model_loaded"] is True
    assert not inference_service.loaded


def test_corrupt_model_is_unavailable(client, quant_model, tmp_path, monkeypatch):
    path = tmp_path / "model.tegm"
    model_store.save_model(quant_model, path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    monkeypatch.setattr(settings, "MODEL_PATH", str(path))
    response = client.get(f"{settings.API_PREFIX}/model")
    assert response.status_code == 503
    assert "CRC mismatch" in response.json()["detail"]
    response = client.post(
        f"{settings.API_PREFIX}/infer", files={"file": ("meal.wav", _wav_bytes(4), "audio/wav")}
    )
    assert response.status_code == 503


def test_float_model_is_unavailable(client, float_model, tmp_path, monkeypatch):
    path = tmp_path / "float.tegm"
    model_store.save_model(float_model, path)
    monkeypatch.setattr(settings, "MODEL_PATH", str(path))
    assert client.get(f"{settings.API_PREFIX}/model").status_code == 503


def test_infer_uses_model_norm(client, quant_model, monkeypatch):
    narrow = QuantModel(tensors=quant_model.tensors, norm=(-5.0, 1.0))
    monkeypatch.setattr(inference_service, "model", narrow)
    payload = _wav_bytes()
    body = client.post(
        f"{settings.API_PREFIX}/infer", files={"file": ("meal.wav", payload, "audio/wav")}
    ).json()
    windows = extract_features(corpus.load_wav(io.BytesIO(payload)), narrow.norm)
    expected = [list(qinfer.qforward(qinfer.quantize_features(w), narrow)[1]) for w in windows]
    assert [entry["scores"] for entry in body["windows"]] == expected
