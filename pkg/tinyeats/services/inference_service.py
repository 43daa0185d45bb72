"""Quantized-model holder behind the HTTP API."""
import io
import logging
import time
from pathlib import Path
from typing import Optional, Union

from tinyeats.config import settings
from tinyeats.core.errors import DataError, ModelUnavailableError
from tinyeats.schemas.inference import InferenceResponse
from tinyeats.schemas.reports import FootprintReport, WindowPrediction
from tinyeats.services import model_store, qinfer
from tinyeats.services.corpus import load_wav
from tinyeats.services.dsp_frontend import extract_features
from tinyeats.services.quantizer import QuantModel

logger = logging.getLogger(__name__)


class InferenceService:
    """Loads the quantized container once and classifies uploaded recordings."""

    def __init__(self):
        self.model: Optional[QuantModel] = None
        self.model_path: Optional[str] = None

    @property
    def loaded(self) -> bool:
        return self.model is not None

    def load(self, path: Union[str, Path, None] = None) -> QuantModel:
        """
        Load a quantized model container.

        Args:
            path: Container path; defaults to ``settings.MODEL_PATH``

        Returns:
            QuantModel: The loaded model
        """
        path = path or settings.MODEL_PATH
        if not path:
            raise ModelUnavailableError("no model configured; set MODEL_PATH")
        try:
            self.model = model_store.load_quant_model(path)
        except (DataError, OSError) as e:
            raise ModelUnavailableError(f"cannot load model: {e}") from e
        self.model_path = str(path)
        logger.info(f"Loaded quantized model from {path}")
        return self.model

    def require_model(self) -> QuantModel:
        if self.model is None:
            return self.load()
        return self.model

    def classify(self, filename: str, payload: bytes) -> InferenceResponse:
        """
        Classify every 4 s window of an uploaded WAV file on the integer path.

        Args:
            filename: Name reported back to the client
            payload: Raw WAV bytes

        Returns:
            InferenceResponse: Per-window labels and scores
        """
        qm = self.require_model()
        windows = extract_features(load_wav(io.BytesIO(payload)), qm.norm)
        predictions = []
        elapsed = 0.0
        for i, window in enumerate(windows):
            qw = qinfer.quantize_features(window)
            start = time.perf_counter()
            label, scores = qinfer.qforward(qw, qm)
            elapsed += time.perf_counter() - start
            predictions.append(WindowPrediction(index=i, label=label, scores=list(scores)))
        eating = sum(p.label for p in predictions)
        logger.info(f"Classified {filename}: {eating}/{len(predictions)} eating windows")
        return InferenceResponse(
            filename=filename,
            windows=predictions,
            eating_windows=eating,
            mean_window_ms=elapsed * 1000.0 / len(predictions) if predictions else 0.0,
        )

    def footprint(self) -> FootprintReport:
        return model_store.footprint(self.require_model())


# Create a singleton instance
inference_service = InferenceService()
