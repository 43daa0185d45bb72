import logging

from fastapi import APIRouter, File, HTTPException, UploadFile, status

from tinyeats.core.errors import DataError, ModelUnavailableError, TinyEatsError
from tinyeats.schemas.inference import InferenceResponse
from tinyeats.schemas.reports import FootprintReport
from tinyeats.services.inference_service import inference_service

router = APIRouter()
logger = logging.getLogger(__name__)


def _http_error(e: Exception) -> HTTPException:
    if isinstance(e, ModelUnavailableError):
        return HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(e))
    if isinstance(e, DataError):
        return HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    return HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(e))


@router.post("/infer", response_model=InferenceResponse)
async def infer(file: UploadFile = File(...)):
    """
    Classify an uploaded 20 kHz mono WAV recording window by window.

    Every 4 s window runs through the front end and the integer-only engine.
    """
    payload = await file.read()
    try:
        return inference_service.classify(file.filename or "upload.wav", payload)
    except TinyEatsError as e:
        logger.error(f"Inference failed for {file.filename}: {e}")
        raise _http_error(e)
    except OSError as e:
        logger.error(f"Model unavailable: {e}")
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(e))


@router.get("/model", response_model=FootprintReport)
async def model_footprint():
    """Memory footprint of the served quantized model."""
    try:
        return inference_service.footprint()
    except TinyEatsError as e:
        logger.error(f"Footprint request failed: {e}")
        raise _http_error(e)
    except OSError as e:
        logger.error(f"Model unavailable: {e}")
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(e))
