from pydantic import BaseModel, Field
from typing import List
from datetime import datetime

from tinyeats.schemas.reports import WindowPrediction


class InferenceResponse(BaseModel):
    """Response model for a WAV classification request."""
    filename: str = Field(..., description="Name of the uploaded file")
    windows: List[WindowPrediction] = Field(default_factory=list, description="One entry per 4 s window")
    eating_windows: int = Field(0, description="Number of windows labelled eating")
    mean_window_ms: float = Field(0.0, description="Mean integer inference time per window")
    timestamp: datetime = Field(default_factory=datetime.utcnow, description="Timestamp of the response")


class HealthCheck(BaseModel):
    """Health check response model."""
    status: str = Field(..., description="Service status")
    version: str = Field(..., description="API version")
    model_loaded: bool = Field(False, description="Whether a quantized model is available")
    timestamp: datetime = Field(default_factory=datetime.utcnow, description="Current server time")
