from pydantic import BaseModel, Field
from typing import List, Optional, Dict, Any


class EvalReport(BaseModel):
    """JSON report written by ``tinyeats eval``; the key set is fixed."""
    accuracy: float = Field(..., description="(tp + tn) / total")
    precision: float = Field(..., description="tp / (tp + fp), 0 when undefined")
    recall: float = Field(..., description="tp / (tp + fn), 0 when undefined")
    f1: float = Field(..., description="Harmonic mean of precision and recall")
    tp: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)
    tn: int = Field(..., ge=0)


class FootprintReport(BaseModel):
    """Memory use of a quantized model on the target microcontroller."""
    container_bytes: int = Field(..., description="Size of the TEGM container")
    weight_bytes: int = Field(..., description="Number of int8 weights")
    budget_bytes: int = Field(..., description="Flash budget for the model")
    budget_fraction: float = Field(..., description="container_bytes / budget_bytes")
    flash_fraction: float = Field(..., description="container_bytes / device flash")
    activation_bytes: int = Field(..., description="Q15 working set during one inference")
    ram_fraction: float = Field(..., description="activation_bytes / device RAM")


class WindowPrediction(BaseModel):
    """Integer-path output for one 4-second window."""
    index: int = Field(..., ge=0, description="Window index within the recording")
    label: int = Field(..., ge=0, le=1, description="0 = non-eating, 1 = eating")
    scores: List[int] = Field(..., min_length=2, max_length=2, description="Q15-scale class scores")


class CommandOutcome(BaseModel):
    """Result of one CLI command."""
    exit_code: int = Field(0, description="0 ok, 1 usage, 2 data, 3 invariant violation")
    message: str = Field("", description="Human-readable summary")
    report: Optional[Dict[str, Any]] = Field(None, description="Optional machine-readable report")
