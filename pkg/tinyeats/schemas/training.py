from pydantic import BaseModel, Field, model_validator
from typing import List, Optional

from tinyeats.config import settings


class TrainConfig(BaseModel):
    """Hyperparameters of one training run."""
    learning_rate: float = Field(default_factory=lambda: settings.LEARNING_RATE, gt=0, description="SGD step size")
    momentum: float = Field(default_factory=lambda: settings.MOMENTUM, ge=0, lt=1, description="Heavy-ball momentum")
    batch_size: int = Field(default_factory=lambda: settings.BATCH_SIZE, ge=1, description="Windows per mini-batch")
    epochs: Optional[int] = Field(
        None, ge=1, description="Epoch count; defaults to 100 for float training and 200 with QAT"
    )
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0, lt=2**64, description="Seed for init and shuffles")
    qat: bool = Field(False, description="Train with fake-quantized weights")

    @model_validator(mode="after")
    def _default_epochs(self) -> "TrainConfig":
        if self.epochs is None:
            self.epochs = settings.QAT_EPOCHS if self.qat else settings.FLOAT_EPOCHS
        return self


class EpochRecord(BaseModel):
    """One row of the training history."""
    epoch: int = Field(..., ge=1, description="1-based epoch index")
    train_loss: float = Field(..., description="Mean weighted loss over the training split")
    val_loss: float = Field(..., description="Mean weighted loss over the validation split")
    val_accuracy: float = Field(..., ge=0, le=1, description="Validation accuracy")


class ConfusionCounts(BaseModel):
    """Confusion counts with eating (label 1) as the positive class."""
    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


class Metrics(BaseModel):
    """Accuracy, precision, recall and F1 derived from confusion counts."""
    accuracy: float = Field(..., ge=0, le=1)
    precision: float = Field(..., ge=0, le=1)
    recall: float = Field(..., ge=0, le=1)
    f1: float = Field(..., ge=0, le=1)
    flags: List[str] = Field(default_factory=list, description="Metrics whose denominator was zero")
