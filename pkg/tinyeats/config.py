from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import List, Optional, Tuple
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

class Settings(BaseSettings):
    # Application settings
    APP_NAME: str = "Tiny Eats Inference API"
    DEBUG: bool = os.getenv("DEBUG", "False").lower() == "true"
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # API settings
    API_PREFIX: str = "/api/v1"
    HOST: str = os.getenv("HOST", "0.0.0.0")
    PORT: int = int(os.getenv("PORT", "8000"))
    CORS_ORIGINS: List[str] = ["*"]

    # Quantized container served by the inference API
    MODEL_PATH: Optional[str] = os.getenv("MODEL_PATH")

    # Training defaults
    DEFAULT_SEED: int = Field(7, ge=0, lt=2**64)
    LEARNING_RATE: float = Field(0.01, gt=0)
    MOMENTUM: float = Field(0.9, ge=0, lt=1)
    BATCH_SIZE: int = Field(32, ge=1)
    FLOAT_EPOCHS: int = Field(100, ge=1)
    QAT_EPOCHS: int = Field(200, ge=1)
    SPLIT_RATIOS: Tuple[float, float, float] = (0.7, 0.15, 0.15)

    # Target device budget
    QUANT_BUDGET_BYTES: int = 12288
    FLASH_BYTES: int = 262144
    RAM_BYTES: int = 32768
    INFER_BUDGET_MS: float = 1.0

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

# Initialize settings
settings = Settings()
