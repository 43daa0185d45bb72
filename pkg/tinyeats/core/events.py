import logging
from typing import Awaitable, Callable

from fastapi import FastAPI

from tinyeats.config import settings
from tinyeats.core.errors import TinyEatsError
from tinyeats.services.inference_service import inference_service

logger = logging.getLogger(__name__)


async def startup(app: FastAPI) -> None:
    """
    Load the configured quantized model when the server starts.

    A missing or unreadable model is logged; requests then fail until one is provided.

    Args:
        app: The FastAPI application instance
    """
    logger.info("Starting up application...")
    if not settings.MODEL_PATH:
        logger.warning("MODEL_PATH is not set; inference endpoints will return errors")
        return
    try:
        inference_service.load(settings.MODEL_PATH)
    except (TinyEatsError, OSError) as e:
        logger.error(f"Could not load model from {settings.MODEL_PATH}: {e}")


async def shutdown(app: FastAPI) -> None:
    logger.info("Shutting down application...")
    inference_service.model = None


def create_start_app_handler(app: FastAPI) -> Callable[[], Awaitable[None]]:
    async def start_app() -> None:
        await startup(app)

    return start_app


def create_stop_app_handler(app: FastAPI) -> Callable[[], Awaitable[None]]:
    async def stop_app() -> None:
        await shutdown(app)

    return stop_app
