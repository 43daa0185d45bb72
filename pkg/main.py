import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from tinyeats import __version__
from tinyeats.api import router as api_router
from tinyeats.config import settings
from tinyeats.core.events import create_start_app_handler, create_stop_app_handler
from tinyeats.schemas.inference import HealthCheck
from tinyeats.services.inference_service import inference_service

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)


def get_application() -> FastAPI:
    """
    Create and configure the FastAPI application.

    Returns:
        FastAPI: Configured FastAPI application instance
    """
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        await create_start_app_handler(app)()
        yield
        await create_stop_app_handler(app)()

    app = FastAPI(
        lifespan=lifespan,
        title=settings.APP_NAME,
        description="Integer-only eating-episode detection on 20 kHz audio recordings",
        version=__version__,
        docs_url="/docs",
        redoc_url="/redoc",
        openapi_url=f"{settings.API_PREFIX}/openapi.json",
    )

    app.add_middleware(
        CORSMiddleware,
        allow_origins=settings.CORS_ORIGINS,
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/")
    async def root():
        """Root endpoint with service information."""
        return {
            "message": f"Welcome to {settings.APP_NAME}",
            "version": __version__,
            "docs": "/docs",
            "health_check": "/health",
            "infer": f"{settings.API_PREFIX}/infer",
        }

    @app.get("/health", response_model=HealthCheck)
    async def health_check():
        """Health check endpoint."""
        return HealthCheck(status="ok", version=app.version, model_loaded=inference_service.loaded)

    app.include_router(api_router, prefix=f"{settings.API_PREFIX}")

    return app


app = get_application()

if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "main:app",
        host=settings.HOST,
        port=settings.PORT,
        reload=settings.DEBUG,
        log_level="info" if settings.DEBUG else "warning",
    )
