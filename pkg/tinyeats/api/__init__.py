"""API endpoints package."""

from fastapi import APIRouter

router = APIRouter()


def register_routers():
    """Register all API routers to avoid circular imports."""
    from .endpoints import inference as inference_endpoints

    router.include_router(inference_endpoints.router, tags=["inference"])


register_routers()
