from fastapi import APIRouter
from .keyrate import router as keyrate_router
from .statistics import router as statistics_router

# Create main router
api_router = APIRouter()

# Include sub-routers
api_router.include_router(statistics_router, tags=["statistics"])
api_router.include_router(keyrate_router, prefix="/keyrate", tags=["keyrate"])
