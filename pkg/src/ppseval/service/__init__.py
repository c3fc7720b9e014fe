"""HTTP service: FastAPI app factory and request/response models."""

from .app import create_app

__all__ = ["create_app"]
