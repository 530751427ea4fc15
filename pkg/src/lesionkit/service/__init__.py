"""HTTP inference service for trained artifacts."""

from .app import ServiceSettings, ServingState, create_app, load_artifact

__all__ = ["ServiceSettings", "ServingState", "create_app", "load_artifact"]
