"""REST service layer: app factory, configuration and wire models."""

from runlog.service.app import API_PREFIX, ApiError, api_route_paths, create_app
from runlog.service.config import ServiceConfig, TokenEntry, load_config

__all__ = [
    "API_PREFIX",
    "ApiError",
    "ServiceConfig",
    "TokenEntry",
    "api_route_paths",
    "create_app",
    "load_config",
]
