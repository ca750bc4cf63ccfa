"""Reference scoring gateway: translation, reverse log-probabilities and QE."""

__version__ = "0.1.0"

from .app import GatewayConfig, create_app, serve
from .backends import BackendUnavailable, FakeDeterministicBackend, load_quality_backend
from .fixtures import emit_fixtures

__all__ = [
    "GatewayConfig",
    "create_app",
    "serve",
    "BackendUnavailable",
    "FakeDeterministicBackend",
    "load_quality_backend",
    "emit_fixtures",
]
