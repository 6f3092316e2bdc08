"""Live session service: WebSocket protocol, frame loop, FastAPI app."""

from .app import create_app
from .session import SessionLoop

__all__ = ["create_app", "SessionLoop"]
