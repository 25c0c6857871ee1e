"""HTTP service exposing the probing engine."""

from .app import create_app

__all__ = ["create_app"]
