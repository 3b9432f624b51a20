"""HTTP service exposing the toolkit; the CLI talks to it in-process."""

from .app import create_app

__all__ = ["create_app"]
