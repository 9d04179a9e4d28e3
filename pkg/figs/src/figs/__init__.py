"""Figure rendering for dindip harness outputs."""

__version__ = "0.1.0"

from .render import FigureSpec, SchemaError, build, render  # noqa: F401
