"""Figure rendering for urasim CSV output."""

from .render import FigureSpec, RenderError, render

__all__ = ["FigureSpec", "RenderError", "render"]
__version__ = "0.1.0"
