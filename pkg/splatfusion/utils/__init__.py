"""Utilities package."""

from .sparkline import horizontal_bar, sparkline
from .timing import StageTimer, format_duration

__all__ = ["sparkline", "horizontal_bar", "StageTimer", "format_duration"]
