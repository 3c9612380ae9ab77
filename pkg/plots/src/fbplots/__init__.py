"""Figure rendering for forgetting-harness result directories."""

from .render import FigureSpec, render
from .tables import (
    SchemaError,
    bar_table,
    episode_curve_table,
    phase_curve_table,
    sensitivity_table,
)

__all__ = [
    "FigureSpec",
    "SchemaError",
    "bar_table",
    "episode_curve_table",
    "phase_curve_table",
    "render",
    "sensitivity_table",
]
