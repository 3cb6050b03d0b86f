"""Post-hoc figures from inertial-spin-model run outputs.

Reads only the persisted CSV/JSON files the simulator writes; no model
quantities are computed here beyond plotting transforms.
"""

__version__ = "0.1.0"

from .render import FIGURE_KINDS, FigureJob, MissingColumnError, render

__all__ = ["FIGURE_KINDS", "FigureJob", "MissingColumnError", "render"]
