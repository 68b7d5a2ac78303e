"""Figure rendering for thermalizer harness CSV outputs."""

from .io import FiggenError, Table, load_table
from .render import KINDS, FigureSpec, RenderResult, fit_loglog, render

__version__ = "0.1.0"
