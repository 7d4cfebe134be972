"""Offline figure scripts: harness CSVs in, deterministic images out."""

from figplots.figures import FigureJob, FigureKind, render
from figplots.schema import SchemaError

__all__ = ["FigureJob", "FigureKind", "render", "SchemaError"]
