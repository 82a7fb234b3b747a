"""Offline figure rendering for exported figdata CSV tables."""

from .render import (
    BAR_COLUMNS,
    ECDF_COLUMNS,
    HEATMAP_COLUMNS,
    KINDS,
    EmptyTableError,
    FigData,
    FigureError,
    SchemaError,
    load_figdata,
    prepare_bar,
    prepare_ecdf,
    prepare_heatmap,
    render,
)

__all__ = [
    "BAR_COLUMNS",
    "ECDF_COLUMNS",
    "HEATMAP_COLUMNS",
    "KINDS",
    "EmptyTableError",
    "FigData",
    "FigureError",
    "SchemaError",
    "load_figdata",
    "prepare_bar",
    "prepare_ecdf",
    "prepare_heatmap",
    "render",
]
