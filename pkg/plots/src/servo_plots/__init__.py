"""Figure set for switched-servo run CSVs; consumes only the CSV contract."""

from .figures import PANELS, FigureSpec, panel_figure, render
from .reading import RunData, SchemaError, read_run_csv

__version__ = "0.1.0"

__all__ = [
    "PANELS",
    "FigureSpec",
    "RunData",
    "SchemaError",
    "panel_figure",
    "read_run_csv",
    "render",
    "__version__",
]
