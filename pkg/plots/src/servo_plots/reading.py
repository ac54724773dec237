"""Standalone reader for versioned run CSVs.

The run CSV is the only contract between the controller pipeline and this
package: a ``# run-csv v1`` marker line, a fixed header, then one row per
control tick.  Numeric blanks mean "not defined on this tick" (the servo
quantities while the marker is hidden) and come back as NaN.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_MARKER = "# run-csv v1"

NUMERIC_COLUMNS = (
    ["t"]
    + [f"e_p_{i}" for i in range(6)]
    + [f"xi_{i}" for i in range(6)]
    + [f"acc_{i}" for i in range(6)]
    + [f"e_i_{i}" for i in range(8)]
    + ["visible", "V_active", "V_d", "V_v", "z_p", "z_o", "forcing_norm",
       "N_sigma", "t_e", "t_c"]
)

TEXT_COLUMNS = ("active", "switch_event")


class SchemaError(ValueError):
    """The file is not a readable run CSV of a supported version."""


@dataclass
class RunData:
    """Columns of one run, numeric ones as float arrays (NaN for blanks)."""

    path: Path
    numeric: dict = field(default_factory=dict)
    text: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.numeric["t"]

    @property
    def switch_times(self) -> np.ndarray:
        events = np.array(self.text["switch_event"])
        return self.t[events != ""]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.numeric[name]
        except KeyError:
            raise SchemaError(f"{self.path}: missing column {name!r}") from None


def read_run_csv(path) -> RunData:
    """Parse and validate a run CSV; every failure is a SchemaError."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            marker = fh.readline().strip()
            if marker != CSV_MARKER:
                raise SchemaError(
                    f"{path}: expected a {CSV_MARKER!r} file, got {marker!r}"
                )
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise SchemaError(f"{path}: missing header row")
            for name in NUMERIC_COLUMNS:
                if name not in header:
                    raise SchemaError(f"{path}: missing column {name!r}")
            for name in TEXT_COLUMNS:
                if name not in header:
                    raise SchemaError(f"{path}: missing column {name!r}")
            rows = list(reader)
    except OSError as err:
        raise SchemaError(f"{path}: {err.strerror or err}") from err
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    for k, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(
                f"{path}: row {k + 1} has {len(row)} cells, header has {len(header)}"
            )
    index = {name: header.index(name) for name in header}
    data = RunData(path)
    for name in NUMERIC_COLUMNS:
        j = index[name]
        data.numeric[name] = np.array(
            [float(row[j]) if row[j] != "" else np.nan for row in rows]
        )
    for name in TEXT_COLUMNS:
        j = index[name]
        data.text[name] = [row[j] for row in rows]
    return data
