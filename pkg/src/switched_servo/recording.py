"""Versioned run logs: per-tick CSV, run summary, and the reproducibility manifest.

The CSV is the only contract between the simulator and downstream
consumers (plotting, analysis), so its header carries an explicit format
version and the writer is bit-deterministic: floats are serialized with
``repr`` (shortest round-trip), empty cells mean "not defined at this
tick" (features out of view, servo energy without features).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError

CSV_FORMAT = "run-csv"
CSV_VERSION = 1

CSV_COLUMNS = (
    ["t", "active"]
    + [f"e_p_{i}" for i in range(6)]
    + [f"xi_{i}" for i in range(6)]
    + [f"acc_{i}" for i in range(6)]
    + [f"e_i_{i}" for i in range(8)]
    + [
        "visible",
        "V_active",
        "V_d",
        "V_v",
        "z_p",
        "z_o",
        "forcing_norm",
        "switch_event",
        "N_sigma",
        "t_e",
        "t_c",
    ]
)

_N_FEATURE_COLS = 8


def _cell(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def write_run_csv(path, records) -> None:
    """One row per tick, schema v1; raises if the feature layout does not fit."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# {CSV_FORMAT} v{CSV_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            if rec.e_i is None:
                e_i_cells = [""] * _N_FEATURE_COLS
            else:
                e_i = np.asarray(rec.e_i, dtype=float).ravel()
                if e_i.size != _N_FEATURE_COLS:
                    raise ConfigError(
                        f"run-csv v{CSV_VERSION} holds {_N_FEATURE_COLS} feature errors, got {e_i.size}"
                    )
                e_i_cells = [_cell(v) for v in e_i]
            row = (
                [_cell(rec.t), rec.active]
                + [_cell(v) for v in rec.e_p]
                + [_cell(v) for v in rec.xi]
                + [_cell(v) for v in rec.accel]
                + e_i_cells
                + [
                    "1" if rec.visible else "0",
                    _cell(rec.v_active),
                    _cell(rec.v_d),
                    _cell(rec.v_v),
                    _cell(rec.z_p),
                    _cell(rec.z_o),
                    _cell(rec.forcing_norm),
                    rec.switch_event,
                    str(rec.n_sigma),
                    _cell(rec.t_e),
                    _cell(rec.t_c),
                ]
            )
            writer.writerow(row)


def read_run_csv(path) -> dict:
    """Columns keyed by name; numeric cells as floats with NaN for blanks."""
    path = Path(path)
    with path.open(newline="") as fh:
        version_line = fh.readline().strip()
        expected = f"# {CSV_FORMAT} v{CSV_VERSION}"
        if version_line != expected:
            raise ConfigError(f"{path}: unsupported run CSV (got {version_line!r}, want {expected!r})")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_COLUMNS:
            raise ConfigError(f"{path}: run CSV header does not match schema v{CSV_VERSION}")
        columns = {name: [] for name in CSV_COLUMNS}
        text_cols = {"active", "switch_event"}
        for row in reader:
            if len(row) != len(CSV_COLUMNS):
                raise ConfigError(f"{path}: row with {len(row)} cells, expected {len(CSV_COLUMNS)}")
            for name, cell in zip(CSV_COLUMNS, row):
                if name in text_cols:
                    columns[name].append(cell)
                else:
                    columns[name].append(float(cell) if cell else math.nan)
    for name in columns:
        if name not in text_cols:
            columns[name] = np.asarray(columns[name], dtype=float)
    return columns


def _json_dump(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def summarize(result, dt: float) -> dict:
    """Machine-first digest of one run; everything the CLI prints comes from here."""
    records = result.records
    final_e_i = None
    for rec in reversed(records):
        if rec.e_i is not None:
            final_e_i = float(np.linalg.norm(rec.e_i))
            break
    compensation = None
    for rec in records:
        if rec.switch_event == "v->d" and rec.t_c > 0.0:
            compensation = {"t_switch": rec.t, "t_c": rec.t_c}
    checks = {
        "converged": bool(result.converged),
        "dwell": bool(result.dwell.passed) if result.dwell is not None else True,
        "envelopes": all(seg.passed is not False for seg in result.envelopes),
    }
    return {
        "format": "run-summary",
        "version": 1,
        "n_ticks": len(records),
        "dt": dt,
        "final": {
            "e_p_norm": float(np.linalg.norm(result.final_e_p)),
            "e_i_norm": final_e_i,
            "xi_norm": float(np.linalg.norm(result.final_xi)),
        },
        "switches": [{"t": t, "event": event} for t, event in result.switch_log],
        "n_switches": len(result.switch_log),
        "compensation": compensation,
        "dwell": {
            "passed": bool(result.dwell.passed),
            "margin": result.dwell.margin,
            "intervals": [
                {"t_lo": iv.t_lo, "t_hi": iv.t_hi, "count": iv.count, "margin": iv.margin}
                for iv in result.dwell.intervals
            ],
        }
        if result.dwell is not None
        else None,
        "envelopes": [
            {
                "t_start": seg.t_start,
                "t_end": seg.t_end,
                "label": seg.label,
                "passed": seg.passed,
                "empirical_rate": None if math.isnan(seg.empirical_rate) else seg.empirical_rate,
                "v_start": seg.v_start,
                "v_end": seg.v_end,
            }
            for seg in result.envelopes
        ],
        "converged": bool(result.converged),
        "diverged": bool(result.diverged),
        "checks": checks,
        "failed_checks": sorted(name for name, ok in checks.items() if not ok),
    }


def write_summary(path, summary: dict) -> None:
    _json_dump(path, summary)


def write_manifest(path, *, scenario_path, scenario_copy, model_path, out_dir, tool_version, sha256) -> None:
    _json_dump(
        path,
        {
            "format": "run-manifest",
            "version": 1,
            "scenario_path": str(scenario_path),
            "scenario_copy": str(scenario_copy),
            "model_path": None if model_path is None else str(model_path),
            "output_dir": str(out_dir),
            "tool_version": tool_version,
            "config_sha256": sha256,
            "files": {"csv": "run.csv", "summary": "summary.json"},
        },
    )
