"""Serialization of sweep records, fits, and certificates.

CSV is the interchange format for plotting; JSON mirrors it with the full
metadata (thresholds, certificate verdicts, versions).  Floats are written
as shortest round-trip decimals, so a read-back reproduces the in-memory
values exactly.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .errors import InputError
from .experiments import CSV_FIELDS, FitResult, SweepRecord

__all__ = [
    "write_records",
    "read_records",
    "write_report_json",
    "emit_plot_data",
]

FORMAT_VERSION = "1"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records(records, path):
    """CSV with the fixed header, one row per record, gap distance descending."""
    records = list(records)
    if not records:
        raise InputError("no records to write")
    rows = sorted(records, key=lambda r: -r.epsilon)
    lines = [",".join(CSV_FIELDS)]
    for r in rows:
        lines.append(",".join(_fmt(getattr(r, k)) for k in CSV_FIELDS))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_records(path):
    """Read a records CSV back into SweepRecord objects (CSV fields only)."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise InputError(f"{path}: empty records file")
    header = lines[0].split(",")
    if tuple(header) != CSV_FIELDS:
        raise InputError(f"{path}: unexpected header {header}")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(CSV_FIELDS):
            raise InputError(f"{path}: malformed row {ln!r}")
        kwargs = {}
        for key, raw in zip(CSV_FIELDS, parts):
            kwargs[key] = bool(int(raw)) if key == "flagged" else float(raw)
        out.append(SweepRecord(**kwargs))
    return out


def write_report_json(path, *, plan_text=None, records=(), fits=(), certificates=(), failures=()):
    """Machine-readable mirror of a run with full metadata."""
    doc = {
        "format_version": FORMAT_VERSION,
        "records": [r.to_dict() for r in records],
        "fits": [f.to_dict() for f in fits],
        "certificates": [c.to_dict() for c in certificates],
        "failures": [{"epsilon": e, "error": msg} for e, msg in failures],
    }
    if plan_text is not None:
        doc["plan"] = plan_text
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _fit_tables(records, fit: FitResult):
    eps = np.array([r.epsilon for r in records if not r.flagged])
    vals = np.array(
        [getattr(r, fit.metric) for r in records if not r.flagged], dtype=float
    )
    if fit.model == "power":
        x = np.log(eps)
        y = np.log(vals)
        fitted = fit.intercept - fit.exponent * x
        xlabel, ylabel = "ln_epsilon", f"ln_{fit.metric}"
    else:
        x = np.log(1.0 / eps)
        y = vals
        fitted = fit.intercept + fit.slope * x
        xlabel, ylabel = "ln_inverse_epsilon", fit.metric
    return x, y, fitted, xlabel, ylabel


def _write_table(path, header_lines, x, y):
    lines = [f"# {h}" for h in header_lines]
    for a, b in zip(x, y):
        lines.append(f"{_fmt(float(a))} {_fmt(float(b))}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_plot_data(records, fits, outdir):
    """Two-column plain-text tables per fit: data, fitted line, residuals."""
    records = [r for r in records]
    if not records:
        raise InputError("no records to plot")
    os.makedirs(outdir, exist_ok=True)
    written = []
    for fit in fits:
        x, y, fitted, xlabel, ylabel = _fit_tables(records, fit)
        stem = f"{fit.metric}_{fit.model}"
        if fit.model == "power":
            hdr = [
                f"model=power metric={fit.metric}",
                f"exponent={fit.exponent!r} intercept={fit.intercept!r} "
                f"r_squared={fit.r_squared!r}",
                f"columns: {xlabel} {ylabel}",
            ]
        else:
            hdr = [
                f"model=log metric={fit.metric}",
                f"slope={fit.slope!r} intercept={fit.intercept!r} "
                f"r_squared={fit.r_squared!r}",
                f"columns: {xlabel} {ylabel}",
            ]
        paths = (
            os.path.join(outdir, f"{stem}.dat"),
            os.path.join(outdir, f"{stem}_fit.dat"),
            os.path.join(outdir, f"{stem}_resid.dat"),
        )
        _write_table(paths[0], hdr, x, y)
        _write_table(paths[1], hdr + ["fitted line"], x, fitted)
        _write_table(paths[2], hdr + ["residuals"], x, y - fitted)
        written.extend(paths)
    return written
