"""CSV and JSON interchange with lossless floats and atomic writes.

Numbers are serialized with 17 significant digits so a write/read
round-trip reproduces every finite double bit-for-bit. Files are
written to a temporary sibling and renamed into place, so readers never
observe a partial file. All headers are fixed; readers validate them
and report the offending row number on malformed content.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .bloch import ControlPulse
from .greedy import ControlSet
from .ogra import SelectionRecord

__all__ = [
    "format_float",
    "atomic_write_text",
    "write_controls",
    "read_controls",
    "write_distribution",
    "read_distribution",
    "write_measurements",
    "read_measurements",
    "write_spectrum",
    "read_spectrum",
    "write_selection_trace",
    "read_selection_trace",
    "write_result",
    "read_result",
    "write_json",
    "read_json",
    "basis_hash",
]

CONTROLS_HEADER = ["index", "u_x", "u_y", "t_f", "method"]
DISTRIBUTION_HEADER = ["index", "alpha", "p"]
MEASUREMENTS_HEADER = ["control_index", "x", "y"]
SPECTRUM_HEADER = ["index", "eigenvalue"]
TRACE_HEADER = ["iteration", "chosen_index", "objective", "stop_reason"]
RESULT_HEADER = ["index", "alpha", "p_true", "p_recovered"]


def format_float(x: float) -> str:
    """17 significant digits; round-trips any finite double exactly."""
    return f"{float(x):.16e}"


def atomic_write_text(path, text: str) -> None:
    """Write text via a temporary sibling file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".",
                               suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_rows(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def _read_rows(path, header):
    """Yield (row_number, fields) after validating the header row."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected header "
                             f"{','.join(header)}") from None
        if first != header:
            raise ValueError(f"{path}: bad header {','.join(first)!r}, "
                             f"expected {','.join(header)!r}")
        rows = []
        for number, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(header):
                raise ValueError(f"{path}: row {number}: expected "
                                 f"{len(header)} fields, got {len(fields)}")
            rows.append((number, fields))
    return rows


def _parse_float(path, number, name, text) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"{path}: row {number}: bad {name} value {text!r}") from None


def _parse_int(path, number, name, text) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"{path}: row {number}: bad {name} value {text!r}") from None


def _check_index(path, number, text, expected, name="index") -> None:
    value = _parse_int(path, number, name, text)
    if value != expected:
        raise ValueError(f"{path}: row {number}: {name} {value} out of order, "
                         f"expected {expected}")


def write_controls(path, controls: ControlSet) -> None:
    """`index,u_x,u_y,t_f,method`, indices starting at 1."""
    rows = [(i, format_float(p.u_x), format_float(p.u_y), format_float(p.t_f),
             controls.method)
            for i, p in enumerate(controls.pulses, start=1)]
    _write_rows(path, CONTROLS_HEADER, rows)


def read_controls(path) -> ControlSet:
    pulses = []
    method = ""
    for expected, (number, fields) in enumerate(_read_rows(path, CONTROLS_HEADER),
                                                start=1):
        _check_index(path, number, fields[0], expected)
        pulses.append(ControlPulse(
            u_x=_parse_float(path, number, "u_x", fields[1]),
            u_y=_parse_float(path, number, "u_y", fields[2]),
            t_f=_parse_float(path, number, "t_f", fields[3])))
        if expected == 1:
            method = fields[4]
    if not pulses:
        raise ValueError(f"{path}: no control rows")
    return ControlSet(pulses=tuple(pulses), method=method)


def write_distribution(path, alphas, p) -> None:
    """`index,alpha,p`, indices starting at 1."""
    alphas = np.asarray(alphas, dtype=float)
    p = np.asarray(p, dtype=float)
    if alphas.shape != p.shape or alphas.ndim != 1:
        raise ValueError("alphas and weights must be equal-length vectors")
    rows = [(i, format_float(a), format_float(w))
            for i, (a, w) in enumerate(zip(alphas, p), start=1)]
    _write_rows(path, DISTRIBUTION_HEADER, rows)


def read_distribution(path):
    """Returns (alphas, p) as float arrays."""
    alphas, p = [], []
    for expected, (number, fields) in enumerate(_read_rows(path, DISTRIBUTION_HEADER),
                                                start=1):
        _check_index(path, number, fields[0], expected)
        alphas.append(_parse_float(path, number, "alpha", fields[1]))
        p.append(_parse_float(path, number, "p", fields[2]))
    if not alphas:
        raise ValueError(f"{path}: no distribution rows")
    return np.array(alphas), np.array(p)


def write_measurements(path, readings) -> None:
    """`control_index,x,y`, one row per control, indices starting at 1."""
    readings = np.asarray(getattr(readings, "readings", readings), dtype=float)
    if readings.ndim != 2 or readings.shape[1] != 2:
        raise ValueError(f"expected readings of shape (M, 2), got {readings.shape}")
    rows = [(i, format_float(r[0]), format_float(r[1]))
            for i, r in enumerate(readings, start=1)]
    _write_rows(path, MEASUREMENTS_HEADER, rows)


def read_measurements(path) -> np.ndarray:
    out = []
    for expected, (number, fields) in enumerate(_read_rows(path, MEASUREMENTS_HEADER),
                                                start=1):
        _check_index(path, number, fields[0], expected, name="control_index")
        out.append((_parse_float(path, number, "x", fields[1]),
                    _parse_float(path, number, "y", fields[2])))
    if not out:
        raise ValueError(f"{path}: no measurement rows")
    return np.array(out)


def write_spectrum(path, eigenvalues) -> None:
    """`index,eigenvalue` in the order given (descending by convention)."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    rows = [(i, format_float(v)) for i, v in enumerate(eigenvalues, start=1)]
    _write_rows(path, SPECTRUM_HEADER, rows)


def read_spectrum(path) -> np.ndarray:
    out = []
    for expected, (number, fields) in enumerate(_read_rows(path, SPECTRUM_HEADER),
                                                start=1):
        _check_index(path, number, fields[0], expected)
        out.append(_parse_float(path, number, "eigenvalue", fields[1]))
    if not out:
        raise ValueError(f"{path}: no spectrum rows")
    return np.array(out)


def write_selection_trace(path, trace) -> None:
    """`iteration,chosen_index,objective,stop_reason` per selection record."""
    rows = [(r.iteration, r.chosen_index, format_float(r.objective), r.stop_reason)
            for r in trace]
    _write_rows(path, TRACE_HEADER, rows)


def read_selection_trace(path):
    records = []
    for number, fields in _read_rows(path, TRACE_HEADER):
        records.append(SelectionRecord(
            iteration=_parse_int(path, number, "iteration", fields[0]),
            chosen_index=_parse_int(path, number, "chosen_index", fields[1]),
            objective=_parse_float(path, number, "objective", fields[2]),
            stop_reason=fields[3]))
    return tuple(records)


def write_result(path, alphas, p_true, p_recovered) -> None:
    """`index,alpha,p_true,p_recovered`; a missing truth writes nan."""
    alphas = np.asarray(alphas, dtype=float)
    p_recovered = np.asarray(p_recovered, dtype=float)
    if p_true is None:
        p_true = np.full(alphas.shape, np.nan)
    p_true = np.asarray(p_true, dtype=float)
    if not (alphas.shape == p_true.shape == p_recovered.shape) or alphas.ndim != 1:
        raise ValueError("alphas, p_true and p_recovered must be equal-length vectors")
    rows = [(i, format_float(a), format_float(t), format_float(r))
            for i, (a, t, r) in enumerate(zip(alphas, p_true, p_recovered), start=1)]
    _write_rows(path, RESULT_HEADER, rows)


def read_result(path):
    """Returns (alphas, p_true, p_recovered); p_true is nan where unknown."""
    alphas, p_true, p_rec = [], [], []
    for expected, (number, fields) in enumerate(_read_rows(path, RESULT_HEADER),
                                                start=1):
        _check_index(path, number, fields[0], expected)
        alphas.append(_parse_float(path, number, "alpha", fields[1]))
        p_true.append(_parse_float(path, number, "p_true", fields[2]))
        p_rec.append(_parse_float(path, number, "p_recovered", fields[3]))
    if not alphas:
        raise ValueError(f"{path}: no result rows")
    return np.array(alphas), np.array(p_true), np.array(p_rec)


def write_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def basis_hash(functions) -> str:
    """sha256 of the basis array's shape and raw float64 bytes."""
    arr = np.ascontiguousarray(np.asarray(functions, dtype=float))
    digest = hashlib.sha256()
    digest.update(repr(arr.shape).encode())
    digest.update(arr.tobytes())
    return digest.hexdigest()
