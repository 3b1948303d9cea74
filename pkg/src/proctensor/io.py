"""JSON files for process tensors and instruments, CSV tables.

Matrices are stored flat in row-major order as ``[re, im]`` pairs. Python's
float repr round-trips doubles exactly, so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .instruments import Instrument
from .linalg import LegLayout
from .process_tensor import ProcessTensor

FLOAT_FMT = "%.17g"


class FileFormatError(ValueError):
    pass


def _legs_json(layout: LegLayout) -> list[dict]:
    return [{"t": leg.t, "role": leg.role, "dim": leg.dim} for leg in layout]


def _matrix_json(m: np.ndarray) -> list[list[float]]:
    flat = np.asarray(m, dtype=complex).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def _parse_layout(data) -> LegLayout:
    try:
        return LegLayout.from_spec((leg["t"], leg["role"], leg["dim"]) for leg in data)
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"malformed leg list: {exc}") from exc


def _parse_matrix(data, dim: int) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"malformed matrix: {exc}") from exc
    if arr.shape != (dim * dim, 2):
        raise FileFormatError(f"matrix has shape {arr.shape}, expected {(dim * dim, 2)}")
    if not np.all(np.isfinite(arr)):
        raise FileFormatError("matrix contains non-finite values")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(dim, dim)


def process_tensor_to_dict(pt: ProcessTensor) -> dict:
    return {"kind": "process_tensor", "legs": _legs_json(pt.layout), "matrix": _matrix_json(pt.choi)}


def write_process_tensor(pt: ProcessTensor, path) -> None:
    Path(path).write_text(json.dumps(process_tensor_to_dict(pt)))


def process_tensor_from_dict(data: dict) -> ProcessTensor:
    if "legs" not in data or "matrix" not in data:
        raise FileFormatError("process-tensor file needs 'legs' and 'matrix'")
    layout = _parse_layout(data["legs"])
    return ProcessTensor(_parse_matrix(data["matrix"], layout.dim), layout)


def instrument_to_dict(inst: Instrument) -> dict:
    return {"kind": "instrument", "name": inst.name, "legs": _legs_json(inst.layout),
            "outcomes": inst.labels, "elements": [_matrix_json(e) for e in inst.elements()]}


def write_instrument(inst: Instrument, path) -> None:
    Path(path).write_text(json.dumps(instrument_to_dict(inst)))


def instrument_from_dict(data: dict) -> Instrument:
    for key in ("legs", "outcomes", "elements"):
        if key not in data:
            raise FileFormatError(f"instrument file needs {key!r}")
    layout = _parse_layout(data["legs"])
    if len(data["outcomes"]) != len(data["elements"]):
        raise FileFormatError("one outcome label per element required")
    elements = np.stack([_parse_matrix(e, layout.dim) for e in data["elements"]])
    return Instrument.from_elements(elements, layout, tuple(str(o) for o in data["outcomes"]),
                                    data.get("name", ""))


def read_any(path):
    """Load a process tensor or an instrument, dispatching on the file contents."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise FileFormatError(f"{path}: expected a JSON object")
    if data.get("kind") == "instrument" or "elements" in data:
        return instrument_from_dict(data)
    return process_tensor_from_dict(data)


def read_process_tensor(path) -> ProcessTensor:
    obj = read_any(path)
    if not isinstance(obj, ProcessTensor):
        raise FileFormatError(f"{path} holds an instrument, not a process tensor")
    return obj


def read_instrument(path) -> Instrument:
    obj = read_any(path)
    if not isinstance(obj, Instrument):
        raise FileFormatError(f"{path} holds a process tensor, not an instrument")
    return obj


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
