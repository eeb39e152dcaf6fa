"""File formats: JSON model files and CSV signal/report files.

Complex numbers are written as ``[re, im]`` pairs.  Floats go through
``repr``, the shortest decimal that round-trips, so loading a saved model
reproduces every parameter bit for bit and re-saving gives identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .dssm import DeepSsm, Layer
from .layernorm import LayerNormParams
from .lqo import LqoSystem, ShapeError

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _pairs(arr):
    arr = np.asarray(arr, dtype=np.complex128)
    if arr.ndim == 0:
        return [float(arr.real), float(arr.imag)]
    return [_pairs(a) for a in arr]


def _from_pairs(obj, ndim, name):
    try:
        arr = np.asarray(obj, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{name}: not a rectangular array of numbers") from exc
    if arr.ndim != ndim + 1 or arr.shape[-1] != 2:
        raise FormatError(f"{name}: expected a {ndim}-D array of [re, im] pairs, "
                          f"got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def _reals(obj, name):
    try:
        arr = np.asarray(obj, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{name}: not a list of numbers") from exc
    if arr.ndim != 1:
        raise FormatError(f"{name}: expected a flat list, got shape {arr.shape}")
    return arr


def model_to_dict(model: DeepSsm) -> dict:
    layers = []
    for layer in model.layers:
        sys = layer.system
        layers.append({
            "lambda": _pairs(sys.lam),
            "B": _pairs(sys.B),
            "C": _pairs(sys.C),
            "U": _pairs(sys.U),
            "ln_gamma1": [float(v) for v in layer.ln.gamma1],
            "ln_gamma2": [float(v) for v in layer.ln.gamma2],
            "ln_eps": float(layer.ln.eps),
        })
    return {"format_version": FORMAT_VERSION, "layers": layers}


def model_from_dict(data) -> DeepSsm:
    """Parse a model dictionary; every system and model invariant is checked."""
    if not isinstance(data, dict):
        raise FormatError("model file must hold a JSON object")
    if data.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {data.get('format_version')!r}")
    raw_layers = data.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise FormatError("'layers' must be a non-empty list")
    layers = []
    for i, raw in enumerate(raw_layers):
        where = f"layer {i}"
        try:
            sys = LqoSystem(_from_pairs(raw["lambda"], 1, f"{where} lambda"),
                            _from_pairs(raw["B"], 2, f"{where} B"),
                            _from_pairs(raw["C"], 2, f"{where} C"),
                            _from_pairs(raw["U"], 3, f"{where} U"))
            ln = LayerNormParams(_reals(raw["ln_gamma1"], f"{where} ln_gamma1"),
                                 _reals(raw["ln_gamma2"], f"{where} ln_gamma2"),
                                 float(raw["ln_eps"]))
        except KeyError as exc:
            raise FormatError(f"{where}: missing field {exc.args[0]!r}") from None
        except (TypeError, ShapeError) as exc:
            raise FormatError(f"{where}: {exc}") from exc
        layers.append(Layer(sys, ln))
    return DeepSsm(tuple(layers))


def dumps_model(model: DeepSsm) -> str:
    return json.dumps(model_to_dict(model), indent=1) + "\n"


def save_model(model: DeepSsm, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path) -> DeepSsm:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_dict(data)


def load_signal(path, header=False) -> np.ndarray:
    """Read an ``L x m`` CSV of reals; ``header`` skips the first line."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if header:
        rows = rows[1:]
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise FormatError(f"{path}: no samples")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise FormatError(f"{path}: rows have different lengths")
    try:
        out = np.array([[float(cell) for cell in r] for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise FormatError(f"{path}: non-finite sample")
    return out


def save_signal(signal, path) -> None:
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 2:
        raise ShapeError(f"signal must be 2-D, got shape {signal.shape}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows([[repr(float(v)) for v in row] for row in signal])


REPORT_COLUMNS = ("iter", "objective", "grad_norm", "backtracks", "eta_scale")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def report_csv(report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in report.rows:
        writer.writerow([_fmt(getattr(row, col)) for col in REPORT_COLUMNS])
    return buf.getvalue()


def save_report(report, path) -> None:
    Path(path).write_text(report_csv(report), encoding="utf-8")


def load_report(path) -> dict:
    """Columns of a report CSV as ``{name: list}``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = {name: [] for name in REPORT_COLUMNS}
        for row in reader:
            cols["iter"].append(int(row["iter"]))
            cols["backtracks"].append(int(row["backtracks"]))
            for name in ("objective", "grad_norm", "eta_scale"):
                cols[name].append(float(row[name]))
    return cols
