"""Metrics rows and their CSV / JSON serialization.

Floats are written with repr, so every value reads back to the same binary
double. Missing values are empty cells in CSV and null in JSON.
"""
import csv
import json
import math
import os
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

TIMING_COLUMNS = ("wall_time_ns",)


@dataclass
class MetricsRow:
    experiment: str
    method: str
    instance: Optional[int] = None
    trial: Optional[int] = None
    epsilon: Optional[float] = None
    gamma: Optional[float] = None
    budget: Optional[int] = None
    sigma: Optional[float] = None
    seed: Optional[int] = None
    t: Optional[int] = None
    node: Optional[int] = None
    objective: Optional[float] = None
    mse: Optional[float] = None
    sq_error: Optional[float] = None
    optimum: Optional[float] = None
    alpha_card: Optional[float] = None
    alpha_card1: Optional[float] = None
    bound_satisfied: Optional[bool] = None
    gain_evals: Optional[int] = None
    c_max: Optional[float] = None
    curvature_bound: Optional[float] = None
    spectral_event: Optional[float] = None
    pairwise_mse: Optional[float] = None
    wall_time_ns: Optional[int] = None


COLUMNS = tuple(f.name for f in fields(MetricsRow))


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(rows: Iterable[MetricsRow], file_path: str):
    with open(file_path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([format_cell(getattr(row, c)) for c in COLUMNS])


def read_csv(file_path: str) -> List[Dict[str, str]]:
    with open(file_path, newline="", encoding="utf-8") as fp:
        return list(csv.DictReader(fp))


def to_jsonable(value):
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(payload, file_path: str):
    with open(file_path, "w", encoding="utf-8") as fp:
        json.dump(to_jsonable(payload), fp, indent=4)


def write_rows(rows: Sequence[MetricsRow], out_dir: str, format: str = "csv") -> str:
    os.makedirs(out_dir, exist_ok=True)
    if format == "json":
        file_path = os.path.join(out_dir, "metrics.json")
        write_json([asdict(row) for row in rows], file_path)
    else:
        file_path = os.path.join(out_dir, "metrics.csv")
        write_csv(rows, file_path)
    return file_path


def write_summary(summary: dict, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    file_path = os.path.join(out_dir, "summary.json")
    write_json(summary, file_path)
    return file_path


def _stats(values: List[float]) -> dict:
    values = np.array([v for v in values if v is not None], dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return {"mean": None, "std": None, "count": 0}
    return {"mean": float(values.mean()), "std": float(values.std()), "count": int(values.size)}


def aggregate(rows: Iterable[MetricsRow], keys: Sequence[str] = ("method", "epsilon"),
              columns: Sequence[str] = ("objective", "mse")) -> List[dict]:
    """Mean / std / count of `columns` per distinct combination of `keys`, in first-seen order."""
    groups: "OrderedDict[tuple, List[MetricsRow]]" = OrderedDict()
    for row in rows:
        groups.setdefault(tuple(getattr(row, k) for k in keys), []).append(row)
    table = []
    for key, members in groups.items():
        entry = dict(zip(keys, key))
        for column in columns:
            entry[column] = _stats([getattr(r, column) for r in members])
        table.append(entry)
    return table


__all__ = [
    "MetricsRow", "COLUMNS", "TIMING_COLUMNS",
    "write_csv", "read_csv", "write_json", "write_rows", "write_summary", "aggregate", "to_jsonable",
]
