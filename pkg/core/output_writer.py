"""Output writer for JSON reports and CSV curves."""

import csv
import json
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from pydantic import BaseModel

from .measures import MeasureFlow


def jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(value, BaseModel):
        return jsonable(value.model_dump(mode="python"))
    if isinstance(value, Mapping):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, Path):
        return str(value)
    return value


def _cell(value: float) -> str:
    # repr gives the shortest string that round-trips exactly
    return repr(float(value))


class OutputWriter:
    """Writes reports and curves into one output directory."""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write_report(self, name: str, payload: Any) -> Path:
        """UTF-8 JSON with sorted keys."""
        path = self.output_dir / name
        text = json.dumps(jsonable(payload), sort_keys=True, indent=2, ensure_ascii=False)
        path.write_text(text + "\n", encoding="utf-8")
        return path

    def write_curves(self, name: str, times, columns: Mapping[str, Any]) -> Path:
        """CSV with a header row, ``t`` first, one column per curve."""
        times = np.asarray(times, dtype=float)
        data = {key: np.broadcast_to(np.asarray(col, dtype=float), times.shape) for key, col in columns.items()}
        path = self.output_dir / name
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\r\n")
            writer.writerow(["t", *data.keys()])
            for k, t in enumerate(times):
                writer.writerow([_cell(t), *(_cell(col[k]) for col in data.values())])
        return path

    def write_ensemble(self, name: str, flow: MeasureFlow) -> Path:
        """CSV rows ``t, particle_id, x_1..x_m`` for every stored cloud."""
        path = self.output_dir / name
        header = ["t", "particle_id", *(f"x_{j + 1}" for j in range(flow.dim))]
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\r\n")
            writer.writerow(header)
            for k, t in enumerate(flow.times):
                cell_t = _cell(t)
                for i, point in enumerate(flow.points[k]):
                    writer.writerow([cell_t, i, *(_cell(v) for v in point)])
        return path
