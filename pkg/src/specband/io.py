"""CSV/JSON emission confined to an output directory."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    return obj


class OutputDir:
    """Writes files only inside ``root``."""

    def __init__(self, root):
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        p = (self.root / name).resolve()
        if self.root != p.parent and self.root not in p.parents:
            raise ValueError(f"refusing to write outside {self.root}: {name}")
        self.written.append(p)
        return p

    def write_json(self, name: str, obj) -> Path:
        p = self.path(name)
        with open(p, "w", newline="\n") as fh:
            json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p

    def write_csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        return p

    def write_table(self, stem: str, header, rows, fmt: str = "csv") -> Path:
        rows = [list(r) for r in rows]
        if fmt == "json":
            return self.write_json(f"{stem}.json", [dict(zip(header, r)) for r in rows])
        return self.write_csv(f"{stem}.csv", header, rows)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v
