"""Line-delimited JSON metrics with a schema version."""

from __future__ import annotations

import json
import math
import threading
from pathlib import Path

from .config import SCHEMA_VERSION

# wall-clock derived fields; everything else is reproducible under a fixed seed
TIMING_KEYS = ("wall_clock", "fps")


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "item"):
        return _clean(value.item())
    return value


class MetricsWriter:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._fh = open(self.path, "a")

    def write(self, record: dict) -> None:
        row = {"schema": SCHEMA_VERSION}
        row.update({k: _clean(v) for k, v in record.items()})
        line = json.dumps(row, sort_keys=True)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_metrics(path) -> list[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            row = json.loads(line)
            if row.get("schema") != SCHEMA_VERSION:
                raise ValueError(f"{path}: metrics schema {row.get('schema')}, expected {SCHEMA_VERSION}")
            rows.append(row)
    return rows


def without_timing(rows: list[dict]) -> list[dict]:
    return [{k: v for k, v in r.items() if k not in TIMING_KEYS} for r in rows]
