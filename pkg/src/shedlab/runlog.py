"""Append-only, line-delimited run records."""
from __future__ import annotations

import json
import math

import numpy as np

SCHEMA_VERSION = 1
# Fields that legitimately differ between replays of the same run.
NONDETERMINISTIC = frozenset({"wall_seconds"})


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (float, np.floating)):
        # strict JSON has no NaN/inf; undefined statistics are logged as null
        return float(x) if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


class RunLog:
    def __init__(self, header: dict | None = None):
        self.header = {"type": "header", "schema": SCHEMA_VERSION, **(header or {})}
        self.events: list[dict] = []
        self._sink = None

    def open(self, path) -> None:
        self._sink = open(path, "w")
        self._sink.write(json.dumps(_jsonable(self.header), sort_keys=True) + "\n")
        for ev in self.events:
            self._sink.write(json.dumps(ev, sort_keys=True, allow_nan=False) + "\n")
        self._sink.flush()

    def close(self) -> None:
        if self._sink is not None:
            self._sink.close()
            self._sink = None

    def emit(self, type_: str, **fields) -> dict:
        ev = _jsonable({"seq": len(self.events), "type": type_, **fields})
        self.events.append(ev)
        if self._sink is not None:
            self._sink.write(json.dumps(ev, sort_keys=True, allow_nan=False) + "\n")
            self._sink.flush()
        return ev

    def of_type(self, type_: str) -> list:
        return [e for e in self.events if e["type"] == type_]

    def deterministic_view(self) -> list:
        return [{k: v for k, v in e.items() if k not in NONDETERMINISTIC} for e in self.events]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps(_jsonable(self.header), sort_keys=True) + "\n")
            for ev in self.events:
                fh.write(json.dumps(ev, sort_keys=True, allow_nan=False) + "\n")

    @classmethod
    def load(cls, path) -> "RunLog":
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or lines[0].get("type") != "header":
            raise ValueError(f"{path}: missing run-log header")
        if lines[0].get("schema") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema {lines[0].get('schema')}")
        log = cls()
        log.header = lines[0]
        log.events = lines[1:]
        for i, ev in enumerate(log.events):
            if ev.get("seq") != i:
                raise ValueError(f"{path}: events out of order at line {i + 2}")
        return log
