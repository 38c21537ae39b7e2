"""Run traces: per-step records, a terminal summary, CSV and JSON export."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

# Above this many coordinates the visit counts go to a side file.
MAX_INLINE_COORDS = 32


@dataclass
class RunTrace:
    """Records taken after ``t`` completed iterations, ``t = 0, stride, ...``.

    ``sup_err`` is ``nan`` when no reference fixed point was given.
    ``visit_counts[k, i]`` is the number of updates of coordinate ``i`` in
    iterations ``0 .. t[k]-1`` and ``step_partial_sums`` sums the steps that
    were applied to it over the same iterations.
    """

    t: np.ndarray
    sup_err: np.ndarray
    lambda_t: np.ndarray
    step_partial_sums: np.ndarray
    visit_counts: np.ndarray
    summary: dict[str, Any] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.visit_counts.shape[1]

    def __len__(self) -> int:
        return len(self.t)

    def at(self, t: int) -> int:
        """Row index of the record taken at iteration ``t``."""
        hits = np.flatnonzero(self.t == t)
        if hits.size == 0:
            raise KeyError(f"no record at t={t}")
        return int(hits[0])

    # -- export -----------------------------------------------------------

    def csv_header(self) -> list[str]:
        head = ["t", "sup_err", "lambda_t"]
        if self.d <= MAX_INLINE_COORDS:
            head += [f"visits_{i}" for i in range(self.d)]
        return head

    def write_csv(self, path: str | Path) -> list[Path]:
        """Write the trace; returns every file written (side file included)."""
        path = Path(path)
        inline = self.d <= MAX_INLINE_COORDS
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(self.csv_header())
            for k in range(len(self.t)):
                row = [str(int(self.t[k])), _fmt(self.sup_err[k]), _fmt(self.lambda_t[k])]
                if inline:
                    row += [str(int(c)) for c in self.visit_counts[k]]
                w.writerow(row)
        written = [path]
        if not inline:
            side = path.with_name(path.stem + "_visits.csv")
            with side.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\r\n")
                w.writerow(["t"] + [f"visits_{i}" for i in range(self.d)])
                for k in range(len(self.t)):
                    w.writerow([str(int(self.t[k]))] + [str(int(c)) for c in self.visit_counts[k]])
            written.append(side)
        return written

    def to_json_obj(self) -> dict[str, Any]:
        records = [
            {
                "t": int(self.t[k]),
                "sup_err": _json_float(self.sup_err[k]),
                "lambda_t": _json_float(self.lambda_t[k]),
                "step_partial_sums": [float(x) for x in self.step_partial_sums[k]],
                "visit_counts": [int(x) for x in self.visit_counts[k]],
            }
            for k in range(len(self.t))
        ]
        return {"records": records, "summary": _jsonable(self.summary)}

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json_obj(), indent=1, sort_keys=True), encoding="utf-8")
        return path


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Load a trace CSV back into columns (floats, ``nan`` preserved)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    cols = {h: np.array([float(r[k]) for r in body]) for k, h in enumerate(head)}
    cols["t"] = cols["t"].astype(np.int64)
    return cols


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def _json_float(x: float):
    return None if math.isnan(x) else float(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return _json_float(float(obj))
    return obj


class TraceRecorder:
    """Preallocated buffers filled every ``stride`` iterations and at the end."""

    def __init__(self, d: int, horizon: int, stride: int = 1):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.d = d
        self.horizon = horizon
        self.stride = stride
        ticks = list(range(0, horizon + 1, stride))
        if ticks[-1] != horizon:
            ticks.append(horizon)
        self._tick_list = ticks
        self._ticks = np.array(ticks, dtype=np.int64)
        k = len(ticks)
        self._err = np.full(k, np.nan)
        self._lam = np.zeros(k)
        self._ps = np.zeros((k, d))
        self._vc = np.zeros((k, d), dtype=np.int64)
        self._k = 0

    def due(self, t: int) -> bool:
        return self._k < len(self._tick_list) and self._tick_list[self._k] == t

    def next_tick(self) -> int:
        """Iteration count of the next pending record, or -1 when complete."""
        return self._tick_list[self._k] if self._k < len(self._tick_list) else -1

    def record(self, t: int, sup_err: float, lam: float, partial_sums, counts) -> None:
        k = self._k
        assert self._ticks[k] == t, (t, self._ticks[k])
        self._err[k] = sup_err
        self._lam[k] = lam
        self._ps[k] = partial_sums
        self._vc[k] = counts
        self._k += 1

    def finish(self, summary: dict[str, Any]) -> RunTrace:
        assert self._k == len(self._ticks), "trace not fully recorded"
        return RunTrace(self._ticks, self._err, self._lam, self._ps, self._vc, summary)
