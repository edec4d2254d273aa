"""File formats.

* State CSV: first line ``# {json header}`` with ``kind, dim, extent, n, time``,
  then the columns ``node,re,im``.
* Report CSV: one row per report, columns ``REPORT_COLUMNS``.
* Verdicts: JSON Lines, one object per line.

Every writer goes through :func:`atomic_write` (write to a temporary file in
the target directory, then rename).
"""

import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .field import FieldState, make_grid
from .functionals import REPORT_COLUMNS
from ._validation import ValidationError


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dumps(obj, **kw):
    """JSON encoding that maps non-finite floats to strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, **kw)


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_text(header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


# -- states -----------------------------------------------------------------

def state_header(state):
    g = state.grid
    return {"kind": g.kind, "dim": g.dim, "extent": g.extent, "n": g.n,
            "time": float(state.time)}


def write_state(path, state, extra=None):
    head = {**state_header(state), **(extra or {})}
    rows = zip(state.grid.nodes, state.values.real, state.values.imag)
    return atomic_write(path, "# " + dumps(head) + "\n" + _csv_text(("node", "re", "im"), rows))


def read_state(path):
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValidationError(f"{path}: missing JSON header line")
        head = json.loads(first[1:])
        data = list(csv.DictReader(fh))
    grid = make_grid(head["kind"], head["dim"], head["extent"], head["n"])
    if len(data) != grid.n:
        raise ValidationError(f"{path}: expected {grid.n} rows, found {len(data)}")
    vals = np.array([float(r["re"]) + 1j * float(r["im"]) for r in data])
    return FieldState(grid, vals, float(head.get("time", 0.0)))


# -- tables -----------------------------------------------------------------

def write_reports(path, reports):
    return atomic_write(path, _csv_text(REPORT_COLUMNS, (r.as_row() for r in reports)))


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def write_table(path, header, rows):
    return atomic_write(path, _csv_text(header, rows))


def write_jsonl(path, records):
    return atomic_write(path, "".join(dumps(r) + "\n" for r in records))


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path, obj):
    return atomic_write(path, dumps(obj, indent=2) + "\n")


def write_trajectory(directory, traj, verdict=None):
    """Header JSON, reports CSV and one state CSV per snapshot."""
    d = Path(directory)
    head = {"params": traj.params.as_dict(),
            "controls": traj.controls.as_dict() if traj.controls else None,
            "stop_reason": traj.stop_reason, "t_end": traj.t_end, "steps": traj.steps,
            "hitting_times": {repr(k): v for k, v in traj.hitting_times.items()},
            "snapshots": len(traj.snapshots)}
    if verdict is not None:
        head["verdict"] = verdict.as_dict()
    write_json(d / "trajectory.json", head)
    write_reports(d / "reports.csv", traj.reports)
    for i, s in enumerate(traj.snapshots):
        write_state(d / f"snapshot_{i:04d}.csv", s)
    return d


def write_ground_state(directory, gs):
    d = Path(directory)
    write_json(d / "ground_state.json", gs.metadata())
    write_state(d / "profile.csv", gs.profile)
    return d


def write_variance_series(path, series):
    return write_table(path, series.COLUMNS, series.rows())
