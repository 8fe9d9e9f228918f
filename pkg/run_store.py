# run_store.py
"""
Every file the lab writes or reads goes through here: CSV artifacts with fixed
float formatting, JSON reports, snapshots and the run manifest. Writes go to a
temporary file first and are moved into place with os.replace.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from core.errors import CsvParseError, RunStoreError
from core.logger import get_logger

log = get_logger(__name__)

# ---------------- Configuration ----------------
RUN_ROOT = os.environ.get("CHEMLAB_RUNS", "runs")
MANIFEST = "manifest.json"
PACKAGE_VERSION = "1.0.0"
_DEBUG = os.environ.get("CHEMLAB_DEBUG", "0").lower() in ("1", "true", "yes")


def _debug(*args):
    if _DEBUG:
        log.debug(" ".join(str(a) for a in args))


# ---------------- Formatting ----------------
def fmt(x: Any) -> str:
    """Round-trippable decimal text; inf/nan spelled out."""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    v = float(x)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(tmp, "w", newline="", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError as e:
        raise RunStoreError(f"write failed {path}: {e}") from e
    _debug("wrote", path, f"({len(text)} bytes)")


# ---------------- CSV ----------------
def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]], meta: Optional[str] = None) -> str:
    buf = io.StringIO()
    if meta:
        buf.write(f"# {meta}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())
    return path


def _parse_meta(line: str) -> Dict[str, str]:
    meta: Dict[str, str] = {}
    for part in line.lstrip("#").split():
        if "=" in part:
            k, v = part.split("=", 1)
            meta[k] = v
    return meta


def read_csv(path: str) -> Tuple[Dict[str, str], List[str], np.ndarray]:
    """(metadata from a leading '# k=v ...' line, header, float rows)."""
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise RunStoreError(f"read failed {path}: {e}") from e

    meta: Dict[str, str] = {}
    header: Optional[List[str]] = None
    rows: List[List[float]] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if header is None:
                meta.update(_parse_meta(line))
            continue
        cells = next(csv.reader([line]))
        if header is None:
            header = [c.strip() for c in cells]
            continue
        if len(cells) != len(header):
            raise CsvParseError(path, lineno, f"expected {len(header)} columns, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as e:
            raise CsvParseError(path, lineno, f"non-numeric value: {e}") from e
    if header is None:
        raise CsvParseError(path, max(len(lines), 1), "missing header")
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    return meta, header, data


def _require_columns(path: str, header: List[str], wanted: Sequence[str]) -> None:
    missing = [c for c in wanted if c not in header]
    if missing:
        raise CsvParseError(path, 1, f"missing columns {missing}")


# ---------------- Artifacts ----------------
def write_profile(path: str, profile) -> str:
    A = "inf" if math.isinf(profile.A) else fmt(profile.A)
    meta = f"N={profile.N} A={A} M={fmt(profile.M)} tol={fmt(profile.tol)}"
    return write_csv(path, ["x", "U1", "dU1"], zip(profile.xs, profile.U1, profile.dU1), meta=meta)


def read_profile(path: str) -> Tuple[Dict[str, str], np.ndarray]:
    meta, header, data = read_csv(path)
    _require_columns(path, header, ["x", "U1", "dU1"])
    return meta, data


SERIES_COLUMNS = ["t", "normL", "normC1", "lyapunov", "min_ux", "sup_ratio"]


def write_series(path: str, series, diagnostics) -> str:
    rows = (
        (t, L, C, d.lyapunov, d.min_ux, d.sup_ratio)
        for t, L, C, d in zip(series.times, series.normL, series.normC1, diagnostics)
    )
    return write_csv(path, SERIES_COLUMNS, rows)


def read_series(path: str) -> Dict[str, np.ndarray]:
    _, header, data = read_csv(path)
    _require_columns(path, header, ["t", "normL", "normC1"])
    return {name: data[:, i] for i, name in enumerate(header)}


def snapshot_name(t: float) -> str:
    return f"u_{t:.6f}.csv"


def write_snapshot(directory: str, t: float, nodes: np.ndarray, values: np.ndarray) -> str:
    return write_csv(os.path.join(directory, snapshot_name(t)), ["x", "u"], zip(nodes, values))


def write_lambda1(path: str, rows: Sequence[Tuple[int, float, int, float, float, int]]) -> str:
    return write_csv(path, ["N", "a", "n", "lambda1", "gap", "iters"], rows)


def write_phi1(path: str, nodes: np.ndarray, phi: np.ndarray) -> str:
    return write_csv(path, ["x", "phi1"], zip(nodes, phi))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(path: str, payload: Dict[str, Any]) -> str:
    _atomic_write(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise RunStoreError(f"read failed {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise CsvParseError(path, e.lineno, f"invalid JSON: {e.msg}") from e


def ratefit_payload(fit, lambda1: float, dUa1: float) -> Dict[str, Any]:
    return {
        "which": fit.which,
        "slope": fit.slope,
        "stderr": fit.stderr,
        "intercept": fit.intercept,
        "r2": fit.r_squared,
        "window": list(fit.window),
        "comparator": fit.comparator,
        "lambda1": lambda1,
        "dUa1": dUa1,
    }


# ---------------- Run directories / manifest ----------------
def run_dir(out: Optional[str], name: str) -> str:
    """Create (or reuse) a run directory; a manifest left by an earlier run is removed first."""
    path = out or os.path.join(RUN_ROOT, name)
    stale = os.path.join(path, MANIFEST)
    try:
        os.makedirs(path, exist_ok=True)
        if os.path.exists(stale):
            os.remove(stale)
            _debug("removed stale manifest", stale)
    except OSError as e:
        raise RunStoreError(f"cannot prepare run directory {path}: {e}") from e
    return path


def versions() -> Dict[str, str]:
    return {
        "chemlab": PACKAGE_VERSION,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_manifest(directory: str, config: Dict[str, Any], files: List[str], status: str,
                   wall_clock: float) -> str:
    """Written last; lists only files that exist, relative to the run directory."""
    rel = []
    for f in files:
        full = f if os.path.isabs(f) else os.path.join(directory, f)
        if not os.path.exists(full):
            raise RunStoreError(f"manifest lists missing file {full}")
        rel.append(os.path.relpath(full, directory))
    payload = {
        "config": config,
        "files": sorted(rel),
        "versions": versions(),
        "wall_clock_s": round(float(wall_clock), 3),
        "status": status,
    }
    return write_json(os.path.join(directory, MANIFEST), payload)


def read_manifest(directory: str) -> Dict[str, Any]:
    return read_json(os.path.join(directory, MANIFEST))


def append_to_manifest(directory: str, files: List[str]) -> str:
    """Add files produced after the run (e.g. ratefit.json) to an existing manifest."""
    current = read_manifest(directory)
    listed = list(current.get("files", []))
    for f in files:
        full = f if os.path.isabs(f) else os.path.join(directory, f)
        if not os.path.exists(full):
            raise RunStoreError(f"manifest lists missing file {full}")
        rel = os.path.relpath(full, directory)
        if rel not in listed:
            listed.append(rel)
    current["files"] = sorted(listed)
    return write_json(os.path.join(directory, MANIFEST), current)
