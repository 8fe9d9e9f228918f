# cli/sweep.py
"""Fan independent evolve runs out to a process pool; one subdirectory per run."""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import replace
from typing import Any, Dict, List, Sequence

import run_store
from cli.commands import DEFAULT_WORKERS, cmd_evolve, cmd_rate
from cli.config import RunConfig
from core.errors import ChemLabError, ConfigError
from core.logger import configure_logging, get_logger

log = get_logger(__name__)


def parse_m_list(spec: str) -> List[float]:
    try:
        values = [float(p) for p in spec.split(",") if p.strip()]
    except ValueError as e:
        raise ConfigError(f"--m-list expects comma separated numbers, got {spec!r}") from e
    if not values or any(v < 0 for v in values):
        raise ConfigError(f"--m-list needs nonnegative values, got {spec!r}")
    return values


def _one(cfg: RunConfig) -> Dict[str, Any]:
    """Worker body: evolve, then fit if the run completed. Never raises."""
    configure_logging()
    row: Dict[str, Any] = {"m": cfg.m, "status": "failed", "slope_L": float("nan"),
                           "slope_C1": float("nan"), "dir": cfg.out}
    try:
        res = cmd_evolve(cfg)
        row["status"] = res["status"]
        if res["status"] == "completed" and cfg.m > 0:
            fit = cmd_rate(cfg.out)
            row["slope_L"], row["slope_C1"] = fit["slope_L"], fit["slope_C1"]
    except ChemLabError as e:
        row["error"] = str(e)
    return row


def cmd_sweep(base: RunConfig, m_values: Sequence[float], workers: int = DEFAULT_WORKERS) -> Dict[str, Any]:
    started = time.monotonic()
    root = run_store.run_dir(base.out or None, f"sweep_N{base.N}")
    configs = [replace(base, m=m, out=os.path.join(root, f"m_{m:g}")) for m in m_values]

    rows: List[Dict[str, Any]] = []
    with ProcessPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pool.submit(_one, c): c for c in configs}
        for fut in as_completed(futures):
            row = fut.result()
            log.info("sweep m=%g: %s", row["m"], row["status"])
            rows.append(row)
    rows.sort(key=lambda r: r["m"])

    path = run_store.write_csv(os.path.join(root, "sweep.csv"), ["m", "status", "slope_L", "slope_C1"],
                               ([r["m"], r["status"], r["slope_L"], r["slope_C1"]] for r in rows))
    run_store.write_manifest(root, dict(base.echo(), command="sweep", m_list=list(m_values)),
                             [path], "completed", time.monotonic() - started)
    return {"dir": root, "runs": rows}
