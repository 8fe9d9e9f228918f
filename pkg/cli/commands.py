# cli/commands.py
"""
Subcommand implementations. Each returns a small result dict (printed by
main.py) and leaves its artifacts plus manifest.json in the run directory.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

import run_store
from cli.config import RunConfig
from core.errors import ConfigError, InstabilityError, SupercriticalMassError
from core.evolution import Trajectory, discrete_steady_state, initial_family, run
from core.logger import get_logger
from core.profiles import ModelParams, build_profile, eval_dU, solve_a_of_m
from core.rate_analysis import (
    NormSeries,
    fit_rate,
    norm_series,
    optimality_report,
    rate_consistency,
)
from core.spectrum import lambda1
from core.weighted_norms import GridFn, make_grid

log = get_logger(__name__)

DEFAULT_WORKERS = int(os.environ.get("CHEMLAB_WORKERS", "4"))


# ---------------- steady ----------------
def cmd_steady(N: int, tol: float = 1e-10, out: Optional[str] = None) -> Dict[str, Any]:
    started = time.monotonic()
    profile = build_profile(N, tol=tol)
    directory = run_store.run_dir(out, f"steady_N{N}")
    path = run_store.write_profile(os.path.join(directory, "profile.csv"), profile)
    run_store.write_manifest(directory, {"command": "steady", "N": N, "tol": tol}, [path], "completed",
                             time.monotonic() - started)
    log.info("steady N=%d: A=%s M=%.15g", N, profile.A, profile.M)
    return {"N": N, "A": profile.A, "M": profile.M, "dir": directory}


# ---------------- lambda1 ----------------
def parse_a_grid(spec: str) -> List[float]:
    """'start:stop:step' (inclusive) as fractions of A."""
    try:
        start, stop, step = (float(p) for p in spec.split(":"))
    except ValueError as e:
        raise ConfigError(f"--a-grid expects start:stop:step, got {spec!r}") from e
    if step <= 0 or not 0 < start <= stop < 1:
        raise ConfigError(f"--a-grid needs 0 < start <= stop < 1 and step > 0, got {spec!r}")
    k = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + i * step, 12) for i in range(k + 1)]


def effective_A(profile) -> float:
    """A, or a(0.9 M) when A is infinite (N = 2)."""
    if math.isfinite(profile.A):
        return profile.A
    return solve_a_of_m(profile, 0.9 * profile.M)


def cmd_lambda1(N: int, m: Optional[float] = None, a: Optional[float] = None, n: int = 1024,
                grading: float = 1.0, tol: float = 1e-10, out: Optional[str] = None,
                a_grid: Optional[str] = None, workers: int = DEFAULT_WORKERS) -> Dict[str, Any]:
    started = time.monotonic()
    profile = build_profile(N, tol=tol)
    grid = make_grid(n, grading)
    directory = run_store.run_dir(out, f"lambda1_N{N}")
    files = []

    if a_grid:
        A_eff = effective_A(profile)
        a_values = [frac * A_eff for frac in parse_a_grid(a_grid)]
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            results = list(pool.map(lambda av: lambda1(av, grid, profile), a_values))
        rows = [(N, r.a, n, r.lambda1, r.refinement_gap, r.iterations) for r in results]
        files.append(run_store.write_lambda1(os.path.join(directory, "lambda1.csv"), rows))
        lams = [r.lambda1 for r in results]
        monotone = all(x > y for x, y in zip(lams[:-1], lams[1:]))
        # the trend is only meaningful when every n -> 2n gap is below the smallest step in a
        steps = [abs(x - y) for x, y in zip(lams[:-1], lams[1:])]
        resolved = bool(steps) and max(r.refinement_gap for r in results) < min(steps)
        if not monotone:
            if resolved:
                log.warning("lambda_1 is not strictly decreasing along the a-grid")
            else:
                log.warning("lambda_1 trend along the a-grid is not resolved at n=%d; "
                            "refine n or use --grading", n)
        summary = {"N": N, "a": a_values, "lambda1": lams, "monotone": monotone, "resolved": resolved}
    else:
        if a is None:
            if m is None:
                raise ConfigError("lambda1 needs --m or --a")
            a = solve_a_of_m(profile, m)
        res = lambda1(a, grid, profile)
        files.append(run_store.write_lambda1(os.path.join(directory, "lambda1.csv"),
                                             [(N, a, n, res.lambda1, res.refinement_gap, res.iterations)]))
        files.append(run_store.write_phi1(os.path.join(directory, "phi1.csv"), grid.nodes, res.phi1.values))
        summary = {"N": N, "a": a, "lambda1": res.lambda1, "gap": res.refinement_gap, "iters": res.iterations}

    run_store.write_manifest(directory, {"command": "lambda1", "N": N, "m": m, "a": a, "n": n,
                                         "grading": grading, "tol": tol, "a_grid": a_grid},
                             files, "completed", time.monotonic() - started)
    summary["dir"] = directory
    return summary


# ---------------- evolve ----------------
def _snapshot_indices(traj: Trajectory, times: Sequence[float]) -> List[int]:
    picked: List[int] = []
    for t in times:
        if t > traj.times[-1] + 1e-12:
            continue
        k = traj.nearest(t)
        if k not in picked:
            picked.append(k)
    return picked


def cmd_evolve(cfg: RunConfig) -> Dict[str, Any]:
    """Run one trajectory; status completed | supercritical-detected | unstable."""
    started = time.monotonic()
    params = ModelParams(cfg.N, cfg.m)
    profile = build_profile(cfg.N, tol=cfg.tol)
    grid = make_grid(cfg.n, cfg.grading)
    directory = run_store.run_dir(cfg.out or None, f"evolve_N{cfg.N}_m{cfg.m:g}")

    subcritical = cfg.m < profile.M
    rng = np.random.default_rng(cfg.seed)
    u0 = initial_family(cfg.u0, grid, params, profile if subcritical else None, rng)
    reference: Optional[GridFn] = discrete_steady_state(grid, params, profile) if subcritical else None

    error: Optional[str] = None
    try:
        traj = run(u0, params, cfg.evolve_config())
    except InstabilityError as e:
        traj = e.trajectory
        error = str(e)
        if traj is None or not traj.times:
            raise

    if reference is not None:
        series = norm_series(traj, reference)
    else:
        nan = np.full(len(traj.times), math.nan)
        series = NormSeries(np.asarray(traj.times), nan, nan)

    files = [run_store.write_series(os.path.join(directory, "series.csv"), series, traj.diagnostics)]
    snap_dir = os.path.join(directory, "snapshots")
    for k in _snapshot_indices(traj, cfg.snapshot_times):
        files.append(run_store.write_snapshot(snap_dir, traj.times[k], grid.nodes, traj.states[k]))

    config = dict(cfg.echo(), command="evolve")
    run_store.write_manifest(directory, config, files, traj.status, time.monotonic() - started)
    result = {
        "status": traj.status,
        "t_final": traj.times[-1],
        "normL_final": float(series.normL[-1]),
        "sup_ratio_final": traj.diagnostics[-1].sup_ratio,
        "dir": directory,
    }
    if error:
        result["error"] = error
    log.info("evolve N=%d m=%g: %s at t=%.6g", cfg.N, cfg.m, traj.status, traj.times[-1])
    return result


# ---------------- rate ----------------
def cmd_rate(directory: str, lambda_frac: Optional[float] = None) -> Dict[str, Any]:
    started = time.monotonic()
    cols = run_store.read_series(os.path.join(directory, "series.csv"))
    series = NormSeries(cols["t"], cols["normL"], cols["normC1"])

    lam1, dUa1, comparator = math.nan, math.nan, math.nan
    spectral = profile = None
    a = math.nan
    manifest_path = os.path.join(directory, run_store.MANIFEST)
    config: Dict[str, Any] = {}
    if os.path.exists(manifest_path):
        config = run_store.read_manifest(directory).get("config", {})
    if config.get("command") == "evolve":
        N, m = int(config["N"]), float(config["m"])
        frac = float(config.get("lambda_frac", 0.9)) if lambda_frac is None else lambda_frac
        profile = build_profile(N, tol=float(config.get("tol", 1e-10)))
        try:
            a = solve_a_of_m(profile, m)
        except SupercriticalMassError:
            a = math.nan
        if 0 < a < profile.A:
            grid = make_grid(int(config["n"]), float(config.get("grading", 1.0)))
            spectral = lambda1(a, grid, profile, refine=False)
            lam1 = spectral.lambda1
            dUa1 = float(eval_dU(profile, a, 1.0))
            comparator = frac * (lam1 - 1.0) * dUa1 ** profile.q

    fitL = fit_rate(series, "L", comparator=comparator)
    fitC1 = fit_rate(series, "C1", comparator=comparator)
    consistency = rate_consistency(fitL, fitC1)
    payload = run_store.ratefit_payload(fitL, lam1, dUa1)
    payload["C1"] = run_store.ratefit_payload(fitC1, lam1, dUa1)
    payload["consistency"] = {"passed": consistency.passed, "difference": consistency.difference,
                              "tolerance": consistency.tolerance}
    if spectral is not None:
        payload["optimality"] = optimality_report(fitL, spectral, profile, a)
    path = run_store.write_json(os.path.join(directory, "ratefit.json"), payload)
    log.info("rate: slope_L=%.6g slope_C1=%.6g comparator=%.6g", fitL.slope, fitC1.slope, comparator)

    if os.path.exists(manifest_path):
        run_store.append_to_manifest(directory, [path])
    else:
        run_store.write_manifest(directory, {"command": "rate"}, [path, "series.csv"], "completed",
                                 time.monotonic() - started)
    return {
        "slope_L": fitL.slope,
        "stderr_L": fitL.stderr,
        "slope_C1": fitC1.slope,
        "stderr_C1": fitC1.stderr,
        "r2_L": fitL.r_squared,
        "comparator": comparator,
        "lambda1": lam1,
        "consistent": consistency.passed,
        "file": path,
    }

