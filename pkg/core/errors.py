# core/errors.py
from __future__ import annotations

from typing import Any, Optional


class ChemLabError(Exception):
    """Base class for every error raised by the lab."""


# ---------------- configuration / input ----------------
class ConfigError(ChemLabError):
    pass


class ModelError(ChemLabError):
    """Invalid model parameters (N, m)."""


class GridError(ChemLabError):
    pass


class MembershipError(ChemLabError):
    """Initial datum is not in Y_m; `clause` names the violated condition."""

    def __init__(self, clause: str, detail: str = ""):
        self.clause = clause
        super().__init__(f"initial datum not in Y_m [{clause}] {detail}".rstrip())


# ---------------- steady profiles ----------------
class ProfileIntegrationError(ChemLabError):
    def __init__(self, message: str, last_x: float):
        self.last_x = last_x
        super().__init__(f"{message} (last valid x={last_x:.6g})")


class ModelViolationError(ChemLabError):
    pass


class ProfileRangeError(ChemLabError):
    pass


class SupercriticalMassError(ChemLabError):
    """m >= M: no steady state exists. Callers may catch it to run blow-up diagnostics."""

    def __init__(self, m: float, M: float):
        self.m = m
        self.M = M
        super().__init__(f"supercritical mass m={m:.10g} >= M={M:.10g}")


class DomainError(ChemLabError):
    pass


# ---------------- norms / functionals ----------------
class DivergentWeightError(ChemLabError):
    pass


class NonpositiveSlopeError(ChemLabError):
    def __init__(self, cell: int, slope: float):
        self.cell = cell
        self.slope = slope
        super().__init__(f"nonpositive slope {slope:.3e} in cell {cell}")


class WrongFunctionalError(ChemLabError):
    pass


# ---------------- solvers ----------------
class LinearAlgebraError(ChemLabError):
    pass


class InstabilityError(ChemLabError):
    def __init__(self, t: float, umin: float, umax: float, trajectory: Optional[Any] = None):
        self.t = t
        self.umin = umin
        self.umax = umax
        # last stable snapshots, filled in by evolution.run
        self.trajectory = trajectory
        super().__init__(f"instability at t={t:.6g} (min u={umin:.3e}, max u={umax:.3e})")


class SpectralError(ChemLabError):
    def __init__(self, message: str, last_quotient: float):
        self.last_quotient = last_quotient
        super().__init__(f"{message} (last Rayleigh quotient {last_quotient:.12g})")


# ---------------- rate fitting ----------------
class InsufficientSamplesError(ChemLabError):
    pass


class BelowFloorError(ChemLabError):
    pass


# ---------------- persistence ----------------
class RunStoreError(ChemLabError):
    pass


class CsvParseError(RunStoreError):
    def __init__(self, path: str, line: int, detail: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {detail}")
