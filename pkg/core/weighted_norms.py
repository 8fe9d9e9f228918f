# core/weighted_norms.py
"""
Grids, nodal grid functions and the weighted norms used throughout:

    ||h||_L^2  = int h^2 x^(q-2)
    ||h||_H^2  = ||h||_L^2 + int h'^2
    ||h||_C1   = max |h| + max |h'|        (cell slopes)
    N[u]       = sup u(x)/x

Weighted integrals are taken of the P1 interpolant against the power weight,
cell by cell. On cells where the weight varies strongly (the first cell and
cells with x_{i+1} >= 1.5 x_i) the power moments are used in closed form;
elsewhere an 8-point Gauss-Legendre rule is exact to round-off and avoids the
cancellation of the closed form on narrow cells.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from core.errors import DivergentWeightError, GridError

_ORIGIN_TOL = 1e-14
_CLOSED_FORM_RATIO = 1.5
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


# ---------------- Grid ----------------
@dataclass(frozen=True, eq=False)
class Grid:
    nodes: np.ndarray
    grading: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 9:
            raise GridError(f"grid needs n >= 8 cells, got {x.size - 1}")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise GridError("grid must start at 0 and end at 1 exactly")
        if np.any(np.diff(x) <= 0):
            raise GridError("grid nodes must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @property
    def n(self) -> int:
        return self.nodes.size - 1

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    def refined(self) -> "Grid":
        return make_grid(2 * self.n, self.grading)


def make_grid(n: int = 1024, grading: float = 1.0) -> Grid:
    """Nodes x_i = (i/n)^grading; grading = 1 is uniform, 2 clusters nodes at the origin."""
    if n < 8:
        raise GridError(f"n must be >= 8, got {n}")
    if grading < 1:
        raise GridError(f"grading exponent must be >= 1, got {grading}")
    nodes = (np.arange(n + 1) / n) ** grading
    nodes[0], nodes[-1] = 0.0, 1.0
    return Grid(nodes, float(grading))


@dataclass(frozen=True, eq=False)
class GridFn:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise GridError(f"{v.size} values for a grid of {self.grid.nodes.size} nodes")
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, grid: Grid, f: Callable[[np.ndarray], np.ndarray]) -> "GridFn":
        return cls(grid, np.broadcast_to(f(grid.nodes), grid.nodes.shape))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFn":
        return cls(grid, np.zeros_like(grid.nodes))

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / self.grid.dx

    def __add__(self, other: "GridFn") -> "GridFn":
        return GridFn(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFn") -> "GridFn":
        return GridFn(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "GridFn":
        return GridFn(self.grid, c * self.values)

    __rmul__ = __mul__


# ---------------- Cell integrals ----------------
def _power_moment(a: np.ndarray, b: np.ndarray, e: float) -> np.ndarray:
    """int_a^b x^(e-1) dx for a > 0."""
    if abs(e) < 1e-14:
        return np.log(b / a)
    return (b ** e - a ** e) / e


def power_cell_mass(nodes: np.ndarray, p: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-cell entries (m_ii, m_ij, m_jj) of int phi_k phi_l x^p over each cell,
    phi the P1 hat functions. For the first cell only m_jj is returned (m_ii and
    m_ij multiply h(0) = 0); it requires p > -3.
    """
    a, b = nodes[:-1], nodes[1:]
    d = b - a
    c, half = 0.5 * (a + b), 0.5 * d
    t = _GL_NODES[None, :]
    w = _GL_WEIGHTS[None, :] * half[:, None] * (c[:, None] + half[:, None] * t) ** p
    mii = np.sum(w * (0.5 * (1 - t)) ** 2, axis=1)
    mij = np.sum(w * 0.25 * (1 - t) * (1 + t), axis=1)
    mjj = np.sum(w * (0.5 * (1 + t)) ** 2, axis=1)

    closed = (a > 0) & (b >= _CLOSED_FORM_RATIO * a)
    if np.any(closed):
        ac, bc, dc = a[closed], b[closed], d[closed]
        mu0 = _power_moment(ac, bc, p + 1)
        mu1 = _power_moment(ac, bc, p + 2)
        mu2 = _power_moment(ac, bc, p + 3)
        mii[closed] = (bc * bc * mu0 - 2 * bc * mu1 + mu2) / dc ** 2
        mij[closed] = (-ac * bc * mu0 + (ac + bc) * mu1 - mu2) / dc ** 2
        mjj[closed] = (ac * ac * mu0 - 2 * ac * mu1 + mu2) / dc ** 2

    # first cell: h = h_1 x / x_1, so int h^2 x^p = h_1^2 x_1^(p+1)/(p+3)
    mii[0], mij[0] = 0.0, 0.0
    mjj[0] = b[0] ** (p + 1) / (p + 3)
    return mii, mij, mjj


def cell_gauss(nodes: np.ndarray, f: Callable[[np.ndarray], np.ndarray], order: int = 6) -> np.ndarray:
    """int f over each cell by Gauss-Legendre with `order` points."""
    t, wt = np.polynomial.legendre.leggauss(order)
    a, b = nodes[:-1], nodes[1:]
    c, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = c[:, None] + half[:, None] * t[None, :]
    return np.sum(wt[None, :] * f(pts), axis=1) * half


def gauss_points(nodes: np.ndarray, order: int = 6) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature points, weights and local coordinate t in [-1, 1] per cell (shape cells x order)."""
    t, wt = np.polynomial.legendre.leggauss(order)
    a, b = nodes[:-1], nodes[1:]
    c, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = c[:, None] + half[:, None] * t[None, :]
    return pts, wt[None, :] * half[:, None], np.broadcast_to(t, pts.shape)


def weighted_cell_products(h: GridFn, k: GridFn, q: float) -> np.ndarray:
    """Per-cell int h k x^(q-2) for the P1 interpolants; h(0) = 0 or k(0) = 0 is assumed."""
    mii, mij, mjj = power_cell_mass(h.grid.nodes, q - 2.0)
    hi, hj = h.values[:-1], h.values[1:]
    ki, kj = k.values[:-1], k.values[1:]
    return hi * ki * mii + (hi * kj + hj * ki) * mij + hj * kj * mjj


def _check_origin(h: GridFn) -> None:
    scale = max(1.0, float(np.max(np.abs(h.values))))
    if abs(h.values[0]) > _ORIGIN_TOL * scale:
        raise DivergentWeightError(f"h(0) = {h.values[0]:.3e} != 0: weight x^(q-2) is not integrable")


def _check_ends(h: GridFn) -> None:
    _check_origin(h)
    scale = max(1.0, float(np.max(np.abs(h.values))))
    if abs(h.values[-1]) > _ORIGIN_TOL * scale:
        raise DivergentWeightError(f"h(1) = {h.values[-1]:.3e} != 0: not in H")


# ---------------- Norms ----------------
def inner_L(h: GridFn, k: GridFn, q: float) -> float:
    _check_origin(h)
    _check_origin(k)
    return float(np.sum(weighted_cell_products(h, k, q)))


def norm_L(h: GridFn, q: float) -> float:
    _check_origin(h)
    return float(np.sqrt(max(np.sum(weighted_cell_products(h, h, q)), 0.0)))


def norm_H(h: GridFn, q: float) -> float:
    _check_ends(h)
    energy = float(np.sum(h.slopes ** 2 * h.grid.dx))
    return float(np.sqrt(norm_L(h, q) ** 2 + energy))


def norm_C1(h: GridFn) -> float:
    return float(np.max(np.abs(h.values)) + np.max(np.abs(h.slopes)))


def sup_ratio(u: GridFn) -> float:
    """N[u] = sup u(x)/x over the nodes x > 0."""
    x = u.grid.nodes
    return float(np.max(u.values[1:] / x[1:]))
