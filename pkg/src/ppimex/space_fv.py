"""Finite-volume machinery in x: WENO5, positivity limiter, fluxes, quadratures.

Cell averages of a kinetic field are stored with shape ``(n_x, n_v)``.
Boundary data for non-periodic meshes are frozen ghost cells, three per
side, supplied as a :class:`GhostCells` value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .kinetic import (
    ConservedState,
    VelocityGrid,
    check_admissible,
    discrete_maxwellian,
)

__all__ = [
    "BoundaryKind",
    "SpatialMesh",
    "GhostCells",
    "QuadratureRule",
    "LOBATTO4",
    "LEGENDRE3",
    "NGHOST",
    "HERMITE_MAP",
    "POSITIVITY_CFL",
    "TransportResult",
    "pad",
    "weno5_interfaces",
    "positivity_limit_interfaces",
    "upwind_flux",
    "transport_operator",
    "transport_forward_euler",
    "gauss_point_states",
    "scalar_gauss_points",
    "cell_maxwellian",
    "gauss_point_maxwellians",
    "cell_average",
]

NGHOST = K.NG
#: largest |v| dt/dx for which the limited forward Euler step is positive
POSITIVITY_CFL = 1.0 / 12.0
#: admissibility margin for Gauss-point states
STATE_MARGIN = 1e-13


class BoundaryKind(str, Enum):
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class SpatialMesh:
    n_x: int
    x_lo: float = 0.0
    x_hi: float = 2.0
    boundary: BoundaryKind = BoundaryKind.PERIODIC

    def __post_init__(self) -> None:
        object.__setattr__(self, "boundary", BoundaryKind(self.boundary))
        if self.n_x < 5:
            raise ValueError("WENO5 needs at least 5 cells")
        if not self.x_hi > self.x_lo:
            raise ValueError("empty domain")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_x

    @property
    def periodic(self) -> bool:
        return self.boundary is BoundaryKind.PERIODIC

    @cached_property
    def centers(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.n_x) + 0.5) * self.dx

    @cached_property
    def edges(self) -> np.ndarray:
        return self.x_lo + np.arange(self.n_x + 1) * self.dx

    @cached_property
    def gauss_points(self) -> np.ndarray:
        """Physical Gauss-Legendre nodes, shape ``(n_x, 3)``."""
        return self.centers[:, None] + LEGENDRE3.nodes[None, :] * self.dx

    def ghost_centers(self) -> tuple[np.ndarray, np.ndarray]:
        k = np.arange(NGHOST)
        left = self.x_lo - (NGHOST - k - 0.5) * self.dx
        right = self.x_hi + (k + 0.5) * self.dx
        return left, right


class QuadratureRule(NamedTuple):
    """Nodes and weights on the reference cell ``[-1/2, 1/2]``."""

    nodes: np.ndarray
    weights: np.ndarray


LOBATTO4 = QuadratureRule(
    np.array([-0.5, -0.5 / math.sqrt(5.0), 0.5 / math.sqrt(5.0), 0.5]),
    np.array([1.0 / 12.0, 5.0 / 12.0, 5.0 / 12.0, 1.0 / 12.0]),
)
LEGENDRE3 = QuadratureRule(
    np.array([-0.5 * math.sqrt(0.6), 0.0, 0.5 * math.sqrt(0.6)]),
    np.array([5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0]),
)


def _hermite_map() -> np.ndarray:
    """Map ``(f_left, f_right, U_{j-1}, U_j, U_{j+1})`` to Gauss-node values.

    The degree-4 polynomial matches both face values and three neighbouring
    cell averages; the returned 3x5 matrix evaluates it at the Legendre nodes.
    """
    powers = np.arange(5)

    def avg(a, b):
        return (b ** (powers + 1) - a ** (powers + 1)) / (powers + 1) / (b - a)

    rows = np.array([(-0.5) ** powers, 0.5 ** powers, avg(-1.5, -0.5), avg(-0.5, 0.5), avg(0.5, 1.5)])
    vander = LEGENDRE3.nodes[:, None] ** powers[None, :]
    return vander @ np.linalg.inv(rows)


HERMITE_MAP = _hermite_map()


@dataclass(frozen=True)
class GhostCells:
    """Frozen boundary values, ``left``/``right`` of shape ``(3, ...)``.

    The first row of ``left`` is the outermost ghost cell; the first row of
    ``right`` is adjacent to the domain.
    """

    left: np.ndarray
    right: np.ndarray

    @classmethod
    def constant(cls, left_value: np.ndarray, right_value: np.ndarray) -> GhostCells:
        lv = np.asarray(left_value, dtype=float)
        rv = np.asarray(right_value, dtype=float)
        return cls(np.repeat(lv[None], NGHOST, axis=0), np.repeat(rv[None], NGHOST, axis=0))

    @classmethod
    def from_field(cls, values: np.ndarray) -> GhostCells:
        """Copy the edge cells of ``values`` into the ghost layers."""
        values = np.asarray(values, dtype=float)
        return cls.constant(values[0], values[-1])

    def map(self, fn) -> GhostCells:
        return GhostCells(fn(self.left), fn(self.right))


def _ghost_arrays(mesh: SpatialMesh, ghosts: GhostCells | None, tail: tuple[int, ...]):
    if mesh.periodic:
        z = np.zeros((NGHOST, *tail))
        return z, z
    if ghosts is None:
        raise ValueError("a Dirichlet mesh needs ghost cells")
    shape = (NGHOST, *tail)

    def fit(a):
        a = np.asarray(a, dtype=float)
        if a.size == math.prod(shape):
            a = a.reshape(shape)
        return np.ascontiguousarray(np.broadcast_to(a, shape))

    return fit(ghosts.left), fit(ghosts.right)


def _as_columns(values: np.ndarray) -> tuple[np.ndarray, bool]:
    a = np.asarray(values, dtype=float)
    if a.ndim == 1:
        return np.ascontiguousarray(a[:, None]), True
    return np.ascontiguousarray(a), False


def pad(values: np.ndarray, mesh: SpatialMesh, ghosts: GhostCells | None = None) -> np.ndarray:
    """Cell averages with three ghost cells prepended and appended."""
    a = np.asarray(values, dtype=float)
    if mesh.periodic:
        return np.concatenate([a[-NGHOST:], a, a[:NGHOST]])
    gl, gr = _ghost_arrays(mesh, ghosts, a.shape[1:])
    return np.concatenate([gl, a, gr])


def weno5_interfaces(
    cell_averages: np.ndarray, mesh: SpatialMesh, ghosts: GhostCells | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Unlimited WENO5 traces ``(minus, plus)`` at the ``n_x + 1`` faces.

    ``minus[i]`` is the value at ``x_{i-1/2}`` reconstructed from the left
    cell, ``plus[i]`` the value reconstructed from the right cell.
    """
    cols, squeeze = _as_columns(cell_averages)
    p = pad(cols, mesh, ghosts)
    nx, nc = cols.shape
    minus = np.empty((nx + 1, nc))
    plus = np.empty((nx + 1, nc))
    for k in range(nc):
        K.faces_column(np.ascontiguousarray(p[:, k]), nx, minus[:, k], plus[:, k])
    if squeeze:
        return minus[:, 0], plus[:, 0]
    return minus, plus


def positivity_limit_interfaces(fbar, f_plus_jm, f_minus_jp):
    """Scale a cell's two face traces toward its average so all quadrature values are nonnegative.

    Args:
        fbar: cell average, must be nonnegative.
        f_plus_jm: trace at the cell's left face.
        f_minus_jp: trace at the cell's right face.

    Returns:
        ``(limited_plus_jm, limited_minus_jp, theta)``; arrays broadcast.
    """
    fbar = np.asarray(fbar, dtype=float)
    fp = np.asarray(f_plus_jm, dtype=float)
    fm = np.asarray(f_minus_jp, dtype=float)
    if np.any(fbar < 0):
        raise ValueError("positivity limiter needs a nonnegative cell average")
    w1 = LOBATTO4.weights[0]
    wmid = LOBATTO4.weights[1] + LOBATTO4.weights[2]
    xi = (fbar - w1 * fp - w1 * fm) / wmid
    m = np.minimum(np.minimum(fp, fm), xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(m >= 0, 1.0, np.minimum(np.abs(fbar / (m - fbar)), 1.0))
    theta = np.where(fbar == 0, 0.0, theta)
    lp = np.where(theta < 1, theta * (fp - fbar) + fbar, fp)
    lm = np.where(theta < 1, theta * (fm - fbar) + fbar, fm)
    if lp.ndim == 0:
        return float(lp), float(lm), float(theta)
    return lp, lm, theta


def upwind_flux(v, f_tilde_minus, f_tilde_plus):
    """``v f^-`` for ``v >= 0``, ``v f^+`` otherwise."""
    v = np.asarray(v, dtype=float)
    out = np.where(v >= 0, v * np.asarray(f_tilde_minus, dtype=float), v * np.asarray(f_tilde_plus, dtype=float))
    return float(out) if out.ndim == 0 else out


def transport_operator(
    f: np.ndarray,
    velocities: np.ndarray,
    mesh: SpatialMesh,
    ghosts: GhostCells | None = None,
    *,
    spatial: str = "weno5",
    limiter: bool = True,
) -> np.ndarray:
    """Discrete ``-v d/dx f`` in flux form for every velocity column.

    ``spatial`` is ``"weno5"`` or ``"upwind1"``.
    """
    f2 = np.ascontiguousarray(f, dtype=float)
    if f2.ndim != 2:
        raise ValueError("f must have shape (n_x, n_v)")
    v = np.ascontiguousarray(np.broadcast_to(np.asarray(velocities, dtype=float), (f2.shape[1],)))
    gl, gr = _ghost_arrays(mesh, ghosts, f2.shape[1:])
    order = {"weno5": 5, "upwind1": 1}.get(spatial)
    if order is None:
        raise ValueError(f"unknown spatial scheme {spatial!r}")
    out = np.empty_like(f2)
    K.transport_rhs(f2, v, mesh.dx, mesh.periodic, gl, gr, order, bool(limiter), out)
    return out


@dataclass(frozen=True)
class TransportResult:
    values: np.ndarray
    cfl: float
    positivity_guaranteed: bool


def transport_forward_euler(
    row: np.ndarray,
    v: float,
    dt: float,
    mesh: SpatialMesh,
    ghosts: GhostCells | None = None,
    *,
    limiter: bool = True,
    spatial: str = "weno5",
) -> TransportResult:
    """One forward Euler step of ``f_t + v f_x = 0`` for a single velocity."""
    col = np.asarray(row, dtype=float)[:, None]
    g = None if ghosts is None else ghosts.map(lambda a: np.asarray(a, dtype=float).reshape(NGHOST, 1))
    rhs = transport_operator(col, np.array([v]), mesh, g, spatial=spatial, limiter=limiter)
    cfl = abs(v) * dt / mesh.dx
    bound = POSITIVITY_CFL if spatial == "weno5" else 1.0
    ok = bool(limiter or spatial == "upwind1") and cfl <= bound * (1 + 1e-12)
    return TransportResult(col[:, 0] + dt * rhs[:, 0], cfl, ok)


def gauss_point_states(
    U: np.ndarray | ConservedState, mesh: SpatialMesh, ghosts: GhostCells | None = None
) -> np.ndarray:
    """Admissible conserved states at the three Gauss nodes of each cell.

    Args:
        U: cell averages, shape ``(n_x, 3)`` with columns ``(rho, m, E)``.
        ghosts: frozen ghost states of shape ``(3, 3)`` per side (Dirichlet).

    Returns:
        Array ``(n_x, 3, 3)``: cell, node, component.  The Legendre-weighted
        node states average back to ``U``.
    """
    if isinstance(U, ConservedState):
        U = U.as_array()
    U = np.ascontiguousarray(U, dtype=float)
    check_admissible(U, where=" (cell averages)")
    gl, gr = _ghost_arrays(mesh, ghosts, (3,))
    if not mesh.periodic:
        check_admissible(np.concatenate([gl, gr]), where=" (ghost cells)")
    out = np.empty((U.shape[0], 3, 3))
    thetas = np.empty(U.shape[0])
    K.gauss_points_system(U, mesh.periodic, gl, gr, HERMITE_MAP, STATE_MARGIN, out, thetas)
    return out


def scalar_gauss_points(
    averages: np.ndarray, mesh: SpatialMesh, ghosts: GhostCells | None = None, *, strict: bool = True
) -> np.ndarray:
    """Nonnegative point values at the Gauss nodes, preserving each cell average.

    ``averages`` has shape ``(n_x,)`` or ``(n_x, n_v)``; the result inserts a
    node axis after the cell axis.  With ``strict`` a negative average raises.
    """
    cols, squeeze = _as_columns(averages)
    if strict and np.any(cols < 0):
        raise ValueError("scalar_gauss_points needs nonnegative cell averages")
    gl, gr = _ghost_arrays(mesh, ghosts, cols.shape[1:])
    out = np.empty((cols.shape[0], 3, cols.shape[1]))
    K.gauss_points_scalar(cols, mesh.periodic, gl, gr, HERMITE_MAP, out)
    return out[:, :, 0] if squeeze else out


def gauss_point_maxwellians(
    U: np.ndarray, mesh: SpatialMesh, grid: VelocityGrid, ghosts: GhostCells | None = None
) -> np.ndarray:
    """Moment-matched Maxwellians at the Gauss nodes, shape ``(n_x, 3, n_v)``."""
    states = gauss_point_states(U, mesh, ghosts)
    return discrete_maxwellian(states, grid, check=False)


def cell_maxwellian(
    U: np.ndarray | ConservedState,
    mesh: SpatialMesh,
    grid: VelocityGrid,
    ghosts: GhostCells | None = None,
) -> np.ndarray:
    """Conservative cell Maxwellians ``M_j = sum_l w_l M[U_{j,l}]``, shape ``(n_x, n_v)``."""
    Mg = gauss_point_maxwellians(U, mesh, grid, ghosts)
    return np.einsum("l,jlk->jk", LEGENDRE3.weights, Mg)


def cell_average(func, mesh: SpatialMesh, n_points: int = 5) -> np.ndarray:
    """Gauss-Legendre cell averages of ``func(x)``; extra output axes are kept."""
    s, w = np.polynomial.legendre.leggauss(n_points)
    x = mesh.centers[:, None] + 0.5 * mesh.dx * s[None, :]
    vals = np.asarray(func(x), dtype=float)
    return np.tensordot(vals, 0.5 * w, axes=([1], [0])) if vals.ndim == 2 else np.einsum(
        "jl...,l->j...", vals, 0.5 * w
    )

