"""Initial data and drivers for the numerical experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imex_bgk import KineticField, RunResult, SimConfig, SpatialScheme, run
from .kinetic import Primitive, VelocityGrid, conserved_from_primitive, discrete_maxwellian, maxwellian
from .space_fv import BoundaryKind, GhostCells, SpatialMesh, cell_average

__all__ = [
    "smooth_primitives",
    "accuracy_initial",
    "sod_initial",
    "mixed_eps",
    "restrict",
    "l2_error",
    "relative_l2",
    "ConvergenceRow",
    "accuracy_study",
    "EPS0_MIXED",
]

EPS0_MIXED = 1e-5
SOD_LEFT = (1.0, 0.0, 1.0)
SOD_RIGHT = (0.125, 0.0, 0.25)


def smooth_primitives(x: np.ndarray) -> Primitive:
    """``rho = 1 + 0.2 sin(pi x)``, ``u = 1``, ``T = 1/rho``."""
    rho = 1.0 + 0.2 * np.sin(np.pi * x)
    return Primitive(rho, np.ones_like(rho), 1.0 / rho)


def accuracy_initial(mesh: SpatialMesh, grid: VelocityGrid, consistent: bool = False) -> KineticField:
    """Smooth periodic data; the inconsistent variant mixes two drifting Maxwellians."""

    def f(x):
        p = smooth_primitives(x)
        if consistent:
            return maxwellian(p, grid)
        return 0.5 * maxwellian(p, grid) + 0.3 * maxwellian(Primitive(p.rho, -0.5 * p.u, p.T), grid)

    return KineticField(cell_average(f, mesh), mesh, grid)


def sod_initial(n_x: int, grid: VelocityGrid) -> KineticField:
    """Riemann data on [0, 2] with frozen Maxwellian ghost cells.

    Cells are equilibrium Maxwellians of the left/right states; the jump sits
    on a cell face when ``n_x`` is even.
    """
    mesh = SpatialMesh(n_x, 0.0, 2.0, BoundaryKind.DIRICHLET)
    ML = discrete_maxwellian(conserved_from_primitive(Primitive(*SOD_LEFT)), grid)
    MR = discrete_maxwellian(conserved_from_primitive(Primitive(*SOD_RIGHT)), grid)
    # fraction of each cell lying in x <= 1
    frac = np.clip((1.0 - mesh.edges[:-1]) / mesh.dx, 0.0, 1.0)
    values = frac[:, None] * ML + (1.0 - frac[:, None]) * MR
    return KineticField(values, mesh, grid, ghosts=GhostCells.constant(ML, MR))


def mixed_eps(x, eps0: float = EPS0_MIXED):
    """Knudsen profile moving from fluid (ends) to kinetic (centre) regimes."""
    x = np.asarray(x, dtype=float)
    return eps0 + (np.tanh(1.0 - 11.0 * (x - 1.0)) + np.tanh(1.0 + 11.0 * (x - 1.0)))


def restrict(values: np.ndarray) -> np.ndarray:
    """Average pairs of fine cells onto the coarse mesh."""
    return 0.5 * (values[0::2] + values[1::2])


def l2_error(coarse: KineticField, fine: KineticField) -> float:
    """Discrete ``L^2_{x,v}`` distance between a solution and the restricted finer one."""
    d = coarse.values - restrict(fine.values)
    return math.sqrt(coarse.mesh.dx * coarse.grid.dv * float(np.sum(d * d)))


def relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@dataclass(frozen=True)
class ConvergenceRow:
    n_x: int
    error: float
    order: float


def accuracy_study(
    scheme: str,
    eps: float,
    n_x_list: list[int],
    *,
    consistent: bool = False,
    grid: VelocityGrid | None = None,
    t_end: float = 0.1,
    cfl: float = 0.5,
    limiter: bool = False,
) -> list[ConvergenceRow]:
    """Self-convergence errors ``||f_dx - f_dx/2||`` and observed orders.

    ``n_x_list`` must double at each entry; the last entry only serves as a
    reference, so ``len(n_x_list) - 1`` rows are returned.
    """
    grid = grid or VelocityGrid()
    if any(b != 2 * a for a, b in zip(n_x_list, n_x_list[1:])):
        raise ValueError("n_x values must double from one level to the next")
    sols: list[KineticField] = []
    for nx in n_x_list:
        mesh = SpatialMesh(nx)
        dt = cfl * mesh.dx / grid.v_max
        # keep the dt-halving pattern exact
        steps = round(t_end / dt)
        if not math.isclose(steps * dt, t_end, rel_tol=1e-9):
            raise ValueError(f"t_end is not a multiple of dt at n_x = {nx}")
        cfg = SimConfig(
            scheme=scheme,
            eps=eps,
            t_end=t_end,
            dt=t_end / steps,
            spatial=SpatialScheme.WENO5_LIMITED if limiter else SpatialScheme.WENO5_UNLIMITED,
            entropy=False,
        )
        sols.append(run(cfg, accuracy_initial(mesh, grid, consistent)).field)
    rows: list[ConvergenceRow] = []
    for i in range(len(sols) - 1):
        err = l2_error(sols[i], sols[i + 1])
        order = math.log2(rows[-1].error / err) if rows else math.nan
        rows.append(ConvergenceRow(n_x_list[i], err, order))
    return rows


def run_result_primitives(res: RunResult) -> np.ndarray:
    return res.field.primitives()
