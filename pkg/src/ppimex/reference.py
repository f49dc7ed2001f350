"""Validation oracles: an explicit SSP-RK2 BGK solver and the kinetic-flux Euler scheme."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .imex_bgk import EpsSpec, KineticField, StepDiagnostics, field_totals, negative_count
from .kinetic import TauFunction, VelocityGrid, check_admissible, discrete_maxwellian, moments_array, unit_tau
from .space_fv import (
    LEGENDRE3,
    POSITIVITY_CFL,
    GhostCells,
    SpatialMesh,
    cell_maxwellian,
    scalar_gauss_points,
    transport_operator,
)
from .tableau import TableauPair, get_scheme

__all__ = [
    "STIFFNESS_SAFETY",
    "SSPStepInfo",
    "BGKRightHandSide",
    "ssp_rk2_step",
    "ssp_rk2_run",
    "kinetic_flux",
    "kinetic_euler_step",
    "kinetic_rk_step",
]

#: explicit steps must satisfy dt <= STIFFNESS_SAFETY * min(eps)
STIFFNESS_SAFETY = 0.5


@dataclass(frozen=True)
class SSPStepInfo:
    cfl_ok: bool
    stiffness_ok: bool

    @property
    def ok(self) -> bool:
        return self.cfl_ok and self.stiffness_ok


class BGKRightHandSide:
    """``T(f) + tau (M - f)/eps`` on cell averages.

    For a spatially varying ``eps`` the collision term is integrated with the
    three-point Gauss rule from nonnegative point reconstructions of ``f``.
    """

    def __init__(
        self,
        mesh: SpatialMesh,
        grid: VelocityGrid,
        eps: EpsSpec,
        tau: TauFunction | None = None,
        ghosts: GhostCells | None = None,
        limiter: bool = True,
    ):
        self.mesh, self.grid, self.ghosts, self.limiter = mesh, grid, ghosts, limiter
        self.tau = tau or unit_tau
        self.variable = callable(eps)
        if self.variable:
            self.eps_gauss = np.asarray(eps(mesh.gauss_points), dtype=float)
            self.eps_min = float(min(self.eps_gauss.min(), np.min(eps(mesh.centers))))
        else:
            self.eps = float(eps)
            self.eps_min = self.eps
        self._ghost_U = None if ghosts is None else ghosts.map(lambda g: moments_array(g, grid))

    def transport(self, f: np.ndarray) -> np.ndarray:
        return transport_operator(f, self.grid.nodes, self.mesh, self.ghosts, limiter=self.limiter)

    def _rate(self, U):
        rho = U[..., 0]
        u = U[..., 1] / rho
        return np.asarray(self.tau(rho, 2.0 * U[..., 2] / rho - u * u), dtype=float)

    def collision(self, f: np.ndarray) -> np.ndarray:
        if self.variable:
            pts = scalar_gauss_points(f, self.mesh, self.ghosts, strict=False)
            Ug = moments_array(pts, self.grid)
            check_admissible(Ug)
            M = discrete_maxwellian(Ug, self.grid, check=False)
            q = (self._rate(Ug) / self.eps_gauss)[..., None] * (M - pts)
            return np.einsum("l,jlk->jk", LEGENDRE3.weights, q)
        U = moments_array(f, self.grid)
        M = cell_maxwellian(U, self.mesh, self.grid, self._ghost_U)
        return (self._rate(U) / self.eps)[:, None] * (M - f)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        return self.transport(f) + self.collision(f)


def _check_dt(dt: float, mesh: SpatialMesh, grid: VelocityGrid, eps_min: float) -> SSPStepInfo:
    cfl_ok = dt <= 0.5 * POSITIVITY_CFL * mesh.dx / grid.v_max * (1 + 1e-12)
    return SSPStepInfo(cfl_ok, dt <= STIFFNESS_SAFETY * eps_min * (1 + 1e-12))


def ssp_rk2_step(
    f: np.ndarray,
    dt: float,
    mesh: SpatialMesh,
    grid: VelocityGrid,
    eps: EpsSpec,
    tau: TauFunction | None = None,
    *,
    ghosts: GhostCells | None = None,
    limiter: bool = True,
    rhs: BGKRightHandSide | None = None,
) -> tuple[np.ndarray, SSPStepInfo]:
    """Heun step ``f1 = f + dt L(f)``, ``f_new = (f + f1 + dt L(f1))/2``.

    The returned flags report whether ``dt`` respects the positivity CFL
    ``dx/(24 v_max)`` and the stiffness bound ``0.5 min(eps)``.
    """
    rhs = rhs or BGKRightHandSide(mesh, grid, eps, tau, ghosts, limiter)
    f1 = f + dt * rhs(f)
    out = 0.5 * (f + f1 + dt * rhs(f1))
    return out, _check_dt(dt, mesh, grid, rhs.eps_min)


def ssp_rk2_run(
    f0: KineticField,
    dt: float,
    t_end: float,
    eps: EpsSpec,
    tau: TauFunction | None = None,
    *,
    limiter: bool = True,
    callback: Callable[[KineticField, StepDiagnostics], None] | None = None,
) -> tuple[KineticField, SSPStepInfo, list[StepDiagnostics]]:
    """March the explicit reference to ``t_end`` (last step shortened)."""
    rhs = BGKRightHandSide(f0.mesh, f0.grid, eps, tau, f0.ghosts, limiter)
    n = max(0, math.ceil((t_end - f0.time) / dt - 1e-9))
    vals, t = f0.values, f0.time
    info = _check_dt(dt, f0.mesh, f0.grid, rhs.eps_min)
    diags: list[StepDiagnostics] = []
    for s in range(1, n + 1):
        h = min(dt, t_end - t) if s == n else dt
        vals, _ = ssp_rk2_step(vals, h, f0.mesh, f0.grid, eps, tau, rhs=rhs)
        t = t_end if s == n else t + h
        if callback is not None:
            tot = field_totals(vals, f0.mesh, f0.grid)
            d = StepDiagnostics(s, t, *map(float, tot), math.nan, negative_count(vals), float(vals.min()))
            diags.append(d)
            callback(f0.with_values(vals, t), d)
    return f0.with_values(vals, t), info, diags


def _ghost_maxwellians(ghost_U: GhostCells | None, grid: VelocityGrid) -> GhostCells | None:
    if ghost_U is None:
        return None
    return ghost_U.map(lambda U: discrete_maxwellian(U, grid))


def kinetic_flux(
    U: np.ndarray,
    mesh: SpatialMesh,
    grid: VelocityGrid,
    ghosts: GhostCells | None = None,
    *,
    limiter: bool = True,
) -> np.ndarray:
    """Moments of the transported cell Maxwellians, ``<T(M_j) phi>``.

    ``ghosts`` holds frozen conserved states ``(3, 3)`` per side for
    Dirichlet meshes.
    """
    U = np.asarray(U, dtype=float)
    check_admissible(U)
    M = cell_maxwellian(U, mesh, grid, ghosts)
    TM = transport_operator(M, grid.nodes, mesh, _ghost_maxwellians(ghosts, grid), limiter=limiter)
    return moments_array(TM, grid)


def kinetic_euler_step(
    U: np.ndarray,
    dt: float,
    mesh: SpatialMesh,
    grid: VelocityGrid,
    ghosts: GhostCells | None = None,
    *,
    limiter: bool = True,
) -> np.ndarray:
    """Forward Euler step of the kinetic-flux scheme for the Euler limit."""
    U = np.asarray(U, dtype=float)
    M = cell_maxwellian(U, mesh, grid, ghosts)
    TM = transport_operator(M, grid.nodes, mesh, _ghost_maxwellians(ghosts, grid), limiter=limiter)
    return moments_array(M + dt * TM, grid)


def kinetic_rk_step(
    U: np.ndarray,
    dt: float,
    mesh: SpatialMesh,
    grid: VelocityGrid,
    scheme: str | TableauPair = "scheme_a",
    ghosts: GhostCells | None = None,
    *,
    limiter: bool = True,
) -> np.ndarray:
    """Explicit Runge-Kutta composition of :func:`kinetic_euler_step` using a scheme's explicit tableau."""
    t = get_scheme(scheme)
    At, wt = t.At, t.wt
    stages: list[np.ndarray] = []
    L: list[np.ndarray] = []
    for i in range(t.nu):
        Ui = U.copy()
        for j in range(i):
            if At[i, j] != 0:
                Ui = Ui + dt * At[i, j] * L[j]
        stages.append(Ui)
        L.append(kinetic_flux(Ui, mesh, grid, ghosts, limiter=limiter))
    out = U.copy()
    for j in range(t.nu):
        if wt[j] != 0:
            out = out + dt * wt[j] * L[j]
    return out
