"""Corrected IMEX Runge-Kutta time stepping for the 1D BGK equation.

Each stage solves ``f = f* + dt a_ii tau (M[f] - f)/eps``.  Because the
collision operator conserves mass, momentum and energy, ``M[f]`` only
depends on the moments of the explicit data ``f*``, so the implicit solve is
the closed-form convex combination :func:`~ppimex.kinetic.bgk_relax`.  The
correction step ``f^{n+1} = f~ - alpha dt^2/eps^2 Q'(f*) Q(f^{n+1})`` is one
more relaxation with weight ``alpha dt^2 tau_{f*}/eps^2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterator

import numpy as np

from .kinetic import (
    AdmissibilityError,
    ConservedState,
    TauFunction,
    VelocityGrid,
    check_admissible,
    discrete_maxwellian,
    moments_array,
    unit_tau,
)
from .space_fv import (
    LEGENDRE3,
    POSITIVITY_CFL,
    GhostCells,
    SpatialMesh,
    cell_maxwellian,
    scalar_gauss_points,
    transport_operator,
)
from .tableau import SchemeKind, TableauPair, get_scheme, positivity_analysis, shu_osher_form

__all__ = [
    "SpatialScheme",
    "FStarChoice",
    "StageForm",
    "PositivityError",
    "KineticField",
    "SimConfig",
    "StepDiagnostics",
    "RunResult",
    "IMEXStepper",
    "imex_step",
    "run",
    "entropy",
    "field_totals",
    "negative_count",
]

log = logging.getLogger(__name__)

#: negative values above this are treated as round-off and clamped in positivity mode
CLAMP_TOL = 1e-14


class SpatialScheme(str, Enum):
    WENO5_LIMITED = "weno5_limited"
    WENO5_UNLIMITED = "weno5_unlimited"
    UPWIND1 = "upwind1"


class FStarChoice(str, Enum):
    """State at which the correction's relaxation rate is evaluated."""

    FN = "fn"
    FNP1 = "fnp1"


class StageForm(str, Enum):
    BUTCHER = "butcher"
    SHU_OSHER = "shu_osher"


class PositivityError(RuntimeError):
    """A stage produced a negative value in positivity-preserving mode."""


@dataclass
class KineticField:
    """Cell averages ``values[j, k]`` of ``f(x_j, v_k)``."""

    values: np.ndarray
    mesh: SpatialMesh
    grid: VelocityGrid
    time: float = 0.0
    ghosts: GhostCells | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_x, self.grid.n_v):
            raise ValueError(
                f"values have shape {self.values.shape}, expected {(self.mesh.n_x, self.grid.n_v)}"
            )
        if not self.mesh.periodic and self.ghosts is None:
            raise ValueError("a Dirichlet field needs frozen ghost cells")

    def with_values(self, values: np.ndarray, time: float | None = None) -> KineticField:
        return replace(self, values=values, time=self.time if time is None else time)

    def moments(self) -> np.ndarray:
        """Per-cell ``(rho, m, E)``, shape ``(n_x, 3)``."""
        return moments_array(self.values, self.grid)

    def primitives(self) -> np.ndarray:
        """Per-cell ``(rho, u, T)``, shape ``(n_x, 3)``."""
        U = self.moments()
        rho = U[:, 0]
        u = U[:, 1] / rho
        return np.stack([rho, u, 2.0 * U[:, 2] / rho - u * u], axis=1)


EpsSpec = float | Callable[[np.ndarray], np.ndarray]


@dataclass
class SimConfig:
    """Run configuration.

    ``dt`` fixes the step; otherwise it is ``cfl_fraction`` times the largest
    step with guaranteed positivity, ``c_sch dx/(12 v_max)`` (``c_sch dx/v_max``
    for first-order upwind).  ``eps`` is a constant or a function of ``x``.
    """

    scheme: str | TableauPair = "scheme_a"
    eps: EpsSpec = 1.0
    tau: TauFunction | None = None
    t_end: float = 0.1
    dt: float | None = None
    cfl_fraction: float = 1.0
    spatial: SpatialScheme = SpatialScheme.WENO5_LIMITED
    fstar: FStarChoice = FStarChoice.FN
    stage_form: StageForm = StageForm.BUTCHER
    entropy: bool = True
    equilibrium_distance: bool = False

    def __post_init__(self) -> None:
        self.spatial = SpatialScheme(self.spatial)
        self.fstar = FStarChoice(self.fstar)
        self.stage_form = StageForm(self.stage_form)
        if not callable(self.eps) and not float(self.eps) > 0:
            raise ValueError("eps must be positive")
        if not self.cfl_fraction > 0:
            raise ValueError("cfl_fraction must be positive")


@dataclass(frozen=True)
class StepDiagnostics:
    step: int
    time: float
    mass: float
    momentum: float
    energy: float
    entropy: float
    neg_cells: int
    min_f: float
    max_distance_to_equilibrium: float = math.nan
    stage_neg_cells: int = 0
    clamped: int = 0

    CSV_FIELDS = ("step", "time", "mass", "momentum", "energy", "entropy", "neg_cells", "min_f")

    def row(self) -> tuple:
        return tuple(getattr(self, k) for k in self.CSV_FIELDS)


def field_totals(f: np.ndarray, mesh: SpatialMesh, grid: VelocityGrid) -> np.ndarray:
    """Total mass, momentum and energy ``sum_jk f (1, v, v^2/2) dx dv``."""
    return mesh.dx * np.sum(moments_array(f, grid), axis=0)


def negative_count(f: np.ndarray) -> int:
    return int(np.count_nonzero(f < 0))


def _entropy_values(f: np.ndarray, dx: float, dv: float) -> float:
    pos = f > 0
    return float(dx * dv * np.sum(np.where(pos, f * np.log(np.where(pos, f, 1.0)), 0.0)))


def entropy(f: KineticField | np.ndarray, mesh: SpatialMesh | None = None, grid: VelocityGrid | None = None) -> float:
    """``dx dv sum f log f`` with ``0 log 0 = 0``; raises on negative values."""
    if isinstance(f, KineticField):
        mesh, grid, vals = f.mesh, f.grid, f.values
    else:
        vals = np.asarray(f, dtype=float)
        if mesh is None or grid is None:
            raise ValueError("mesh and grid are required for raw arrays")
    if np.any(vals < 0):
        raise ValueError("entropy is undefined for negative values")
    return _entropy_values(vals, mesh.dx, grid.dv)


@dataclass
class RunResult:
    field: KineticField
    diagnostics: list[StepDiagnostics]
    dt: float
    steps: int
    warnings: list[str] = field(default_factory=list)

    @property
    def max_neg_cells(self) -> int:
        return max((d.neg_cells + d.stage_neg_cells for d in self.diagnostics), default=0)


class IMEXStepper:
    """Precomputed data for stepping one configuration on one mesh."""

    def __init__(self, cfg: SimConfig, mesh: SpatialMesh, grid: VelocityGrid, ghosts: GhostCells | None = None):
        self.cfg = cfg
        self.mesh = mesh
        self.grid = grid
        self.ghosts = ghosts
        self.tableau = get_scheme(cfg.scheme)
        self.tau = cfg.tau or unit_tau
        t = self.tableau
        self.nu = t.nu
        self.At, self.A, self.wt, self.w = t.At, t.A, t.wt, t.w
        self.alpha = float(t.alpha)
        if t.kind is SchemeKind.TYPE_CK:
            raise ValueError("type CK schemes are not supported by the BGK stepper")

        self.limiter = cfg.spatial is SpatialScheme.WENO5_LIMITED
        self.spatial = "upwind1" if cfg.spatial is SpatialScheme.UPWIND1 else "weno5"
        try:
            report = positivity_analysis(t)
            self.c_sch = report.c_sch
            self.feasible = report.feasible
        except ValueError:
            self.c_sch = math.nan
            self.feasible = False
        self.positive_spatial = cfg.spatial is not SpatialScheme.WENO5_UNLIMITED
        spatial_cfl = POSITIVITY_CFL if self.spatial == "weno5" else 1.0
        self.dt_positivity = (
            (self.c_sch if math.isfinite(self.c_sch) else 1.0) * spatial_cfl * mesh.dx / grid.v_max
            if self.feasible
            else math.nan
        )

        self.variable_eps = callable(cfg.eps)
        if self.variable_eps:
            self.eps_cells = np.asarray(cfg.eps(mesh.centers), dtype=float)
            self.eps_gauss = np.asarray(cfg.eps(mesh.gauss_points), dtype=float)
            if np.any(~(self.eps_gauss > 0)) or np.any(~(self.eps_cells > 0)):
                raise ValueError("eps(x) must be positive")
        else:
            self.eps_cells = np.full(mesh.n_x, float(cfg.eps))
            self.eps_gauss = None
        self._gauss_path = self.variable_eps and self.spatial == "weno5"

        self.form = cfg.stage_form
        if self.form is StageForm.SHU_OSHER:
            so = shu_osher_form(t)
            self.so_base, self.so_stage, self.so_transport = so.base, so.stage, so.transport
        # stages whose transport is needed later
        needs = [bool(np.any(self.At[i + 1:, i] != 0)) for i in range(self.nu)]
        if not t.gsa:
            needs = [n or self.wt[i] != 0 for i, n in enumerate(needs)]
        if self.form is StageForm.SHU_OSHER:
            needs = [bool(np.any(self.so_transport[:, i] != 0)) for i in range(self.nu)]
        self.needs_transport = needs

    # -- spatial pieces -------------------------------------------------------
    def transport(self, f: np.ndarray) -> np.ndarray:
        return transport_operator(
            f, self.grid.nodes, self.mesh, self.ghosts, spatial=self.spatial, limiter=self.limiter
        )

    def _ghost_moments(self) -> GhostCells | None:
        if self.ghosts is None:
            return None
        return self.ghosts.map(lambda g: moments_array(g, self.grid))

    def equilibrium(self, f: np.ndarray, *, where: str = "") -> np.ndarray:
        """Maxwellian the relaxation drives ``f`` to, as used by this stepper."""
        if self._gauss_path:
            pts = self._points(f)
            Ug = moments_array(pts, self.grid)
            check_admissible(Ug, where=where)
            return np.einsum("l,jlk->jk", LEGENDRE3.weights, discrete_maxwellian(Ug, self.grid, check=False))
        U = moments_array(f, self.grid)
        check_admissible(U, where=where)
        if self.spatial == "upwind1":
            return discrete_maxwellian(U, self.grid, check=False)
        return cell_maxwellian(U, self.mesh, self.grid, self._ghost_moments())

    def _points(self, f: np.ndarray) -> np.ndarray:
        g = None if self.ghosts is None else self.ghosts
        return scalar_gauss_points(f, self.mesh, g, strict=False)

    def relax(self, f_star: np.ndarray, coef: float, power: int, tau_state: np.ndarray | None = None,
              where: str = "") -> np.ndarray:
        """Solve ``f = f* + coef tau/eps^power (M[f] - f)``.

        ``tau_state`` optionally fixes the per-cell state at which ``tau`` is
        evaluated (otherwise the moments of ``f*``).
        """
        if coef == 0.0:
            return f_star.copy()
        if self._gauss_path:
            pts = self._points(f_star)  # (nx, 3, nv)
            Ug = moments_array(pts, self.grid)  # (nx, 3, 3)
            check_admissible(Ug, where=where)
            M = discrete_maxwellian(Ug, self.grid, check=False)
            ts = Ug if tau_state is None else np.repeat(tau_state[:, None, :], 3, axis=1)
            b = coef * self._tau(ts) / self.eps_gauss ** power
            relaxed = (pts + b[..., None] * M) / (1.0 + b[..., None])
            return np.einsum("l,jlk->jk", LEGENDRE3.weights, relaxed)
        U = moments_array(f_star, self.grid)
        check_admissible(U, where=where)
        if self.spatial == "upwind1":
            M = discrete_maxwellian(U, self.grid, check=False)
        else:
            M = cell_maxwellian(U, self.mesh, self.grid, self._ghost_moments())
        b = coef * self._tau(U if tau_state is None else tau_state) / self.eps_cells ** power
        return (f_star + b[:, None] * M) / (1.0 + b[:, None])

    def _tau(self, U: np.ndarray) -> np.ndarray:
        rho = U[..., 0]
        u = U[..., 1] / rho
        T = 2.0 * U[..., 2] / rho - u * u
        return np.asarray(self.tau(rho, T), dtype=float)

    # -- positivity bookkeeping ----------------------------------------------
    def strict(self, dt: float) -> bool:
        return (
            self.feasible
            and self.positive_spatial
            and math.isfinite(self.dt_positivity)
            and dt <= self.dt_positivity * (1.0 + 1e-12)
        )

    def _screen(self, fs: np.ndarray, strict: bool, label: str, counters: dict) -> np.ndarray:
        neg = fs < 0
        if not neg.any():
            return fs
        if strict:
            if fs.min() < -CLAMP_TOL:
                j, k = np.unravel_index(int(np.argmin(fs)), fs.shape)
                raise PositivityError(f"{label}: value {fs[j, k]:.3e} at cell {j}, velocity node {k}")
            counters["clamped"] += int(neg.sum())
            counters["min_clamped"] = min(counters.get("min_clamped", 0.0), float(fs.min()))
            return np.where(neg, 0.0, fs)
        counters["stage_neg"] = max(counters["stage_neg"], int(neg.sum()))
        return fs

    # -- the step ---------------------------------------------------------------
    def step(self, f: np.ndarray, dt: float, *, counters: dict | None = None) -> np.ndarray:
        if not dt > 0:
            raise ValueError("dt must be positive")
        counters = counters if counters is not None else {"clamped": 0, "stage_neg": 0}
        strict = self.strict(dt)
        nu = self.nu
        stages: list[np.ndarray] = [None] * nu  # type: ignore[list-item]
        T: list[np.ndarray | None] = [None] * nu
        Kc: list[np.ndarray | None] = [None] * nu
        Un = moments_array(f, self.grid) if self.cfg.fstar is FStarChoice.FN else None

        for i in range(nu):
            if self.form is StageForm.SHU_OSHER:
                fs = self.so_base[i] * f
                for j in range(i):
                    if self.so_stage[i, j] != 0:
                        fs = fs + self.so_stage[i, j] * stages[j]
                    if self.so_transport[i, j] != 0:
                        fs = fs + dt * self.so_transport[i, j] * T[j]
            else:
                fs = f.copy()
                for j in range(i):
                    if self.At[i, j] != 0:
                        fs += dt * self.At[i, j] * T[j]
                    if self.A[i, j] != 0:
                        fs += dt * self.A[i, j] * Kc[j]
            aii = self.A[i, i]
            if aii != 0:
                fs = self._screen(fs, strict, f"stage {i + 1} explicit data", counters)
                fi = self.relax(fs, dt * aii, 1, where=f" (stage {i + 1})")
                Kc[i] = (fi - fs) / (dt * aii)
            else:
                fi = fs
            fi = self._screen(fi, strict, f"stage {i + 1}", counters)
            stages[i] = fi
            if self.needs_transport[i]:
                T[i] = self.transport(fi)

        if self.tableau.gsa:
            ft = stages[-1]
        else:
            ft = f.copy()
            for j in range(nu):
                if self.wt[j] != 0:
                    ft += dt * self.wt[j] * T[j]
                if self.w[j] != 0:
                    ft += dt * self.w[j] * Kc[j]
            ft = self._screen(ft, strict, "update", counters)
        if self.alpha != 0:
            tau_state = Un if self.cfg.fstar is FStarChoice.FN else None
            ft = self.relax(ft, self.alpha * dt * dt, 2, tau_state=tau_state, where=" (correction)")
        return ft

    def diagnostics(self, f: np.ndarray, step: int, time: float, counters: dict | None = None) -> StepDiagnostics:
        tot = field_totals(f, self.mesh, self.grid)
        neg = negative_count(f)
        ent = _entropy_values(f, self.mesh.dx, self.grid.dv) if (self.cfg.entropy and neg == 0) else math.nan
        dist = math.nan
        if self.cfg.equilibrium_distance:
            try:
                dist = float(np.max(np.abs(f - self.equilibrium(f))))
            except AdmissibilityError:
                pass
        counters = counters or {}
        return StepDiagnostics(
            step, time, float(tot[0]), float(tot[1]), float(tot[2]), ent, neg, float(f.min()), dist,
            counters.get("stage_neg", 0), counters.get("clamped", 0),
        )


def _step_size(stepper: IMEXStepper, cfg: SimConfig) -> float:
    if cfg.dt is not None:
        if not cfg.dt > 0:
            raise ValueError("dt must be positive")
        return float(cfg.dt)
    if not math.isfinite(stepper.dt_positivity):
        raise ValueError(
            f"scheme {stepper.tableau.name!r} has no positivity CFL; pass dt explicitly"
        )
    return cfg.cfl_fraction * stepper.dt_positivity


def imex_step(f: KineticField, cfg: SimConfig, dt: float) -> tuple[KineticField, StepDiagnostics]:
    """Advance ``f`` by one step of size ``dt``."""
    stepper = IMEXStepper(cfg, f.mesh, f.grid, f.ghosts)
    counters = {"clamped": 0, "stage_neg": 0}
    new = stepper.step(f.values, dt, counters=counters)
    out = f.with_values(new, f.time + dt)
    return out, stepper.diagnostics(new, 1, out.time, counters)


def iterate(
    cfg: SimConfig, f0: KineticField, stepper: IMEXStepper | None = None
) -> Iterator[tuple[KineticField, StepDiagnostics]]:
    """Yield ``(field, diagnostics)`` after every step up to ``cfg.t_end``."""
    stepper = stepper or IMEXStepper(cfg, f0.mesh, f0.grid, f0.ghosts)
    dt = _step_size(stepper, cfg)
    n = max(0, math.ceil((cfg.t_end - f0.time) / dt - 1e-9))
    vals, t = f0.values, f0.time
    for s in range(1, n + 1):
        h = min(dt, cfg.t_end - t) if s == n else dt
        counters = {"clamped": 0, "stage_neg": 0}
        vals = stepper.step(vals, h, counters=counters)
        t = cfg.t_end if s == n else t + h
        yield f0.with_values(vals, t), stepper.diagnostics(vals, s, t, counters)


def run(cfg: SimConfig, f0: KineticField, *, callback: Callable[[KineticField, StepDiagnostics], None] | None = None) -> RunResult:
    """Integrate from ``f0`` to ``cfg.t_end`` with a fixed step (last step shortened)."""
    if cfg.t_end < f0.time:
        raise ValueError("t_end precedes the initial time")
    stepper = IMEXStepper(cfg, f0.mesh, f0.grid, f0.ghosts)
    dt = _step_size(stepper, cfg)
    notes = []
    if stepper.feasible and stepper.positive_spatial and not stepper.strict(dt):
        notes.append(f"dt = {dt:.3e} exceeds the positivity bound {stepper.dt_positivity:.3e}")
    if not stepper.positive_spatial or not stepper.feasible:
        notes.append("positivity not guaranteed for this configuration")
    for msg in notes:
        log.info(msg)
    diags = [stepper.diagnostics(f0.values, 0, f0.time)]
    final = f0
    for final, d in iterate(cfg, f0, stepper):
        diags.append(d)
        if callback is not None:
            callback(final, d)
    return RunResult(final, diags, dt, len(diags) - 1, notes)
