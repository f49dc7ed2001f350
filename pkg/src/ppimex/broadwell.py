"""Broadwell three-velocity model with the corrected IMEX schemes.

Densities ``(f+, f0, f-)`` move with speeds ``(1, 0, -1)`` and relax through
``Q(f) = (q, -q, q)``, ``q = f0^2 - f+ f-``.  In the moment variables
``rho = f+ + 2 f0 + f-``, ``m = f+ - f-``, ``z = f+ + f-`` only ``z`` relaxes,
towards ``(rho^2 + m^2)/(2 rho)``, and the implicit solve is explicit in
closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .space_fv import POSITIVITY_CFL, GhostCells, SpatialMesh, transport_operator
from .tableau import SchemeKind, TableauPair, get_scheme, positivity_analysis

__all__ = [
    "SPEEDS",
    "BroadwellField",
    "BroadwellDiagnostics",
    "to_moments",
    "from_moments",
    "equilibrium_z",
    "equilibrium",
    "broadwell_collision",
    "broadwell_relax",
    "broadwell_transport",
    "broadwell_imex_step",
    "broadwell_entropy",
    "broadwell_run",
    "limit_flux",
    "limit_rk_step",
]

SPEEDS = np.array([1.0, 0.0, -1.0])
CLAMP_TOL = 1e-14


@dataclass
class BroadwellField:
    """Per-cell triples ``values[j] = (f+, f0, f-)``."""

    values: np.ndarray
    mesh: SpatialMesh
    time: float = 0.0
    ghosts: GhostCells | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_x, 3):
            raise ValueError(f"values must have shape ({self.mesh.n_x}, 3)")
        if not self.mesh.periodic and self.ghosts is None:
            raise ValueError("a Dirichlet field needs frozen ghost cells")

    def with_values(self, values: np.ndarray, time: float | None = None) -> BroadwellField:
        return replace(self, values=values, time=self.time if time is None else time)

    def moments(self) -> np.ndarray:
        return to_moments(self.values)


def to_moments(f: np.ndarray) -> np.ndarray:
    """``(rho, m, z)`` along the last axis."""
    f = np.asarray(f, dtype=float)
    fp, f0, fm = f[..., 0], f[..., 1], f[..., 2]
    return np.stack([fp + 2.0 * f0 + fm, fp - fm, fp + fm], axis=-1)


def from_moments(w: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_moments`."""
    w = np.asarray(w, dtype=float)
    rho, m, z = w[..., 0], w[..., 1], w[..., 2]
    return np.stack([0.5 * (z + m), 0.5 * (rho - z), 0.5 * (z - m)], axis=-1)


def equilibrium_z(rho, m):
    rho = np.asarray(rho, dtype=float)
    return (rho * rho + np.asarray(m) ** 2) / (2.0 * rho)


def equilibrium(rho, m) -> np.ndarray:
    """Equilibrium triple with the given density and momentum."""
    rho = np.asarray(rho, dtype=float)
    m = np.broadcast_to(np.asarray(m, dtype=float), rho.shape)
    return from_moments(np.stack([rho, m, equilibrium_z(rho, m)], axis=-1))


def broadwell_collision(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    q = f[..., 1] ** 2 - f[..., 0] * f[..., 2]
    return np.stack([q, -q, q], axis=-1)


def broadwell_relax(g: np.ndarray, b) -> np.ndarray:
    """Solve ``f - b Q(f) = g``; ``rho`` and ``m`` are unchanged.

    Raises on a negative input component.
    """
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise ValueError("broadwell_relax needs nonnegative input")
    return _relax(g, b)


def _relax(g: np.ndarray, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("relaxation weight must be nonnegative")
    w = to_moments(g)
    rho, m, z = w[..., 0], w[..., 1], w[..., 2]
    zf = (0.5 * b * (rho * rho + m * m) + z) / (1.0 + b * rho)
    return from_moments(np.stack([rho, m, zf], axis=-1))


def broadwell_transport(
    f: np.ndarray, mesh: SpatialMesh, ghosts: GhostCells | None = None, *, spatial: str = "weno5", limiter: bool = True
) -> np.ndarray:
    """``-(f+_x, 0, -f-_x)`` in flux form."""
    return transport_operator(f, SPEEDS, mesh, ghosts, spatial=spatial, limiter=limiter)


def _entropy(f: np.ndarray, dx: float) -> float:
    pos = f > 0
    flogf = np.where(pos, f * np.log(np.where(pos, f, 1.0)), 0.0)
    return float(dx * np.sum(flogf[:, 0] + 2.0 * flogf[:, 1] + flogf[:, 2]))


def broadwell_entropy(f: BroadwellField | np.ndarray, dx: float | None = None) -> float:
    """``dx sum (f+ log f+ + 2 f0 log f0 + f- log f-)`` with ``0 log 0 = 0``."""
    if isinstance(f, BroadwellField):
        vals, dx = f.values, f.mesh.dx
    else:
        vals = np.asarray(f, dtype=float)
        if dx is None:
            raise ValueError("dx is required for raw arrays")
    if np.any(vals < 0):
        raise ValueError("entropy is undefined for negative densities")
    return _entropy(vals, dx)


@dataclass(frozen=True)
class BroadwellDiagnostics:
    step: int
    time: float
    mass: float
    momentum: float
    entropy: float
    neg_cells: int
    min_f: float
    closure_residual: float
    stage_neg_cells: int = 0
    clamped: int = 0

    CSV_FIELDS = ("step", "time", "mass", "momentum", "entropy", "neg_cells", "min_f", "closure_residual")

    def row(self) -> tuple:
        return tuple(getattr(self, k) for k in self.CSV_FIELDS)


def _positivity_dt(t: TableauPair, mesh: SpatialMesh, spatial: str) -> float:
    try:
        rep = positivity_analysis(t)
    except ValueError:
        return math.nan
    if not rep.feasible:
        return math.nan
    c = rep.c_sch if math.isfinite(rep.c_sch) else 1.0
    return c * (POSITIVITY_CFL if spatial == "weno5" else 1.0) * mesh.dx


def broadwell_imex_step(
    f: BroadwellField,
    scheme: str | TableauPair,
    dt: float,
    eps: float,
    *,
    spatial: str = "weno5",
    limiter: bool = True,
    counters: dict | None = None,
) -> BroadwellField:
    """One corrected IMEX step; stages relax with ``b = dt a_ii/eps``.

    The correction relaxes with ``b = alpha dt^2 rho_{f^n}/eps^2``.
    Positivity mode (feasible scheme, limiter on, step within the CFL bound)
    clamps round-off negatives and raises on anything larger.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not eps > 0:
        raise ValueError("eps must be positive")
    t = get_scheme(scheme)
    if t.kind is SchemeKind.TYPE_CK:
        raise ValueError("type CK schemes are not supported")
    counters = counters if counters is not None else {"clamped": 0, "stage_neg": 0}
    bound = _positivity_dt(t, f.mesh, spatial)
    strict = (limiter or spatial == "upwind1") and math.isfinite(bound) and dt <= bound * (1 + 1e-12)
    At, A = t.At, t.A

    def screen(x, label):
        neg = x < 0
        if not neg.any():
            return x
        if strict:
            if x.min() < -CLAMP_TOL:
                raise RuntimeError(f"{label}: negative density {x.min():.3e}")
            counters["clamped"] += int(neg.sum())
            return np.where(neg, 0.0, x)
        counters["stage_neg"] = max(counters["stage_neg"], int(neg.sum()))
        return x

    fn = f.values
    nu = t.nu
    T: list = [None] * nu
    Kc: list = [None] * nu
    stages: list = [None] * nu
    for i in range(nu):
        fs = fn.copy()
        for j in range(i):
            if At[i, j] != 0:
                fs += dt * At[i, j] * T[j]
            if A[i, j] != 0:
                fs += dt * A[i, j] * Kc[j]
        if A[i, i] != 0:
            fs = screen(fs, f"stage {i + 1} explicit data")
            fi = _relax(fs, dt * A[i, i] / eps)
            Kc[i] = (fi - fs) / (dt * A[i, i])
        else:
            fi = fs
        fi = screen(fi, f"stage {i + 1}")
        stages[i] = fi
        if np.any(At[i + 1:, i] != 0) or (not t.gsa and t.wt[i] != 0):
            T[i] = broadwell_transport(fi, f.mesh, f.ghosts, spatial=spatial, limiter=limiter)
    if t.gsa:
        ft = stages[-1]
    else:
        ft = fn.copy()
        for j in range(nu):
            if t.wt[j] != 0:
                ft += dt * t.wt[j] * T[j]
            if t.w[j] != 0:
                ft += dt * t.w[j] * Kc[j]
    alpha = float(t.alpha)
    if alpha != 0:
        rho_star = to_moments(fn)[:, 0]
        ft = screen(_relax(ft, alpha * dt * dt * rho_star / (eps * eps)), "correction")
    return f.with_values(ft, f.time + dt)


def _diagnostics(f: np.ndarray, mesh: SpatialMesh, step: int, time: float, counters: dict | None = None):
    w = to_moments(f)
    neg = int(np.count_nonzero(f < 0))
    ent = _entropy(f, mesh.dx) if neg == 0 else math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        res = float(np.max(np.abs(w[:, 2] - equilibrium_z(w[:, 0], w[:, 1]))))
    counters = counters or {}
    return BroadwellDiagnostics(
        step, time, float(mesh.dx * w[:, 0].sum()), float(mesh.dx * w[:, 1].sum()), ent, neg, float(f.min()), res,
        counters.get("stage_neg", 0), counters.get("clamped", 0),
    )


def broadwell_run(
    f0: BroadwellField,
    scheme: str | TableauPair,
    dt: float,
    t_end: float,
    eps: float,
    *,
    spatial: str = "weno5",
    limiter: bool = True,
) -> tuple[BroadwellField, list[BroadwellDiagnostics]]:
    diags = [_diagnostics(f0.values, f0.mesh, 0, f0.time)]
    n = max(0, math.ceil((t_end - f0.time) / dt - 1e-9))
    f = f0
    for s in range(1, n + 1):
        h = min(dt, t_end - f.time) if s == n else dt
        counters = {"clamped": 0, "stage_neg": 0}
        f = broadwell_imex_step(f, scheme, h, eps, spatial=spatial, limiter=limiter, counters=counters)
        if s == n:
            f = f.with_values(f.values, t_end)
        diags.append(_diagnostics(f.values, f.mesh, s, f.time, counters))
    return f, diags


def limit_flux(w: np.ndarray, mesh: SpatialMesh, ghosts: GhostCells | None = None, *, limiter: bool = True) -> np.ndarray:
    """Kinetic flux of the limit system: ``(rho, m)`` rates from transported equilibria."""
    E = equilibrium(w[:, 0], w[:, 1])
    return to_moments(broadwell_transport(E, mesh, ghosts, limiter=limiter))[:, :2]


def limit_rk_step(
    w: np.ndarray, dt: float, mesh: SpatialMesh, scheme: str | TableauPair = "scheme_a", *, limiter: bool = True
) -> np.ndarray:
    """Explicit RK (the scheme's explicit tableau) for ``(rho, m)`` of the limit system."""
    t = get_scheme(scheme)
    L = []
    for i in range(t.nu):
        wi = np.array(w[:, :2], dtype=float)
        for j in range(i):
            if t.At[i, j] != 0:
                wi = wi + dt * t.At[i, j] * L[j]
        L.append(limit_flux(wi, mesh, limiter=limiter))
    out = np.array(w[:, :2], dtype=float)
    for j in range(t.nu):
        if t.wt[j] != 0:
            out = out + dt * t.wt[j] * L[j]
    return out
