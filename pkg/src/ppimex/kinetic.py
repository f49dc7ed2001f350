"""Velocity discretization: grids, moments, Maxwellians and BGK relaxation.

One space dimension and one velocity dimension throughout, so the energy is
``E = sum f v^2/2 dv`` and the temperature ``T = 2E/rho - u^2``.  Arrays of
distribution values carry velocity as their last axis; macroscopic arrays
broadcast over the leading axes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numba as nb
import numpy as np

__all__ = [
    "AdmissibilityError",
    "TailMassWarning",
    "VelocityGrid",
    "ConservedState",
    "Primitive",
    "moments",
    "moments_array",
    "is_admissible",
    "check_admissible",
    "primitive_from_conserved",
    "conserved_from_primitive",
    "maxwellian",
    "discrete_maxwellian",
    "bgk_relax",
    "collision_bgk",
    "unit_tau",
]

#: margin used when deciding admissibility of a state
ADMISSIBLE_FLOOR = 0.0
NEWTON_TOL = 1e-13
NEWTON_MAXITER = 25


class AdmissibilityError(ValueError):
    """A conserved state has nonpositive density or internal energy."""

    def __init__(self, message: str, component: str | None = None, index=None, value=None):
        super().__init__(message)
        self.component = component
        self.index = index
        self.value = value


class TailMassWarning(UserWarning):
    """A Maxwellian loses noticeable mass outside the truncated velocity domain."""


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cell-centred velocity nodes on ``[-v_max, v_max]``."""

    v_max: float = 15.0
    n_v: int = 150

    def __post_init__(self) -> None:
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if self.n_v < 2:
            raise ValueError("n_v must be at least 2")

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @cached_property
    def nodes(self) -> np.ndarray:
        k = np.arange(self.n_v)
        v = -self.v_max + (k + 0.5) * self.dv
        v.flags.writeable = False
        return v

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n_v, self.dv)
        w.flags.writeable = False
        return w

    @cached_property
    def phi(self) -> np.ndarray:
        """Collision invariants ``(1, v, v^2/2)`` times the weight, shape ``(3, n_v)``."""
        v = self.nodes
        p = np.stack([np.ones_like(v), v, 0.5 * v * v]) * self.dv
        p.flags.writeable = False
        return p


class ConservedState(NamedTuple):
    rho: np.ndarray | float
    m: np.ndarray | float
    E: np.ndarray | float

    def as_array(self) -> np.ndarray:
        """Stack into shape ``(..., 3)``."""
        return np.stack(np.broadcast_arrays(*map(np.asarray, self)), axis=-1).astype(float)

    @classmethod
    def from_array(cls, U: np.ndarray) -> ConservedState:
        U = np.asarray(U, dtype=float)
        return cls(U[..., 0], U[..., 1], U[..., 2])


class Primitive(NamedTuple):
    rho: np.ndarray | float
    u: np.ndarray | float
    T: np.ndarray | float


def moments(f: np.ndarray, grid: VelocityGrid) -> ConservedState:
    """Discrete ``(rho, m, E)`` of ``f`` along its last axis.

    Each moment is a single ``np.sum`` along the velocity axis, which uses a
    fixed pairwise order and is therefore bitwise reproducible.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != grid.n_v:
        raise ValueError(f"last axis has length {f.shape[-1]}, grid has {grid.n_v} nodes")
    p = grid.phi
    return ConservedState(
        np.sum(f * p[0], axis=-1), np.sum(f * p[1], axis=-1), np.sum(f * p[2], axis=-1)
    )


def moments_array(f: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Same as :func:`moments` but stacked into shape ``(..., 3)``."""
    return moments(f, grid).as_array()


def _internal_energy(U: ConservedState):
    rho, m, E = (np.asarray(x, dtype=float) for x in U)
    with np.errstate(divide="ignore", invalid="ignore"):
        return E - 0.5 * m * m / rho


def is_admissible(U: ConservedState | np.ndarray, floor: float = ADMISSIBLE_FLOOR) -> np.ndarray:
    """Elementwise membership in ``G = {rho > 0, E - m^2/(2 rho) > 0}``."""
    if not isinstance(U, ConservedState):
        U = ConservedState.from_array(U)
    rho = np.asarray(U.rho, dtype=float)
    e = _internal_energy(U)
    return (rho > floor) & (e > floor) & np.isfinite(e)


def check_admissible(U: ConservedState | np.ndarray, where: str = "") -> None:
    """Raise :class:`AdmissibilityError` naming the first offending entry."""
    if not isinstance(U, ConservedState):
        U = ConservedState.from_array(U)
    rho = np.atleast_1d(np.asarray(U.rho, dtype=float))
    bad_rho = ~(rho > 0)
    if bad_rho.any():
        idx = np.unravel_index(int(np.argmax(bad_rho)), rho.shape)
        raise AdmissibilityError(
            f"nonpositive density {rho[idx]:.6g} at index {idx}{where}", "rho", idx, float(rho[idx])
        )
    e = np.atleast_1d(_internal_energy(U))
    bad_e = ~(e > 0)
    if bad_e.any():
        idx = np.unravel_index(int(np.argmax(bad_e)), e.shape)
        raise AdmissibilityError(
            f"nonpositive internal energy {e[idx]:.6g} at index {idx}{where}", "internal_energy", idx,
            float(e[idx]),
        )


def primitive_from_conserved(U: ConservedState | np.ndarray) -> Primitive:
    """``(rho, u, T)`` from ``(rho, m, E)``; raises on inadmissible input."""
    if not isinstance(U, ConservedState):
        U = ConservedState.from_array(U)
    check_admissible(U)
    rho, m, E = (np.asarray(x, dtype=float) for x in U)
    u = m / rho
    return Primitive(rho, u, 2.0 * E / rho - u * u)


def conserved_from_primitive(p: Primitive) -> ConservedState:
    rho, u, T = (np.asarray(x, dtype=float) for x in p)
    return ConservedState(rho, rho * u, 0.5 * rho * (T + u * u))


def _captured_fraction(u, T, v_max):
    s = np.sqrt(2.0 * T)
    erf = np.vectorize(math.erf, otypes=[float])
    return 0.5 * (erf((v_max - u) / s) - erf((-v_max - u) / s))


def maxwellian(p: Primitive, grid: VelocityGrid, *, tail_tol: float = 1e-12) -> np.ndarray:
    """Analytic Maxwellian ``rho/sqrt(2 pi T) exp(-(v-u)^2/(2T))`` at the nodes.

    Emits :class:`TailMassWarning` when the analytic mass outside
    ``[-v_max, v_max]`` exceeds ``tail_tol`` relative to ``rho``.
    """
    rho, u, T = (np.asarray(x, dtype=float) for x in p)
    if np.any(~(rho > 0)):
        raise ValueError("maxwellian needs rho > 0")
    if np.any(~(T > 0)):
        raise ValueError("maxwellian needs T > 0")
    lost = 1.0 - _captured_fraction(u, T, grid.v_max)
    if np.any(lost > tail_tol):
        warnings.warn(
            f"Maxwellian loses up to {float(np.max(lost)):.3g} of its mass beyond |v| = {grid.v_max}",
            TailMassWarning,
            stacklevel=2,
        )
    v = grid.nodes
    rho, u, T = rho[..., None], u[..., None], T[..., None]
    return rho / np.sqrt(2.0 * np.pi * T) * np.exp(-((v - u) ** 2) / (2.0 * T))


@nb.njit(cache=True)
def _fit_one(rho, m, E, v, dv, out, tol, maxiter):
    """Newton solve for Maxwellian parameters whose discrete moments are (rho, m, E)."""
    n = v.shape[0]
    r = rho
    u = m / rho
    T = 2.0 * E / rho - u * u
    scale = abs(rho) + abs(m) + abs(E)
    converged = False
    it = 0
    j = np.zeros((3, 3))
    best = np.inf
    br, bu, bT = r, u, T
    while True:
        c = r / math.sqrt(2.0 * math.pi * T)
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        j[:, :] = 0.0
        for k in range(n):
            d = v[k] - u
            g = c * math.exp(-d * d / (2.0 * T))
            out[k] = g
            ph1 = v[k] * dv
            ph2 = 0.5 * v[k] * v[k] * dv
            s0 += g * dv
            s1 += g * ph1
            s2 += g * ph2
            dr = g / r
            du = g * d / T
            dT = g * (d * d / (2.0 * T * T) - 0.5 / T)
            j[0, 0] += dr * dv
            j[0, 1] += du * dv
            j[0, 2] += dT * dv
            j[1, 0] += dr * ph1
            j[1, 1] += du * ph1
            j[1, 2] += dT * ph1
            j[2, 0] += dr * ph2
            j[2, 1] += du * ph2
            j[2, 2] += dT * ph2
        r0 = s0 - rho
        r1 = s1 - m
        r2 = s2 - E
        res = max(abs(r0), abs(r1), abs(r2))
        if res < best:
            best = res
            br, bu, bT = r, u, T
        if res <= tol * scale:
            converged = True
            break
        if it >= maxiter:
            break
        det = (
            j[0, 0] * (j[1, 1] * j[2, 2] - j[1, 2] * j[2, 1])
            - j[0, 1] * (j[1, 0] * j[2, 2] - j[1, 2] * j[2, 0])
            + j[0, 2] * (j[1, 0] * j[2, 1] - j[1, 1] * j[2, 0])
        )
        if det == 0.0 or not math.isfinite(det):
            break
        # Cramer's rule for J d = residual
        d0 = (
            r0 * (j[1, 1] * j[2, 2] - j[1, 2] * j[2, 1])
            - j[0, 1] * (r1 * j[2, 2] - j[1, 2] * r2)
            + j[0, 2] * (r1 * j[2, 1] - j[1, 1] * r2)
        ) / det
        d1 = (
            j[0, 0] * (r1 * j[2, 2] - j[1, 2] * r2)
            - r0 * (j[1, 0] * j[2, 2] - j[1, 2] * j[2, 0])
            + j[0, 2] * (j[1, 0] * r2 - r1 * j[2, 0])
        ) / det
        d2 = (
            j[0, 0] * (j[1, 1] * r2 - r1 * j[2, 1])
            - j[0, 1] * (j[1, 0] * r2 - r1 * j[2, 0])
            + r0 * (j[1, 0] * j[2, 1] - j[1, 1] * j[2, 0])
        ) / det
        # damp to keep the parameters in the domain of the Maxwellian
        lam = 1.0
        while r - lam * d0 <= 0.0 or T - lam * d2 <= 0.0:
            lam *= 0.5
            if lam < 1e-8:
                break
        r -= lam * d0
        u -= lam * d1
        T -= lam * d2
        it += 1
    if not converged:
        # fall back to the best iterate seen
        c = br / math.sqrt(2.0 * math.pi * bT)
        for k in range(n):
            d = v[k] - bu
            out[k] = c * math.exp(-d * d / (2.0 * bT))
    return converged, it


@nb.njit(cache=True)
def _fit_many(U, v, dv, out, tol, maxiter):
    n = U.shape[0]
    ok = np.ones(n, dtype=np.bool_)
    for i in range(n):
        conv, _ = _fit_one(U[i, 0], U[i, 1], U[i, 2], v, dv, out[i], tol, maxiter)
        ok[i] = conv
    return ok


def discrete_maxwellian(U: ConservedState | np.ndarray, grid: VelocityGrid, *, check: bool = True) -> np.ndarray:
    """Maxwellian whose discrete moments reproduce ``U``.

    The analytic parameters are corrected by Newton iteration so that
    ``moments(M) == U`` to about 1e-13 relative, making the collision
    operator conservative to round-off on the discrete grid.
    """
    if isinstance(U, ConservedState):
        U = U.as_array()
    U = np.asarray(U, dtype=float)
    if check:
        check_admissible(U)
    lead = U.shape[:-1]
    flat = np.ascontiguousarray(U.reshape(-1, 3))
    out = np.empty((flat.shape[0], grid.n_v))
    ok = _fit_many(flat, np.asarray(grid.nodes), grid.dv, out, NEWTON_TOL, NEWTON_MAXITER)
    if not ok.all():
        bad = int(np.argmin(ok))
        warnings.warn(
            f"moment matching did not reach tolerance for state {flat[bad]} (under-resolved in v?)",
            RuntimeWarning,
            stacklevel=2,
        )
    return out.reshape(*lead, grid.n_v)


def bgk_relax(f_star: np.ndarray, M: np.ndarray, b) -> np.ndarray:
    """Solve ``f = f_star + b (M - f)``, i.e. ``(f_star + b M)/(1 + b)``.

    ``b`` is a scalar or broadcasts against the leading axes of ``f_star``.
    """
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("relaxation weight b must be nonnegative")
    if b.ndim:
        b = b[..., None]
    return (f_star + b * M) / (1.0 + b)


def unit_tau(rho, T):
    """Default relaxation rate ``tau = 1``."""
    return np.ones(np.broadcast(np.asarray(rho), np.asarray(T)).shape)


TauFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def collision_bgk(f: np.ndarray, grid: VelocityGrid, tau: TauFunction | None = None) -> np.ndarray:
    """``tau_f (M[f] - f)`` with the moment-matched Maxwellian."""
    f = np.asarray(f, dtype=float)
    U = moments(f, grid)
    p = primitive_from_conserved(U)
    M = discrete_maxwellian(U, grid, check=False)
    rate = (tau or unit_tau)(p.rho, p.T)
    return np.asarray(rate, dtype=float)[..., None] * (M - f)
