"""Linear stability of corrected IMEX schemes.

For ``y' = lambda_1 y + lambda_2 y`` with the first term explicit and the
second implicit, one step multiplies ``y`` by ``P(z1, z2)``, ``z_i = lambda_i dt``.
The correction step ``y^{n+1} = y~ - alpha z2^2 y^{n+1}`` divides by
``1 + alpha z2^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .tableau import TableauPair, get_scheme

__all__ = [
    "StabilityError",
    "Window",
    "DEFAULT_WINDOW",
    "DEFAULT_RESOLUTION",
    "DEFAULT_Z2",
    "StabilitySlice",
    "amplification_factor",
    "stable_mask",
    "stability_boundary_slice",
    "is_nested",
]


class StabilityError(ValueError):
    """A stage equation is singular at the requested ``z2``."""


@dataclass(frozen=True)
class Window:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def degenerate(self) -> bool:
        return not (self.x_max > self.x_min and self.y_max > self.y_min)


DEFAULT_WINDOW = Window(-6.0, 1.0, -5.0, 5.0)
DEFAULT_RESOLUTION = 400
DEFAULT_Z2 = (0.0, -1.0, -2.0, -5.0, -10.0, -20.0)
BISECTION_STEPS = 40


def amplification_factor(t: TableauPair | str, z1, z2: float):
    """``P(z1, z2)``; ``z1`` may be an array of complex numbers."""
    t = get_scheme(t)
    z2 = float(z2)
    z1 = np.asarray(z1, dtype=complex)
    At, A = t.At, t.A
    Y: list[np.ndarray] = []
    for i in range(t.nu):
        d = 1.0 - A[i, i] * z2
        if d == 0.0:
            raise StabilityError(f"stage {i + 1} is singular at z2 = {z2} (1 - a_ii z2 = 0)")
        acc = np.ones_like(z1)
        for j in range(i):
            acc = acc + (At[i, j] * z1 + A[i, j] * z2) * Y[j]
        Y.append(acc / d)
    num = np.ones_like(z1)
    for i in range(t.nu):
        num = num + (t.wt[i] * z1 + t.w[i] * z2) * Y[i]
    P = num / (1.0 + float(t.alpha) * z2 * z2)
    return complex(P) if P.ndim == 0 else P


def _axes(window: Window, resolution: int):
    return np.linspace(window.x_min, window.x_max, resolution), np.linspace(window.y_min, window.y_max, resolution)


def stable_mask(
    t: TableauPair | str, z2: float, window: Window = DEFAULT_WINDOW, resolution: int = DEFAULT_RESOLUTION
) -> np.ndarray:
    """Boolean grid ``|P(x + iy, z2)| <= 1``, indexed ``[iy, ix]``."""
    xs, ys = _axes(window, resolution)
    Z = xs[None, :] + 1j * ys[:, None]
    return np.abs(amplification_factor(t, Z, z2)) <= 1.0


@dataclass
class StabilitySlice:
    z2: float
    window: Window
    resolution: int
    boundary_points: list[tuple[float, float]] = field(default_factory=list)

    def max_residual(self, t: TableauPair | str) -> float:
        """Largest ``||P| - 1|`` over the boundary points."""
        if not self.boundary_points:
            return 0.0
        pts = np.array(self.boundary_points)
        return float(np.max(np.abs(np.abs(amplification_factor(t, pts[:, 0] + 1j * pts[:, 1], self.z2)) - 1.0)))


def _refine(g, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Bisect ``g = |P| - 1`` on segments ``[a, b]`` (complex endpoints) with a sign change."""
    ga = g(a)
    for _ in range(BISECTION_STEPS):
        m = 0.5 * (a + b)
        gm = g(m)
        left = np.sign(gm) == np.sign(ga)
        a = np.where(left, m, a)
        ga = np.where(left, gm, ga)
        b = np.where(left, b, m)
    return 0.5 * (a + b)


def stability_boundary_slice(
    t: TableauPair | str,
    z2: float,
    window: Window = DEFAULT_WINDOW,
    resolution: int = DEFAULT_RESOLUTION,
) -> StabilitySlice:
    """Points on ``|P| = 1`` found on the edges of a sampling grid.

    Each grid edge whose endpoints straddle ``|P| = 1`` contributes one point,
    located by bisection along the edge.
    """
    if resolution < 16:
        raise ValueError("resolution must be at least 16")
    t = get_scheme(t)
    out = StabilitySlice(float(z2), window, resolution)
    if window.degenerate:
        return out
    xs, ys = _axes(window, resolution)
    Z = xs[None, :] + 1j * ys[:, None]

    def g(z):
        return np.abs(amplification_factor(t, z, z2)) - 1.0

    G = g(Z)
    S = G > 0
    pts = []
    for a, b, sa, sb in ((Z[:, :-1], Z[:, 1:], S[:, :-1], S[:, 1:]), (Z[:-1, :], Z[1:, :], S[:-1, :], S[1:, :])):
        cross = sa != sb
        if cross.any():
            pts.append(_refine(g, a[cross], b[cross]))
    if pts:
        z = np.concatenate(pts)
        out.boundary_points = [(float(p.real), float(p.imag)) for p in z]
    return out


def is_nested(
    t: TableauPair | str,
    z2_values: Iterable[float],
    window: Window = DEFAULT_WINDOW,
    resolution: int = DEFAULT_RESOLUTION,
) -> tuple[bool, list[int]]:
    """Check that stable sets grow as ``z2`` decreases.

    Returns the verdict and, for each consecutive pair (sorted by decreasing
    ``z2``), the number of grid points stable at the larger ``z2`` but not at
    the smaller one.
    """
    zs = sorted((float(z) for z in z2_values), reverse=True)
    masks = [stable_mask(t, z, window, resolution) for z in zs]
    bad = [int(np.count_nonzero(m0 & ~m1)) for m0, m1 in zip(masks, masks[1:])]
    return all(b == 0 for b in bad), bad
