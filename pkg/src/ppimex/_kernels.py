"""Compiled finite-volume kernels.

Columns are padded with ``NG`` ghost cells on each side.  Interface index
``i`` (0..nx) denotes ``x_{i-1/2}``; ``minus[i]`` is the trace from cell
``i-1`` and ``plus[i]`` the trace from cell ``i``.
"""

from __future__ import annotations

import numba as nb
import numpy as np

# avoid probing an incompatible TBB runtime
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

NG = 3
W_END = 1.0 / 12.0
W_MID = 5.0 / 6.0
WENO_EPS = 1e-6


@nb.njit(cache=True, inline="always")
def _weno5(a, b, c, d, e):
    """Left-biased WENO5 value at the right face of the cell holding ``c``."""
    q0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0
    q1 = (-b + 5.0 * c + 2.0 * d) / 6.0
    q2 = (2.0 * c + 5.0 * d - e) / 6.0
    t = a - 2.0 * b + c
    s = a - 4.0 * b + 3.0 * c
    b0 = 13.0 / 12.0 * t * t + 0.25 * s * s
    t = b - 2.0 * c + d
    s = b - d
    b1 = 13.0 / 12.0 * t * t + 0.25 * s * s
    t = c - 2.0 * d + e
    s = 3.0 * c - 4.0 * d + e
    b2 = 13.0 / 12.0 * t * t + 0.25 * s * s
    a0 = 0.1 / ((WENO_EPS + b0) * (WENO_EPS + b0))
    a1 = 0.6 / ((WENO_EPS + b1) * (WENO_EPS + b1))
    a2 = 0.3 / ((WENO_EPS + b2) * (WENO_EPS + b2))
    return (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)


@nb.njit(cache=True, inline="always")
def _limit_theta(fbar, fp, fm):
    """Scaling factor of the positivity limiter for one cell."""
    if fbar <= 0.0:
        return 0.0
    xi = (fbar - W_END * fp - W_END * fm) / W_MID
    m = min(fp, fm, xi)
    if m >= 0.0:
        return 1.0
    return min(abs(fbar / (m - fbar)), 1.0)


@nb.njit(cache=True)
def pad_column(col, periodic, gl, gr, out):
    nx = col.shape[0]
    for j in range(nx):
        out[NG + j] = col[j]
    for g in range(NG):
        if periodic:
            out[g] = col[nx - NG + g]
            out[NG + nx + g] = col[g]
        else:
            out[g] = gl[g]
            out[NG + nx + g] = gr[g]


@nb.njit(cache=True)
def faces_column(p, nx, minus, plus):
    """Unlimited WENO traces at the nx+1 interfaces from a padded column."""
    for i in range(nx + 1):
        # cell i-1 (padded index NG+i-1) supplies the left trace of face i
        c = NG + i - 1
        minus[i] = _weno5(p[c - 2], p[c - 1], p[c], p[c + 1], p[c + 2])
        c = NG + i
        plus[i] = _weno5(p[c + 2], p[c + 1], p[c], p[c - 1], p[c - 2])


@nb.njit(cache=True)
def limited_faces_column(p, nx, minus, plus, limiter):
    """WENO traces, optionally limited cell by cell, at the nx+1 interfaces.

    Faces need the limited traces of cells -1..nx, so the reconstruction runs
    over those nx+2 cells.
    """
    for c in range(NG - 1, NG + nx + 1):
        fbar = p[c]
        fm = _weno5(p[c - 2], p[c - 1], p[c], p[c + 1], p[c + 2])
        fp = _weno5(p[c + 2], p[c + 1], p[c], p[c - 1], p[c - 2])
        if limiter:
            th = _limit_theta(fbar, fp, fm)
            if th < 1.0:
                fm = th * (fm - fbar) + fbar
                fp = th * (fp - fbar) + fbar
        i_right = c - NG + 1
        i_left = c - NG
        if i_right >= 0 and i_right <= nx:
            minus[i_right] = fm
        if i_left >= 0 and i_left <= nx:
            plus[i_left] = fp


@nb.njit(cache=True, parallel=True)
def transport_rhs(f, v, dx, periodic, gl, gr, order, limiter, out):
    """``out[:, k] = -(F_{j+1/2} - F_{j-1/2})/dx`` for every velocity column.

    ``order`` is 5 for limited/unlimited WENO5 or 1 for first-order upwind.
    """
    nx, nv = f.shape
    for k in nb.prange(nv):
        p = np.empty(nx + 2 * NG)
        pad_column(f[:, k], periodic, gl[:, k], gr[:, k], p)
        vk = v[k]
        flux = np.empty(nx + 1)
        if order == 1:
            for i in range(nx + 1):
                if vk >= 0.0:
                    flux[i] = vk * p[NG + i - 1]
                else:
                    flux[i] = vk * p[NG + i]
        else:
            minus = np.empty(nx + 1)
            plus = np.empty(nx + 1)
            limited_faces_column(p, nx, minus, plus, limiter)
            for i in range(nx + 1):
                if vk >= 0.0:
                    flux[i] = vk * minus[i]
                else:
                    flux[i] = vk * plus[i]
        for j in range(nx):
            out[j, k] = -(flux[j + 1] - flux[j]) / dx


@nb.njit(cache=True)
def _gauss_values(p, c, fl, fr, hmap, vals):
    """Degree-4 reconstruction of padded cell ``c`` evaluated at the 3 Gauss nodes."""
    for l in range(3):
        vals[l] = (
            hmap[l, 0] * fl
            + hmap[l, 1] * fr
            + hmap[l, 2] * p[c - 1]
            + hmap[l, 3] * p[c]
            + hmap[l, 4] * p[c + 1]
        )


@nb.njit(cache=True, parallel=True)
def gauss_points_scalar(f, periodic, gl, gr, hmap, out):
    """Nonnegative Gauss-point values ``out[j, l, k]`` with the cell average preserved.

    Negative averages yield a constant (the average) in that cell.
    """
    nx, nv = f.shape
    for k in nb.prange(nv):
        p = np.empty(nx + 2 * NG)
        pad_column(f[:, k], periodic, gl[:, k], gr[:, k], p)
        minus = np.empty(nx + 1)
        plus = np.empty(nx + 1)
        faces_column(p, nx, minus, plus)
        vals = np.empty(3)
        for j in range(nx):
            c = NG + j
            fbar = p[c]
            _gauss_values(p, c, plus[j], minus[j + 1], hmap, vals)
            lo = min(vals[0], vals[1], vals[2])
            th = 1.0
            if fbar <= 0.0:
                th = 0.0
            elif lo < 0.0:
                th = min(1.0, fbar / (fbar - lo))
            for l in range(3):
                x = fbar + th * (vals[l] - fbar)
                if fbar > 0.0 and x < 0.0:
                    x = 0.0
                out[j, l, k] = x


@nb.njit(cache=True, inline="always")
def _admissible(r, m, e, floor_r, floor_e):
    if not (r >= floor_r):
        return False
    return e - 0.5 * m * m / r >= floor_e


@nb.njit(cache=True)
def gauss_points_system(U, periodic, gl, gr, hmap, margin, out, thetas):
    """Admissible Gauss-point states ``out[j, l, :]`` for conserved fields ``U[j, :]``."""
    nx = U.shape[0]
    comp = np.empty((3, nx + 2 * NG))
    minus = np.empty((3, nx + 1))
    plus = np.empty((3, nx + 1))
    for q in range(3):
        pad_column(U[:, q], periodic, gl[:, q], gr[:, q], comp[q])
        faces_column(comp[q], nx, minus[q], plus[q])
    vals = np.empty((3, 3))
    tmp = np.empty(3)
    for j in range(nx):
        c = NG + j
        for q in range(3):
            _gauss_values(comp[q], c, plus[q, j], minus[q, j + 1], hmap, tmp)
            for l in range(3):
                vals[l, q] = tmp[l]
        r0 = comp[0, c]
        m0 = comp[1, c]
        e0 = comp[2, c] - 0.5 * m0 * m0 / r0
        fr = min(margin, 0.5 * r0)
        fe = min(margin, 0.5 * e0)
        ok = True
        for l in range(3):
            if not _admissible(vals[l, 0], vals[l, 1], vals[l, 2], fr, fe):
                ok = False
        th = 1.0
        if not ok:
            lo = 0.0
            hi = 1.0
            while hi - lo > 1e-13:
                mid = 0.5 * (lo + hi)
                good = True
                for l in range(3):
                    r = r0 + mid * (vals[l, 0] - r0)
                    m = m0 + mid * (vals[l, 1] - m0)
                    e = comp[2, c] + mid * (vals[l, 2] - comp[2, c])
                    if not _admissible(r, m, e, fr, fe):
                        good = False
                        break
                if good:
                    lo = mid
                else:
                    hi = mid
            th = lo
        thetas[j] = th
        for l in range(3):
            for q in range(3):
                out[j, l, q] = comp[q, c] + th * (vals[l, q] - comp[q, c])
