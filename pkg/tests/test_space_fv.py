from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppimex.kinetic import Primitive, VelocityGrid, conserved_from_primitive, maxwellian, moments_array
from ppimex.space_fv import (
    HERMITE_MAP,
    LEGENDRE3,
    LOBATTO4,
    BoundaryKind,
    GhostCells,
    SpatialMesh,
    cell_average,
    cell_maxwellian,
    gauss_point_states,
    positivity_limit_interfaces,
    scalar_gauss_points,
    transport_forward_euler,
    transport_operator,
    upwind_flux,
    weno5_interfaces,
)

GRID = VelocityGrid()


def eoc(errors):
    return [math.log2(a / b) for a, b in zip(errors, errors[1:])]


def test_mesh_geometry():
    m = SpatialMesh(40)
    assert m.dx == pytest.approx(0.05)
    assert m.centers[0] == pytest.approx(0.025) and m.edges[-1] == pytest.approx(2.0)
    assert m.gauss_points.shape == (40, 3)
    with pytest.raises(ValueError):
        SpatialMesh(4)


@pytest.mark.parametrize("rule", [LOBATTO4, LEGENDRE3])
def test_quadrature_exact_to_degree_five(rule):
    for k in range(6):
        exact = 0.0 if k % 2 else 2 * 0.5 ** (k + 1) / (k + 1)
        assert abs(float(np.dot(rule.weights, rule.nodes**k)) - exact) <= 1e-14


def test_weno_constant():
    m = SpatialMesh(20)
    minus, plus = weno5_interfaces(np.full(20, 3.25), m)
    assert np.all(minus == 3.25) and np.all(plus == 3.25)


def test_weno_reproduces_quadratic_interior():
    m = SpatialMesh(20, 0.0, 1.0)
    avg = cell_average(lambda x: x**2, m)
    minus, plus = weno5_interfaces(avg, m)
    inner = slice(3, 18)
    exact = m.edges[inner] ** 2
    assert np.max(np.abs(minus[inner] - exact)) <= 1e-12
    assert np.max(np.abs(plus[inner] - exact)) <= 1e-12


def test_weno_fifth_order_on_sine():
    errs = []
    for n in (20, 40, 80):
        m = SpatialMesh(n, 0.0, 2.0)
        minus, plus = weno5_interfaces(cell_average(lambda x: np.sin(np.pi * x), m), m)
        exact = np.sin(np.pi * m.edges)
        errs.append(max(np.max(np.abs(minus - exact)), np.max(np.abs(plus - exact))))
    assert min(eoc(errs)) >= 4.7


def test_limiter_inactive_for_nonnegative():
    lp, lm, theta = positivity_limit_interfaces(1.0, 0.3, 1.2)
    assert (lp, lm, theta) == (0.3, 1.2, 1.0)


def test_limiter_example():
    lp, lm, theta = positivity_limit_interfaces(1.0, -0.2, 0.5)
    assert theta == pytest.approx(1 / 1.2, rel=1e-15)
    assert abs(lp) <= 1e-16
    assert lm == pytest.approx(theta * (0.5 - 1.0) + 1.0, rel=1e-15)


def test_limiter_zero_average():
    assert positivity_limit_interfaces(0.0, -0.1, 0.2) == (0.0, 0.0, 0.0)


def test_limiter_rejects_negative_average():
    with pytest.raises(ValueError):
        positivity_limit_interfaces(-1e-3, 0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(-20.0, 20.0), st.floats(-20.0, 20.0))
def test_limiter_properties(fbar, fp, fm):
    w1, wmid = LOBATTO4.weights[0], 2 * LOBATTO4.weights[1]
    lp, lm, theta = positivity_limit_interfaces(fbar, fp, fm)
    xi = (fbar - w1 * lp - w1 * lm) / wmid
    tol = 1e-12 * max(1.0, abs(fp), abs(fm), fbar)
    assert min(lp, lm, xi) >= -tol
    assert abs(w1 * lp + w1 * lm + wmid * xi - fbar) <= tol
    again = positivity_limit_interfaces(fbar, lp, lm)
    assert abs(again[0] - lp) <= tol and abs(again[1] - lm) <= tol


@pytest.mark.parametrize("v, expected", [(0.0, 0.0), (2.0, 6.0), (-2.0, -14.0)])
def test_upwind_flux(v, expected):
    assert upwind_flux(v, 3.0, 7.0) == expected


def test_transport_constant_unchanged():
    m = SpatialMesh(16)
    f = np.full((16, 4), 0.7)
    for spatial in ("weno5", "upwind1"):
        assert np.max(np.abs(transport_operator(f, np.array([-2.0, -0.5, 0.5, 3.0]), m, spatial=spatial))) <= 1e-14


def test_transport_conserves_periodic():
    m = SpatialMesh(32)
    f = np.random.default_rng(3).random((32, GRID.n_v))
    rhs = transport_operator(f, GRID.nodes, m)
    assert np.max(np.abs(rhs.sum(axis=0))) <= 1e-10


def test_transport_positivity_random_trials():
    rng = np.random.default_rng(4)
    m = SpatialMesh(20)
    n_trials = 10_000
    f = rng.random((20, n_trials)) ** 4 * (rng.random((20, n_trials)) < 0.7)
    v = rng.choice([-1.0, 1.0], n_trials) * rng.uniform(0.1, 1.0, n_trials)
    dt = (1 / 12) * m.dx / np.max(np.abs(v))
    out = f + dt * transport_operator(f, v, m)
    assert out.min() >= -1e-14


def test_forward_euler_flags_cfl():
    m = SpatialMesh(20)
    row = np.ones(20)
    assert transport_forward_euler(row, 1.0, m.dx / 12, m).positivity_guaranteed
    assert not transport_forward_euler(row, 1.0, m.dx / 6, m).positivity_guaranteed
    assert not transport_forward_euler(row, 1.0, m.dx / 12, m, limiter=False).positivity_guaranteed


def _advect_sin4(n, limiter):
    m = SpatialMesh(n, 0.0, 2.0)
    f = cell_average(lambda x: np.sin(np.pi * x) ** 4, m)[:, None]
    v = np.array([1.0])
    steps = math.ceil(2.0 / (0.5 * m.dx**1.25))
    dt = 2.0 / steps

    def L(g):
        return transport_operator(g, v, m, limiter=limiter)

    for _ in range(steps):
        k1 = L(f)
        k2 = L(f + 0.5 * dt * k1)
        k3 = L(f + 0.5 * dt * k2)
        k4 = L(f + dt * k3)
        f = f + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    exact = cell_average(lambda x: np.sin(np.pi * x) ** 4, m)
    return m.dx * np.sum(np.abs(f[:, 0] - exact))


@pytest.mark.parametrize("limiter", [False, True])
def test_advection_fifth_order(limiter):
    errs = [_advect_sin4(n, limiter) for n in (40, 80, 160)]
    assert eoc(errs)[-1] >= 4.7


def test_ghost_cells_dirichlet():
    m = SpatialMesh(10, boundary=BoundaryKind.DIRICHLET)
    g = GhostCells.constant(np.full(2, 1.0), np.full(2, 1.0))
    f = np.ones((10, 2))
    assert np.max(np.abs(transport_operator(f, np.array([1.0, -1.0]), m, g))) <= 1e-14
    with pytest.raises(ValueError):
        transport_operator(f, np.array([1.0, -1.0]), m)


def _smooth_U(x):
    rho = 1 + 0.2 * np.sin(np.pi * x)
    return conserved_from_primitive(Primitive(rho, np.ones_like(x), 1 / rho)).as_array()


def test_gauss_point_states_constant():
    m = SpatialMesh(12)
    U = np.tile([1.0, 0.2, 0.8], (12, 1))
    assert np.allclose(gauss_point_states(U, m), U[:, None, :], rtol=1e-15, atol=0)


def test_gauss_point_states_accuracy():
    errs = []
    for n in (20, 40, 80):
        m = SpatialMesh(n)
        pts = gauss_point_states(cell_average(_smooth_U, m), m)
        errs.append(np.max(np.abs(pts - _smooth_U(m.gauss_points))))
    assert min(eoc(errs)) >= 4.7


def test_gauss_point_states_near_vacuum():
    m = SpatialMesh(12)
    rho = np.array([1.0, 1.0, 1e-6, 1.0, 1.0, 1e-6, 1e-6, 1.0, 1e-3, 1.0, 1.0, 1.0])
    u = np.array([0, 5, -5, 5, 0, 3, -3, 0, 8, -8, 0, 0], dtype=float)
    T = np.array([1, 1e-3, 1e-3, 1, 1e-4, 1, 1, 1e-3, 1e-2, 1, 1, 1])
    U = conserved_from_primitive(Primitive(rho, u, T)).as_array()
    pts = gauss_point_states(U, m)
    rho_p, m_p, E_p = pts[..., 0], pts[..., 1], pts[..., 2]
    assert np.all(rho_p > 0) and np.all(E_p - m_p**2 / (2 * rho_p) >= 0)
    avg = np.einsum("l,jlc->jc", LEGENDRE3.weights, pts)
    assert np.allclose(avg, U, rtol=1e-13, atol=1e-15)


def test_scalar_gauss_points_constant():
    m = SpatialMesh(10)
    assert np.allclose(scalar_gauss_points(np.full(10, 2.5), m), 2.5, rtol=1e-15, atol=0)


def test_scalar_gauss_points_clip_to_zero():
    m = SpatialMesh(12)
    avg = np.array([0, 0, 0, 0, 0.01, 1, 0.3, 0.001, 0, 0, 0, 0], dtype=float)
    minus, plus = weno5_interfaces(avg, m)
    stencil = np.stack([plus[:-1], minus[1:], np.roll(avg, 1), avg, np.roll(avg, -1)], axis=1)
    unlimited = stencil @ HERMITE_MAP.T
    pts = scalar_gauss_points(avg, m)
    assert np.all(pts >= 0)
    assert np.allclose(pts @ LEGENDRE3.weights, avg, rtol=1e-14, atol=1e-16)
    dipped = (unlimited.min(axis=1) < 0) & (avg > 0)
    assert dipped.any()
    assert np.all(pts[dipped].min(axis=1) <= 1e-16)


def test_scalar_gauss_points_rejects_negative():
    with pytest.raises(ValueError):
        scalar_gauss_points(np.array([1.0, -1.0, 1, 1, 1, 1]), SpatialMesh(6))


def test_scalar_gauss_points_accuracy():
    def prof(x):
        return np.exp(-20 * (x - 1.0) ** 2) + 0.1

    errs = []
    for n in (40, 80, 160):
        m = SpatialMesh(n)
        errs.append(np.max(np.abs(scalar_gauss_points(cell_average(prof, m), m) - prof(m.gauss_points))))
    assert eoc(errs)[-1] >= 4.7


def test_cell_maxwellian_constant_field():
    m = SpatialMesh(8)
    U = np.tile(conserved_from_primitive(Primitive(1.0, 0.3, 0.9)).as_array(), (8, 1))
    M = cell_maxwellian(U, m, GRID)
    assert np.allclose(moments_array(M, GRID), U, rtol=1e-13, atol=1e-15)
    ref = maxwellian(Primitive(1.0, 0.3, 0.9), GRID)
    assert np.max(np.abs(M - ref)) <= 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000))
def test_cell_maxwellian_conservative(seed):
    rng = np.random.default_rng(seed)
    m = SpatialMesh(16)
    a, b, c = rng.uniform(0.05, 0.4, 3)
    x = m.centers
    U = conserved_from_primitive(
        Primitive(1 + a * np.sin(np.pi * x), b * np.cos(np.pi * x), 1 + c * np.sin(2 * np.pi * x))
    ).as_array()
    M = cell_maxwellian(U, m, GRID)
    assert np.max(np.abs(moments_array(M, GRID) - U)) <= 1e-12


def test_sod_left_maxwellian_positive():
    m = SpatialMesh(6)
    U = np.tile([1.0, 0.0, 0.5], (6, 1))
    M = cell_maxwellian(U, m, GRID)
    assert np.all(M > 0) and M.shape == (6, 150)
