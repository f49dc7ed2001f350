from __future__ import annotations

import math

import numpy as np
import pytest

from ppimex.experiments import accuracy_initial
from ppimex.imex_bgk import KineticField, SimConfig, run
from ppimex.kinetic import VelocityGrid, discrete_maxwellian, moments_array
from ppimex.reference import (
    BGKRightHandSide,
    kinetic_euler_step,
    kinetic_flux,
    kinetic_rk_step,
    ssp_rk2_run,
    ssp_rk2_step,
)
from ppimex.space_fv import SpatialMesh

SMALL = VelocityGrid(10.0, 60)


def test_equilibrium_is_fixed_point():
    mesh = SpatialMesh(10)
    M = discrete_maxwellian(np.array([1.0, 0.2, 0.6]), SMALL)
    f = np.repeat(M[None], 10, axis=0)
    out, info = ssp_rk2_step(f, mesh.dx / (24 * SMALL.v_max), mesh, SMALL, 1e-2)
    assert np.max(np.abs(out - f)) <= 1e-14
    assert info.cfl_ok and info.stiffness_ok


def test_step_flags():
    mesh = SpatialMesh(10)
    f = accuracy_initial(mesh, SMALL).values
    _, info = ssp_rk2_step(f, mesh.dx / SMALL.v_max, mesh, SMALL, 1e-4)
    assert not info.cfl_ok and not info.stiffness_ok and not info.ok


def test_rhs_conserves():
    mesh = SpatialMesh(12)
    f = accuracy_initial(mesh, SMALL).values
    for eps, scale in ((1.0, 1.0), (lambda x: 1e-3 + 0 * x, 1e3)):
        L = BGKRightHandSide(mesh, SMALL, eps)(f)
        assert np.max(np.abs(moments_array(L, SMALL).sum(axis=0))) <= 1e-12 * scale


def test_matches_imex_to_second_order():
    mesh = SpatialMesh(16)
    f0 = accuracy_initial(mesh, SMALL)
    t_end = 0.04
    diffs = []
    for k in (2, 4, 8):
        dt = t_end / (k * 4)
        ref, _, _ = ssp_rk2_run(f0, dt, t_end, 1.0)
        imex = run(SimConfig(scheme="scheme_a", eps=1.0, t_end=t_end, dt=dt, entropy=False), f0).field
        diffs.append(np.max(np.abs(ref.values - imex.values)))
    ratios = [a / b for a, b in zip(diffs, diffs[1:])]
    assert all(3.5 <= r <= 4.5 for r in ratios)


def test_run_lands_on_t_end():
    mesh = SpatialMesh(10)
    f0 = accuracy_initial(mesh, SMALL)
    seen = []
    out, _, diags = ssp_rk2_run(f0, 0.003, 0.01, 1.0, callback=lambda f, d: seen.append(d.time))
    assert out.time == 0.01 and seen[-1] == 0.01 and len(diags) == 4


def test_kinetic_euler_constant_state():
    mesh = SpatialMesh(10)
    U = np.tile([1.0, 0.3, 0.7], (10, 1))
    assert np.allclose(kinetic_euler_step(U, 0.01, mesh, SMALL), U, rtol=1e-13, atol=1e-14)
    assert np.max(np.abs(kinetic_flux(U, mesh, SMALL))) <= 1e-13


@pytest.mark.parametrize("scheme", ["scheme_a", "scheme_ars"])
def test_stiff_imex_matches_kinetic_scheme(scheme):
    mesh = SpatialMesh(20)
    f0 = accuracy_initial(mesh, SMALL, consistent=True)
    dt = 0.5 * mesh.dx / (12 * SMALL.v_max)
    cfg = SimConfig(scheme=scheme, eps=1e-10, t_end=3 * dt, dt=dt, entropy=False)
    res = run(cfg, f0)
    f1 = run(SimConfig(scheme=scheme, eps=1e-10, t_end=dt, dt=dt, entropy=False), f0).field
    U1 = moments_array(f1.values, SMALL)
    U3 = moments_array(res.field.values, SMALL)
    U2 = moments_array(run(SimConfig(scheme=scheme, eps=1e-10, t_end=2 * dt, dt=dt, entropy=False), f0).field.values, SMALL)
    for Ua, Ub in ((U1, U2), (U2, U3)):
        pred = kinetic_rk_step(Ua, dt, mesh, SMALL, scheme)
        assert np.max(np.abs(pred - Ub) / np.abs(Ub).max(axis=0)) <= 1e-8


def test_single_stage_scheme_matches_euler_step():
    mesh = SpatialMesh(20)
    f0 = accuracy_initial(mesh, SMALL, consistent=True)
    dt = 0.5 * mesh.dx / (12 * SMALL.v_max)
    cfg = SimConfig(scheme="ars111", eps=1e-10, t_end=2 * dt, dt=dt, entropy=False)
    first = run(SimConfig(scheme="ars111", eps=1e-10, t_end=dt, dt=dt, entropy=False), f0).field
    second = run(cfg, f0).field
    U1, U2 = moments_array(first.values, SMALL), moments_array(second.values, SMALL)
    pred = kinetic_euler_step(U1, dt, mesh, SMALL)
    assert np.max(np.abs(pred - U2) / np.abs(U2).max(axis=0)) <= 1e-8
    assert math.isfinite(float(U2.sum()))
