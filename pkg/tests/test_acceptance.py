"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
The convergence, Sod and mixed-regime checks take several minutes.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from ppimex.broadwell import (
    BroadwellField,
    broadwell_collision,
    broadwell_imex_step,
    broadwell_relax,
    equilibrium_z,
    from_moments,
    to_moments,
)
from ppimex.cli import main as cli_main
from ppimex.experiments import (
    accuracy_initial,
    accuracy_study,
    mixed_eps,
    relative_l2,
    restrict,
    sod_initial,
)
from ppimex.imex_bgk import IMEXStepper, SimConfig, SpatialScheme, entropy, field_totals, run
from ppimex.kinetic import VelocityGrid, moments_array
from ppimex.reference import kinetic_euler_step, kinetic_rk_step, ssp_rk2_run
from ppimex.space_fv import (
    LEGENDRE3,
    LOBATTO4,
    SpatialMesh,
    cell_average,
    positivity_limit_interfaces,
    weno5_interfaces,
)
from ppimex.stability import DEFAULT_WINDOW, is_nested
from ppimex.tableau import check_order_conditions, get_scheme, positivity_analysis

GRID = VelocityGrid(15.0, 150)


def _primitives(U):
    rho = U[:, 0]
    u = U[:, 1] / rho
    return np.stack([rho, u, 2.0 * U[:, 2] / rho - u * u], axis=1)


# 1 -----------------------------------------------------------------------------


def test_criterion_1_scheme_verification(record, capsys):
    a = positivity_analysis(get_scheme("scheme_a"))
    ars = positivity_analysis(get_scheme("scheme_ars"))
    bad = positivity_analysis(get_scheme("ars222"))
    res = {n: max(abs(float(r)) for r in check_order_conditions(get_scheme(n), 2).values())
           for n in ("scheme_a", "scheme_ars")}
    codes = [cli_main(["check-tableau", n, "--order", "2"]) for n in ("scheme_a", "scheme_ars", "ars222")]
    out = capsys.readouterr().out
    checks = {
        "ARS c_sch == 0.8125": ars.c_sch == 0.8125 and "c_sch=0.8125\n" in out,
        "A c_sch within 1e-11": abs(a.c_sch - 0.52474575236975) <= 1e-11,
        "residuals < 1e-10": max(res.values()) < 1e-10,
        "A and ARS feasible": a.feasible and ars.feasible and not a.violations and not ars.violations,
        "ars222 infeasible": not bad.feasible,
        "CLI exit codes": codes == [0, 0, 1],
    }
    ok = all(checks.values())
    record(1, ok, f"c_sch A={a.c_sch:.14f} ARS={ars.c_sch}; max residual A={res['scheme_a']:.1e} "
                  f"ARS={res['scheme_ars']:.1e}; ars222 feasible={bad.feasible}; failed={[k for k, v in checks.items() if not v]}")
    assert ok


# 2 -----------------------------------------------------------------------------

ACCURACY_CASES = [
    ("scheme_a", 1.0, False, 2.0, 0.3),
    ("scheme_a", 1e-8, False, 2.0, 0.3),
    ("scheme_a", 1e-10, False, 2.0, 0.3),
    ("scheme_ars", 1.0, False, 2.0, 0.3),
    ("scheme_ars", 1e-6, False, 1.0, 0.2),
    ("scheme_ars", 1e-8, False, 1.0, 0.2),
    ("scheme_ars", 1e-10, False, 1.0, 0.2),
    ("scheme_ars", 1e-10, True, 2.0, 0.3),
]


@pytest.mark.slow
def test_criterion_2_convergence_orders(record):
    lines, ok = [], True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for scheme, eps, consistent, target, tol in ACCURACY_CASES:
            rows = accuracy_study(scheme, eps, [80, 160, 320, 640], consistent=consistent, grid=GRID)
            order = rows[-1].order
            good = abs(order - target) <= tol
            ok &= good
            tag = "con" if consistent else "inc"
            lines.append(f"{scheme}/{eps:g}/{tag}: {order:.2f} (want {target}±{tol}){'' if good else ' X'}")
    record(2, ok, "; ".join(lines))
    assert ok


# 3 -----------------------------------------------------------------------------


def _sod(scheme, eps, t_end=0.3, n_x=80):
    f0 = sod_initial(n_x, GRID)
    dt = f0.mesh.dx / (24 * GRID.v_max)
    cfg = SimConfig(scheme=scheme, eps=eps, t_end=t_end, dt=dt, entropy=False)
    st = IMEXStepper(cfg, f0.mesh, GRID, f0.ghosts)
    n = math.ceil(t_end / dt - 1e-9)
    f, worst, clamped, min_clamped = f0.values, 0, 0, 0.0
    for s in range(n):
        counters = {"clamped": 0, "stage_neg": 0}
        f = st.step(f, min(dt, t_end - s * dt), counters=counters)
        worst = max(worst, int(np.count_nonzero(f < 0)), counters["stage_neg"])
        clamped += counters["clamped"]
        min_clamped = min(min_clamped, counters.get("min_clamped", 0.0))
    return worst, clamped, min_clamped, st.strict(dt)


@pytest.mark.slow
def test_criterion_3_positivity(record):
    lines, ok = [], True
    for scheme in ("scheme_a", "scheme_ars"):
        for eps in (1e-6, 1e-8):
            worst, clamped, low, strict = _sod(scheme, eps)
            good = worst == 0 and strict
            ok &= good
            lines.append(f"{scheme}/{eps:g}: neg={worst} roundoff-clamped={clamped} (min {low:.1e})")
    worst, _, _, strict = _sod("ars222", 1e-6)
    ok &= worst > 0 and not strict
    lines.append(f"ars222/1e-6: max neg cells={worst}")
    record(3, ok, "; ".join(lines))
    assert ok


# 4 -----------------------------------------------------------------------------


def test_criterion_4_conservation(record):
    mesh = SpatialMesh(40)
    f0 = accuracy_initial(mesh, GRID)
    tot0 = field_totals(f0.values, mesh, GRID)
    worst = 0.0
    for scheme in ("scheme_a", "scheme_ars"):
        for eps in (1.0, 1e-2, 1e-6, 1e-10, mixed_eps):
            cfg = SimConfig(scheme=scheme, eps=eps, t_end=0.01, entropy=False)
            res = run(cfg, f0)
            for d in res.diagnostics[1:]:
                drift = np.abs(np.array([d.mass, d.momentum, d.energy]) - tot0) / np.maximum(np.abs(tot0), 1e-300)
                worst = max(worst, float(np.max(drift)) / d.step)
    ok = worst <= 1e-12
    record(4, ok, f"largest relative drift per step {worst:.2e} (A, ARS; eps 1, 1e-2, 1e-6, 1e-10, mixed)")
    assert ok


# 5 -----------------------------------------------------------------------------


def test_criterion_5_entropy(record):
    mesh = SpatialMesh(40)
    f0 = accuracy_initial(mesh, GRID)
    worst, ok, lines = -math.inf, True, []
    for scheme in ("scheme_a", "scheme_ars"):
        for eps in (1.0, 1e-2, 1e-8):
            cfg = SimConfig(scheme=scheme, eps=eps, spatial=SpatialScheme.UPWIND1)
            st = IMEXStepper(cfg, mesh, GRID)
            dt = st.dt_positivity
            f, S = f0.values, [entropy(f0)]
            for _ in range(200):
                f = st.step(f, dt)
                S.append(entropy(f, mesh, GRID))
            inc = float(np.max(np.diff(S)))
            worst = max(worst, inc)
            ok &= inc <= 1e-12
            lines.append(f"{scheme}/{eps:g}: max dS={inc:.2e}")
    record(5, ok, "; ".join(lines))
    assert ok


# 6 -----------------------------------------------------------------------------


def test_criterion_6a_ap_projection_and_limit_scheme(record):
    mesh = SpatialMesh(40)
    f0 = accuracy_initial(mesh, GRID)
    dt = mesh.dx / (24 * GRID.v_max)
    lines, ok = [], True
    for scheme in ("scheme_a", "scheme_ars", "ars111"):
        cfg = SimConfig(scheme=scheme, eps=1e-10, dt=dt, t_end=4 * dt, entropy=False, equilibrium_distance=True)
        st = IMEXStepper(cfg, mesh, GRID)
        f = st.step(f0.values, dt)
        dist = float(np.max(np.abs(f - st.equilibrium(f))))
        mismatch = literal = 0.0
        for _ in range(3):
            U = moments_array(f, GRID)
            f = st.step(f, dt)
            U1 = moments_array(f, GRID)
            scale = np.abs(U1).max(axis=0)
            euler = kinetic_euler_step(U, dt, mesh, GRID)
            pred = euler if scheme == "ars111" else kinetic_rk_step(U, dt, mesh, GRID, scheme)
            mismatch = max(mismatch, float(np.max(np.abs(pred - U1) / scale)))
            literal = max(literal, float(np.max(np.abs(euler - U1) / scale)))
        good = dist <= 1e-6 and mismatch <= 1e-8
        ok &= good
        lines.append(f"{scheme}: |f-M|={dist:.1e} vs kinetic scheme={mismatch:.1e} (single Euler {literal:.1e})")
    record(6, ok, "; ".join(lines), part="a")
    assert ok


@pytest.mark.slow
def test_criterion_6b_mixed_regime(record):
    mesh, rmesh = SpatialMesh(40), SpatialMesh(80)
    ref, info, _ = ssp_rk2_run(accuracy_initial(rmesh, GRID), rmesh.dx / (240 * GRID.v_max), 0.5, mixed_eps)
    U = moments_array(ref.values, GRID)
    Pref = _primitives(restrict(U))
    lines, ok = [f"reference stiffness bound met={info.stiffness_ok}"], True
    for scheme in ("scheme_a", "scheme_ars"):
        cfg = SimConfig(scheme=scheme, eps=mixed_eps, t_end=0.5, dt=mesh.dx / (24 * GRID.v_max), entropy=False)
        res = run(cfg, accuracy_initial(mesh, GRID))
        P = _primitives(moments_array(res.field.values, GRID))
        errs = [relative_l2(P[:, i], Pref[:, i]) for i in range(3)]
        ok &= max(errs) <= 0.05
        lines.append(f"{scheme}: rel L2 rho={errs[0]:.1e} u={errs[1]:.1e} T={errs[2]:.1e}")
    record(6, ok, "mixed regime: " + "; ".join(lines), part="b")
    assert ok


# 7 -----------------------------------------------------------------------------


def test_criterion_7_stability_nesting(record):
    lines, ok = [], True
    for scheme in ("scheme_a", "scheme_ars"):
        nested, bad = is_nested(scheme, [0.0, -1.0, -5.0, -20.0], DEFAULT_WINDOW, 400)
        ok &= nested
        lines.append(f"{scheme}: nested={nested} violations={bad}")
    record(7, ok, "; ".join(lines))
    assert ok


# 8 -----------------------------------------------------------------------------


def _picard(g, b, iters=200):
    rho = to_moments(g)[..., 0]
    omega = (0.5 / (1.0 + b * rho))[..., None]
    f = g.copy()
    for _ in range(iters):
        f = f + omega * (g + b[..., None] * broadwell_collision(f) - f)
    return f


def test_criterion_8_broadwell(record):
    rng = np.random.default_rng(2024)
    n = 10_000
    g = rng.random((n, 3)) * rng.choice([1e-3, 1.0, 10.0], (n, 1))
    b = 10.0 ** rng.uniform(-3, 2, n)
    relax_err = float(np.max(np.abs(broadwell_relax(g, b) - _picard(g, b))))

    mesh = SpatialMesh(32)
    neg = 0
    for trial in range(200):
        scheme = ("scheme_a", "scheme_ars")[trial % 2]
        c = positivity_analysis(get_scheme(scheme)).c_sch
        f = BroadwellField(rng.random((32, 3)) ** 3 * (rng.random((32, 3)) < 0.8), mesh)
        counters = {"clamped": 0, "stage_neg": 0}
        out = broadwell_imex_step(f, scheme, c * mesh.dx / 12, 10.0 ** rng.uniform(-10, 1), counters=counters)
        neg += counters["stage_neg"] + int(np.count_nonzero(out.values < 0))

    x = mesh.centers
    rho, m = 1 + 0.2 * np.sin(np.pi * x), 0.3 * np.cos(np.pi * x)
    z = 0.5 * (rho + np.abs(m)) + 0.2 * np.sin(2 * np.pi * x) * (rho - np.abs(m))
    f = BroadwellField(from_moments(np.stack([rho, m, z], axis=1)), mesh)
    closure = 0.0
    for scheme in ("scheme_a", "scheme_ars"):
        w = broadwell_imex_step(f, scheme, mesh.dx / 24, 1e-10).moments()
        closure = max(closure, float(np.max(np.abs(w[:, 2] - equilibrium_z(w[:, 0], w[:, 1])))))
    ok = relax_err <= 1e-10 and neg == 0 and closure <= 1e-6
    record(8, ok, f"relax vs fixed point {relax_err:.1e} on {n} inputs; negatives in 200 random steps={neg}; "
                  f"closure residual {closure:.1e}")
    assert ok


# 9 -----------------------------------------------------------------------------


def test_criterion_9_spatial_kernels(record):
    m = SpatialMesh(20, 0.0, 1.0)
    inner = slice(3, 18)
    poly_err = {}
    for deg in range(5):
        avg = cell_average(lambda x: (x - 0.3) ** deg, m)
        minus, plus = weno5_interfaces(avg, m)
        exact = (m.edges[inner] - 0.3) ** deg
        poly_err[deg] = float(max(np.max(np.abs(minus[inner] - exact)), np.max(np.abs(plus[inner] - exact))))

    rng = np.random.default_rng(9)
    fbar = rng.random(10_000) * rng.choice([1e-6, 1.0, 100.0], 10_000)
    fp, fm = rng.normal(size=(2, 10_000)) * 3 * fbar
    lp, lm, theta = positivity_limit_interfaces(fbar, fp, fm)
    w1, wm = LOBATTO4.weights[0], LOBATTO4.weights[1] + LOBATTO4.weights[2]
    # the limited polynomial is theta p + (1 - theta) fbar; track its interior node value the same way
    xi = theta * ((fbar - w1 * fp - w1 * fm) / wm - fbar) + fbar
    scale = np.maximum(fbar, 1e-300)
    avg_err = float(np.max(np.abs(w1 * lp + w1 * lm + wm * xi - fbar) / scale))
    lp2, lm2, _ = positivity_limit_interfaces(fbar, lp, lm)
    idem = float(max(np.max(np.abs(lp2 - lp) / scale), np.max(np.abs(lm2 - lm) / scale)))
    nonneg = float(min(np.min(lp / scale), np.min(lm / scale), np.min(xi / scale)))

    quad = 0.0
    for rule in (LOBATTO4, LEGENDRE3):
        for k in range(6):
            exact = 0.0 if k % 2 else 2 * 0.5 ** (k + 1) / (k + 1)
            quad = max(quad, abs(float(np.dot(rule.weights, rule.nodes**k)) - exact))

    checks = {
        **{f"weno degree {d}": e <= 1e-12 for d, e in poly_err.items()},
        "limiter average": avg_err <= 1e-13,
        "limiter idempotent": idem <= 1e-13,
        "limiter nonnegative": nonneg >= -1e-13,
        "quadrature": quad <= 1e-14,
    }
    ok = all(checks.values())
    detail = ", ".join(f"deg{d}={e:.1e}" for d, e in poly_err.items())
    record(9, ok, f"WENO polynomial errors {detail}; limiter avg {avg_err:.1e} idem {idem:.1e}; quadrature {quad:.1e}; "
                  f"failed={[k for k, v in checks.items() if not v]}")
    assert ok
