"""Command-line driver for scheme checks and the numerical experiments.

Every subcommand writes CSV/JSON files under ``--out`` and exits with a
nonzero status when its built-in checks fail.  Options may also come from a
JSON ``--config`` file; explicit flags take precedence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .io import dump_field, load_config, load_field, write_csv, write_json

log = logging.getLogger("ppimex")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

COMMON_DEFAULTS: dict[str, Any] = {
    "nv": 150,
    "vmax": 15.0,
    "out": "results",
    "limiter": "on",
    "threads": None,
}


class CheckFailed(Exception):
    """A command's built-in assertion did not hold."""


# -- argument plumbing ---------------------------------------------------------


def _float_list(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common options")
    g.add_argument("--scheme", help="built-in scheme name or tableau JSON file")
    g.add_argument("--eps", help="Knudsen number (comma-separated list where accepted)")
    g.add_argument("--nx", help="number of cells (comma-separated list where accepted)")
    g.add_argument("--nv", type=int, help="velocity nodes (default 150)")
    g.add_argument("--vmax", type=float, help="velocity cut-off (default 15)")
    g.add_argument("--t-end", dest="t_end", type=float, help="final time")
    g.add_argument("--out", help="output directory (default ./results)")
    g.add_argument("--limiter", choices=["on", "off"], help="positivity limiter (default on)")
    g.add_argument("--config", help="JSON file with option values; flags override it")
    g.add_argument("--threads", type=int, help="worker threads for the compiled kernels")


class Options:
    """Flag values merged over config-file values over defaults."""

    def __init__(self, args: argparse.Namespace, defaults: dict[str, Any]):
        cfg = load_config(args.config) if getattr(args, "config", None) else {}
        self._values = {**COMMON_DEFAULTS, **defaults}
        for k, v in cfg.items():
            self._values[k] = v
        for k, v in vars(args).items():
            if v is not None and k not in ("func", "config"):
                self._values[k] = v

    def __getattr__(self, name: str) -> Any:
        try:
            return self._values[name]
        except KeyError:
            raise AttributeError(name) from None

    def get(self, name: str, default: Any = None) -> Any:
        return self._values.get(name, default)

    @property
    def out_dir(self) -> Path:
        p = Path(self._values["out"])
        p.mkdir(parents=True, exist_ok=True)
        return p

    def floats(self, name: str) -> list[float]:
        v = self._values[name]
        return [float(x) for x in v] if isinstance(v, (list, tuple)) else _float_list(v)

    def ints(self, name: str) -> list[int]:
        v = self._values[name]
        return [int(x) for x in v] if isinstance(v, (list, tuple)) else _int_list(v)

    def scalar(self, name: str, cast=float):
        v = self._values[name]
        if isinstance(v, (list, tuple)):
            if len(v) != 1:
                raise ValueError(f"--{name} takes a single value here")
            v = v[0]
        if isinstance(v, str) and "," in v:
            raise ValueError(f"--{name} takes a single value here")
        return cast(v)

    @property
    def limiter_on(self) -> bool:
        v = self._values["limiter"]
        return v if isinstance(v, bool) else str(v).lower() == "on"


def _grid(o: Options):
    from .kinetic import VelocityGrid

    return VelocityGrid(float(o.vmax), int(o.nv))


def _scheme(o: Options):
    from .tableau import get_scheme, load_tableau

    name = o.scheme
    if isinstance(name, str) and (name.endswith(".json") or Path(name).is_file()):
        return load_tableau(name)
    return get_scheme(name)


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    import numba

    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


def _snapshot_rows(x: np.ndarray, P: np.ndarray):
    return ([xi, *p] for xi, p in zip(x, P))


# -- commands ---------------------------------------------------------------------


def cmd_check_tableau(args: argparse.Namespace) -> int:
    from .tableau import (
        FStarVariant,
        SchemeKind,
        TableauError,
        check_order_conditions,
        get_scheme,
        load_tableau,
        positivity_analysis,
    )

    o = Options(args, {"order": 2, "variant": FStarVariant.FN.value, "tol": 1e-10})
    target = args.tableau or o.get("scheme") or "scheme_a"
    try:
        if Path(target).suffix == ".json" or Path(target).is_file():
            t = load_tableau(target)
        else:
            t = get_scheme(target)
    except (TableauError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    order = int(o.order)
    res = check_order_conditions(t, order, o.variant)
    tol = float(o.tol)
    order_ok = all(abs(float(r)) <= tol for r in res.values())
    report: dict[str, Any] = {
        "name": t.name,
        "kind": t.kind.value,
        "nu": t.nu,
        "alpha": float(t.alpha),
        "order": order,
        "variant": str(FStarVariant(o.variant).value),
        "tolerance": tol,
        "residuals": {k: float(v) for k, v in res.items()},
        "order_conditions_satisfied": order_ok,
    }
    print(f"tableau {t.name or target}  kind={t.kind.value}  nu={t.nu}  alpha={float(t.alpha):.17g}")
    print(f"order {order} conditions ({report['variant']}), tolerance {tol:g}:")
    for k, v in res.items():
        flag = "ok " if abs(float(v)) <= tol else "BAD"
        print(f"  {flag} {k:<22s} {float(v): .3e}")
    feasible = True
    if t.kind in (SchemeKind.TYPE_A, SchemeKind.TYPE_ARS) and t.gsa:
        rep = positivity_analysis(t)
        feasible = rep.feasible
        report["positivity"] = rep.to_dict()
        c = "unbounded" if rep.c_sch_unbounded else f"{rep.c_sch:.17g}"
        print(f"positivity: feasible={rep.feasible}  c_sch={c}")
        for k, v in rep.ratios.items():
            print(f"  {k:<16s} {'unbounded' if math.isinf(v) else f'{v:.17g}'}")
        for k, v in rep.violations:
            print(f"  violated {k}: {v:.6g}")
    else:
        report["positivity"] = None
        print("positivity: not analysed for this tableau kind")
    if args.out:
        write_json(o.out_dir / f"tableau_{t.name or 'custom'}.json", report)
    if args.json:
        print(json.dumps(_plain(report), indent=2, sort_keys=True))
    return EXIT_OK if (order_ok and feasible) else EXIT_CHECK_FAILED


def _plain(obj):
    from .io import _jsonable

    return _jsonable(obj)


def cmd_accuracy(args: argparse.Namespace) -> int:
    from .experiments import accuracy_study

    o = Options(
        args,
        {"scheme": "scheme_a", "eps": "1,1e-8,1e-10", "nx": "40,80,160", "init": "inconsistent", "t_end": 0.1,
         "cfl": 0.5, "limiter": "off", "expect_order": None, "order_tol": 0.3},
    )
    _set_threads(o.threads)
    grid = _grid(o)
    rows = []
    ok = True
    for eps in o.floats("eps"):
        table = accuracy_study(
            o.scheme, eps, o.ints("nx"), consistent=(o.init == "consistent"), grid=grid,
            t_end=float(o.t_end), cfl=float(o.cfl), limiter=o.limiter_on,
        )
        for r in table:
            rows.append((eps, r.n_x, r.error, r.order))
            print(f"eps={eps:<8g} n_x={r.n_x:<5d} error={r.error:.3e} order={r.order:.2f}")
        if o.expect_order is not None and len(table) >= 2:
            got = table[-1].order
            if abs(got - float(o.expect_order)) > float(o.order_tol):
                ok = False
                print(f"  finest order {got:.2f} outside {o.expect_order}±{o.order_tol}")
    write_csv(o.out_dir / "accuracy.csv", ["eps", "n_x", "error", "order"], rows)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_sod(args: argparse.Namespace) -> int:
    from .experiments import sod_initial
    from .imex_bgk import IMEXStepper, SimConfig, SpatialScheme, StepDiagnostics, run

    o = Options(args, {"scheme": "scheme_a", "eps": 1e-8, "nx": 80, "t_end": 0.3, "dump_f": False})
    _set_threads(o.threads)
    grid = _grid(o)
    f0 = sod_initial(o.scalar("nx", int), grid)
    dt = f0.mesh.dx / (24.0 * grid.v_max)
    cfg = SimConfig(
        scheme=_scheme(o), eps=o.scalar("eps"), t_end=float(o.t_end), dt=dt,
        spatial=SpatialScheme.WENO5_LIMITED if o.limiter_on else SpatialScheme.WENO5_UNLIMITED,
    )
    res = run(cfg, f0)
    out = o.out_dir
    write_csv(out / "sod_diagnostics.csv", StepDiagnostics.CSV_FIELDS, (d.row() for d in res.diagnostics))
    write_csv(out / "sod_snapshot.csv", ["x", "rho", "u", "T"], _snapshot_rows(f0.mesh.centers, res.field.primitives()))
    if o.dump_f:
        dump_field(out / "sod_f.bin", res.field.values)
    st = IMEXStepper(cfg, f0.mesh, grid, f0.ghosts)
    guaranteed = st.strict(dt)
    worst = res.max_neg_cells
    print(f"{cfg.scheme if isinstance(cfg.scheme, str) else cfg.scheme.name}: {res.steps} steps, "
          f"max negative cells {worst}, positivity guaranteed: {guaranteed}")
    if guaranteed and worst > 0:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_mixed(args: argparse.Namespace) -> int:
    from .experiments import accuracy_initial, mixed_eps, relative_l2, restrict
    from .imex_bgk import SimConfig, SpatialScheme, run
    from .kinetic import moments_array
    from .reference import ssp_rk2_run
    from .space_fv import SpatialMesh

    o = Options(args, {"scheme": "scheme_a", "nx": 40, "ref_nx": 80, "t_end": 0.5, "tol": 0.05})
    _set_threads(o.threads)
    grid = _grid(o)
    nx, ref_nx = o.scalar("nx", int), int(o.ref_nx)
    if ref_nx % nx or (ref_nx // nx) & (ref_nx // nx - 1):
        raise ValueError("--ref-nx must be a power-of-two multiple of --nx")
    mesh = SpatialMesh(nx)
    spatial = SpatialScheme.WENO5_LIMITED if o.limiter_on else SpatialScheme.WENO5_UNLIMITED
    cfg = SimConfig(scheme=_scheme(o), eps=mixed_eps, t_end=float(o.t_end),
                    dt=mesh.dx / (24.0 * grid.v_max), spatial=spatial, entropy=False)
    ap = run(cfg, accuracy_initial(mesh, grid)).field
    rmesh = SpatialMesh(ref_nx)
    ref, info, _ = ssp_rk2_run(accuracy_initial(rmesh, grid), rmesh.dx / (240.0 * grid.v_max), float(o.t_end),
                               mixed_eps, limiter=o.limiter_on)
    if not info.ok:
        print(f"note: reference step outside its guaranteed regime (cfl_ok={info.cfl_ok}, "
              f"stiffness_ok={info.stiffness_ok})")
    out = o.out_dir
    write_csv(out / "mixed_ap.csv", ["x", "rho", "u", "T"], _snapshot_rows(mesh.centers, ap.primitives()))
    write_csv(out / "mixed_reference.csv", ["x", "rho", "u", "T"], _snapshot_rows(rmesh.centers, ref.primitives()))
    U = moments_array(ref.values, grid)
    while U.shape[0] > nx:
        U = restrict(U)
    rho = U[:, 0]
    u = U[:, 1] / rho
    Pref = np.stack([rho, u, 2.0 * U[:, 2] / rho - u * u], axis=1)
    P = ap.primitives()
    errs = [relative_l2(P[:, i], Pref[:, i]) for i in range(3)]
    print("relative L2 difference rho={:.3e} u={:.3e} T={:.3e}".format(*errs))
    write_csv(out / "mixed_difference.csv", ["quantity", "relative_l2"], zip(["rho", "u", "T"], errs))
    return EXIT_OK if max(errs) <= float(o.tol) else EXIT_CHECK_FAILED


def cmd_stability(args: argparse.Namespace) -> int:
    from .stability import DEFAULT_RESOLUTION, DEFAULT_Z2, Window, is_nested, stability_boundary_slice

    o = Options(args, {"scheme": "scheme_a", "z2": ",".join(str(z) for z in DEFAULT_Z2),
                       "resolution": DEFAULT_RESOLUTION, "window": "-6,1,-5,5"})
    t = _scheme(o)
    window = Window(*o.floats("window"))
    z2s = o.floats("z2")
    if any(z > 0 for z in z2s):
        raise ValueError("z2 values must be nonpositive")
    rows = []
    for z2 in z2s:
        sl = stability_boundary_slice(t, z2, window, int(o.resolution))
        rows.extend((z2, x, y) for x, y in sl.boundary_points)
        print(f"z2={z2:g}: {len(sl.boundary_points)} boundary points")
    write_csv(o.out_dir / f"stability_{t.name or 'custom'}.csv", ["z2", "x", "y"], rows)
    nested, bad = is_nested(t, z2s, window, int(o.resolution))
    print(f"nested stable sets: {nested} (violating grid points per pair: {bad})")
    return EXIT_OK if nested else EXIT_CHECK_FAILED


def cmd_entropy(args: argparse.Namespace) -> int:
    from .experiments import accuracy_initial
    from .imex_bgk import IMEXStepper, KineticField, SimConfig, SpatialScheme, entropy, iterate
    from .kinetic import discrete_maxwellian
    from .space_fv import SpatialMesh

    o = Options(args, {"scheme": "scheme_a", "eps": 1e-2, "nx": 40, "steps": 200, "init": "smooth",
                       "init_file": None, "slack": 1e-12})
    _set_threads(o.threads)
    grid = _grid(o)
    mesh = SpatialMesh(o.scalar("nx", int))
    if o.init_file:
        f0 = KineticField(load_field(o.init_file, mesh.n_x, grid.n_v), mesh, grid)
    elif o.init == "equilibrium":
        M = discrete_maxwellian(np.array([1.0, 0.0, 0.5]), grid)
        f0 = KineticField(np.repeat(M[None], mesh.n_x, axis=0), mesh, grid)
    else:
        f0 = accuracy_initial(mesh, grid)
    if np.any(f0.values < 0):
        print("error: initial data has negative values; entropy is undefined", file=sys.stderr)
        return EXIT_CHECK_FAILED
    cfg = SimConfig(scheme=_scheme(o), eps=o.scalar("eps"), spatial=SpatialScheme.UPWIND1)
    st = IMEXStepper(cfg, mesh, grid)
    if not math.isfinite(st.dt_positivity):
        raise ValueError("the entropy check needs a scheme with a positivity CFL")
    cfg.t_end = f0.time + int(o.steps) * st.dt_positivity
    rows = [(0, 0.0, entropy(f0))]
    for f, d in iterate(cfg, f0, st):
        rows.append((d.step, d.time, d.entropy))
    write_csv(o.out_dir / "entropy.csv", ["step", "time", "entropy"], rows)
    S = np.array([r[2] for r in rows])
    incr = np.diff(S)
    worst = float(incr.max()) if incr.size else 0.0
    ok = bool(np.all(np.isfinite(S))) and worst <= float(o.slack)
    print(f"{len(rows) - 1} steps, largest entropy increase {worst:.3e} (slack {float(o.slack):g}): "
          f"{'monotone' if ok else 'NOT monotone'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def broadwell_initial(n_x: int, consistent: bool = False):
    from .broadwell import BroadwellField, equilibrium, from_moments
    from .space_fv import SpatialMesh, cell_average

    mesh = SpatialMesh(n_x)

    def fields(x):
        rho = 1.0 + 0.2 * np.sin(np.pi * x)
        m = 0.3 * np.cos(np.pi * x)
        if consistent:
            return equilibrium(rho, m)
        z = 0.5 * (rho + np.abs(m)) + 0.05 * np.sin(2 * np.pi * x)
        return from_moments(np.stack([rho, m, z], axis=-1))

    return BroadwellField(cell_average(fields, mesh), mesh)


def cmd_broadwell(args: argparse.Namespace) -> int:
    from .broadwell import BroadwellDiagnostics, _positivity_dt, broadwell_run
    from .tableau import get_scheme

    o = Options(args, {"scheme": "scheme_a", "eps": 1e-10, "nx": 80, "t_end": 0.5, "init": "inconsistent"})
    _set_threads(o.threads)
    f0 = broadwell_initial(o.scalar("nx", int), o.init == "consistent")
    t = _scheme(o)
    bound = _positivity_dt(t, f0.mesh, "weno5")
    dt = bound if math.isfinite(bound) else f0.mesh.dx / 24.0
    eps = o.scalar("eps")
    f, diags = broadwell_run(f0, t, dt, float(o.t_end), eps, limiter=o.limiter_on)
    out = o.out_dir
    write_csv(out / "broadwell_diagnostics.csv", BroadwellDiagnostics.CSV_FIELDS, (d.row() for d in diags))
    write_csv(out / "broadwell_snapshot.csv", ["x", "rho", "m", "z"], _snapshot_rows(f.mesh.centers, f.moments()))
    neg = max(d.neg_cells + d.stage_neg_cells for d in diags)
    drift = max(abs(d.mass - diags[0].mass) + abs(d.momentum - diags[0].momentum) for d in diags)
    closure = diags[-1].closure_residual
    print(f"{len(diags) - 1} steps, max negative cells {neg}, conservation drift {drift:.2e}, "
          f"closure residual {closure:.2e}")
    ok = drift <= 1e-12 * max(1.0, len(diags))
    if math.isfinite(bound) and o.limiter_on:
        ok = ok and neg == 0
    if eps <= 1e-8:
        ok = ok and closure <= 1e-6
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppimex", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, func: Callable[[argparse.Namespace], int], help_: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_, description=help_)
        _add_common(sp)
        sp.set_defaults(func=func)
        return sp

    sp = add("check-tableau", cmd_check_tableau, "verify order and positivity conditions of a tableau")
    sp.add_argument("tableau", nargs="?", help="built-in name or JSON file (alternative to --scheme)")
    sp.add_argument("--order", type=int, choices=[1, 2, 3])
    sp.add_argument("--variant", choices=["fstar_fn", "fstar_fnp1"])
    sp.add_argument("--tol", type=float, help="residual tolerance (default 1e-10)")
    sp.add_argument("--json", action="store_true", help="also print the JSON report")

    sp = add("accuracy", cmd_accuracy, "self-convergence study on smooth periodic data")
    sp.add_argument("--init", choices=["consistent", "inconsistent"])
    sp.add_argument("--cfl", type=float, help="dt = cfl * dx / vmax (default 0.5)")
    sp.add_argument("--expect-order", dest="expect_order", type=float, help="assert the finest observed order")
    sp.add_argument("--order-tol", dest="order_tol", type=float, help="tolerance for --expect-order (0.3)")

    sp = add("sod", cmd_sod, "Sod shock tube with negative-cell counting")
    sp.add_argument("--dump-f", dest="dump_f", action="store_true", default=None,
                    help="write the final distribution as raw float64")

    sp = add("mixed", cmd_mixed, "mixed-regime run against an explicit resolved reference")
    sp.add_argument("--ref-nx", dest="ref_nx", type=int, help="reference cells (default 80)")
    sp.add_argument("--tol", type=float, help="relative L2 tolerance (default 0.05)")

    sp = add("stability", cmd_stability, "stability-region boundaries of the linear test problem")
    sp.add_argument("--z2", help="comma-separated nonpositive z2 values")
    sp.add_argument("--resolution", type=int)
    sp.add_argument("--window", help="x_min,x_max,y_min,y_max")

    sp = add("entropy", cmd_entropy, "entropy history with first-order upwind transport")
    sp.add_argument("--steps", type=int, help="number of steps (default 200)")
    sp.add_argument("--init", choices=["smooth", "equilibrium"])
    sp.add_argument("--init-file", dest="init_file", help="raw float64 (n_x, n_v) initial data")
    sp.add_argument("--slack", type=float, help="allowed entropy increase per step (1e-12)")

    sp = add("broadwell", cmd_broadwell, "Broadwell model run with positivity and closure checks")
    sp.add_argument("--init", choices=["consistent", "inconsistent"])
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    started = time.perf_counter()
    try:
        code = args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    log.info("finished in %.1fs", time.perf_counter() - started)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
