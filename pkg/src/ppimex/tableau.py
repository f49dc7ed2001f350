"""Double Butcher tableaus with a correction weight.

A :class:`TableauPair` holds the explicit and implicit coefficient matrices of
an IMEX Runge-Kutta scheme together with the weight ``alpha`` of the extra
implicit correction step.  Coefficients may be floats, ints or
:class:`fractions.Fraction`; all verification routines are written against
generic arithmetic so that rational tableaus are checked exactly.

Indices in reports are 1-based to match the usual tableau notation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from numbers import Real
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "TableauError",
    "SchemeKind",
    "FStarVariant",
    "TableauPair",
    "PositivityReport",
    "ShuOsherForm",
    "UNBOUNDED",
    "stage_weights",
    "check_order_conditions",
    "positivity_analysis",
    "positivity_analysis_type_a",
    "positivity_analysis_type_ars",
    "shu_osher_form",
    "builtin_schemes",
    "get_scheme",
    "load_tableau",
    "tableau_from_dict",
]

#: inequality slack, absorbs the 14-digit truncation of published coefficients
INEQUALITY_TOL = 1e-12
#: denominators at or below this magnitude make a CFL ratio unbounded
ZERO_DENOMINATOR_TOL = 1e-14
#: sentinel for a ratio with zero denominator
UNBOUNDED = math.inf


class TableauError(ValueError):
    """Raised for structurally invalid tableaus or unsupported analyses."""


class SchemeKind(str, Enum):
    TYPE_A = "TypeA"
    TYPE_ARS = "TypeARS"
    TYPE_CK = "TypeCK"
    EXPLICIT = "Explicit"


class FStarVariant(str, Enum):
    """Which state the correction linearises about (affects third order only)."""

    FN = "fstar_fn"
    FNP1 = "fstar_fnp1"


def _rows(matrix) -> tuple[tuple[Real, ...], ...]:
    return tuple(tuple(row) for row in matrix)


@dataclass(frozen=True)
class TableauPair:
    """Explicit/implicit tableau pair plus correction weight.

    ``a_explicit`` must be strictly lower triangular, ``a_implicit`` lower
    triangular.  When ``gsa`` is set the weights must repeat the last rows.
    """

    a_explicit: tuple[tuple[Real, ...], ...]
    a_implicit: tuple[tuple[Real, ...], ...]
    w_explicit: tuple[Real, ...]
    w_implicit: tuple[Real, ...]
    alpha: Real
    kind: SchemeKind
    gsa: bool
    name: str = ""
    reported_c_sch: float | None = field(default=None, compare=False)
    note: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "a_explicit", _rows(self.a_explicit))
        object.__setattr__(self, "a_implicit", _rows(self.a_implicit))
        object.__setattr__(self, "w_explicit", tuple(self.w_explicit))
        object.__setattr__(self, "w_implicit", tuple(self.w_implicit))
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        self._validate()

    def _validate(self) -> None:
        nu = len(self.w_explicit)
        if nu < 1:
            raise TableauError("tableau needs at least one stage")
        for label, mat in (("a_explicit", self.a_explicit), ("a_implicit", self.a_implicit)):
            if len(mat) != nu or any(len(row) != nu for row in mat):
                raise TableauError(f"{label} must be {nu}x{nu}")
        if len(self.w_implicit) != nu:
            raise TableauError(f"w_implicit must have length {nu}")
        for i in range(nu):
            for j in range(nu):
                if j >= i and self.a_explicit[i][j] != 0:
                    raise TableauError(f"a_explicit[{i + 1}][{j + 1}] must be zero (explicit part)")
                if j > i and self.a_implicit[i][j] != 0:
                    raise TableauError(f"a_implicit[{i + 1}][{j + 1}] must be zero (lower triangular)")
        if self.alpha < 0:
            raise TableauError("alpha must be nonnegative")
        if self.gsa:
            for i in range(nu):
                if not _close(self.w_explicit[i], self.a_explicit[-1][i]) or not _close(
                    self.w_implicit[i], self.a_implicit[-1][i]
                ):
                    raise TableauError("gsa tableau must have weights equal to its last rows")
        A = self.a_implicit
        if self.kind is SchemeKind.TYPE_A:
            if any(A[i][i] == 0 for i in range(nu)):
                raise TableauError("type A tableau needs a nonzero implicit diagonal")
        elif self.kind is SchemeKind.TYPE_ARS:
            if any(A[0][j] != 0 for j in range(nu)) or any(A[i][0] != 0 for i in range(nu)):
                raise TableauError("type ARS tableau needs a zero first implicit row and column")
            if self.w_implicit[0] != 0:
                raise TableauError("type ARS tableau needs w_1 = 0")
            if any(A[i][i] == 0 for i in range(1, nu)):
                raise TableauError("type ARS tableau needs a_ii != 0 for i >= 2")
        elif self.kind is SchemeKind.TYPE_CK:
            if any(A[0][j] != 0 for j in range(nu)):
                raise TableauError("type CK tableau needs a zero first implicit row")
        elif self.kind is SchemeKind.EXPLICIT:
            if any(v != 0 for row in A for v in row) or any(v != 0 for v in self.w_implicit):
                raise TableauError("explicit tableau must have an all-zero implicit part")

    @property
    def nu(self) -> int:
        return len(self.w_explicit)

    @cached_property
    def At(self) -> np.ndarray:
        return np.array(self.a_explicit, dtype=float)

    @cached_property
    def A(self) -> np.ndarray:
        return np.array(self.a_implicit, dtype=float)

    @cached_property
    def wt(self) -> np.ndarray:
        return np.array(self.w_explicit, dtype=float)

    @cached_property
    def w(self) -> np.ndarray:
        return np.array(self.w_implicit, dtype=float)

    def to_dict(self) -> dict[str, Any]:
        flat = lambda rows: [float(v) for row in rows for v in row]  # noqa: E731
        return {
            "name": self.name,
            "nu": self.nu,
            "a_explicit": flat(self.a_explicit),
            "a_implicit": flat(self.a_implicit),
            "w_explicit": [float(v) for v in self.w_explicit],
            "w_implicit": [float(v) for v in self.w_implicit],
            "alpha": float(self.alpha),
            "kind": self.kind.value,
            "gsa": self.gsa,
        }


def _close(a, b) -> bool:
    if isinstance(a, (int, Fraction)) and isinstance(b, (int, Fraction)):
        return a == b
    return abs(float(a) - float(b)) <= 1e-14 * max(1.0, abs(float(a)))


def stage_weights(t: TableauPair) -> tuple[tuple[Real, ...], tuple[Real, ...]]:
    """Row sums ``(c_tilde, c)`` of the explicit and implicit matrices."""
    c_tilde = tuple(sum(t.a_explicit[i][:i], 0) for i in range(t.nu))
    c = tuple(sum(t.a_implicit[i][: i + 1], 0) for i in range(t.nu))
    return c_tilde, c


def check_order_conditions(
    t: TableauPair, order: int = 2, variant: FStarVariant | str = FStarVariant.FN
) -> dict[str, Real]:
    """Signed residuals of the corrected-scheme order conditions.

    Names use ``wt``/``w`` for explicit/implicit weights, ``At``/``A`` for the
    matrices and ``ct``/``c`` for their row sums; a product such as
    ``w.A.ct`` denotes ``sum_ij w_i a_ij ct_j``.  ``variant`` selects the
    linearisation point of the correction and only changes order-3 entries.
    """
    if order not in (1, 2, 3):
        raise TableauError("order must be 1, 2 or 3")
    variant = FStarVariant(variant)
    nu = t.nu
    wt, w, At, A, alpha = t.w_explicit, t.w_implicit, t.a_explicit, t.a_implicit, t.alpha
    ct, c = stage_weights(t)
    rng = range(nu)

    def dot(u, v):
        return sum((u[i] * v[i] for i in rng), 0)

    def triple(u, mat, v):
        return sum((u[i] * mat[i][j] * v[j] for i in rng for j in rng), 0)

    def quad(u, x, y):
        return sum((u[i] * x[i] * y[i] for i in rng), 0)

    half, sixth, third = Fraction(1, 2), Fraction(1, 6), Fraction(1, 3)
    res: dict[str, Real] = {
        "wt-1": sum(wt, 0) - 1,
        "w-1": sum(w, 0) - 1,
    }
    if order >= 2:
        res.update(
            {
                "wt.ct-1/2": dot(wt, ct) - half,
                "wt.c-1/2": dot(wt, c) - half,
                "w.ct-1/2": dot(w, ct) - half,
                "w.c-alpha-1/2": dot(w, c) - alpha - half,
            }
        )
    if order >= 3:
        res.update(
            {
                "wt.At.ct-1/6": triple(wt, At, ct) - sixth,
                "wt.At.c-1/6": triple(wt, At, c) - sixth,
                "wt.A.ct-1/6": triple(wt, A, ct) - sixth,
                "wt.A.c-1/6": triple(wt, A, c) - sixth,
                "w.At.ct-1/6": triple(w, At, ct) - sixth,
                "w.At.c-1/6": triple(w, At, c) - sixth,
                "w.A.ct-alpha-1/6": triple(w, A, ct) - alpha - sixth,
                "w.A.c-alpha-1/6": triple(w, A, c) - alpha - sixth,
                "wt.ct.ct-1/3": quad(wt, ct, ct) - third,
                "wt.ct.c-1/3": quad(wt, ct, c) - third,
                "wt.c.c-1/3": quad(wt, c, c) - third,
                "w.ct.ct-1/3": quad(w, ct, ct) - third,
            }
        )
        if variant is FStarVariant.FN:
            res["w.ct.c-1/3"] = quad(w, ct, c) - third
            res["w.c.c-1/3"] = quad(w, c, c) - third
        else:
            res["w.ct.c-alpha-1/3"] = quad(w, ct, c) - alpha - third
            res["w.c.c-2alpha-1/3"] = quad(w, c, c) - 2 * alpha - third
    return res


@dataclass
class PositivityReport:
    """Shu-Osher coefficients and the inequalities they must satisfy.

    ``c0[i]`` is the weight of ``f^n`` in stage ``i``; ``ct0[i]`` (ARS only)
    the weight of ``dt T(f^n)``; ``c[(i, j)]`` and ``ct[(i, j)]`` the weights
    of ``f^(j)`` and ``dt T(f^(j))``.  ``ratios`` maps a label to ``c/ct``,
    with :data:`UNBOUNDED` where the denominator vanishes.
    """

    kind: SchemeKind
    c0: dict[int, Real]
    c: dict[tuple[int, int], Real]
    ct: dict[tuple[int, int], Real]
    ct0: dict[int, Real]
    ratios: dict[str, float]
    feasible: bool
    c_sch: float
    violations: list[tuple[str, float]]
    convexity_residual: float

    @property
    def c_sch_unbounded(self) -> bool:
        return math.isinf(self.c_sch)

    def to_dict(self) -> dict[str, Any]:
        def num(x):
            x = float(x)
            return "unbounded" if math.isinf(x) else x

        return {
            "kind": self.kind.value,
            "feasible": self.feasible,
            "c_sch": num(self.c_sch),
            "c0": {str(i): float(v) for i, v in self.c0.items()},
            "ct0": {str(i): float(v) for i, v in self.ct0.items()},
            "c": {f"{i},{j}": float(v) for (i, j), v in self.c.items()},
            "ct": {f"{i},{j}": float(v) for (i, j), v in self.ct.items()},
            "ratios": {k: num(v) for k, v in self.ratios.items()},
            "violations": [[k, float(v)] for k, v in self.violations],
            "convexity_residual": self.convexity_residual,
        }


def _recursion(t: TableauPair, first: int):
    """Shu-Osher rewrite of the stage equations (1-based, stages ``first..nu``)."""
    nu = t.nu

    def a(i, j):
        return t.a_implicit[i - 1][j - 1]

    def at(i, j):
        return t.a_explicit[i - 1][j - 1]

    b: dict[tuple[int, int], Real] = {}
    bt: dict[tuple[int, int], Real] = {}
    c0: dict[int, Real] = {}
    c: dict[tuple[int, int], Real] = {}
    ct: dict[tuple[int, int], Real] = {}
    ct0: dict[int, Real] = {}
    for i in range(first, nu + 1):
        aii = a(i, i)
        if aii == 0:
            raise TableauError(f"a_{i}{i} = 0: stage {i} has no implicit part")
        inv = 1 / Fraction(aii) if isinstance(aii, (int, Fraction)) else 1.0 / aii
        b[i, i] = inv
        for j in range(first, i):
            b[i, j] = -inv * sum((a(i, l) * b[l, j] for l in range(j, i)), 0)
        for j in range(1, i):
            bt[i, j] = inv * (-at(i, j) - sum((a(i, l) * bt[l, j] for l in range(max(j + 1, first), i)), 0))
        for j in range(first, i):
            c[i, j] = sum((a(i, l) * b[l, j] for l in range(j, i)), 0)
            ct[i, j] = at(i, j) + sum((a(i, l) * bt[l, j] for l in range(j + 1, i)), 0)
        c0[i] = 1 - sum((c[i, j] for j in range(first, i)), 0)
        if first == 2:
            ct0[i] = at(i, 1) + sum((a(i, l) * bt[l, 1] for l in range(2, i)), 0)
    return c0, c, ct, ct0


def _ratio(num, den) -> float:
    if den == 0 or abs(float(den)) <= ZERO_DENOMINATOR_TOL:
        return UNBOUNDED
    r = num / den
    return float(r)


def _finish(kind, t, first, c0, c, ct, ct0) -> PositivityReport:
    violations: list[tuple[str, float]] = []
    ratios: dict[str, float] = {}
    exact_min = None
    for i in range(first, t.nu + 1):
        aii = t.a_implicit[i - 1][i - 1]
        if not aii > 0:
            violations.append((f"a_{i}{i}>0", float(aii)))
        if c0[i] < -INEQUALITY_TOL:
            violations.append((f"c_{i}0>=0", float(c0[i])))
        if first == 2:
            if ct0[i] < -INEQUALITY_TOL:
                violations.append((f"ct_{i}0>=0", float(ct0[i])))
            ratios[f"c_{i}0/ct_{i}0"] = _ratio(c0[i], ct0[i])
            exact_min = _exact_min(exact_min, c0[i], ct0[i])
    for (i, j), v in c.items():
        if v < -INEQUALITY_TOL:
            violations.append((f"c_{i}{j}>=0", float(v)))
        if ct[i, j] < -INEQUALITY_TOL:
            violations.append((f"ct_{i}{j}>=0", float(ct[i, j])))
        ratios[f"c_{i}{j}/ct_{i}{j}"] = _ratio(v, ct[i, j])
        exact_min = _exact_min(exact_min, v, ct[i, j])
    c_sch = UNBOUNDED if exact_min is None else float(exact_min)
    convexity = max(
        (abs(float(c0[i] + sum((v for (k, _), v in c.items() if k == i), 0) - 1)) for i in c0),
        default=0.0,
    )
    return PositivityReport(
        kind=kind,
        c0=c0,
        c=c,
        ct=ct,
        ct0=ct0,
        ratios=ratios,
        feasible=not violations,
        c_sch=c_sch,
        violations=violations,
        convexity_residual=convexity,
    )


def _exact_min(current, num, den):
    # keeps Fraction arithmetic exact until the final float conversion
    if den == 0 or abs(float(den)) <= ZERO_DENOMINATOR_TOL:
        return current
    r = num / den
    return r if current is None or r < current else current


def positivity_analysis_type_a(t: TableauPair) -> PositivityReport:
    """Positivity inequalities and CFL constant of a type A, GSA scheme."""
    if t.kind is not SchemeKind.TYPE_A or not t.gsa:
        raise TableauError(f"{t.name or 'tableau'}: type A analysis needs a type A GSA tableau")
    return _finish(SchemeKind.TYPE_A, t, 1, *_recursion(t, 1))


def positivity_analysis_type_ars(t: TableauPair) -> PositivityReport:
    """Positivity inequalities and CFL constant of a type ARS, GSA scheme."""
    if t.kind is not SchemeKind.TYPE_ARS or not t.gsa:
        raise TableauError(f"{t.name or 'tableau'}: ARS analysis needs a type ARS GSA tableau")
    return _finish(SchemeKind.TYPE_ARS, t, 2, *_recursion(t, 2))


def positivity_analysis(t: TableauPair) -> PositivityReport:
    if t.kind is SchemeKind.TYPE_A:
        return positivity_analysis_type_a(t)
    if t.kind is SchemeKind.TYPE_ARS:
        return positivity_analysis_type_ars(t)
    raise TableauError(f"no positivity analysis for kind {t.kind.value}")


@dataclass(frozen=True)
class ShuOsherForm:
    """Float arrays for ``f*_i = base_i f^n + sum_j stage_ij f^(j) + dt sum_j transport_ij T(f^(j))``.

    Indices are 0-based stage numbers.  For ARS schemes stage 0 is ``f^n``
    itself, so its transport weight sits in column 0 of ``transport``.
    """

    base: np.ndarray
    stage: np.ndarray
    transport: np.ndarray


def shu_osher_form(t: TableauPair) -> ShuOsherForm:
    """Convex-combination form of the stage equations of a GSA A/ARS scheme."""
    if not t.gsa or t.kind not in (SchemeKind.TYPE_A, SchemeKind.TYPE_ARS):
        raise TableauError("Shu-Osher form needs a GSA type A or ARS tableau")
    first = 1 if t.kind is SchemeKind.TYPE_A else 2
    c0, c, ct, ct0 = _recursion(t, first)
    nu = t.nu
    base = np.zeros(nu)
    stage = np.zeros((nu, nu))
    transport = np.zeros((nu, nu))
    if first == 2:
        base[0] = 1.0
    for i, v in c0.items():
        base[i - 1] = float(v)
    for (i, j), v in c.items():
        stage[i - 1, j - 1] = float(v)
        transport[i - 1, j - 1] = float(ct[i, j])
    for i, v in ct0.items():
        transport[i - 1, 0] = float(v)
    return ShuOsherForm(base, stage, transport)


def _lower(rows: list[list[Real]]) -> list[list[Real]]:
    return [list(r) for r in rows]


def _scheme_a() -> TableauPair:
    F = Fraction
    at = [
        [0, 0, 0],
        [F("0.73695027152854"), 0, 0],
        [F("0.32152816910844"), F("0.67847183089156"), 0],
    ]
    a = [
        [F("0.62863517121833"), 0, 0],
        [F("0.24310046553707"), F("0.19593925696632"), 0],
        [F("0.48036510509894"), F("0.074643281386981"), F("0.44499161351408")],
    ]
    return TableauPair(
        at, a, at[-1], a[-1], F("0.27973737915215"), SchemeKind.TYPE_A, True,
        name="scheme_a", reported_c_sch=0.52474575236975,
        note="second-order positivity-preserving type A GSA scheme (coefficients truncated to 14 digits)",
    )


def _scheme_ars() -> TableauPair:
    F = Fraction
    at = [
        [0, 0, 0, 0],
        [0, 0, 0, 0],
        [F(1), 0, 0, 0],
        [F("0.5"), 0, F("0.5"), 0],
    ]
    a = [
        [0, 0, 0, 0],
        [0, F("1.6"), 0, 0],
        [0, F("0.3"), F("0.7"), 0],
        [0, F("0.5"), F("0.3"), F("0.2")],
    ]
    return TableauPair(
        at, a, at[-1], a[-1], F("0.8"), SchemeKind.TYPE_ARS, True,
        name="scheme_ars", reported_c_sch=0.8125,
        note="second-order positivity-preserving type ARS GSA scheme (exact coefficients)",
    )


def _ars222() -> TableauPair:
    # Standard ARS(2,2,2) of Ascher, Ruuth & Spiteri (1997); gamma = 1 - sqrt(2)/2,
    # delta = 1 - 1/(2 gamma).  Not part of the corrected family: alpha = 0.
    g = 1.0 - math.sqrt(2.0) / 2.0
    d = 1.0 - 1.0 / (2.0 * g)
    at = [[0.0, 0.0, 0.0], [g, 0.0, 0.0], [d, 1.0 - d, 0.0]]
    a = [[0.0, 0.0, 0.0], [0.0, g, 0.0], [0.0, 1.0 - g, g]]
    return TableauPair(
        at, a, at[-1], a[-1], 0.0, SchemeKind.TYPE_ARS, True,
        name="ars222", note="ARS(2,2,2) baseline (Ascher-Ruuth-Spiteri 1997), not positivity preserving",
    )


def _ars111() -> TableauPair:
    # forward-backward Euler written as a two-stage GSA ARS tableau
    at = [[0, 0], [1, 0]]
    a = [[0, 0], [0, 1]]
    return TableauPair(
        at, a, at[-1], a[-1], 0, SchemeKind.TYPE_ARS, True,
        name="ars111", note="first-order forward-backward Euler IMEX scheme",
    )


def _ssp_rk2() -> TableauPair:
    at = [[0, 0], [1, 0]]
    zero = [[0, 0], [0, 0]]
    return TableauPair(
        at, zero, [Fraction(1, 2), Fraction(1, 2)], [0, 0], 0, SchemeKind.EXPLICIT, False,
        name="ssp_rk2_explicit", note="Heun / SSP-RK2 explicit reference tableau",
    )


_REGISTRY: dict[str, TableauPair] | None = None


def builtin_schemes() -> dict[str, TableauPair]:
    """Named tableaus shipped with the package."""
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = {
            t.name: t for t in (_scheme_a(), _scheme_ars(), _ars222(), _ars111(), _ssp_rk2())
        }
    return dict(_REGISTRY)


def get_scheme(name: str | TableauPair) -> TableauPair:
    if isinstance(name, TableauPair):
        return name
    schemes = builtin_schemes()
    try:
        return schemes[name]
    except KeyError:
        raise TableauError(f"unknown scheme {name!r}; known: {', '.join(sorted(schemes))}") from None


def tableau_from_dict(doc: dict[str, Any], name: str = "") -> TableauPair:
    """Build a tableau from the JSON document layout (row-major matrices)."""
    required = ("nu", "a_explicit", "a_implicit", "w_explicit", "w_implicit", "alpha", "kind", "gsa")
    if not isinstance(doc, dict):
        raise TableauError("tableau document must be a JSON object")
    missing = [k for k in required if k not in doc]
    if missing:
        raise TableauError(f"tableau document missing fields: {', '.join(missing)}")
    nu = doc["nu"]
    if not isinstance(nu, int) or nu < 1:
        raise TableauError("nu must be a positive integer")

    def matrix(key):
        flat = doc[key]
        if not isinstance(flat, list) or len(flat) != nu * nu:
            raise TableauError(f"{key} must be a flat row-major list of {nu * nu} numbers")
        return [flat[i * nu:(i + 1) * nu] for i in range(nu)]

    try:
        kind = SchemeKind(doc["kind"])
    except ValueError:
        raise TableauError(f"unknown kind {doc['kind']!r}") from None
    for key in ("w_explicit", "w_implicit"):
        if not isinstance(doc[key], list) or len(doc[key]) != nu:
            raise TableauError(f"{key} must be a list of {nu} numbers")
    values = [*doc["a_explicit"], *doc["a_implicit"], *doc["w_explicit"], *doc["w_implicit"], doc["alpha"]]
    if not all(isinstance(v, (int, float, Fraction)) and not isinstance(v, bool) for v in values):
        raise TableauError("tableau coefficients must be numbers")
    return TableauPair(
        matrix("a_explicit"), matrix("a_implicit"), doc["w_explicit"], doc["w_implicit"],
        doc["alpha"], kind, bool(doc["gsa"]), name=doc.get("name", name),
    )


def load_tableau(source: str | Path) -> TableauPair:
    """Load a tableau JSON file; decimals are read as exact fractions."""
    path = Path(source)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"), parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise TableauError(f"{path}: malformed JSON ({exc})") from exc
    return tableau_from_dict(doc, name=path.stem)
