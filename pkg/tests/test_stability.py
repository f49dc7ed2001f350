from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from ppimex.stability import (
    DEFAULT_WINDOW,
    StabilityError,
    Window,
    amplification_factor,
    is_nested,
    stable_mask,
    stability_boundary_slice,
)
from ppimex.tableau import SchemeKind, TableauPair


@pytest.mark.parametrize("name", ["scheme_a", "scheme_ars", "ars222"])
def test_zero_arguments_give_one(name):
    assert amplification_factor(name, 0.0, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_ars_explicit_part_second_order():
    hs = np.array([1e-3, 5e-4, 2.5e-4, -1e-3, -5e-4])
    err = np.abs(amplification_factor("scheme_ars", hs, 0.0) - np.exp(hs))
    C = err / np.abs(hs) ** 3
    assert np.all(C <= 1.0)
    assert C[1] / C[0] == pytest.approx(1.0, rel=0.01)


def test_scheme_a_stiff_limit_vanishes():
    vals = [abs(amplification_factor("scheme_a", 0.0, z2)) for z2 in (-1e2, -1e4, -1e6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-6


def test_scheme_a_real_interval_stable():
    x = np.linspace(-2.0, 0.0, 401)
    assert np.all(np.abs(amplification_factor("scheme_a", x, 0.0)) <= 1.0 + 1e-12)


def test_singular_stage_raises():
    t = TableauPair([[0]], [[Fraction(1, 2)]], [0], [Fraction(1, 2)], 0, SchemeKind.TYPE_A, True)
    with pytest.raises(StabilityError):
        amplification_factor(t, 0.0, 2.0)


def test_vectorised_matches_scalar():
    z = np.array([-1 + 1j, -0.3 - 2j])
    vec = amplification_factor("scheme_a", z, -5.0)
    assert vec[1] == pytest.approx(amplification_factor("scheme_a", z[1], -5.0), rel=1e-15)


@pytest.mark.parametrize("name", ["scheme_a", "scheme_ars"])
def test_nested_slices(name):
    ok, bad = is_nested(name, [0.0, -1.0, -5.0, -20.0], DEFAULT_WINDOW, 200)
    assert ok and bad == [0, 0, 0]


def test_boundary_points_lie_on_unit_modulus():
    sl = stability_boundary_slice("scheme_a", -1.0, DEFAULT_WINDOW, 120)
    assert sl.boundary_points
    assert sl.max_residual("scheme_a") <= 1e-9


def test_degenerate_window_is_empty():
    sl = stability_boundary_slice("scheme_a", 0.0, Window(0.0, 0.0, -1.0, 1.0))
    assert sl.boundary_points == []


def test_resolution_lower_bound():
    with pytest.raises(ValueError):
        stability_boundary_slice("scheme_a", 0.0, DEFAULT_WINDOW, 8)


def test_mask_orientation():
    mask = stable_mask("scheme_a", 0.0, Window(-1.0, 1.0, -1.0, 1.0), 21)
    assert mask[10, 5] and not mask[10, 20]
