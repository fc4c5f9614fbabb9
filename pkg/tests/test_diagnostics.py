import numpy as np
import pytest

from fdbie.diagnostics import (
    band_ratio,
    extension_constants,
    poincare_constants,
    random_energy_ratios,
    sw_bounds,
)
from fdbie.domains import sin_cosh
from fdbie.fields import inner, lift_from_trace
from fdbie.operators import spectrum


def test_band_ratio():
    assert band_ratio([1.0, 2.0, 1.5]) == 2.0
    assert band_ratio([1.0, 0.0]) == float("inf")


def test_poincare_constants_bound_random_fields(geom, rng):
    c = poincare_constants(geom)
    assert all(v > 0 for v in c.values())
    hd = geom.h**geom.dim
    for _ in range(5):
        u = lift_from_trace(geom, rng.uniform(-1, 1, geom.n_nodes), np.zeros(geom.n_cut), "plus")
        assert np.sum(u.values[geom.plus_nodes] ** 2) * hd <= c["trace_zero"] * inner(geom, u, u) * (1 + 1e-9)


def test_poincare_constant_of_circle_near_continuum(circle32):
    # zero-trace constant on a disk of radius a is (a / j0)^2 with j0 the first Bessel zero
    j0 = 2.404825557695773
    assert poincare_constants(circle32)["trace_zero"] == pytest.approx((0.7 / j0) ** 2, rel=0.05)


def test_extension_constants(circle16, rng):
    c = extension_constants(circle16)
    s = random_energy_ratios(circle16, rng, 10)
    assert s["forward_max"] <= c["forward"] * (1 + 1e-9)
    assert s["reverse_max"] <= c["reverse"] * (1 + 1e-9)
    # the forward constant fixes the contraction bound C / (1 + C)
    assert c["r_bound"] == pytest.approx(spectrum(circle16, "calB").r_hat, rel=1e-8)


def test_sw_bounds(circle32):
    b = sw_bounds(circle32, sin_cosh()(circle32.gamma0_points))
    assert 0 < b["flux_interior"] <= b["flux_weighted"]
    assert b["norm2"] > 0
