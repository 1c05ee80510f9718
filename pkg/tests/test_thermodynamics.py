"""Ronkin 函数与表面张力 / 自由能的端点性质"""

import math

import numpy as np
import pytest

from modules.gibbs import MagneticField, frozen_configuration, reference_point
from modules.kasteleyn import char_poly
from modules.thermodynamics import (
    free_energy,
    legendre_residual,
    ronkin,
    spectral_field,
    surface_tension,
)

FAR_FIELD = MagneticField(8.0, 0.3)


def test_ronkin_jensen_matches_grid(cover_model):
    jensen = ronkin(cover_model, FAR_FIELD, order=0)
    grid = ronkin(cover_model, FAR_FIELD, order=128)
    assert grid == pytest.approx(jensen, rel=1e-8, abs=1e-8)


def test_ronkin_is_affine_outside_amoeba(cover_model):
    poly = char_poly(cover_model)
    x, y = FAR_FIELD.by, -FAR_FIELD.bx
    (i, j), c = max(poly.coeffs.items(), key=lambda kv: math.log(abs(kv[1])) + kv[0][0] * x + kv[0][1] * y)
    expected = math.log(abs(c)) + i * x + j * y
    assert ronkin(cover_model, FAR_FIELD, order=0) == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_reference_point_values(square_octagon_model):
    u1 = reference_point(square_octagon_model)
    log_weight = sum(math.log(abs(square_octagon_model.entries[e]))
                     for e in frozen_configuration(square_octagon_model, u1))
    assert surface_tension(square_octagon_model, u1) == pytest.approx(-log_weight)
    assert free_energy(square_octagon_model, u1) == pytest.approx(log_weight)
    assert legendre_residual(square_octagon_model, u1) == pytest.approx(0.0, abs=1e-12)


def test_spectral_field_of_liquid_point_is_finite(cover_model):
    B = spectral_field(cover_model, 0.4 + 0.25j)
    assert math.isfinite(B.bx) and math.isfinite(B.by)


def test_ronkin_grid_is_deterministic(cover_model):
    B = MagneticField(0.2, -0.1)
    first = ronkin(cover_model, B, order=32, seed=11)
    assert ronkin(cover_model, B, order=32, seed=11) == first
    assert ronkin(cover_model, B, order=32) == ronkin(cover_model, B, order=32)


@pytest.mark.slow
def test_legendre_identity_along_liquid_path(cover_model):
    for u0 in np.linspace(0.3 + 0.1j, 0.7 + 0.4j, 10):
        assert abs(legendre_residual(cover_model, complex(u0))) < 1e-5


@pytest.mark.slow
def test_free_energy_is_ronkin_up_to_affine(cover_model):
    points = [complex(x, y) for x in (0.3, 0.5, 0.7) for y in (0.15, 0.35)]
    rows, rhs = [], []
    for u0 in points:
        B = spectral_field(cover_model, u0)
        rows.append([1.0, B.bx, B.by])
        rhs.append(free_energy(cover_model, u0) - ronkin(cover_model, B, order=0))
    coeffs, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    assert np.max(np.abs(np.array(rows) @ coeffs - np.array(rhs))) < 1e-4
