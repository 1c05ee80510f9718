"""Riemann theta: 与直接级数求和比较, 拟周期性, 奇偶性与特征平移"""

import itertools

import numpy as np
import pytest

from modules.errors import NonPositiveDefinite
from modules.theta import (
    PeriodMatrix,
    ThetaChar,
    all_characteristics,
    grad_log_theta,
    grad_theta,
    pick_odd_characteristic,
    reduced_real_theta,
    shift_characteristic,
    theta,
    theta_char,
    theta_scaled,
)

OMEGA2 = np.array([[1.1j, 0.3j], [0.3j, 0.9j]])


def naive_theta(z, omega, ch=None, span=12):
    omega = np.atleast_2d(omega)
    g = omega.shape[0]
    dp = np.zeros(g) if ch is None else ch.delta_p
    dpp = np.zeros(g) if ch is None else ch.delta_pp
    z = np.asarray(z, dtype=complex)
    total = 0j
    for n in itertools.product(range(-span, span + 1), repeat=g):
        m = np.asarray(n, dtype=float) + dp
        total += np.exp(1j * np.pi * m @ omega @ m + 2j * np.pi * m @ (z + dpp))
    return total


def test_genus1_matches_series(rng):
    omega = [[1.3j]]
    for _ in range(10):
        z = np.array([rng.random() + 0.4j * rng.standard_normal()])
        expected = naive_theta(z, omega, span=30)
        assert abs(theta(z, omega) - expected) < 1e-12 * max(1.0, abs(expected))


def test_genus2_matches_series(rng):
    for _ in range(5):
        z = rng.random(2) + 0.2j * rng.standard_normal(2)
        expected = naive_theta(z, OMEGA2)
        assert abs(theta(z, OMEGA2) - expected) < 1e-11 * max(1.0, abs(expected))


def test_characteristic_matches_series(rng):
    ch = ThetaChar((1, 0), (1, 1))
    z = rng.random(2) + 0.1j
    expected = naive_theta(z, OMEGA2, ch)
    assert abs(theta_char(ch, z, OMEGA2) - expected) < 1e-11 * max(1.0, abs(expected))


def test_batch_shape():
    z = np.zeros((3, 4, 2), dtype=complex)
    assert np.shape(theta(z, OMEGA2)) == (3, 4)


def test_quasi_periodicity(rng):
    tau = 0.8j
    z = np.array([rng.random() + 0.1j])
    base = theta(z, [[tau]])
    assert abs(theta(z + 1.0, [[tau]]) - base) < 1e-12
    shifted = theta(z + tau, [[tau]])
    factor = np.exp(-1j * np.pi * tau - 2j * np.pi * z[0])
    assert abs(shifted - factor * base) < 1e-11 * abs(base)


def test_even_and_odd_parity(rng):
    z = rng.random(2) + 0.1j * rng.standard_normal(2)
    assert abs(theta(-z, OMEGA2) - theta(z, OMEGA2)) < 1e-12
    odd = pick_odd_characteristic(OMEGA2)
    assert odd.is_odd
    assert abs(theta_char(odd, -z, OMEGA2) + theta_char(odd, z, OMEGA2)) < 1e-12
    assert abs(theta_char(odd, np.zeros(2), OMEGA2)) < 1e-12


def test_characteristic_counts():
    chars = list(all_characteristics(2))
    assert len(chars) == 16
    assert sum(ch.is_odd for ch in chars) == 6


def test_shift_identity(rng):
    ch = ThetaChar((1, 1), (0, 1))
    z = rng.random(2) + 0.05j
    gp, gpp = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    shifted = z + OMEGA2 @ gp + gpp
    lhs = theta_char(ch, shifted, OMEGA2)
    rhs = shift_characteristic(ch, gp, gpp, z, OMEGA2)
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_grad_log_theta_finite_difference(rng):
    z = rng.random(2) + 0.1j
    grad = grad_log_theta(z, OMEGA2)
    h = 1e-6
    for k in range(2):
        dz = np.zeros(2)
        dz[k] = h
        fd = (np.log(theta(z + dz, OMEGA2)) - np.log(theta(z - dz, OMEGA2))) / (2 * h)
        assert abs(grad[k] - fd) < 1e-6 * max(1.0, abs(fd))


def test_grad_theta_is_theta_times_grad_log(rng):
    z = rng.random(2) + 0.2j
    assert np.allclose(grad_theta(z, OMEGA2), theta(z, OMEGA2) * grad_log_theta(z, OMEGA2), rtol=1e-10)


def test_theta_scaled_far_from_real_axis():
    omega = [[1.0j]]
    z = np.array([0.3 + 2.5j])
    mant, log_scale = theta_scaled(z, omega)
    expected = naive_theta(z, omega, span=20)
    assert abs(np.log(abs(mant)) + log_scale - np.log(abs(expected))) < 1e-10


def test_reduced_real_theta_is_real():
    P = PeriodMatrix(OMEGA2)
    z = np.array([0.3, 0.7]) + OMEGA2 @ np.array([0.5, 0.0])
    value = reduced_real_theta(z, P)
    assert np.isreal(value)


def test_non_positive_imaginary_part_rejected():
    with pytest.raises(NonPositiveDefinite):
        PeriodMatrix([[-1j]])
    with pytest.raises(NonPositiveDefinite):
        PeriodMatrix([[1j, 0.5j], [0.1j, 1j]])


def test_from_halves_rejects_quarters():
    with pytest.raises(ValueError):
        ThetaChar.from_halves([0.25], [0.0])
