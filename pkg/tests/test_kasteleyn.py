"""Fock 权重: Kasteleyn 条件, 规范不变性, 特征多项式, 谱参数化, 核函数与 Fay 恒等式"""

import numpy as np
import pytest

from modules.errors import AnglePole, PeriodicityRequired
from modules.graph import newton_polygon, normalize_polygon
from modules.kasteleyn import (
    build_K,
    calibrate_scale,
    char_poly,
    check_divisor,
    check_fay,
    check_kasteleyn_condition,
    det_K,
    divisor_of_vertex,
    face_weight,
    faydiff_residual,
    gauge_transform,
    kernel_form,
    kernel_g,
    kernel_residual,
    spectral_point,
)
from modules.model_io import build_model, read_model_file
from modules.surface import OvalPoint


def series_theta(z, tau, a=0.0, b=0.0, span=30):
    n = np.arange(-span, span + 1) + a
    return complex(np.sum(np.exp(1j * np.pi * n ** 2 * tau + 2j * np.pi * n * (z + b))))


# ---------- 权重 ----------

def test_entries_match_series_oracle(square_model):
    m = square_model
    tau = m.curve.tau
    a, b = m.odd.delta_p[0], m.odd.delta_pp[0]
    G = m.graph
    for e in range(len(G.edges)):
        ta, tb = G.alpha_beta(e)
        alpha, beta = m.track_lifts[ta][0], m.track_lifts[tb][0]
        fl, a_l, fr, a_r = G.edge_faces[e]
        zl = (m.t + m.abel.at("face", fl, a_l))[0]
        zr = (m.t + m.abel.at("face", fr, a_r))[0]
        expected = series_theta(beta - alpha, tau, a, b) / (series_theta(zl, tau) * series_theta(zr, tau))
        assert abs(m.entries[e] - expected) < 1e-10 * abs(expected)


def test_entries_independent_of_t_lift(square_model):
    shifted = square_model.replace(t=square_model.t + 1.0)
    assert np.allclose(shifted.entries, square_model.entries, rtol=1e-10, atol=0)


@pytest.mark.parametrize("fixture", ["square_model", "hexagonal_model", "square_octagon_model",
                                     "cover_model"])
def test_kasteleyn_condition(fixture, request):
    report = check_kasteleyn_condition(request.getfixturevalue(fixture))
    assert report.passed, report.failed_faces


def test_scrambled_angles_break_kasteleyn(models_dir):
    model = build_model(read_model_file(models_dir / "square_scrambled.json"))
    report = check_kasteleyn_condition(model)
    assert not report.passed
    assert report.failed_faces


def test_gauge_leaves_face_weights_unchanged(square_octagon_model):
    m = square_octagon_model
    gauged = gauge_transform(m, {m.graph.whites[0]: 2.0, m.graph.blacks[1]: 0.5 - 1.5j})
    for face in m.graph.faces:
        a, b = face_weight(m, face), face_weight(gauged, face)
        assert abs(a - b) < 1e-12 * abs(a)
    assert check_kasteleyn_condition(gauged).passed


# ---------- 特征多项式 ----------

def test_char_poly_requires_periodicity(square_model):
    with pytest.raises(PeriodicityRequired):
        char_poly(square_model)


def test_char_poly_newton_polygon(cover_model):
    poly = char_poly(cover_model)
    assert poly.newton_vertices() == normalize_polygon(newton_polygon(cover_model.graph))


def test_char_poly_interpolates_determinant(cover_model, rng):
    poly = char_poly(cover_model)
    z = np.exp(rng.standard_normal(5) + 2j * np.pi * rng.random(5))
    w = np.exp(rng.standard_normal(5) + 2j * np.pi * rng.random(5))
    direct = det_K(cover_model, z, w)
    values = poly.evaluate(z, w)
    assert np.max(np.abs(direct - values) / poly.term_scale(z, w)) < 1e-9


def test_char_poly_conjugation_symmetry(cover_model, rng):
    poly = char_poly(cover_model)
    z = np.exp(0.3 * rng.standard_normal(4) + 2j * np.pi * rng.random(4))
    w = np.exp(0.3 * rng.standard_normal(4) + 2j * np.pi * rng.random(4))
    lhs = np.abs(poly.evaluate(np.conj(z), np.conj(w)))
    rhs = np.abs(poly.evaluate(z, w))
    assert np.max(np.abs(lhs - rhs) / poly.term_scale(z, w)) < 1e-10


def test_build_K_shape(cover_model):
    K = build_K(cover_model, 1.0, 1.0)
    assert K.shape == (len(cover_model.graph.whites), len(cover_model.graph.blacks))


# ---------- 谱参数化 ----------

def test_spectral_points_lie_on_curve(cover_model):
    poly = char_poly(cover_model)
    samples = [OvalPoint(1, s) for s in (0.05, 0.37, 0.81)] + [OvalPoint(0, 0.1), OvalPoint(0, 0.62)]
    samples += [0.3 + 0.2j, 0.77 + 0.41j]
    for p in samples:
        z, w = spectral_point(cover_model, p)
        assert abs(poly.evaluate(z, w)) / poly.term_scale(z, w) < 1e-6


def test_spectral_points_on_ovals_are_real(cover_model):
    lam, mu = cover_model.scale
    for p in (OvalPoint(0, 0.1), OvalPoint(0, 0.62)):
        z, w = spectral_point(cover_model, p)
        assert abs((z / lam).imag) < 1e-10 * abs(z / lam)
        assert abs((w / mu).imag) < 1e-10 * abs(w / mu)


def test_spectral_point_at_angle(cover_model):
    s = next(iter(cover_model.angles.s.values()))
    with pytest.raises(AnglePole):
        spectral_point(cover_model, OvalPoint(0, s))


# ---------- 核函数 ----------

def test_kernel_trivial_identities(square_model):
    u = np.array([0.3 + 0.2j])
    b = ("black", square_model.graph.blacks[0], (0, 0))
    w = ("white", square_model.graph.whites[0], (0, 0))
    assert kernel_g(square_model, w, w, u) == 1.0
    assert abs(kernel_g(square_model, b, w, u) * kernel_g(square_model, w, b, u) - 1.0) < 1e-12


def test_kernel_form_carries_zeta(square_model):
    p = OvalPoint(1, 0.37)
    w = ("white", "w", (0, 0))
    b = ("black", "b", (0, 0))
    zeta = square_model.curve.zeta_at(p, square_model.odd)
    assert kernel_form(square_model, w, w, p) == pytest.approx(zeta)
    assert kernel_form(square_model, b, w, p) == pytest.approx(kernel_g(square_model, b, w, p) * zeta)


@pytest.mark.parametrize("x", [("white", "w", (1, -1)), ("face", 0, (0, 1)), ("black", "b", (2, 0))])
def test_kernel_is_in_right_kernel(square_model, x):
    for p in (OvalPoint(1, 0.37), 0.61 + 0.23j):
        assert abs(kernel_residual(square_model, "w", x, p)) < 1e-9


def test_faydiff_decomposition(square_model):
    assert faydiff_residual(square_model, [OvalPoint(1, 0.37), 0.3 + 0.2j]) < 1e-7


# ---------- Fay 与除子 ----------

def test_fay_identities_genus1(curve):
    residuals = check_fay(curve, samples=40, rng=np.random.default_rng(3))
    assert max(residuals.values()) < 1e-9


def test_vertex_divisor_genus1(cover_model):
    w = cover_model.graph.whites[0]
    points = divisor_of_vertex(cover_model, w)
    assert len(points) == 1 and points[0].oval == 1
    report = check_divisor(cover_model, w)
    assert report["residual"] < 1e-6


@pytest.mark.slow
def test_genus2_model(genus2_model):
    assert check_kasteleyn_condition(genus2_model).passed
    residuals = check_fay(genus2_model, samples=30, rng=np.random.default_rng(5))
    assert max(residuals.values()) < 1e-7
    w = genus2_model.graph.whites[0]
    points = divisor_of_vertex(genus2_model, w)
    assert [p.oval for p in points] == [1, 2]
    assert check_divisor(genus2_model, w)["residual"] < 1e-6


def test_calibrate_scale_residual(cover_model):
    _, _, residual = calibrate_scale(cover_model)
    assert residual < 1e-7
