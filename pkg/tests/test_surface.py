"""M-curve 后端: Abel–Jacobi 提升, 路径提升, 对合与 Riemann 常数"""

import numpy as np
import pytest
from scipy.special import ellipk

from modules.errors import PathAmbiguous, SchemaError
from modules.surface import (
    Genus1Curve,
    HyperellipticCurve,
    OvalPoint,
    backend_from_descriptor,
)
from modules.theta import reduced_real_theta

BRANCH_POINTS = [-2.2, -1.4, -0.5, 0.4, 1.3, 2.4]


@pytest.fixture(scope="module")
def hyperelliptic():
    return HyperellipticCurve(BRANCH_POINTS)


def test_genus1_oval_lifts(curve):
    assert np.allclose(curve.abel_jacobi(OvalPoint(0, 0.3)).lift, [0.3])
    assert np.allclose(curve.abel_jacobi(OvalPoint(1, 0.3)).lift, [0.3 + 0.5j])
    with pytest.raises(ValueError):
        curve.abel_jacobi(OvalPoint(2, 0.1))


def test_genus1_interior_lift_and_involution(curve):
    p = curve.abel_jacobi(0.2 + 0.1j)
    assert p.kind == "interior"
    assert np.allclose(p.lift, [0.2 + 0.1j])
    q = curve.involution(p)
    assert q.sheet == -1
    assert np.allclose(q.lift, [0.2 - 0.1j])


def test_genus1_real_point_is_ambiguous(curve):
    with pytest.raises(PathAmbiguous):
        curve.interior_lift(0.4 + 0j)


def test_genus1_path_lifts(curve):
    path = curve.path_lifts([0.1 + 0.1j, 0.4 + 0.2j, 0.3 + 0.3j])
    assert path.n_segments == 2
    assert np.allclose(path.end_lift, [0.3 + 0.3j])
    mid = path.lift(np.array([1.0]))[0]
    assert np.allclose(mid, [0.4 + 0.2j])


def test_genus1_riemann_constant(curve):
    delta = curve.riemann_constant()
    assert curve.lattice_distance(delta, [0.5 + 0.5j * curve.tau_im]) < 1e-10


def test_genus1_calibration_report(curve):
    report = curve.calibration_report()
    assert report["genus"] == 1
    assert report["a_normalization"] < 1e-14
    assert report["a0_homology"] < 1e-14


def test_lattice_reduction(curve):
    v = np.array([2.3 + 1.2j])
    reduced = curve.reduce_mod_lattice(v)
    assert 0.0 <= reduced.real[0] < 1.0
    assert curve.lattice_distance(v, reduced) < 1e-12


def test_backend_descriptor_round_trip(curve):
    assert backend_from_descriptor(curve.descriptor()).tau_im == curve.tau_im


@pytest.mark.parametrize("desc", [
    {"type": "genus1"},
    {"type": "torus", "tau_im": 1.0},
    {"tau_im": 1.0},
    {"type": "hyperelliptic", "branch_points": [0.0, 1.0, 2.0]},
    {"type": "hyperelliptic", "branch_points": [0.0, 2.0, 1.0, 3.0]},
])
def test_backend_descriptor_errors(desc):
    with pytest.raises(SchemaError):
        backend_from_descriptor(desc)


def test_genus1_rejects_non_positive_tau():
    with pytest.raises(SchemaError):
        Genus1Curve(0.0)


def test_theta_zero_on_oval_is_a_root(curve):
    e = np.array([0.31 + 0.0j])
    s = curve.theta_zero_on_oval(e, 1)
    value = reduced_real_theta(e + curve.oval_lift(1, np.array([s])), curve.period, curve.cfg)
    assert 0.0 <= s < 1.0
    assert abs(np.ravel(value)[0]) < 1e-10


# ---------- 超椭圆 ----------

@pytest.mark.slow
def test_hyperelliptic_genus1_matches_elliptic_integrals():
    # 区间 [λ1,λ2] 与间隙 [λ2,λ3] 上的积分分别为 2K(m), 2K(1−m) 乘同一常数
    lam = [-2.0, -1.0, 1.0, 2.0]
    m = (lam[1] - lam[0]) * (lam[3] - lam[2]) / ((lam[2] - lam[0]) * (lam[3] - lam[1]))
    period = HyperellipticCurve(lam).period
    assert period.g == 1
    assert abs(period.X[0, 0]) < 1e-10
    assert abs(period.Y[0, 0] - ellipk(1.0 - m) / ellipk(m)) < 1e-8


@pytest.mark.slow
def test_hyperelliptic_period_matrix(hyperelliptic):
    report = hyperelliptic.calibration_report()
    assert report["genus"] == 2
    assert report["symmetry"] < 1e-8
    assert report["min_eigenvalue"] > 0
    assert report["a_normalization"] < 1e-8
    assert report["a0_relation"] < 1e-8


@pytest.mark.slow
def test_hyperelliptic_closed_loop_returns_to_start(hyperelliptic):
    path = hyperelliptic.path_lifts([0.1 + 1j, 1.0 + 1j, 1.0 + 2j, 0.1 + 1j])
    assert np.max(np.abs(path.end_lift - path.start_lift)) < 1e-10


@pytest.mark.slow
def test_hyperelliptic_path_independence(hyperelliptic):
    start = hyperelliptic.interior_lift(0.1 + 1j).lift
    direct = hyperelliptic.path_lifts([0.1 + 1j, 1.5 + 0.5j], start_lift=start)
    detour = hyperelliptic.path_lifts([0.1 + 1j, -1.0 + 2j, 1.5 + 0.5j], start_lift=start)
    assert np.max(np.abs(direct.end_lift - detour.end_lift)) < 1e-10


@pytest.mark.slow
def test_hyperelliptic_involution_fixes_ovals(hyperelliptic):
    p = hyperelliptic.abel_jacobi(OvalPoint(1, 0.3))
    q = hyperelliptic.involution(p)
    assert hyperelliptic.lattice_distance(p.lift, q.lift) < 1e-10
