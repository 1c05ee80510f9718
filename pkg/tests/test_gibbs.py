"""Gibbs 测度: 三种相的局部概率, 冻结构型, 柱集, 有限环面的穷举对照"""

import numpy as np
import pytest

from modules.errors import AnglePole, PathAmbiguous, PathCrossesAngles
from modules.gibbs import (
    MagneticField,
    amoeba_sample,
    arc_contains,
    brute_force_matchings,
    brute_force_partition,
    calibrate_liquid_lattice,
    classify_phase,
    cylinder_probability,
    edge_probabilities,
    frozen_configuration,
    inverse_contour,
    inverse_fourier,
    matched_field,
    reference_point,
    slope,
    slope_from_spectral,
    torus_edge_frequencies,
    torus_partition_function,
    white_sums,
)
from modules.graph import interior_points, is_operator_periodic, newton_polygon
from modules.surface import OvalPoint

LIQUID = 0.4 + 0.25j


def height_change(model, u0):
    s, t = slope(model, u0)
    return np.array([t, -s])


def solid_arcs(model):
    """相邻角度之间的弧: (弧中点, 弧的 ω 测度, 终点 track)"""
    ids = sorted(model.angles.s, key=model.angles.s.get)
    arcs = []
    for a, b in zip(ids, ids[1:] + ids[:1]):
        sa, sb = model.angles.s[a], model.angles.s[b]
        la, lb = np.asarray(model.angles.lifts[a]), np.asarray(model.angles.lifts[b])
        if sb <= sa:
            sb, lb = sb + 1.0, lb + 1.0
        arcs.append((OvalPoint(0, (0.5 * (sa + sb)) % 1.0), lb - la, b))
    return arcs


def test_arc_contains_wraps():
    assert arc_contains(0.8, 0.2, 0.9)
    assert arc_contains(0.8, 0.2, 0.1)
    assert not arc_contains(0.8, 0.2, 0.5)
    assert not arc_contains(0.3, 0.6, 0.3)


def test_classify_phase(square_model):
    assert classify_phase(square_model, OvalPoint(0, 0.2)).kind == "solid"
    gas = classify_phase(square_model, OvalPoint(1, 0.2))
    assert gas.kind == "gaseous" and gas.oval == 1
    assert classify_phase(square_model, 0.3 + 0.2j).kind == "liquid"


# ---------- 固相与气相 ----------

@pytest.mark.parametrize("s", [0.0, 0.2, 0.5, 0.7, 0.95])
def test_solid_probabilities_are_indicators(square_model, s):
    probs = edge_probabilities(square_model, OvalPoint(0, s))
    assert set(np.unique(probs)) <= {0.0, 1.0}
    assert all(v == pytest.approx(1.0) for v in white_sums(square_model, probs).values())


def test_solid_point_on_angle(square_model):
    s = next(iter(square_model.angles.s.values()))
    with pytest.raises(AnglePole):
        edge_probabilities(square_model, OvalPoint(0, s))


@pytest.mark.parametrize("fixture", ["square_model", "hexagonal_model", "square_octagon_model"])
def test_gaseous_white_sums(fixture, request):
    model = request.getfixturevalue(fixture)
    probs = edge_probabilities(model, OvalPoint(1, 0.3))
    for total in white_sums(model, probs).values():
        assert total == pytest.approx(1.0, abs=1e-10)


def test_gaseous_probabilities_constant_along_oval(square_octagon_model):
    a = edge_probabilities(square_octagon_model, OvalPoint(1, 0.2))
    b = edge_probabilities(square_octagon_model, OvalPoint(1, 0.7))
    assert np.allclose(a, b, atol=1e-12)


def test_frozen_configuration_is_perfect_matching(square_octagon_model):
    G = square_octagon_model.graph
    frozen = frozen_configuration(square_octagon_model)
    assert sorted(G.edges[e].white for e in frozen) == sorted(G.whites)
    assert sorted(G.edges[e].black for e in frozen) == sorted(G.blacks)


def test_frozen_configuration_needs_solid_point(square_model):
    with pytest.raises(PathAmbiguous):
        frozen_configuration(square_model, OvalPoint(1, 0.4))


def test_slope_of_reference_point_vanishes(square_octagon_model):
    s, t = slope(square_octagon_model, reference_point(square_octagon_model))
    assert (s, t) == (0.0, 0.0)


# ---------- 柱集 ----------

def test_single_edge_cylinder_is_closed_form(square_model):
    result = cylinder_probability(square_model, OvalPoint(1, 0.3), [0])
    local = edge_probabilities(square_model, OvalPoint(1, 0.3))[0]
    assert result.provenance == "ClosedForm"
    assert result.value == pytest.approx(min(max(local, 0.0), 1.0))


def test_cylinder_with_shared_white_is_empty(square_octagon_model):
    G = square_octagon_model.graph
    e1, e2 = G.rotations[G.whites[0]][:2]
    result = cylinder_probability(square_octagon_model, OvalPoint(0, 0.2), [e1, e2])
    assert result.value == 0.0


# ---------- 有限环面 ----------

def test_brute_force_matchings_are_perfect(cover_model):
    G = cover_model.graph
    matchings = brute_force_matchings(G)
    assert matchings
    for M in matchings:
        assert len({G.edges[e].black for e in M}) == len(G.blacks)


@pytest.mark.parametrize("B", [None, MagneticField(0.3, -0.2)])
def test_torus_partition_matches_enumeration(cover_model, B):
    Z_brute, _ = brute_force_partition(cover_model, B)
    assert torus_partition_function(cover_model, 1, B) == pytest.approx(Z_brute, rel=1e-9)


def test_torus_edge_frequencies_match_enumeration(cover_model):
    _, freq_brute = brute_force_partition(cover_model)
    freq, proj = torus_edge_frequencies(cover_model, 1)
    assert np.allclose(freq, freq_brute[np.asarray(proj)], atol=1e-9)


# ---------- amoeba 与 Fourier 路线 ----------

def test_amoeba_far_field_is_outside(cover_model):
    sample = amoeba_sample(cover_model, MagneticField(8.0, 0.3))
    assert not sample.inside
    assert len(sample.counts) == 1


def test_amoeba_liquid_field_is_inside(cover_model):
    assert amoeba_sample(cover_model, matched_field(cover_model, 0.4 + 0.25j)).inside


@pytest.mark.slow
def test_fourier_far_field_is_frozen(cover_model):
    probs = edge_probabilities(cover_model, MagneticField(8.0, 0.3))
    assert np.all(np.minimum(np.abs(probs), np.abs(1.0 - probs)) < 1e-6)
    for total in white_sums(cover_model, probs).values():
        assert total == pytest.approx(1.0, abs=1e-8)


# ---------- 液相 ----------

def test_liquid_white_sums(cover_model):
    probs = edge_probabilities(cover_model, LIQUID)
    for total in white_sums(cover_model, probs).values():
        assert total == pytest.approx(1.0, abs=1e-8)


def test_liquid_lattice_is_stable(cover_model):
    edge_probabilities(cover_model, LIQUID)
    cached = cover_model._cache["liquid_lattice"]
    assert cached.shape == (1,)
    assert np.array_equal(calibrate_liquid_lattice(cover_model, 0.3 + 0.1j), cached)


def test_liquid_lattice_needs_liquid_point(cover_model):
    with pytest.raises(PathAmbiguous):
        calibrate_liquid_lattice(cover_model, OvalPoint(1, 0.3))


def test_auto_route_inside_amoeba_matches_residue(cover_model):
    B = matched_field(cover_model, LIQUID)
    edge = cover_model.graph.edges[0]
    b, w = (edge.black, edge.offset), (edge.white, (0, 0))
    auto = inverse_fourier(cover_model, B, b, w)
    residue = inverse_fourier(cover_model, B, b, w, method="residue")
    assert auto.value == residue.value


@pytest.mark.slow
@pytest.mark.parametrize("u0", [LIQUID, 0.7 + 0.4j])
def test_liquid_routes_agree(cover_model, u0):
    local = edge_probabilities(cover_model, u0)
    fourier = edge_probabilities(cover_model, matched_field(cover_model, u0))
    assert np.max(np.abs(local - fourier)) < 1e-6
    for e, edge in enumerate(cover_model.graph.edges):
        A = inverse_contour(cover_model, u0, (edge.black, edge.offset), (edge.white, (0, 0)))
        assert float(np.real(cover_model.entries[e] * A.value)) == pytest.approx(local[e], abs=1e-6)


@pytest.mark.slow
def test_gaseous_routes_agree(cover_model):
    u0 = OvalPoint(1, 0.3)
    local = edge_probabilities(cover_model, u0)
    fourier = edge_probabilities(cover_model, matched_field(cover_model, u0), order=128)
    assert np.max(np.abs(local - fourier)) < 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("u0", [LIQUID, OvalPoint(1, 0.3)])
def test_fourier_inverse_is_right_inverse(cover_model, u0):
    G = cover_model.graph
    B = matched_field(cover_model, u0)
    for w in G.whites:
        for w2 in G.whites:
            total = sum(
                cover_model.entries[e]
                * inverse_fourier(cover_model, B, (G.edges[e].black, G.edges[e].offset), (w2, (0, 0)),
                                  order=128).value
                for e in G.rotations[w]
            )
            assert abs(total - (1.0 if w == w2 else 0.0)) < 1e-8


# ---------- 斜率 ----------

def test_solid_slopes_are_polygon_points(cover_model):
    arcs = solid_arcs(cover_model)
    heights = [height_change(cover_model, u) for u, _, _ in arcs]
    homology = {t.id: np.asarray(t.homology, dtype=float) for t in cover_model.graph.tracks}
    for h in heights:
        assert np.array_equal(h, np.round(h))
    for i, (_, _, track) in enumerate(arcs):
        step = heights[(i + 1) % len(arcs)] - heights[i]
        assert np.linalg.norm(step) == pytest.approx(np.linalg.norm(homology[track]))
    assert len({tuple(h) for h in heights}) == len(arcs)


def test_gaseous_slope_averages_solid_slopes(cover_model):
    arcs = solid_arcs(cover_model)
    weights = np.array([m[0] for _, m, _ in arcs])
    assert np.all(weights > 0) and weights.sum() == pytest.approx(1.0)
    solid = np.array([height_change(cover_model, u) for u, _, _ in arcs])
    gas = height_change(cover_model, OvalPoint(1, 0.4))
    assert np.allclose(gas, weights @ solid, atol=1e-8)
    assert np.allclose(gas, np.round(gas), atol=1e-6)


def test_spectral_slope_of_gaseous_point_is_integral(cover_model):
    st = np.array(slope_from_spectral(cover_model, OvalPoint(1, 0.4)))
    assert np.allclose(st, np.round(st), atol=1e-6)
    assert np.all(np.isfinite(slope_from_spectral(cover_model, LIQUID)))


def test_spectral_slope_of_solid_point(cover_model):
    with pytest.raises(PathCrossesAngles):
        slope_from_spectral(cover_model, OvalPoint(0, 0.2))


@pytest.mark.slow
def test_genus2_gaseous_slopes(genus2_model):
    G = genus2_model.graph
    periodic, nearest = is_operator_periodic(G, genus2_model.angles)
    assert periodic
    inner = interior_points(newton_polygon(G, genus2_model.angles.s_order(G)))
    assert sorted(nearest) == sorted(tuple(p) for p in inner)

    arcs = solid_arcs(genus2_model)
    solid = np.array([height_change(genus2_model, u) for u, _, _ in arcs])
    gas = []
    for k in (1, 2):
        weights = np.array([m[k - 1] for _, m, _ in arcs])
        assert np.all(weights > 0)
        h = height_change(genus2_model, OvalPoint(k, 0.4))
        assert np.allclose(h, weights @ solid, atol=1e-8)
        assert np.allclose(h, np.round(h), atol=1e-6)
        gas.append(tuple(np.round(h).astype(int)))
    assert gas[0] != gas[1]
