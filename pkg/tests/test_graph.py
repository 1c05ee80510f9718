"""周期二部图: 面, train-track, 极小性, Newton 多边形, 角度校验与 Abel 映射"""

import math

import numpy as np
import pytest

from modules.errors import EmbeddingInvalid, SchemaError
from modules.graph import (
    Edge,
    PeriodicBipartiteGraph,
    angle_map_from_json,
    check_minimal,
    discrete_abel_map,
    graph_from_json,
    graph_to_json,
    interior_points,
    is_operator_periodic,
    make_angle_map,
    newton_polygon,
    normalize_polygon,
    polygon_area,
    tracks_by_direction,
    validate_angle_map,
)
from modules.lattices import motif_graph, superlattice


@pytest.fixture(scope="module")
def square():
    return motif_graph("square")


@pytest.fixture(scope="module")
def hexagonal():
    return motif_graph("hexagonal")


def test_square_faces_and_euler(square):
    assert len(square.faces) == 2
    assert all(f.degree == 4 for f in square.faces)
    assert len(square.vertices) - len(square.edges) + len(square.faces) == 0


def test_hexagonal_faces(hexagonal):
    assert [f.degree for f in hexagonal.faces] == [6]


def test_square_octagon_faces():
    G = motif_graph("square_octagon")
    degrees = sorted(f.degree for f in G.faces)
    assert degrees == [4, 4, 8, 8]


def test_every_edge_carries_two_tracks(square):
    seen = {}
    for track in square.tracks:
        for state in track.states:
            seen[state] = track.id
    assert len(seen) == 2 * len(square.edges)
    assert np.sum([t.homology for t in square.tracks], axis=0).tolist() == [0, 0]


def test_track_homology_is_primitive(square, hexagonal):
    for G in (square, hexagonal):
        for t in G.tracks:
            assert math.gcd(abs(t.homology[0]), abs(t.homology[1])) == 1


@pytest.mark.parametrize("name", ["square", "hexagonal", "square_octagon"])
def test_motifs_are_minimal(name):
    assert check_minimal(motif_graph(name)).minimal


def test_doubled_edge_is_not_minimal(square):
    # 在边 0 旁边加一条平行边, 两者围成 2 边形面
    edges = list(square.edges) + [square.edges[0]]
    rotations = {v: list(r) for v, r in square.rotations.items()}
    w, b = square.edges[0].white, square.edges[0].black
    rotations[w].insert(rotations[w].index(0), 4)
    rotations[b].insert(rotations[b].index(0) + 1, 4)
    G = PeriodicBipartiteGraph(square.whites, square.blacks, edges, rotations)
    assert sorted(f.degree for f in G.faces)[0] == 2
    assert not check_minimal(G).minimal


def test_newton_polygon_square(square):
    polygon = newton_polygon(square)
    assert len(polygon) == 4
    assert abs(polygon_area(polygon)) == pytest.approx(1.0)
    assert interior_points(polygon) == []


def test_newton_polygon_of_cover(square):
    cover, _ = superlattice(square, [[1, -1], [1, 1]])
    polygon = newton_polygon(cover)
    assert abs(polygon_area(polygon)) == pytest.approx(2.0)
    assert len(interior_points(polygon)) == 1


def test_newton_polygon_hexagonal(hexagonal):
    polygon = newton_polygon(hexagonal)
    assert abs(polygon_area(polygon)) == pytest.approx(0.5)
    assert interior_points(polygon) == []


def test_normalize_polygon_is_translation_invariant(square):
    polygon = newton_polygon(square)
    moved = [(x + 3, y - 2) for x, y in polygon]
    assert normalize_polygon(polygon) == normalize_polygon(moved)


def test_tracks_sorted_by_direction(square):
    order = tracks_by_direction(square)
    dirs = [square.tracks[i].direction for i in order]
    assert dirs == sorted(dirs)


def test_angle_map_validation(square, curve):
    good = angle_map_from_json(square, {"order": "direction", "s": [0.1, 0.35, 0.6, 0.85]}, curve)
    assert validate_angle_map(square, good)[0]
    bad = angle_map_from_json(square, {"order": "direction", "s": [0.1, 0.6, 0.35, 0.85]}, curve)
    ok, problems = validate_angle_map(square, bad)
    assert not ok and problems


def test_angle_map_missing_track(square, curve):
    with pytest.raises(SchemaError):
        make_angle_map(square, {"T0": 0.1}, curve)
    with pytest.raises(SchemaError):
        angle_map_from_json(square, {"order": "direction", "s": [0.1, 0.2]}, curve)


def test_abel_map_relations(square, curve):
    angles = angle_map_from_json(square, {"order": "direction", "s": [0.1, 0.35, 0.6, 0.85]}, curve)
    abel = discrete_abel_map(square, angles)
    assert abel.residual < 1e-12
    assert abel.degree("white") == -1 and abel.degree("black") == 1
    # 每条边: d(b) − d(w) = α + β (模格平移)
    for e, edge in enumerate(square.edges):
        ta, tb = square.alpha_beta(e)
        lhs = abel.at("black", edge.black, edge.offset) - abel.at("white", edge.white)
        rhs = angles.lift_of(square, ta) + angles.lift_of(square, tb)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_one_vertex_square_is_not_periodic(square, curve):
    angles = angle_map_from_json(square, {"order": "direction", "s": [0.1, 0.35, 0.6, 0.85]}, curve)
    periodic, _ = is_operator_periodic(square, angles)
    assert not periodic


def test_json_round_trip_keeps_faces(square):
    again = graph_from_json(graph_to_json(square))
    assert graph_to_json(again) == graph_to_json(square)
    assert len(again.faces) == len(square.faces)


def test_schema_errors():
    with pytest.raises(SchemaError):
        PeriodicBipartiteGraph(["w"], ["b"], [Edge("w", "b", (0, 0))], {"w": [0], "b": [0]})
    with pytest.raises(SchemaError):
        PeriodicBipartiteGraph(["w"], ["b"], [Edge("w", "x", (0, 0)), Edge("w", "b", (1, 0))],
                               {"w": [0, 1], "b": [1]})
    with pytest.raises(SchemaError):
        graph_from_json({"whites": ["w"], "blacks": ["b"]})


def test_planar_embedding_rejected():
    # 两条同格平移的边: 面绕行位移为 0, 但 Euler 示性数为 2
    edges = [Edge("w", "b", (0, 0)), Edge("w", "b", (0, 0))]
    with pytest.raises(EmbeddingInvalid):
        PeriodicBipartiteGraph(["w"], ["b"], edges, {"w": [0, 1], "b": [0, 1]})
