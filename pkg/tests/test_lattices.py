"""内置图案、超格覆盖与周期角度求解"""

import numpy as np
import pytest

from modules.errors import DegenerateAngles, SchemaError
from modules.graph import (
    angle_map_from_json,
    check_minimal,
    is_operator_periodic,
    validate_angle_map,
)
from modules.lattices import (
    MOTIFS,
    coset_representatives,
    lift_angles_to_cover,
    motif_graph,
    periodic_angles,
    superlattice,
)


def test_unknown_motif():
    with pytest.raises(SchemaError):
        motif_graph("kagome")


def test_motif_rotations_cover_all_edges():
    for name in MOTIFS:
        G = motif_graph(name)
        incident = sorted(e for rot in G.rotations.values() for e in rot)
        assert incident == sorted(list(range(len(G.edges))) * 2)


@pytest.mark.parametrize("S, count", [
    ([[1, -1], [1, 1]], 2),
    ([[2, 0], [0, 2]], 4),
    ([[1, -1], [2, 1]], 3),
])
def test_coset_representatives(S, count):
    reps = coset_representatives(S)
    assert len(reps) == count
    assert (0, 0) in reps


def test_degenerate_superlattice():
    with pytest.raises(SchemaError):
        coset_representatives([[1, 2], [2, 4]])
    with pytest.raises(SchemaError):
        coset_representatives([[1, 0, 0], [0, 1, 0]])


def test_cover_sizes_and_projection():
    base = motif_graph("square_octagon")
    cover, proj = superlattice(base, [[2, 0], [0, 2]])
    assert len(cover.whites) == 4 * len(base.whites)
    assert len(cover.edges) == 4 * len(base.edges)
    assert len(proj) == len(cover.edges)
    assert sorted(set(proj)) == list(range(len(base.edges)))
    assert check_minimal(cover).minimal


def test_lifted_angles_stay_valid(curve):
    base = motif_graph("square")
    angles = angle_map_from_json(base, {"order": "direction", "s": [0.1, 0.35, 0.6, 0.85]}, curve)
    cover, proj = superlattice(base, [[1, -1], [1, 1]])
    lifted = lift_angles_to_cover(base, cover, proj, angles)
    assert set(lifted.s) == {t.id for t in cover.tracks}
    assert set(lifted.s.values()) <= set(angles.s.values())
    assert validate_angle_map(cover, lifted)[0]


def test_periodic_angles_genus1(curve):
    cover, _ = superlattice(motif_graph("square"), [[1, -1], [1, 1]])
    angles = periodic_angles(cover, curve)
    periodic, nearest = is_operator_periodic(cover, angles)
    assert periodic
    assert len(nearest) == 1
    assert validate_angle_map(cover, angles)[0]


def test_periodic_angles_square_octagon(curve):
    G = motif_graph("square_octagon")
    angles = periodic_angles(G, curve)
    assert is_operator_periodic(G, angles)[0]
    s = np.array([angles.s[t.id] for t in G.tracks])
    assert np.all(np.isfinite(s))


def test_no_interior_point_means_no_periodic_angles(curve):
    with pytest.raises(DegenerateAngles):
        periodic_angles(motif_graph("square"), curve)


def test_wrong_number_of_targets(curve):
    cover, _ = superlattice(motif_graph("square"), [[1, -1], [1, 1]])
    with pytest.raises(SchemaError):
        periodic_angles(cover, curve, [[0, 1], [1, 1]])
