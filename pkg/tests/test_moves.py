"""局部移动: 图改写, 权重重算与不变量检查"""

import json

import numpy as np
import pytest

from modules.errors import PatternMismatch, SchemaError
from modules.kasteleyn import check_kasteleyn_condition
from modules.moves import (
    MoveSpec,
    check_move_invariance,
    expand_two_valent,
    load_script,
    run_script,
    shrink_two_valent,
    spider_move,
)


def _cyclic_equal(a, b) -> bool:
    return len(a) == len(b) and any(list(a[k:]) + list(a[:k]) == list(b) for k in range(len(a)))


def _first_face(model, degree):
    return next(f.index for f in model.graph.faces if f.degree == degree)


# ---------- MoveSpec 与脚本 ----------

@pytest.mark.parametrize("kind, expected", [("Shrink2Valent", "shrink"), ("EXPAND", "expand"),
                                            ("Spider", "spider")])
def test_move_kind_aliases(kind, expected):
    spec = MoveSpec(kind, vertex="w", face=0, split=(0,))
    assert spec.kind == expected


@pytest.mark.parametrize("data", [{"kind": "flip", "vertex": "w"}, {"kind": "shrink"},
                                  {"kind": "spider"}, {"vertex": "w"}])
def test_move_spec_rejects_bad_json(data):
    with pytest.raises(SchemaError):
        MoveSpec.from_json(data)


def test_load_script_from_file(tmp_path):
    path = tmp_path / "moves.json"
    path.write_text(json.dumps([{"kind": "spider", "face": 2},
                                {"kind": "expand", "vertex": "w", "split": [0, 1]}]))
    specs = load_script(path)
    assert [s.kind for s in specs] == ["spider", "expand"]
    assert specs[1].split == (0, 1)
    assert specs[0].to_json() == {"kind": "spider", "face": 2}


def test_load_script_requires_array():
    with pytest.raises(SchemaError):
        load_script({"kind": "spider", "face": 0})


# ---------- 2 价顶点 ----------

def test_expand_then_shrink_restores_model(square_model):
    rot = square_model.graph.rotations["w"]
    expanded = expand_two_valent(square_model, "w", rot[:2])
    assert len(expanded.graph.whites) == 2 and len(expanded.graph.edges) == 6
    mid = next(v for v, r in expanded.graph.rotations.items() if len(r) == 2)

    restored = shrink_two_valent(expanded, mid)
    assert restored.graph.whites == ["w"] and restored.graph.blacks == ["b"]
    assert _cyclic_equal(restored.graph.rotations["w"], rot)
    assert np.allclose(restored.entries, square_model.entries, rtol=1e-10, atol=0)


def test_expand_invariants(square_model):
    rot = square_model.graph.rotations["w"]
    report = check_move_invariance(square_model, MoveSpec("expand", vertex="w", split=tuple(rot[:2])))
    assert report.passed, report.to_json()
    assert report.checks["two_valent"] < 1e-8


def test_shrink_requires_two_valent(square_model):
    with pytest.raises(PatternMismatch):
        shrink_two_valent(square_model, "b")


def test_expand_requires_contiguous_split(square_model):
    rot = square_model.graph.rotations["w"]
    with pytest.raises(PatternMismatch):
        expand_two_valent(square_model, "w", [rot[0], rot[2]])


def test_expand_unknown_vertex(square_model):
    with pytest.raises(PatternMismatch):
        expand_two_valent(square_model, "nowhere", [0])


# ---------- spider ----------

def test_spider_move_counts(square_octagon_model):
    face = _first_face(square_octagon_model, 4)
    new = spider_move(square_octagon_model, face)
    G = new.graph
    assert len(G.whites) + len(G.blacks) == 12
    assert len(G.edges) == 16
    assert check_kasteleyn_condition(new).passed


@pytest.mark.slow
def test_spider_invariants(square_octagon_model):
    face = _first_face(square_octagon_model, 4)
    report = check_move_invariance(square_octagon_model, MoveSpec("spider", face=face))
    assert report.passed, report.to_json()
    assert report.checks["fay_fock"] < 1e-8
    assert report.checks["char_poly"] < 1e-8


def test_spider_requires_quadrilateral(square_octagon_model):
    with pytest.raises(PatternMismatch):
        spider_move(square_octagon_model, _first_face(square_octagon_model, 8))


def test_run_empty_script_is_identity(square_model):
    model, reports = run_script(square_model, [])
    assert model is square_model and reports == []
