"""命令行入口: 退出码与输出的确定性"""

import json

import numpy as np
import pandas as pd
import pytest

import app
from app import main, parse_edges, parse_grid, parse_phase
from modules import utils
from modules.errors import SchemaError
from modules.gibbs import MagneticField
from modules.surface import OvalPoint


@pytest.fixture
def model_path(models_dir):
    return lambda name: str(models_dir / f"{name}.json")


def test_check_passes(model_path, tmp_path):
    out = tmp_path / "check.json"
    assert main(["check", model_path("square"), "--samples", "20", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["passed"] and report["failures"] == []
    assert report["kasteleyn"]["passed"]


def test_check_scrambled_fails(model_path, tmp_path):
    out = tmp_path / "check.json"
    assert main(["check", model_path("square_scrambled"), "--samples", "10", "--out", str(out)]) == 1
    report = json.loads(out.read_text())
    assert "angles" in report["failures"]


def test_missing_field_is_input_error(models_dir, tmp_path):
    data = json.loads((models_dir / "square.json").read_text())
    del data["t"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(data))
    assert main(["check", str(path)]) == 2


def test_invalid_json_is_input_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"graph\": ")
    assert main(["charpoly", str(path)]) == 2


def test_charpoly_requires_periodicity(model_path):
    assert main(["charpoly", model_path("square")]) == 2


def test_charpoly_is_deterministic(model_path, tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["charpoly", model_path("square_2cover"), "--out", str(first)]) == 0
    assert main(["charpoly", model_path("square_2cover"), "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    report = json.loads(first.read_text())
    assert report["newton_polygon"] == report["graph_newton_polygon"]


def test_prob_solid(model_path, tmp_path):
    out = tmp_path / "prob.json"
    assert main(["prob", model_path("square"), "--phase", "solid:0.2", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert sorted(e["value"] for e in report["edges"]) == [0.0, 0.0, 0.0, 1.0]
    assert report["white_sums"] == {"w": 1.0}


def test_scan_slope_csv(model_path, tmp_path):
    out = tmp_path / "slope.csv"
    assert main(["scan", model_path("square"), "--what", "slope", "--grid", "4", "--out", str(out)]) == 0
    df = pd.read_csv(out)
    assert list(df.columns) == ["oval", "s", "slope_s", "slope_t", "spectral_s", "spectral_t"]
    assert len(df) == 8


def test_empty_move_script_keeps_model(model_path, tmp_path):
    script = tmp_path / "script.json"
    script.write_text("[]")
    out = tmp_path / "moved.json"
    assert main(["move", model_path("square"), str(script), "--out", str(out)]) == 0
    report = json.loads(out.with_suffix(".report.json").read_text())
    check = tmp_path / "check.json"
    main(["check", model_path("square"), "--samples", "5", "--out", str(check)])
    assert report["output_hash"] == json.loads(check.read_text())["model_hash"]
    assert report["steps"] == [] and report["passed"]


def test_missing_config_file(model_path, tmp_path):
    assert main(["check", model_path("square"), "--config", str(tmp_path / "nope.yaml")]) == 2


def test_unclassified_numeric_failure_exits_3(model_path, monkeypatch, capsys):
    def broken(model):
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setattr(app, "char_poly", broken)
    assert main(["charpoly", model_path("square_2cover")]) == 3
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "NumericError"
    assert "Singular matrix" in error["message"]


def test_prob_field_passes_order(model_path, tmp_path, monkeypatch):
    seen = {}

    def fake(model, phase, order=None):
        seen["order"] = order
        return np.zeros(len(model.graph.edges))

    monkeypatch.setattr(app, "edge_probabilities", fake)
    out = tmp_path / "prob.json"
    argv = ["prob", model_path("square_2cover"), "--phase", "field:3,3", "--order", "24", "--out", str(out)]
    assert main(argv) == 0
    assert seen["order"] == 24
    assert all(e["provenance"] == "Fourier" for e in json.loads(out.read_text())["edges"])


def test_cache_info_and_clear(tmp_path, monkeypatch):
    cache_dir = tmp_path / "cache"
    cache_dir.mkdir()
    monkeypatch.setattr(utils, "CACHE_DIR", str(cache_dir))
    (cache_dir / "riemann_constant_0123456789abcdef01234567.pkl").write_bytes(b"0")
    (cache_dir / "periodic_angles_0123456789abcdef01234567.pkl").write_bytes(b"0")
    info = tmp_path / "info.json"
    assert main(["cache", "info", "--out", str(info)]) == 0
    assert json.loads(info.read_text())["namespaces"] == {"periodic_angles": 1, "riemann_constant": 1}

    cleared = tmp_path / "clear.json"
    assert main(["cache", "clear", "--namespace", "riemann_constant", "--out", str(cleared)]) == 0
    report = json.loads(cleared.read_text())
    assert report["removed"] == 1 and report["count"] == 1
    assert [p.name for p in cache_dir.iterdir()] == ["periodic_angles_0123456789abcdef01234567.pkl"]


# ---------- 参数解析 ----------

def test_parse_phase(square_model):
    assert parse_phase("gas:1:0.4", square_model) == OvalPoint(1, 0.4)
    assert parse_phase("liquid:0.3,0.2", square_model) == complex(0.3, 0.2)
    assert parse_phase("field:1,-2", square_model) == MagneticField(1.0, -2.0)
    assert parse_phase(None, square_model).oval == 0


@pytest.mark.parametrize("text", ["gas:1", "liquid:0.3", "plasma:1", "solid:x"])
def test_parse_phase_errors(square_model, text):
    with pytest.raises(SchemaError):
        parse_phase(text, square_model)


def test_parse_edges():
    assert parse_edges(None, 3) == [0, 1, 2]
    assert parse_edges("0,2", 3) == [0, 2]
    assert parse_edges("0@1:-1;2", 3) == [(0, (1, -1)), 2]
    with pytest.raises(SchemaError):
        parse_edges("5", 3)
    with pytest.raises(SchemaError):
        parse_edges("a,b", 3)


def test_parse_grid():
    xs, ys = parse_grid("-1:1:3,0:2:5")
    assert list(xs) == [-1.0, 0.0, 1.0] and len(ys) == 5
    with pytest.raises(SchemaError):
        parse_grid("-1:1:3")
    with pytest.raises(SchemaError):
        parse_grid("a:b:c,0:1:2")


def test_packaged_model_by_name(capsys):
    assert main(["check", "hexagonal", "--samples", "5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["model"] == "hexagonal"
