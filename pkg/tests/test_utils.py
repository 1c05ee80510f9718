"""配置、标定缓存与确定性 JSON 输出"""

import json
import os

import numpy as np
import pytest

from modules import utils


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(utils, "CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("FOCK_DIMERS_CACHE", "1")
    return tmp_path / "cache"


def test_content_hash_is_stable():
    a = utils.content_hash("x", np.array([1.0, 2.0]), {"b": 1, "a": 2.5 + 1j})
    b = utils.content_hash("x", np.array([1.0, 2.0]), {"a": 2.5 + 1j, "b": 1})
    assert a == b
    assert a != utils.content_hash("x", np.array([1.0, 2.0 + 1e-9]), {"a": 2.5 + 1j, "b": 1})


def test_cache_calibration_round_trip(cache_dir):
    calls = []

    @utils.cache_calibration("unit")
    def square(x):
        calls.append(x)
        return x * x

    assert square(3) == 9
    assert square(3) == 9
    assert calls == [3]
    info = utils.get_cache_info()
    assert info["count"] == 1

    utils.clear_cache()
    assert utils.get_cache_info()["count"] == 0
    assert square(3) == 9
    assert calls == [3, 3]


def test_cache_disabled_by_env(cache_dir, monkeypatch):
    monkeypatch.setenv("FOCK_DIMERS_CACHE", "off")
    calls = []

    @utils.cache_calibration("unit_off")
    def ident(x):
        calls.append(x)
        return x

    ident(1)
    ident(1)
    assert calls == [1, 1]
    assert not os.path.exists(cache_dir)


def test_clear_cache_keeps_recent_files(cache_dir):
    cache_dir.mkdir()
    (cache_dir / "fresh.pkl").write_bytes(b"0")
    utils.clear_cache(older_than_hours=1)
    assert utils.get_cache_info()["count"] == 1


def test_clear_cache_by_namespace(cache_dir):
    cache_dir.mkdir()
    (cache_dir / "riemann_constant_aaaaaaaaaaaaaaaaaaaaaaaa.pkl").write_bytes(b"0")
    (cache_dir / "periodic_angles_bbbbbbbbbbbbbbbbbbbbbbbb.pkl").write_bytes(b"0")
    assert utils.get_cache_info()["namespaces"] == {"periodic_angles": 1, "riemann_constant": 1}
    assert utils.clear_cache(namespace="riemann_constant") == 1
    assert utils.get_cache_info()["namespaces"] == {"periodic_angles": 1}


def test_dump_json_is_deterministic(tmp_path):
    obj = {"b": np.float64(0.1), "a": [1 + 2j, np.int64(3)], "c": np.array([True, False])}
    path = tmp_path / "out.json"
    text = utils.dump_json(obj, str(path))
    assert path.read_text() == text + "\n"
    assert json.loads(text) == {"a": [[1.0, 2.0], 3], "b": 0.1, "c": [True, False]}
    assert list(json.loads(text)) == ["a", "b", "c"]


def test_thread_cap_parses_env(monkeypatch):
    monkeypatch.setenv("FOCK_DIMERS_THREADS", "3")
    monkeypatch.setattr(utils, "config_value", lambda *a, **k: None)
    assert utils.thread_cap() == 3
    monkeypatch.setenv("FOCK_DIMERS_THREADS", "many")
    assert utils.thread_cap() == 1


def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setattr(utils, "thread_cap", lambda: 4)
    assert utils.parallel_map(lambda x: x * 2, range(10)) == [2 * x for x in range(10)]


def test_config_value_defaults():
    assert utils.config_value("no_such_section", "key", 42) == 42
    assert utils.config_value("output", "float_digits", 0) == 17


def test_use_config_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        utils.use_config(str(tmp_path / "missing.yaml"))
