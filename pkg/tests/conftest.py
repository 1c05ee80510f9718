"""
公共 fixture: 内置模型只构造一次, 标定缓存关闭以免测试写入 cache/
"""

import os

os.environ.setdefault("FOCK_DIMERS_CACHE", "0")

from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from modules.model_io import build_model, read_model_file  # noqa: E402
from modules.surface import Genus1Curve  # noqa: E402

MODELS_DIR = Path(__file__).parent.parent / "data" / "models"


def _packaged(name: str, calibrate: bool = False):
    return build_model(read_model_file(MODELS_DIR / f"{name}.json"), calibrate=calibrate)


@pytest.fixture(scope="session")
def models_dir() -> Path:
    return MODELS_DIR


@pytest.fixture(scope="session")
def curve():
    return Genus1Curve(1.0)


@pytest.fixture(scope="session")
def square_model():
    return _packaged("square")


@pytest.fixture(scope="session")
def hexagonal_model():
    return _packaged("hexagonal")


@pytest.fixture(scope="session")
def square_octagon_model():
    return _packaged("square_octagon")


@pytest.fixture(scope="session")
def cover_model():
    """正方格的 2 倍覆盖, 周期模型"""
    return _packaged("square_2cover", calibrate=True)


@pytest.fixture(scope="session")
def genus2_model():
    return _packaged("genus2")


@pytest.fixture
def rng():
    return np.random.default_rng(7)
