#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Calibrate Packaged Models
Warm the calibration cache and refresh the calibration section of every model in data/models
"""

import sys
import logging
from pathlib import Path

from tqdm import tqdm

# Add project root to sys.path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from modules.errors import FockDimerError  # noqa: E402
from modules.gibbs import liquid_lattice  # noqa: E402
from modules.model_io import load_model, save_model_file  # noqa: E402
from modules.utils import config_value  # noqa: E402

logger = logging.getLogger(__name__)


def _calibrate_liquid(model, data: dict):
    """周期模型在配置的液相点处标定格点修正, 写入 calibration 段"""
    cal = data.get("calibration")
    if not cal or "liquid_lattice" in cal:
        return
    x, y = config_value("gibbs", "liquid_point", [0.4, 0.25])
    try:
        cal["liquid_lattice"] = liquid_lattice(model, complex(x, y)).tolist()
    except FockDimerError as e:
        logger.warning(f"⚠️ 液相格点修正未写入: {type(e).__name__}: {e}")


def calibrate_all(models_dir: Path) -> int:
    """
    逐个加载模型 (触发 Riemann 常数、周期角度与谱缩放标定) 并写回 calibration 段

    Returns:
        失败的模型个数
    """
    files = sorted(models_dir.glob("*.json"))
    if not files:
        logger.warning(f"⚠️ {models_dir} 下没有模型文件")
        return 0

    failures = 0
    for path in tqdm(files, desc="标定模型"):
        try:
            model, data = load_model(path)
        except FockDimerError as e:
            logger.error(f"❌ {path.name}: {type(e).__name__}: {e}")
            failures += 1
            continue
        _calibrate_liquid(model, data)
        if "calibration" in data:
            save_model_file(data, path)
        logger.info(f"✅ {path.name}: {model!r}")
    return failures


if __name__ == "__main__":
    base = Path(config_value("output", "models_dir", "./data/models"))
    if not base.is_absolute():
        base = project_root / base
    sys.exit(1 if calibrate_all(base) else 0)
