"""
模型文件读写与报告结构

模型文件 (JSON):

    {
      "name": "square_octagon",
      "graph": {"motif": "square_octagon", "superlattice": [[1, 0], [0, 1]]}
               或内联 {"whites": [...], "blacks": [...], "edges": [...], "rotations": {...}},
      "backend": {"type": "genus1", "tau_im": 1.2},
      "angles": {"order": "direction", "s": [...]}
                或 {"tracks": {"T0": {"s": 0.1}, ...}}
                或 {"periodic": true, "targets": [[1, 1]]},
      "t": [0.3],
      "validate": true,
      "calibration": {"model_hash": "...", "scale": [[1, 0], [1, 0]], "residual": 0.0,
                      "liquid_lattice": [0]}
    }

calibration 段以模型内容哈希为键, 哈希不一致时视为过期并重新标定。
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, TypedDict, Union

import numpy as np

from .errors import FockDimerError, PeriodicityRequired, SchemaError
from .graph import (
    PeriodicBipartiteGraph,
    angle_map_from_json,
    graph_from_json,
    graph_to_json,
    is_operator_periodic,
)
from .kasteleyn import FockModel, calibrate_scale
from .lattices import motif_graph, periodic_angles, superlattice
from .surface import MCurve, backend_from_descriptor
from .utils import config_value, content_hash, dump_json, to_jsonable

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("graph", "backend", "angles", "t")


# ============= 报告结构 =============

class CheckReport(TypedDict):
    """check 子命令的报告"""
    model: str  # 模型名
    model_hash: str  # 模型内容哈希
    seed: int  # Fay 采样种子
    tol: float  # Kasteleyn 相位容差
    minimal: Dict  # 极小性报告
    angles_valid: bool  # 角度映射是否在 X_G 中
    angle_problems: List[str]  # X_G 校验问题
    periodic: bool  # φ(α) 是否为整点
    phi_points: List[List[int]]  # φ 的最近整点
    kasteleyn: Dict  # 逐面 Kasteleyn 相位
    fay: Dict[str, float]  # Fay 残差
    passed: bool  # 是否全部通过
    failures: List[str]  # 未通过的项目
    created_at: str  # 生成时间


class CharPolyReport(TypedDict):
    """charpoly 子命令的报告"""
    model: str
    model_hash: str
    coefficients: List[Dict]  # [{"i": .., "j": .., "re": .., "im": ..}]
    newton_polygon: List[List[int]]  # N(P) 的顶点 (逆时针)
    graph_newton_polygon: List[List[int]]  # N(G) 的顶点 (平移到同一锚点)
    scale: List  # 谱参数化常数 (λ, μ)


class ProbabilityReport(TypedDict):
    """prob 子命令的报告"""
    model: str
    model_hash: str
    phase: Dict  # 相点描述
    edges: List[Dict]  # 逐边概率与来源
    white_sums: Dict[str, float]  # 每个白点的概率和
    cylinder: Optional[Dict]  # 多边柱集概率


class MoveRunReport(TypedDict):
    """move 子命令的报告"""
    model: str
    script: List[Dict]  # 执行的移动
    steps: List[Dict]  # 每一步的不变量报告
    passed: bool
    output: Optional[str]  # 新模型文件路径
    output_hash: str  # 新模型内容哈希


def _now() -> str:
    return datetime.now().isoformat(timespec="seconds")


def create_check_report(name: str, model_hash: str, seed: int, tol: float) -> CheckReport:
    """
    创建空的检查报告, 由 check 子命令逐项填写

    Args:
        name: 模型名
        model_hash: 模型内容哈希
        seed: Fay 采样种子 (记录在报告中)
        tol: Kasteleyn 相位容差

    Returns:
        初始化的 CheckReport
    """
    return CheckReport(
        model=name,
        model_hash=model_hash,
        seed=int(seed),
        tol=float(tol),
        minimal={},
        angles_valid=False,
        angle_problems=[],
        periodic=False,
        phi_points=[],
        kasteleyn={},
        fay={},
        passed=False,
        failures=[],
        created_at=_now(),
    )


def create_charpoly_report(name: str, model_hash: str, poly, graph_polygon: List,
                           scale: Tuple[complex, complex]) -> CharPolyReport:
    coefficients = [
        {"i": int(i), "j": int(j), "re": float(c.real), "im": float(c.imag)}
        for (i, j), c in sorted(poly.coeffs.items())
    ]
    return CharPolyReport(
        model=name,
        model_hash=model_hash,
        coefficients=coefficients,
        newton_polygon=[list(p) for p in poly.newton_vertices()],
        graph_newton_polygon=[list(p) for p in graph_polygon],
        scale=[complex(scale[0]), complex(scale[1])],
    )


def create_probability_report(name: str, model_hash: str, phase: Dict) -> ProbabilityReport:
    return ProbabilityReport(
        model=name,
        model_hash=model_hash,
        phase=phase,
        edges=[],
        white_sums={},
        cylinder=None,
    )


def create_move_report(name: str, script: List[Dict]) -> MoveRunReport:
    return MoveRunReport(
        model=name,
        script=script,
        steps=[],
        passed=True,
        output=None,
        output_hash="",
    )


# ============= 读取 =============

def read_model_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    读取模型 JSON 并做字段校验

    Raises:
        SchemaError: 文件不可读、JSON 语法错误 (带行号) 或缺少必需字段
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"❌ 无法读取模型文件 {path}: {e}")
        raise SchemaError(f"无法读取模型文件 {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}:{e.lineno}:{e.colno}: JSON 语法错误: {e.msg}",
                          line=e.lineno, column=e.colno) from e
    validate_model_data(data, source=str(path))
    data.setdefault("name", path.stem)
    return data


def validate_model_data(data: Any, source: str = "<model>") -> None:
    if not isinstance(data, dict):
        raise SchemaError(f"{source}: 模型文件顶层必须是 JSON 对象")
    missing = [k for k in REQUIRED_FIELDS if k not in data]
    if missing:
        raise SchemaError(f"{source}: 缺少必需字段 {missing}", missing=missing)
    if not isinstance(data["t"], list):
        raise SchemaError(f"{source}: t 必须是实数数组")


def build_graph(spec: Dict[str, Any]) -> PeriodicBipartiteGraph:
    """内联图, 或 {"motif": 名称, "superlattice": S}"""
    if "motif" in spec:
        G = motif_graph(spec["motif"])
        S = spec.get("superlattice")
        if S is not None and not np.array_equal(np.asarray(S), np.eye(2, dtype=int)):
            G, _ = superlattice(G, S)
        return G
    return graph_from_json(spec)


def build_angles(G: PeriodicBipartiteGraph, curve: MCurve, spec: Dict[str, Any]):
    if spec.get("periodic"):
        return periodic_angles(G, curve, spec.get("targets"))
    return angle_map_from_json(G, spec, curve)


def model_hash(model: FockModel) -> str:
    return content_hash(model)


def build_model(data: Dict[str, Any], calibrate: bool = True) -> FockModel:
    """
    模型字典 -> FockModel; calibration 段有效时直接使用其中的缩放常数

    Args:
        data: read_model_file 的结果 (calibration 段会被就地更新)
        calibrate: 周期模型缺少有效标定时是否重新标定

    Raises:
        SchemaError / DegenerateAngles: 见各构造函数
    """
    validate_model_data(data)
    G = build_graph(data["graph"])
    curve = backend_from_descriptor(data["backend"])
    angles = build_angles(G, curve, data["angles"])
    model = FockModel(G, curve, angles, data["t"], validate=bool(data.get("validate", True)))

    key = model_hash(model)
    cal = data.get("calibration") or {}
    if cal.get("model_hash") == key and "scale" in cal:
        lam, mu = (complex(*v) if isinstance(v, list) else complex(v) for v in cal["scale"])
        logger.info(f"标定缓存命中: {data.get('name', '<model>')}")
        model = model.replace(scale=(lam, mu))
        if "liquid_lattice" in cal:
            model._cache["liquid_lattice"] = np.asarray(cal["liquid_lattice"], dtype=int)
        return model
    if cal:
        logger.info(f"⚠️ 模型 {data.get('name', '<model>')} 的标定已过期, 重新计算")
    if not calibrate:
        return model
    periodic, _ = is_operator_periodic(G, angles)
    if not periodic:
        return model
    try:
        lam, mu, residual = calibrate_scale(model)
    except (FockDimerError, ValueError) as e:
        logger.error(f"❌ 谱缩放标定失败: {e}")
        raise
    data["calibration"] = {
        "model_hash": key,
        "scale": [complex(lam), complex(mu)],
        "residual": float(residual),
    }
    try:
        data["calibration"]["delta"] = np.real(curve.riemann_constant()).tolist()
    except FockDimerError as e:
        logger.warning(f"⚠️ Riemann 常数标定失败, 不写入 calibration: {e}")
    return model.replace(scale=(lam, mu))


def load_model(path: Union[str, Path], calibrate: bool = True) -> Tuple[FockModel, Dict[str, Any]]:
    """
    Returns:
        (模型, 模型字典); 标定更新后的字典可用 save_model_file 写回
    """
    data = read_model_file(path)
    return build_model(data, calibrate=calibrate), data


def packaged_model_path(name: str) -> Path:
    base = Path(config_value("output", "models_dir", "./data/models"))
    if not base.is_absolute():
        base = Path(__file__).parent.parent / base
    return base / f"{name}.json"


# ============= 写出 =============

def model_to_data(model: FockModel, name: str) -> Dict[str, Any]:
    """模型 -> 自包含的模型字典 (内联图, 角度同时写出 s 与提升)"""
    tracks = {
        tid: {"s": float(model.angles.s[tid]), "lift": np.asarray(model.angles.lifts[tid]).tolist()}
        for tid in sorted(model.angles.s)
    }
    data = {
        "name": name,
        "graph": graph_to_json(model.graph),
        "backend": model.curve.descriptor(),
        "angles": {"tracks": tracks},
        "t": model.t.tolist(),
        "validate": bool(model.validated),
    }
    if model.scale != (1.0, 1.0):
        data["calibration"] = {"model_hash": model_hash(model), "scale": list(model.scale)}
        if "liquid_lattice" in model._cache:
            data["calibration"]["liquid_lattice"] = np.asarray(model._cache["liquid_lattice"]).tolist()
    return data


def save_model_file(data: Dict[str, Any], path: Union[str, Path]) -> str:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return dump_json(to_jsonable(data), str(path))


def require_periodic(model: FockModel) -> None:
    periodic, nearest = is_operator_periodic(model.graph, model.angles)
    if not periodic:
        raise PeriodicityRequired(f"Kasteleyn 算子不是周期的: φ 最近整点 {nearest}")
