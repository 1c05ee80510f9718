"""
工具函数库:日志、配置加载、标定缓存、重试、线程池等通用功能
"""

import os
import re
import json
import pickle
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timedelta
from functools import wraps, lru_cache
from pathlib import Path
from typing import Any, Callable, Iterable, List, Optional

import numpy as np
import yaml
from dotenv import load_dotenv


ROOT_DIR = Path(__file__).parent.parent
CONFIG_PATH = ROOT_DIR / "config.yaml"

# 加载环境变量
load_dotenv(dotenv_path=ROOT_DIR / ".env")

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _substitute_env(node: Any) -> Any:
    """递归替换配置中的 ${ENV} 占位符,未设置的变量替换为 None"""
    if isinstance(node, dict):
        return {k: _substitute_env(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_substitute_env(v) for v in node]
    if isinstance(node, str):
        match = _ENV_PATTERN.fullmatch(node.strip())
        if match:
            value = os.getenv(match.group(1))
            return yaml.safe_load(value) if value not in (None, "") else None
        return _ENV_PATTERN.sub(lambda m: os.getenv(m.group(1), ""), node)
    return node


@lru_cache(maxsize=8)
def load_config(path: Optional[str] = None) -> dict:
    """
    加载 config.yaml 并替换环境变量占位符

    Args:
        path: 配置文件路径, None 表示项目根目录下的 config.yaml

    Returns:
        配置字典 (调用方不得修改)
    """
    config_file = Path(path) if path else CONFIG_PATH
    if not config_file.exists():
        return {}
    with open(config_file, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    return _substitute_env(raw)


_active_config: Optional[str] = None


def use_config(path: Optional[str]):
    """切换后续 config_value 读取的配置文件 (CLI --config)"""
    global _active_config
    if path and not Path(path).exists():
        raise FileNotFoundError(f"配置文件不存在: {path}")
    _active_config = str(path) if path else None


def config_value(section: str, key: str, default: Any = None) -> Any:
    """读取单个配置项,缺失或为 None 时返回 default"""
    value = load_config(_active_config).get(section, {}) or {}
    value = value.get(key)
    return default if value is None else value


# 配置日志
logging.basicConfig(
    level=getattr(logging, str(config_value("logging", "level", "INFO")).upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(config_value("logging", "file", "fock_dimers.log")),
        logging.StreamHandler()
    ]
)

logger = logging.getLogger(__name__)


# 缓存配置
CACHE_DIR = str(ROOT_DIR / config_value("cache", "dir", "cache"))


def cache_enabled() -> bool:
    env = os.getenv("FOCK_DIMERS_CACHE")
    if env is not None:
        return env.strip().lower() not in ("0", "false", "no", "off")
    return bool(config_value("cache", "enabled", True))


def content_hash(*parts: Any) -> str:
    """
    计算内容哈希 (SHA-256),用于标定缓存键和模型文件的 calibration 段

    对象若实现 content_key() 则使用其返回值;numpy 数组按字节序列化。
    """
    digest = hashlib.sha256()
    for part in parts:
        digest.update(json.dumps(_canonical(part), sort_keys=True, default=repr).encode())
    return digest.hexdigest()


def _canonical(obj: Any) -> Any:
    if hasattr(obj, "content_key"):
        return _canonical(obj.content_key())
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": np.round(obj.real, 14).tolist(), "im": np.round(obj.imag, 14).tolist()}
        return np.round(obj.astype(float), 14).tolist()
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, bytes):
        return hashlib.sha256(obj).hexdigest()
    return obj


def cache_calibration(namespace: str):
    """
    装饰器:把昂贵且确定性的标定结果缓存到本地 pickle 文件

    缓存键是参数内容哈希,内容不变则结果不变,因此不需要过期时间。

    Args:
        namespace: 缓存文件名前缀

    使用示例:
        @cache_calibration("riemann_constant")
        def calibrate(curve):
            return expensive(curve)
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            if not cache_enabled():
                return func(*args, **kwargs)

            key = content_hash(namespace, list(args), sorted(kwargs.items()))
            cache_file = os.path.join(CACHE_DIR, f"{namespace}_{key[:24]}.pkl")

            if os.path.exists(cache_file):
                try:
                    with open(cache_file, 'rb') as f:
                        result = pickle.load(f)
                    logger.info(f"缓存命中: {namespace}, 缓存文件: {cache_file}")
                    return result
                except Exception as e:
                    logger.warning(f"缓存读取失败, 重新计算: {e}")

            logger.info(f"🚀 开始标定: {namespace}")
            result = func(*args, **kwargs)

            try:
                os.makedirs(CACHE_DIR, exist_ok=True)
                with open(cache_file, 'wb') as f:
                    pickle.dump(result, f)
                logger.info(f"缓存已保存: {cache_file}")
            except Exception as e:
                logger.warning(f"缓存保存失败: {e}")

            return result
        return wrapper
    return decorator


def _cache_files(namespace: Optional[str] = None) -> List[Path]:
    """标定缓存文件, 文件名形如 <namespace>_<hash24>.pkl"""
    cache_dir = Path(CACHE_DIR)
    if not cache_dir.exists():
        return []
    files = sorted(cache_dir.glob("*.pkl"))
    if namespace is not None:
        files = [f for f in files if f.stem.rsplit("_", 1)[0] == namespace]
    return files


def clear_cache(namespace: Optional[str] = None, older_than_hours: Optional[float] = None) -> int:
    """
    清理标定缓存

    Args:
        namespace: 只清理该标定类型 (如 riemann_constant), None 表示全部
        older_than_hours: 只清理早于该小时数的文件, None 表示不限

    Returns:
        删除的文件数
    """
    count = 0
    for path in _cache_files(namespace):
        if older_than_hours is not None:
            age = datetime.now() - datetime.fromtimestamp(path.stat().st_mtime)
            if age < timedelta(hours=older_than_hours):
                continue
        try:
            path.unlink()
            count += 1
        except OSError as e:
            logger.warning(f"删除缓存文件失败: {path}, 错误: {e}")
    logger.info(f"🗑️ 缓存清理完成, 删除了 {count} 个文件")
    return count


def get_cache_info() -> dict:
    """
    标定缓存统计

    Returns:
        {"dir", "count", "total_size_mb", "namespaces": {namespace: count}, "oldest", "newest"}
    """
    files = _cache_files()
    info = {"dir": CACHE_DIR, "count": len(files), "total_size_mb": 0.0,
            "namespaces": {}, "oldest": None, "newest": None}
    if not files:
        return info
    for path in files:
        ns = path.stem.rsplit("_", 1)[0]
        info["namespaces"][ns] = info["namespaces"].get(ns, 0) + 1
    info["total_size_mb"] = round(sum(f.stat().st_size for f in files) / (1024 * 1024), 2)
    times = [f.stat().st_mtime for f in files]
    info["oldest"] = datetime.fromtimestamp(min(times)).strftime('%Y-%m-%d %H:%M:%S')
    info["newest"] = datetime.fromtimestamp(max(times)).strftime('%Y-%m-%d %H:%M:%S')
    return info


# ============= 并行 =============

def thread_cap() -> int:
    """FOCK_DIMERS_THREADS 限制的线程数,至少为 1"""
    value = config_value("runtime", "threads", None)
    if value is None:
        value = os.getenv("FOCK_DIMERS_THREADS", "1")
    try:
        return max(1, int(value))
    except (TypeError, ValueError):
        logger.warning(f"⚠️ FOCK_DIMERS_THREADS 无法解析: {value!r}, 使用单线程")
        return 1


def parallel_map(func: Callable, items: Iterable) -> List[Any]:
    """按输入顺序返回结果的线程池 map,单线程时直接顺序执行"""
    items = list(items)
    workers = thread_cap()
    if workers == 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


# ============= 序列化 =============

def format_float(x: float) -> float:
    """保留 17 位有效数字,保证 JSON 输出可精确复现"""
    return float(f"{float(x):.17g}")


def to_jsonable(obj: Any) -> Any:
    """把 numpy / complex 结果转换为 JSON 可序列化对象"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [format_float(obj.real), format_float(obj.imag)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    return obj


def dump_json(obj: Any, path: Optional[str] = None) -> str:
    """写出确定性的 JSON (键排序, 17 位有效数字)"""
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False)
    if path:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        logger.info(f"📝 已写出: {path}")
    return text
