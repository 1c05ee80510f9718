#!/usr/bin/env python3
"""
Fock 二聚体模型命令行入口

子命令:
    check     极小性、X_G、φ 周期性、Kasteleyn 条件与 Fay 残差
    charpoly  特征多项式系数与 Newton 多边形
    prob      单边 / 柱集概率
    scan      amoeba / Ronkin / 斜率网格扫描 (CSV)
    move      执行局部移动脚本并附带不变量报告
    cache     标定缓存统计与清理

退出码: 0 正常, 1 检查失败, 2 输入错误, 3 数值失败
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from modules.errors import CheckFailure, FockDimerError, NumericError, SchemaError
from modules.gibbs import (
    MagneticField,
    amoeba_sample,
    classify_phase,
    cylinder_probability,
    edge_probability_local,
    edge_probabilities,
    reference_point,
    slope,
    slope_from_spectral,
    white_sums,
)
from modules.graph import (
    check_minimal,
    is_operator_periodic,
    newton_polygon,
    normalize_polygon,
    validate_angle_map,
)
from modules.kasteleyn import FockModel, char_poly, check_fay, check_kasteleyn_condition
from modules.model_io import (
    create_charpoly_report,
    create_check_report,
    create_move_report,
    create_probability_report,
    load_model,
    model_hash,
    model_to_data,
    packaged_model_path,
    require_periodic,
    save_model_file,
)
from modules.moves import load_script, run_script
from modules.surface import OvalPoint
from modules.thermodynamics import ronkin
from modules.utils import (
    clear_cache,
    config_value,
    dump_json,
    get_cache_info,
    parallel_map,
    use_config,
)

logger = logging.getLogger(__name__)


# ============= 参数解析辅助 =============

def parse_phase(text: Optional[str], model: FockModel):
    """
    相点描述

        solid            参考固相点 (A₀ 上首尾角度之间)
        solid:S          A₀ 上参数为 S 的点
        gas:K:S          A_K 上参数为 S 的点
        liquid:X,Y       Σ⁺ 中坐标为 X + iY 的点
        field:BX,BY      磁场 B (Fourier 路线)
    """
    text = (text or "solid").strip()
    kind, _, rest = text.partition(":")
    try:
        if kind == "solid":
            return OvalPoint(0, float(rest)) if rest else reference_point(model)
        if kind == "gas":
            oval, s = rest.split(":")
            return OvalPoint(int(oval), float(s))
        if kind == "liquid":
            x, y = rest.split(",")
            return complex(float(x), float(y))
        if kind == "field":
            bx, by = rest.split(",")
            return MagneticField(bx=float(bx), by=float(by))
    except ValueError as e:
        raise SchemaError(f"无法解析相点 {text!r}: {e}") from e
    raise SchemaError(f"未知相点类型 {kind!r} (可选 solid | gas | liquid | field)")


def parse_edges(text: Optional[str], n_edges: int) -> List:
    """'0,3,5' 或 '0@1:0;3' (边@白点所在格, 分号分隔); 缺省为全部基本域边"""
    if not text:
        return list(range(n_edges))
    sep = ";" if ";" in text or "@" in text else ","
    out = []
    for item in text.split(sep):
        item = item.strip()
        if not item:
            continue
        try:
            if "@" in item:
                e, cell = item.split("@")
                cx, cy = cell.split(":")
                out.append((int(e), (int(cx), int(cy))))
            else:
                out.append(int(item))
        except ValueError as ex:
            raise SchemaError(f"无法解析边 {item!r}: {ex}") from ex
    for ref in out:
        e = ref[0] if isinstance(ref, tuple) else ref
        if not 0 <= e < n_edges:
            raise SchemaError(f"边索引 {e} 超出范围 [0, {n_edges})")
    return out


def parse_grid(text: str) -> List[np.ndarray]:
    """'a:b:n,c:d:m' -> 两个轴的采样点"""
    axes = []
    for part in text.split(","):
        try:
            lo, hi, n = part.split(":")
            axes.append(np.linspace(float(lo), float(hi), int(n)))
        except ValueError as e:
            raise SchemaError(f"无法解析网格 {part!r} (格式 lo:hi:n): {e}") from e
    if len(axes) != 2:
        raise SchemaError("网格需要两个轴, 如 -1:1:11,-1:1:11")
    return axes


def resolve_model(path: str) -> str:
    """不存在的路径按内置模型名查找 (data/models/<名称>.json)"""
    if Path(path).exists():
        return path
    packaged = packaged_model_path(path)
    return str(packaged) if packaged.exists() else path


def emit(obj, out: Optional[str]):
    text = dump_json(obj, out)
    if not out:
        print(text)


# ============= 子命令 =============

def cmd_check(args) -> int:
    model, data = load_model(resolve_model(args.model))
    name = data.get("name", Path(args.model).stem)
    report = create_check_report(name, model_hash(model), args.seed, args.tol)

    minimal = check_minimal(model.graph)
    report["minimal"] = minimal.to_json()
    if not minimal.minimal:
        report["failures"].append("minimality")

    ok, problems = validate_angle_map(model.graph, model.angles)
    report["angles_valid"], report["angle_problems"] = ok, problems
    if not ok:
        report["failures"].append("angles")

    periodic, nearest = is_operator_periodic(model.graph, model.angles)
    report["periodic"], report["phi_points"] = periodic, [list(p) for p in nearest]

    kasteleyn = check_kasteleyn_condition(model, tol=args.tol)
    report["kasteleyn"] = kasteleyn.to_json()
    if not kasteleyn.passed:
        report["failures"].append("kasteleyn")

    fay_tol = 1e-9 if model.g == 1 else 1e-7
    fay = check_fay(model, samples=args.samples, rng=np.random.default_rng(args.seed))
    report["fay"] = fay
    if max(fay.values()) > fay_tol:
        report["failures"].append("fay")

    report["passed"] = not report["failures"]
    emit(report, args.out)
    if not report["passed"]:
        raise CheckFailure(f"模型 {name} 未通过检查: {report['failures']}",
                           failures=report["failures"])
    logger.info(f"✅ 模型 {name} 通过全部检查")
    return 0


def cmd_charpoly(args) -> int:
    model, data = load_model(resolve_model(args.model))
    require_periodic(model)
    poly = char_poly(model)
    polygon = normalize_polygon(newton_polygon(model.graph))
    report = create_charpoly_report(data.get("name", ""), model_hash(model), poly, polygon,
                                    model.scale)
    emit(report, args.out)
    return 0


def cmd_prob(args) -> int:
    model, data = load_model(resolve_model(args.model))
    phase = parse_phase(args.phase, model)
    if not isinstance(phase, MagneticField):
        phase = classify_phase(model, phase)
    edges = parse_edges(args.edges, len(model.graph.edges))
    report = create_probability_report(data.get("name", ""), model_hash(model), phase.to_json())

    if isinstance(phase, MagneticField):
        probs = edge_probabilities(model, phase, order=args.order)
        provenance = "Fourier"
    else:
        probs = np.array([edge_probability_local(model, e, phase)
                          for e in range(len(model.graph.edges))])
        provenance = "ClosedForm"
    for ref in edges:
        if isinstance(ref, tuple):
            result = cylinder_probability(model, phase, [ref])
            report["edges"].append({"edge": ref[0], "cell": list(ref[1]), **result.to_json()})
        else:
            report["edges"].append({"edge": ref, "cell": [0, 0], "value": float(probs[ref]),
                                    "imag": 0.0, "provenance": provenance})
    report["white_sums"] = white_sums(model, probs)
    if args.cylinder and len(edges) > 1:
        report["cylinder"] = {"edges": [list(r) if isinstance(r, tuple) else r for r in edges],
                              **cylinder_probability(model, phase, edges).to_json()}
    emit(report, args.out)
    return 0


def _scan_rows(model: FockModel, what: str, grid: Optional[str], order: Optional[int],
               seed: Optional[int] = None):
    if what == "slope":
        n = int(grid or 16)
        points = [(k, (j + 0.5) / n) for k in range(model.g + 1) for j in range(n)]
        for k, s in tqdm(points, desc="斜率扫描"):
            u0 = OvalPoint(k, s)
            try:
                st = slope(model, u0)
            except FockDimerError as e:
                logger.warning(f"⚠️ 跳过 A_{k} 上 s={s:.4f}: {e}")
                continue
            spectral = (math.nan, math.nan)
            if k > 0:
                try:
                    spectral = slope_from_spectral(model, u0)
                except FockDimerError as e:
                    logger.warning(f"⚠️ A_{k} 上 s={s:.4f} 的谱斜率不可用: {e}")
            yield {"oval": k, "s": s, "slope_s": st[0], "slope_t": st[1],
                   "spectral_s": spectral[0], "spectral_t": spectral[1]}
        return
    bxs, bys = parse_grid(grid or "-2:2:9,-2:2:9")
    cells = [(float(bx), float(by)) for bx in bxs for by in bys]
    if what == "amoeba":
        for bx, by in tqdm(cells, desc="amoeba 扫描"):
            sample = amoeba_sample(model, MagneticField(bx=bx, by=by))
            yield {"bx": bx, "by": by, "inside": sample.inside,
                   "counts": " ".join(map(str, sample.counts)), "min_gap": sample.min_gap}
        return
    char_poly(model)  # 预先填充缓存, 线程间共享
    values = parallel_map(lambda c: ronkin(model, MagneticField(bx=c[0], by=c[1]), order, seed=seed),
                          tqdm(cells, desc="ronkin 扫描"))
    for (bx, by), value in zip(cells, values):
        yield {"bx": bx, "by": by, "ronkin": value}


def cmd_scan(args) -> int:
    model, _ = load_model(resolve_model(args.model))
    if args.what in ("amoeba", "ronkin"):
        require_periodic(model)
    df = pd.DataFrame(list(_scan_rows(model, args.what, args.grid, args.order, args.seed)))
    digits = int(config_value("output", "float_digits", 17))
    text = df.to_csv(index=False, float_format=f"%.{digits}g")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        logger.info(f"📝 已写出: {args.out} ({len(df)} 行)")
    else:
        print(text, end="")
    return 0


def cmd_move(args) -> int:
    model, data = load_model(resolve_model(args.model))
    name = data.get("name", Path(args.model).stem)
    specs = load_script(args.script)
    report = create_move_report(name, [s.to_json() for s in specs])
    new_model, steps = run_script(model, [s.to_json() for s in specs], check=not args.no_check,
                                  progress=True, tol=args.tol)
    report["steps"] = [step.to_json() for step in steps]
    report["passed"] = all(step.passed for step in steps)
    report["output_hash"] = model_hash(new_model)
    if args.out:
        out_model = Path(args.out)
        save_model_file(model_to_data(new_model, f"{name}_moved"), out_model)
        report["output"] = str(out_model)
        emit(report, str(out_model.with_suffix(".report.json")))
    else:
        emit(report, None)
    if not report["passed"]:
        raise CheckFailure("局部移动的不变量检查未通过")
    return 0


def cmd_cache(args) -> int:
    if args.action == "clear":
        removed = clear_cache(args.namespace, args.older_than)
        emit({"removed": removed, **get_cache_info()}, args.out)
    else:
        emit(get_cache_info(), args.out)
    return 0


# ============= 入口 =============

def _add_global_flags(parser: argparse.ArgumentParser, suppress: bool = False):
    """全局参数; 子命令上重复注册 (缺省值 SUPPRESS), 使其可以写在子命令之后"""
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--tol", type=float, default=default(1e-8), help="检查容差")
    parser.add_argument("--order", type=int, default=default(None), help="Fourier / Ronkin 求积阶数")
    parser.add_argument("--seed", type=int, default=default(None), help="检查采样种子")
    parser.add_argument("--out", default=default(None), help="输出文件 (缺省写到标准输出)")
    parser.add_argument("--config", default=default(None), help="配置文件路径")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fock-dimers", description="Fock 二聚体模型计算")
    _add_global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="一致性检查")
    p.add_argument("model")
    _add_global_flags(p, suppress=True)
    p.add_argument("--samples", type=int, default=50, help="Fay 恒等式采样数")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("charpoly", help="特征多项式")
    p.add_argument("model")
    _add_global_flags(p, suppress=True)
    p.set_defaults(func=cmd_charpoly)

    p = sub.add_parser("prob", help="边概率")
    p.add_argument("model")
    _add_global_flags(p, suppress=True)
    p.add_argument("--phase", default="solid")
    p.add_argument("--edges", default=None)
    p.add_argument("--cylinder", action="store_true", help="同时计算所给边的联合概率")
    p.set_defaults(func=cmd_prob)

    p = sub.add_parser("scan", help="网格扫描 (CSV)")
    p.add_argument("model")
    _add_global_flags(p, suppress=True)
    p.add_argument("--what", choices=["amoeba", "ronkin", "slope"], required=True)
    p.add_argument("--grid", default=None)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("move", help="局部移动脚本")
    p.add_argument("model")
    _add_global_flags(p, suppress=True)
    p.add_argument("script")
    p.add_argument("--no-check", action="store_true", help="跳过不变量检查")
    p.set_defaults(func=cmd_move)

    p = sub.add_parser("cache", help="标定缓存统计与清理")
    p.add_argument("action", choices=["info", "clear"])
    _add_global_flags(p, suppress=True)
    p.add_argument("--namespace", default=None, help="只清理该标定类型")
    p.add_argument("--older-than", type=float, default=None, help="只清理早于该小时数的文件")
    p.set_defaults(func=cmd_cache)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        use_config(args.config)
    except FileNotFoundError as e:
        print(json.dumps({"error": "SchemaError", "message": str(e)}, ensure_ascii=False),
              file=sys.stderr)
        return SchemaError.exit_code
    if args.seed is None:
        args.seed = int(config_value("runtime", "seed", 0) or 0)
    try:
        return args.func(args)
    except FockDimerError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        print(json.dumps(e.to_dict(), ensure_ascii=False), file=sys.stderr)
        return e.exit_code
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        # 库内未归类的数值异常按数值失败处理
        err = NumericError(f"{type(e).__name__}: {e}")
        logger.error(f"❌ 数值失败: {err}")
        print(json.dumps(err.to_dict(), ensure_ascii=False), file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
