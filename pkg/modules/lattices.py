"""
内置周期图 (正方格、六角格、正方-八边形格)、超格覆盖与周期角度求解

几何图案只用于生成旋转系统: 每个顶点处的入射边按实际方向角逆时针排序。
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, linprog

from .errors import CalibrationFailure, DegenerateAngles, SchemaError
from .graph import (
    AngleMap,
    Edge,
    PeriodicBipartiteGraph,
    interior_points,
    is_operator_periodic,
    make_angle_map,
    newton_polygon,
    tracks_by_direction,
)
from .utils import cache_calibration, config_value

logger = logging.getLogger(__name__)

Offset = Tuple[int, int]


# ============= 图案 =============

@dataclass(frozen=True)
class Motif:
    """平面周期图案: 平移向量 t1, t2, 顶点坐标与基本域中的边"""
    name: str
    t1: Tuple[float, float]
    t2: Tuple[float, float]
    whites: Tuple[Tuple[str, Tuple[float, float]], ...]
    blacks: Tuple[Tuple[str, Tuple[float, float]], ...]
    edges: Tuple[Tuple[str, str, Offset], ...]

    def translation(self, off: Offset) -> np.ndarray:
        return off[0] * np.asarray(self.t1) + off[1] * np.asarray(self.t2)


_SQ3 = math.sqrt(3.0)
_S = 1.0 / (2.0 + math.sqrt(2.0))

MOTIFS: Dict[str, Motif] = {
    "square": Motif(
        name="square",
        t1=(1.0, 1.0), t2=(-1.0, 1.0),
        whites=(("w", (0.0, 0.0)),),
        blacks=(("b", (1.0, 0.0)),),
        edges=(("w", "b", (0, 0)), ("w", "b", (0, 1)),
               ("w", "b", (-1, 1)), ("w", "b", (-1, 0))),
    ),
    "hexagonal": Motif(
        name="hexagonal",
        t1=(1.0, 0.0), t2=(0.5, _SQ3 / 2.0),
        whites=(("w", (0.0, 0.0)),),
        blacks=(("b", (0.5, _SQ3 / 6.0)),),
        edges=(("w", "b", (0, 0)), ("w", "b", (-1, 0)), ("w", "b", (0, -1))),
    ),
    "square_octagon": Motif(
        name="square_octagon",
        t1=(1.0, 1.0), t2=(-1.0, 1.0),
        whites=(("A_E", (_S, 0.0)), ("A_W", (-_S, 0.0)),
                ("B_N", (1.0, _S)), ("B_S", (1.0, -_S))),
        blacks=(("A_N", (0.0, _S)), ("A_S", (0.0, -_S)),
                ("B_E", (1.0 + _S, 0.0)), ("B_W", (1.0 - _S, 0.0))),
        edges=(
            # 菱形 A 与菱形 B
            ("A_E", "A_N", (0, 0)), ("A_W", "A_N", (0, 0)),
            ("A_W", "A_S", (0, 0)), ("A_E", "A_S", (0, 0)),
            ("B_N", "B_E", (0, 0)), ("B_N", "B_W", (0, 0)),
            ("B_S", "B_W", (0, 0)), ("B_S", "B_E", (0, 0)),
            # 连接边
            ("A_E", "B_W", (0, 0)), ("A_W", "B_E", (-1, 1)),
            ("B_S", "A_N", (0, -1)), ("B_N", "A_S", (1, 0)),
        ),
    ),
}


def graph_from_motif(motif: Motif) -> PeriodicBipartiteGraph:
    """按几何方向角生成旋转系统 (逆时针)"""
    pos = dict(motif.whites) | dict(motif.blacks)
    directions: Dict[str, List[Tuple[float, int]]] = {v: [] for v in pos}
    edges = []
    for idx, (w, b, off) in enumerate(motif.edges):
        vec = np.asarray(pos[b]) + motif.translation(off) - np.asarray(pos[w])
        angle = math.atan2(vec[1], vec[0])
        directions[w].append((angle % (2 * math.pi), idx))
        directions[b].append(((angle + math.pi) % (2 * math.pi), idx))
        edges.append(Edge(w, b, off))
    rotations = {v: [idx for _, idx in sorted(items)] for v, items in directions.items()}
    return PeriodicBipartiteGraph([w for w, _ in motif.whites], [b for b, _ in motif.blacks],
                                  edges, rotations)


def motif_graph(name: str) -> PeriodicBipartiteGraph:
    if name not in MOTIFS:
        raise SchemaError(f"未知图案: {name} (可选 {sorted(MOTIFS)})")
    return graph_from_motif(MOTIFS[name])


# ============= 超格覆盖 =============

def _as_superlattice(S) -> np.ndarray:
    S = np.asarray(S, dtype=int)
    if S.shape != (2, 2):
        raise SchemaError(f"超格矩阵必须是 2×2 整数矩阵, 实际形状 {S.shape}")
    if S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0] == 0:
        raise SchemaError("超格矩阵退化 (行列式为 0)")
    return S


def _reduce_cell(c: Sequence[int], S: np.ndarray) -> Tuple[Offset, Offset]:
    """c = rep + n·S, rep 为陪集代表; 返回 (rep, n)"""
    det = int(S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0])
    num0 = c[0] * int(S[1, 1]) - c[1] * int(S[1, 0])
    num1 = -c[0] * int(S[0, 1]) + c[1] * int(S[0, 0])
    n0, n1 = num0 // det, num1 // det
    rep = (int(c[0] - n0 * S[0, 0] - n1 * S[1, 0]), int(c[1] - n0 * S[0, 1] - n1 * S[1, 1]))
    return rep, (int(n0), int(n1))


def coset_representatives(S) -> List[Offset]:
    """Z² / (Z·S₁ + Z·S₂) 的陪集代表 (字典序)"""
    S = _as_superlattice(S)
    det = abs(int(S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]))
    span = det + int(np.abs(S).sum())
    reps = {_reduce_cell((x, y), S)[0]
            for x in range(-span, span + 1) for y in range(-span, span + 1)}
    reps = sorted(reps)
    if len(reps) != det:
        raise SchemaError(f"陪集代表个数 {len(reps)} 与 |det S| = {det} 不一致")
    return reps


def superlattice(G: PeriodicBipartiteGraph, S) -> Tuple[PeriodicBipartiteGraph, List[int]]:
    """
    超格覆盖: 新基本域由 S 的两行 (旧格坐标) 张成

    Args:
        G: 基图
        S: 2×2 整数矩阵, 行向量为新的平移生成元

    Returns:
        (覆盖图, 边投影 cover_edge -> base_edge)

    使用示例:
        cover, proj = superlattice(motif_graph("square"), [[1, -1], [1, 1]])
    """
    S = _as_superlattice(S)
    reps = coset_representatives(S)
    index = {rep: i for i, rep in enumerate(reps)}
    n_e = len(G.edges)

    whites = [f"{w}_{i}" for i in range(len(reps)) for w in G.whites]
    blacks = [f"{b}_{i}" for i in range(len(reps)) for b in G.blacks]
    edges, proj = [], []
    for i, rep in enumerate(reps):
        for k, e in enumerate(G.edges):
            target, cell = _reduce_cell((rep[0] + e.offset[0], rep[1] + e.offset[1]), S)
            edges.append(Edge(f"{e.white}_{i}", f"{e.black}_{index[target]}", cell))
            proj.append(k)

    rotations = {}
    for i, rep in enumerate(reps):
        for w in G.whites:
            rotations[f"{w}_{i}"] = [i * n_e + k for k in G.rotations[w]]
        for b in G.blacks:
            rot = []
            for k in G.rotations[b]:
                off = G.edges[k].offset
                source, _ = _reduce_cell((rep[0] - off[0], rep[1] - off[1]), S)
                rot.append(index[source] * n_e + k)
            rotations[f"{b}_{i}"] = rot

    cover = PeriodicBipartiteGraph(whites, blacks, edges, rotations)
    logger.debug(f"超格覆盖: {len(reps)} 个副本, {len(edges)} 条边, {len(cover.tracks)} 条 track")
    return cover, proj


def lift_angles_to_cover(base: PeriodicBipartiteGraph, cover: PeriodicBipartiteGraph,
                         proj: Sequence[int], angles: AngleMap) -> AngleMap:
    """覆盖图的每条 track 继承其投影 track 的参数与提升"""
    s, lifts = {}, {}
    for track in cover.tracks:
        e, role = track.states[0]
        base_id = base.tracks[base.track_of_state[(proj[e], role)]].id
        s[track.id] = angles.s[base_id]
        lifts[track.id] = np.array(angles.lifts[base_id], copy=True)
    return AngleMap(s=s, lifts=lifts)


# ============= 周期角度 =============

def _phi_from_s(curve, points: np.ndarray, s: np.ndarray) -> np.ndarray:
    lifts = np.real(np.asarray(curve.a0_lift(s)))                 # (r, g)
    prev = np.vstack([lifts[-1:] - 1.0, lifts[:-1]])
    return points.T @ (lifts - prev)                              # (2, g)


def _solve_genus1(points: np.ndarray, target: np.ndarray) -> np.ndarray:
    """
    线性规划: max δ, 使 φ(s) = target, s 单调且相邻间隔 ≥ δ, s₁ = 0
    """
    r = len(points)
    A = np.zeros((2, r))
    for j in range(r):
        A[:, j] = points[j] - points[(j + 1) % r]
    n_var = r + 1
    A_eq = np.zeros((3, n_var))
    A_eq[:2, :r] = A
    A_eq[2, 0] = 1.0
    b_eq = np.array([target[0], target[1], 0.0])
    A_ub, b_ub = [], []
    for j in range(r - 1):
        row = np.zeros(n_var)
        row[j], row[j + 1], row[r] = 1.0, -1.0, 1.0
        A_ub.append(row)
        b_ub.append(0.0)
    row = np.zeros(n_var)
    row[r - 1], row[0], row[r] = 1.0, -1.0, 1.0
    A_ub.append(row)
    b_ub.append(1.0)
    c = np.zeros(n_var)
    c[r] = -1.0
    bounds = [(None, None)] * r + [(0.0, 1.0)]
    res = linprog(c, A_ub=np.array(A_ub), b_ub=np.array(b_ub), A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if not res.success or res.x[r] <= 1e-9:
        raise DegenerateAngles(f"目标整点 {target.tolist()} 不存在严格单调的周期角度")
    return res.x[:r]


def _solve_higher_genus(curve, points: np.ndarray, targets: np.ndarray,
                        rng: np.random.Generator, attempts: Optional[int] = None) -> Optional[np.ndarray]:
    """
    非线性最小二乘, 对目标整点的每个排列做多起点求解

    参数化: s₁ 加上 softmax 间隔, 单调性自动满足。起点为 A₀ 上随机排序的点。
    """
    r = len(points)
    attempts = int(attempts or config_value("lattices", "angle_attempts", 24))

    def unpack(x):
        gaps = np.exp(x[1:] - np.max(x[1:]))
        gaps = gaps / gaps.sum()
        return x[0] + np.concatenate([[0.0], np.cumsum(gaps[:-1])])

    best = math.inf
    for perm in itertools.permutations(range(len(targets))):
        goal = targets[list(perm)].T                              # (2, g)
        for attempt in range(attempts):
            if attempt:
                s = np.sort(rng.random(r))
                x0 = np.concatenate([[s[0]], np.log(np.diff(np.append(s, s[0] + 1.0)))])
            else:
                x0 = np.zeros(r + 1)
            res = least_squares(lambda x: (_phi_from_s(curve, points, unpack(x)) - goal).ravel(),
                                x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
            misfit = float(np.max(np.abs(res.fun)))
            best = min(best, misfit)
            if misfit < 1e-10:
                logger.info(f"✅ 第 {attempt + 1} 个起点收敛 (目标排列 {perm})")
                return unpack(res.x)
    logger.warning(f"⚠️ 周期角度最小二乘最佳残差 {best:.2e}")
    return None


@cache_calibration("periodic_angles")
def periodic_angles(G: PeriodicBipartiteGraph, curve,
                    targets: Optional[Sequence[Sequence[int]]] = None) -> AngleMap:
    """
    求解 φ(α) ∈ (Z²)^g: 方向序单调的角度映射, 使 φ_k 等于给定的内部整点

    亏格 1 为线性规划 (最大化最小间隔), 高亏格为非线性最小二乘。

    Args:
        G: 周期极小图
        curve: M-curve 后端
        targets: g 个互不相同的 N(G) 内部整点 (相对 P₁ = 0 的锚定); 默认取前 g 个

    Raises:
        DegenerateAngles: 线性规划无严格单调解
        CalibrationFailure: 高亏格求解未收敛
    """
    order = tracks_by_direction(G)
    points = np.asarray(newton_polygon(G, order), dtype=float)
    g = curve.g
    if targets is None:
        inner = interior_points(newton_polygon(G, order))
        if len(inner) < g:
            raise DegenerateAngles(f"N(G) 只有 {len(inner)} 个内部整点, 少于亏格 {g}")
        targets = inner[:g]
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    if len(targets) != g:
        raise SchemaError(f"目标整点个数 {len(targets)} 与亏格 {g} 不一致")
    if len({tuple(t) for t in targets.tolist()}) != g:
        raise DegenerateAngles("目标整点必须互不相同")

    logger.info(f"🚀 求解周期角度: {len(order)} 条 track, 亏格 {g}, 目标 {targets.tolist()}")
    if g == 1:
        s = _solve_genus1(points, targets[0])
    else:
        rng = np.random.default_rng(int(config_value("runtime", "seed", 0) or 0))
        s = _solve_higher_genus(curve, points, targets, rng)
        if s is None:
            raise CalibrationFailure(f"周期角度最小二乘未收敛 (目标 {targets.tolist()})")

    angles = make_angle_map(G, {G.tracks[i].id: float(v) for i, v in zip(order, s)}, curve)
    periodic, nearest = is_operator_periodic(G, angles)
    if not periodic:
        raise CalibrationFailure(f"求得的角度不满足周期性判据: 最近整点 {nearest}")
    logger.info(f"✅ 周期角度求解完成: φ = {nearest}")
    return angles
