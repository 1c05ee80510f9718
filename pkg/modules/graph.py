"""
Z²-周期二部图:基本域表示、面、train-track、极小性、Newton 多边形、
角度映射校验、离散 Abel 映射与周期性判据 φ

约定:
    - 边 (w, b, (dx, dy)) 连接基本域中的白点 w 与平移 (dx, dy) 后的黑点 b。
    - 旋转系统给出每个顶点处入射边的逆时针顺序。
    - 面按"面在左侧"遍历: 到达顶点 v 后沿 v 处顺时针方向的下一条边离开。
    - train-track 状态 (e, 'a') / (e, 'b'): 边 e 的 α-track 含 (e,'a'),
      β-track 含 (e,'b'); 黑点位于 track 右侧。
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateGraph, EmbeddingInvalid, Inconsistent, SchemaError

logger = logging.getLogger(__name__)

Offset = Tuple[int, int]


# ============= 数据类型 =============

@dataclass(frozen=True)
class Edge:
    white: str
    black: str
    offset: Offset

    def to_json(self) -> dict:
        return {"w": self.white, "b": self.black, "offset": list(self.offset)}


@dataclass(frozen=True)
class Face:
    """面: darts 为 (边索引, 'wb' | 'bw') 序列, local 为各 dart 起点的相对格坐标"""
    index: int
    darts: Tuple[Tuple[int, str], ...]
    local: Tuple[Offset, ...]

    @property
    def degree(self) -> int:
        return len(self.darts)


@dataclass(frozen=True)
class TrainTrack:
    id: str
    states: Tuple[Tuple[int, str], ...]
    homology: Offset

    @property
    def direction(self) -> float:
        return math.atan2(self.homology[1], self.homology[0]) % (2 * math.pi)


@dataclass
class MinimalityReport:
    minimal: bool
    self_crossings: List[str] = field(default_factory=list)
    pair_mismatches: List[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "minimal": self.minimal,
            "self_crossings": self.self_crossings,
            "pair_mismatches": self.pair_mismatches,
        }


class PeriodicBipartiteGraph:
    """
    Z²-周期二部图的基本域

    Args:
        whites, blacks: 顶点标识
        edges: Edge 列表
        rotations: 顶点 -> 入射边索引的逆时针列表

    Raises:
        SchemaError: 顶点未定义、度数 < 2 或旋转系统不一致
        EmbeddingInvalid: 面遍历不闭合或 Euler 示性数不为 0
    """

    def __init__(self, whites: Sequence[str], blacks: Sequence[str],
                 edges: Sequence[Edge], rotations: Dict[str, Sequence[int]]):
        self.whites = [str(w) for w in whites]
        self.blacks = [str(b) for b in blacks]
        self.edges = [e if isinstance(e, Edge) else Edge(*e) for e in edges]
        self.edges = [Edge(str(e.white), str(e.black), (int(e.offset[0]), int(e.offset[1])))
                      for e in self.edges]
        self.rotations = {str(v): [int(i) for i in rot] for v, rot in rotations.items()}
        self._validate()
        self._position = {
            v: {e: k for k, e in enumerate(rot)} for v, rot in self.rotations.items()
        }
        # 面遍历在构造时执行, 嵌入无效时立即报错
        _ = self.faces

    # ---------- 校验 ----------

    def _validate(self):
        if len(set(self.whites) | set(self.blacks)) != len(self.whites) + len(self.blacks):
            raise SchemaError("顶点标识重复或黑白点重名")
        white_set, black_set = set(self.whites), set(self.blacks)
        incidence = {v: [] for v in self.whites + self.blacks}
        for idx, e in enumerate(self.edges):
            if e.white not in white_set:
                raise SchemaError(f"边 {idx} 的白点 {e.white} 未定义")
            if e.black not in black_set:
                raise SchemaError(f"边 {idx} 的黑点 {e.black} 未定义")
            incidence[e.white].append(idx)
            incidence[e.black].append(idx)
        for v, inc in incidence.items():
            if len(inc) < 2:
                raise SchemaError(f"顶点 {v} 的度数为 {len(inc)} (< 2)")
            rot = self.rotations.get(v)
            if rot is None:
                raise SchemaError(f"顶点 {v} 缺少旋转顺序")
            if sorted(rot) != sorted(inc):
                raise SchemaError(f"顶点 {v} 的旋转顺序与入射边不一致: {rot} vs {sorted(inc)}")
        extra = set(self.rotations) - set(incidence)
        if extra:
            raise SchemaError(f"旋转系统含未知顶点: {sorted(extra)}")

    # ---------- 基本查询 ----------

    @property
    def vertices(self) -> List[str]:
        return self.whites + self.blacks

    def is_white(self, v: str) -> bool:
        return v in set(self.whites)

    def degree(self, v: str) -> int:
        return len(self.rotations[v])

    def succ_ccw(self, v: str, e: int) -> int:
        rot = self.rotations[v]
        return rot[(self._position[v][e] + 1) % len(rot)]

    def pred_ccw(self, v: str, e: int) -> int:
        rot = self.rotations[v]
        return rot[(self._position[v][e] - 1) % len(rot)]

    def edges_at(self, v: str) -> List[int]:
        return list(self.rotations[v])

    def content_key(self) -> dict:
        return graph_to_json(self)

    # ---------- 面 ----------

    @cached_property
    def faces(self) -> List[Face]:
        seen = set()
        faces = []
        for start in itertools.product(range(len(self.edges)), ("wb", "bw")):
            if start in seen:
                continue
            darts, local = [], []
            pos = np.zeros(2, dtype=int)
            dart = start
            while dart not in seen:
                seen.add(dart)
                darts.append(dart)
                local.append((int(pos[0]), int(pos[1])))
                e, direction = dart
                edge = self.edges[e]
                if direction == "wb":
                    pos = pos + np.asarray(edge.offset)
                    arrive = edge.black
                else:
                    pos = pos - np.asarray(edge.offset)
                    arrive = edge.white
                nxt = self.pred_ccw(arrive, e)
                dart = (nxt, "bw" if direction == "wb" else "wb")
            if dart != start:
                raise EmbeddingInvalid(f"面遍历未回到起点: 起点 {start}, 终止于 {dart}")
            if pos.any():
                raise EmbeddingInvalid(f"面 {len(faces)} 不可缩 (绕行位移 {tuple(pos)})")
            faces.append(Face(len(faces), tuple(darts), tuple(local)))
        euler = len(self.vertices) - len(self.edges) + len(faces)
        if euler != 0:
            raise EmbeddingInvalid(f"环面嵌入的 Euler 示性数为 {euler} (应为 0)")
        return faces

    @cached_property
    def edge_faces(self) -> List[Tuple[int, Offset, int, Offset]]:
        """
        每条边两侧的面及其平移: (F_L, a_L, F_R, a_R)

        F_L 含 dart (e,'wb'), F_R 含 dart (e,'bw'); a 为该面副本相对白点格的平移。
        """
        where = {}
        for face in self.faces:
            for dart, loc in zip(face.darts, face.local):
                where[dart] = (face.index, loc)
        out = []
        for e, edge in enumerate(self.edges):
            fl, loc_w = where[(e, "wb")]
            fr, loc_b = where[(e, "bw")]
            a_l = (-loc_w[0], -loc_w[1])
            a_r = (edge.offset[0] - loc_b[0], edge.offset[1] - loc_b[1])
            out.append((fl, a_l, fr, a_r))
        return out

    def face_vertices(self, face: Face) -> List[Tuple[str, Offset]]:
        """面边界上的顶点 (按遍历顺序) 及其相对格坐标"""
        out = []
        for (e, direction), loc in zip(face.darts, face.local):
            edge = self.edges[e]
            out.append((edge.white if direction == "wb" else edge.black, loc))
        return out

    # ---------- train-track ----------

    def next_state(self, state: Tuple[int, str]) -> Tuple[int, str]:
        e, role = state
        edge = self.edges[e]
        if role == "a":
            return self.pred_ccw(edge.black, e), "b"
        return self.succ_ccw(edge.white, e), "a"

    @cached_property
    def tracks(self) -> List[TrainTrack]:
        return extract_train_tracks(self)

    @cached_property
    def track_of_state(self) -> Dict[Tuple[int, str], int]:
        out = {}
        for idx, track in enumerate(self.tracks):
            for state in track.states:
                out[state] = idx
        return out

    def alpha_beta(self, e: int) -> Tuple[int, int]:
        """边 e 的 (α-track 索引, β-track 索引)"""
        return self.track_of_state[(e, "a")], self.track_of_state[(e, "b")]

    def track_index(self, track_id: str) -> int:
        for idx, track in enumerate(self.tracks):
            if track.id == track_id:
                return idx
        raise KeyError(track_id)


# ============= 操作 =============

def extract_train_tracks(G: PeriodicBipartiteGraph) -> List[TrainTrack]:
    """
    提取全部 train-track,每条边恰被两条 track 穿过

    homology = Σ_{(e,'a')} offset(e) − Σ_{(e,'b')} offset(e)
    """
    seen = set()
    tracks = []
    for start in itertools.product(range(len(G.edges)), ("a", "b")):
        if start in seen:
            continue
        states = []
        h = np.zeros(2, dtype=int)
        state = start
        while state not in seen:
            seen.add(state)
            states.append(state)
            off = np.asarray(G.edges[state[0]].offset)
            h = h + off if state[1] == "a" else h - off
            state = G.next_state(state)
        if state != start:
            raise EmbeddingInvalid(f"train-track 未闭合: 起点 {start}")
        tracks.append(TrainTrack(f"T{len(tracks)}", tuple(states), (int(h[0]), int(h[1]))))
    total = np.sum([t.homology for t in tracks], axis=0)
    if np.any(total):
        raise EmbeddingInvalid(f"train-track 同调类之和不为 0: {tuple(total)}")
    for t in tracks:
        if t.homology == (0, 0) or math.gcd(abs(t.homology[0]), abs(t.homology[1])) != 1:
            logger.warning(f"⚠️ train-track {t.id} 的同调类 {t.homology} 不是本原向量")
    return tracks


def check_minimal(G: PeriodicBipartiteGraph) -> MinimalityReport:
    """
    极小性: 无自交, 且每对 track 在基本域中恰好交叉 |h v′ − v h′| 次

    同向平行的 track 不得相交; 反向平行的 track 可成对相交 (反向 bigon 允许)。
    """
    tracks = G.tracks
    report = MinimalityReport(minimal=True)
    counts: Dict[Tuple[int, int], int] = {}
    for e in range(len(G.edges)):
        ta, tb = G.alpha_beta(e)
        if ta == tb:
            report.self_crossings.append(tracks[ta].id)
            continue
        key = (min(ta, tb), max(ta, tb))
        counts[key] = counts.get(key, 0) + 1
    # 2 价顶点的两条边构成一个反向 bigon
    for v, rot in G.rotations.items():
        if len(rot) != 2:
            continue
        ta, tb = G.alpha_beta(rot[0])
        if ta != tb:
            key = (min(ta, tb), max(ta, tb))
            counts[key] = counts.get(key, 0) - 2
    for i, j in itertools.combinations(range(len(tracks)), 2):
        (h1, v1), (h2, v2) = tracks[i].homology, tracks[j].homology
        expected = abs(h1 * v2 - v1 * h2)
        found = counts.get((i, j), 0)
        antiparallel = expected == 0 and h1 * h2 + v1 * v2 < 0
        if antiparallel and found % 2 == 0:
            continue
        if found != expected:
            report.pair_mismatches.append(
                {"tracks": [tracks[i].id, tracks[j].id], "crossings": found, "expected": expected}
            )
    report.self_crossings = sorted(set(report.self_crossings))
    report.minimal = not report.self_crossings and not report.pair_mismatches
    return report


def tracks_by_direction(G: PeriodicBipartiteGraph) -> List[int]:
    """按同调方向角 (逆时针, 从 x 轴起) 排序的 track 索引, 平行 track 保持插入顺序"""
    return sorted(range(len(G.tracks)), key=lambda i: (round(G.tracks[i].direction, 12), i))


def polygon_area(points: Sequence[Sequence[float]]) -> float:
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def newton_polygon(G: PeriodicBipartiteGraph,
                   order: Optional[Sequence[int]] = None) -> List[Offset]:
    """
    几何 Newton 多边形: 按方向排序后首尾相接, P₁ = (0, 0)

    Args:
        order: track 的拼接顺序, 默认按方向角

    Raises:
        DegenerateGraph: 面积为 0
    """
    order = tracks_by_direction(G) if order is None else list(order)
    points = [(0, 0)]
    for idx in order[:-1]:
        h, v = G.tracks[idx].homology
        points.append((points[-1][0] + h, points[-1][1] + v))
    if abs(polygon_area(points)) < 1e-12:
        raise DegenerateGraph("Newton 多边形面积为 0")
    return points


def hull_vertices(points: Sequence[Offset]) -> List[Offset]:
    """去掉共线点后的凸包顶点 (逆时针, 从字典序最小点开始)"""
    pts = sorted(set((int(p[0]), int(p[1])) for p in points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def normalize_polygon(points: Sequence[Offset]) -> List[Offset]:
    """平移使字典序最小的凸包顶点为原点, 用于"相差平移"比较"""
    hull = hull_vertices(points)
    x0, y0 = hull[0]
    return [(x - x0, y - y0) for x, y in hull]


def interior_points(points: Sequence[Offset]) -> List[Offset]:
    """凸多边形内部的格点 (个数即谱曲线亏格)"""
    hull = hull_vertices(points)
    xs = [p[0] for p in hull]
    ys = [p[1] for p in hull]
    out = []
    n = len(hull)
    for x in range(min(xs), max(xs) + 1):
        for y in range(min(ys), max(ys) + 1):
            inside = True
            for k in range(n):
                (x1, y1), (x2, y2) = hull[k], hull[(k + 1) % n]
                if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) <= 0:
                    inside = False
                    break
            if inside:
                out.append((x, y))
    return out


# ============= 角度映射 =============

@dataclass
class AngleMap:
    """
    每条 track 的 A₀ 参数 s (提升到窗口 [s₁, s₁+1)) 与 Abel–Jacobi 提升 ã ∈ R^g
    """
    s: Dict[str, float]
    lifts: Dict[str, np.ndarray]

    def content_key(self) -> dict:
        return {k: [round(self.s[k], 14), np.round(np.real(self.lifts[k]), 14).tolist()]
                for k in sorted(self.s)}

    def s_order(self, G: PeriodicBipartiteGraph) -> List[int]:
        """按 s 排序的 track 索引, 相同 s 保持插入顺序"""
        return sorted(range(len(G.tracks)), key=lambda i: (self.s[G.tracks[i].id], i))

    def lift_of(self, G: PeriodicBipartiteGraph, idx: int) -> np.ndarray:
        return self.lifts[G.tracks[idx].id]

    def to_json(self) -> dict:
        return {"tracks": {k: {"s": float(v)} for k, v in self.s.items()}}


def window_normalize(values: Dict[str, float]) -> Dict[str, float]:
    """把参数提升到窗口 [s_min, s_min + 1)"""
    s_min = min(values.values())
    return {k: s_min + float(np.mod(v - s_min, 1.0)) for k, v in values.items()}


def make_angle_map(G: PeriodicBipartiteGraph, s_values: Dict[str, float], curve) -> AngleMap:
    """由 A₀ 参数构造角度映射, 提升由 curve.a0_lift 给出"""
    missing = [t.id for t in G.tracks if t.id not in s_values]
    if missing:
        raise SchemaError(f"角度映射缺少 track: {missing}")
    s = window_normalize({t.id: float(s_values[t.id]) for t in G.tracks})
    lifts = {k: np.real(np.asarray(curve.a0_lift(v))).astype(float) for k, v in s.items()}
    return AngleMap(s=s, lifts=lifts)


def angle_map_from_json(G: PeriodicBipartiteGraph, data: dict, curve) -> AngleMap:
    """
    解析角度 JSON

    支持:
        {"order": "direction", "s": [...]}         按方向角顺序给出
        {"tracks": {"T0": {"s": 0.1}, ...}}         按 track 标识给出
        {"tracks": {"T0": {"lift": [...]}, ...}}    专家模式, 直接给出提升
    """
    if data.get("order") == "direction":
        values = list(data.get("s", []))
        order = tracks_by_direction(G)
        if len(values) != len(order):
            raise SchemaError(f"角度个数 {len(values)} 与 track 数 {len(order)} 不一致")
        return make_angle_map(G, {G.tracks[i].id: v for i, v in zip(order, values)}, curve)
    entries = data.get("tracks")
    if not isinstance(entries, dict):
        raise SchemaError("角度 JSON 需要 order=direction 或 tracks 字段")
    if all("lift" in v for v in entries.values()):
        lifts = {k: np.asarray(v["lift"], dtype=float) for k, v in entries.items()}
        s = {k: float(v.get("s", lifts[k][0])) for k, v in entries.items()}
        return AngleMap(s=s, lifts=lifts)
    return make_angle_map(G, {k: float(v["s"]) for k, v in entries.items()}, curve)


def validate_angle_map(G: PeriodicBipartiteGraph, angles: AngleMap) -> Tuple[bool, List[str]]:
    """
    X_G 校验: 按 s 排序后方向角循环单调 (总增量恰为 2π), 且非平行 track 的 s 互不相同
    """
    problems = []
    order = angles.s_order(G)
    dirs = [G.tracks[i].direction for i in order]
    total = 0.0
    for k in range(len(order)):
        step = (dirs[(k + 1) % len(order)] - dirs[k]) % (2 * math.pi)
        total += step
    if abs(total - 2 * math.pi) > 1e-9:
        problems.append(f"方向角沿 s 顺序的总增量为 {total / math.pi:.3f}π (应为 2π)")
    for i, j in itertools.combinations(range(len(G.tracks)), 2):
        ti, tj = G.tracks[i], G.tracks[j]
        if ti.homology != tj.homology and abs(angles.s[ti.id] - angles.s[tj.id]) < 1e-14:
            problems.append(f"非平行 track {ti.id}, {tj.id} 的角度相同")
    return (not problems), problems


# ============= 离散 Abel 映射 =============

@dataclass
class AbelMap:
    """
    离散 Abel 映射 d̃: 白点 / 黑点 / 面 (基本域代表) 的值与度数, 以及周期

    d̃(x + (m, n)) = d̃(x) + m·period_x + n·period_y
    """
    whites: Dict[str, np.ndarray]
    blacks: Dict[str, np.ndarray]
    faces: Dict[int, np.ndarray]
    period_x: np.ndarray
    period_y: np.ndarray
    residual: float

    def degree(self, kind: str) -> int:
        return {"white": -1, "face": 0, "black": 1}[kind]

    def at(self, kind: str, key, cell: Offset = (0, 0)) -> np.ndarray:
        table = {"white": self.whites, "black": self.blacks, "face": self.faces}[kind]
        return table[key] + cell[0] * self.period_x + cell[1] * self.period_y

    def shifted(self, delta: np.ndarray) -> "AbelMap":
        return AbelMap(
            whites={k: v + delta for k, v in self.whites.items()},
            blacks={k: v + delta for k, v in self.blacks.items()},
            faces={k: v + delta for k, v in self.faces.items()},
            period_x=self.period_x, period_y=self.period_y, residual=self.residual,
        )


def discrete_abel_map(G: PeriodicBipartiteGraph, angles: AngleMap, base_face: int = 0,
                      base_value: Optional[np.ndarray] = None) -> AbelMap:
    """
    离散 Abel 映射: 每条边 e (白点在格 0) 给出四个局部关系

        d̃(b) + off·P = d̃(F_L) + a_L·P + α̃      d̃(w) = d̃(F_L) + a_L·P − β̃
        d̃(b) + off·P = d̃(F_R) + a_R·P + β̃      d̃(w) = d̃(F_R) + a_R·P − α̃

    与周期 P = (period_x, period_y) 一起用最小二乘求解, 残差应为 0。

    Raises:
        Inconsistent: 闭合残差 > 1e-12 (提升记账错误)
    """
    g = len(next(iter(angles.lifts.values())))
    whites, blacks, faces = G.whites, G.blacks, G.faces
    col = {}
    for w in whites:
        col[("white", w)] = len(col)
    for b in blacks:
        col[("black", b)] = len(col)
    for f in faces:
        col[("face", f.index)] = len(col)
    px, py = len(col), len(col) + 1
    n_cols = len(col) + 2

    rows, rhs = [], []

    def add(entries, value):
        row = np.zeros(n_cols)
        for c, coef in entries:
            row[c] += coef
        rows.append(row)
        rhs.append(value)

    for e, edge in enumerate(G.edges):
        ta, tb = G.alpha_beta(e)
        alpha = angles.lift_of(G, ta)
        beta = angles.lift_of(G, tb)
        fl, a_l, fr, a_r = G.edge_faces[e]
        cb, cw = col[("black", edge.black)], col[("white", edge.white)]
        cl, cr = col[("face", fl)], col[("face", fr)]
        ox, oy = edge.offset
        add([(cb, 1), (px, ox), (py, oy), (cl, -1), (px, -a_l[0]), (py, -a_l[1])], alpha)
        add([(cw, 1), (cl, -1), (px, -a_l[0]), (py, -a_l[1])], -beta)
        add([(cb, 1), (px, ox), (py, oy), (cr, -1), (px, -a_r[0]), (py, -a_r[1])], beta)
        add([(cw, 1), (cr, -1), (px, -a_r[0]), (py, -a_r[1])], -alpha)

    base = np.zeros(g) if base_value is None else np.real(np.asarray(base_value, dtype=float))
    add([(col[("face", base_face)], 1)], base)

    A = np.array(rows)
    B = np.array(rhs)
    sol, *_ = np.linalg.lstsq(A, B, rcond=None)
    residual = float(np.max(np.abs(A @ sol - B)))
    if residual > 1e-12 * max(1.0, float(np.max(np.abs(B)))) * 10:
        raise Inconsistent(f"离散 Abel 映射不闭合: 残差 {residual:.2e}", residual=residual)

    return AbelMap(
        whites={w: sol[col[("white", w)]] for w in whites},
        blacks={b: sol[col[("black", b)]] for b in blacks},
        faces={f.index: sol[col[("face", f.index)]] for f in faces},
        period_x=sol[px],
        period_y=sol[py],
        residual=residual,
    )


# ============= 周期性判据 =============

def phi_map(G: PeriodicBipartiteGraph, angles: AngleMap) -> List[np.ndarray]:
    """
    φ_k(α) = Σ_j P_j (ã_j − ã_{j−1})_k, track 按 s 排序, P₁ = 0, ã₀ = ã_r − 𝟙

    返回 g 个 R² 点
    """
    order = angles.s_order(G)
    points = newton_polygon(G, order)
    lifts = np.array([angles.lift_of(G, i) for i in order])
    prev = np.vstack([lifts[-1:] - 1.0, lifts[:-1]])
    diffs = lifts - prev                                   # (r, g)
    P = np.asarray(points, dtype=float)                    # (r, 2)
    phi = P.T @ diffs                                      # (2, g)
    return [phi[:, k] for k in range(phi.shape[1])]


def is_operator_periodic(G: PeriodicBipartiteGraph, angles: AngleMap,
                         tol: float = 1e-8) -> Tuple[bool, List[Offset]]:
    """
    φ(α) ∈ (Z²)^g 时 Kasteleyn 算子周期;周期时 g 个整点两两不同

    Returns:
        (是否周期, 最近整点列表)
    """
    phi = phi_map(G, angles)
    nearest = [(int(round(p[0])), int(round(p[1]))) for p in phi]
    periodic = all(np.max(np.abs(p - np.asarray(n))) < tol for p, n in zip(phi, nearest))
    if periodic and len(set(nearest)) != len(nearest):
        logger.warning(f"⚠️ φ 的整点不互异: {nearest}")
        periodic = False
    return periodic, nearest


def edge_height_crossings(edge: Edge) -> Tuple[int, int]:
    """(e ∧ γ_x, e ∧ γ_y), 白点在 γ_x 左侧的约定"""
    return -edge.offset[1], edge.offset[0]


# ============= JSON =============

def graph_from_json(data: dict) -> PeriodicBipartiteGraph:
    try:
        edges = [Edge(str(e["w"]), str(e["b"]), tuple(e["offset"])) for e in data["edges"]]
        return PeriodicBipartiteGraph(data["whites"], data["blacks"], edges, data["rotations"])
    except KeyError as e:
        raise SchemaError(f"图 JSON 缺少字段: {e}") from e


def graph_to_json(G: PeriodicBipartiteGraph) -> dict:
    return {
        "whites": list(G.whites),
        "blacks": list(G.blacks),
        "edges": [e.to_json() for e in G.edges],
        "rotations": {v: list(r) for v, r in G.rotations.items()},
    }
