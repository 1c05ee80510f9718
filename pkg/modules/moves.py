"""
局部移动: 2 价顶点收缩 / 展开与 spider 移动

移动只改写图; track 集合、同调类、角度映射与 t̃ 原样保留, 权重在新图上
由同一组角度重新计算, 离散 Abel 映射在一个未受影响的顶点处对齐。

spider 移动按 urban renewal 实现: 四边形面 F 的四条边被删除, 面内新增一个
颜色相反的小四边形, 每个新顶点用一条辐边连到原角点。原角点若为 3 价则变为
2 价, 可再用 shrink 去掉。
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from tqdm import tqdm

from .errors import Inconsistent, PatternMismatch, PeriodicityRequired, SchemaError
from .gibbs import edge_probability_local, torus_partition_function
from .graph import (
    AbelMap,
    AngleMap,
    Edge,
    PeriodicBipartiteGraph,
    discrete_abel_map,
    is_operator_periodic,
)
from .kasteleyn import (
    CharPoly,
    FockModel,
    _rel,
    char_poly,
    face_weight,
    fock_entry,
)
from .surface import OvalPoint
from .theta import theta, theta_char

logger = logging.getLogger(__name__)

Offset = Tuple[int, int]

_KINDS = {
    "shrink": "shrink", "shrink2valent": "shrink",
    "expand": "expand", "expand2valent": "expand",
    "spider": "spider",
}


# ============= 数据类型 =============

@dataclass(frozen=True)
class MoveSpec:
    """
    一次局部移动

    Args:
        kind: shrink | expand | spider (也接受 Shrink2Valent / Expand2Valent / Spider)
        vertex: shrink / expand 作用的顶点
        face: spider 作用的面索引
        split: expand 时移到新顶点上的入射边 (旋转中的连续段)
    """
    kind: str
    vertex: Optional[str] = None
    face: Optional[int] = None
    split: Tuple[int, ...] = ()

    def __post_init__(self):
        kind = _KINDS.get(str(self.kind).lower())
        if kind is None:
            raise SchemaError(f"未知的移动类型: {self.kind}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "split", tuple(int(e) for e in self.split))
        if kind in ("shrink", "expand") and self.vertex is None:
            raise SchemaError(f"{kind} 移动需要 vertex 字段")
        if kind == "spider" and self.face is None:
            raise SchemaError("spider 移动需要 face 字段")

    @classmethod
    def from_json(cls, data: dict) -> "MoveSpec":
        try:
            return cls(kind=data["kind"], vertex=data.get("vertex"), face=data.get("face"),
                       split=tuple(data.get("split", ())))
        except KeyError as e:
            raise SchemaError(f"移动 JSON 缺少字段: {e}") from e

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.vertex is not None:
            out["vertex"] = self.vertex
        if self.face is not None:
            out["face"] = self.face
        if self.split:
            out["split"] = list(self.split)
        return out


@dataclass
class MoveResult:
    """
    图改写的结果

    edge_map: 保留下来的旧边索引 -> 新边索引
    support: 旧图中被移动触及的顶点
    two_valent: 移动前 (shrink) 或移动后 (expand) 的 2 价顶点
    """
    graph: PeriodicBipartiteGraph
    edge_map: Dict[int, int]
    support: Set[str]
    two_valent: Optional[str] = None


@dataclass
class MoveReport:
    kind: str
    passed: bool
    checks: Dict[str, Optional[float]] = field(default_factory=dict)
    tolerances: Dict[str, float] = field(default_factory=dict)
    skipped: List[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"kind": self.kind, "passed": self.passed, "checks": self.checks,
                "tolerances": self.tolerances, "skipped": self.skipped}


# ============= 图改写 =============

def _after(rot: Sequence[int], e: int) -> List[int]:
    """旋转中 e 之后的边 (循环, 不含 e)"""
    i = list(rot).index(e)
    return list(rot[i + 1:]) + list(rot[:i])


def _fresh_name(G: PeriodicBipartiteGraph, base: str, taken: Set[str]) -> str:
    name = base
    while name in taken or name in G.rotations:
        name += "'"
    taken.add(name)
    return name


def _shrink(G: PeriodicBipartiteGraph, v: str) -> MoveResult:
    if v not in G.rotations:
        raise PatternMismatch(f"顶点 {v} 不存在")
    if G.degree(v) != 2:
        raise PatternMismatch(f"顶点 {v} 的度数为 {G.degree(v)}, 不是 2 价", vertex=v)
    e1, e2 = G.rotations[v]
    white = G.is_white(v)
    ends = [G.edges[e].black if white else G.edges[e].white for e in (e1, e2)]
    keep, gone = ends
    if keep == gone:
        raise PatternMismatch(f"2 价顶点 {v} 的两个邻点是同一个基本域顶点", vertex=v)
    o1, o2 = G.edges[e1].offset, G.edges[e2].offset
    # gone 相对 keep 的格平移
    if white:
        shift = (o2[0] - o1[0], o2[1] - o1[1])
    else:
        shift = (o1[0] - o2[0], o1[1] - o2[1])

    edge_map: Dict[int, int] = {}
    edges: List[Edge] = []
    for k, edge in enumerate(G.edges):
        if k in (e1, e2):
            continue
        edge_map[k] = len(edges)
        if white and edge.black == gone:
            edge = Edge(edge.white, keep, (edge.offset[0] - shift[0], edge.offset[1] - shift[1]))
        elif not white and edge.white == gone:
            edge = Edge(keep, edge.black, (edge.offset[0] + shift[0], edge.offset[1] + shift[1]))
        edges.append(edge)

    rotations = {}
    for u, rot in G.rotations.items():
        if u in (v, gone):
            continue
        if u == keep:
            rot = _after(G.rotations[keep], e1) + _after(G.rotations[gone], e2)
        rotations[u] = [edge_map[e] for e in rot]
    whites = [w for w in G.whites if w not in (v, gone)]
    blacks = [b for b in G.blacks if b not in (v, gone)]
    if not whites or not blacks:
        raise PatternMismatch(f"收缩 {v} 后基本域为空")
    graph = PeriodicBipartiteGraph(whites, blacks, edges, rotations)
    return MoveResult(graph, edge_map, {v, keep, gone}, two_valent=v)


def _expand(G: PeriodicBipartiteGraph, v: str, split: Sequence[int]) -> MoveResult:
    if v not in G.rotations:
        raise PatternMismatch(f"顶点 {v} 不存在")
    rot = G.rotations[v]
    deg = len(rot)
    split = list(split)
    if not 1 <= len(split) <= deg - 1:
        raise PatternMismatch(f"拆分段长度 {len(split)} 不在 [1, {deg - 1}] 内", vertex=v)
    if split[0] not in rot:
        raise PatternMismatch(f"边 {split[0]} 不与 {v} 相邻", vertex=v)
    start = rot.index(split[0])
    block = [rot[(start + k) % deg] for k in range(len(split))]
    if block != split:
        raise PatternMismatch(f"{split} 不是 {v} 旋转 {rot} 中的连续段", vertex=v)
    rest = [rot[(start + len(split) + k) % deg] for k in range(deg - len(split))]

    white = G.is_white(v)
    taken: Set[str] = set()
    twin = _fresh_name(G, f"{v}'", taken)
    mid = _fresh_name(G, f"{v}~", taken)
    moved = set(split)
    edges = []
    for k, edge in enumerate(G.edges):
        if k in moved:
            edge = Edge(twin, edge.black, edge.offset) if white else Edge(edge.white, twin, edge.offset)
        edges.append(edge)
    e_v, e_twin = len(edges), len(edges) + 1
    if white:
        edges += [Edge(v, mid, (0, 0)), Edge(twin, mid, (0, 0))]
        whites, blacks = G.whites + [twin], G.blacks + [mid]
    else:
        edges += [Edge(mid, v, (0, 0)), Edge(mid, twin, (0, 0))]
        whites, blacks = G.whites + [mid], G.blacks + [twin]

    rotations = {u: list(r) for u, r in G.rotations.items()}
    rotations[v] = rest + [e_v]
    rotations[twin] = split + [e_twin]
    rotations[mid] = [e_v, e_twin]
    graph = PeriodicBipartiteGraph(whites, blacks, edges, rotations)
    edge_map = {k: k for k in range(len(G.edges))}
    return MoveResult(graph, edge_map, {v}, two_valent=mid)


def _spider(G: PeriodicBipartiteGraph, face_index: int) -> MoveResult:
    if not 0 <= face_index < len(G.faces):
        raise PatternMismatch(f"面 {face_index} 不存在")
    face = G.faces[face_index]
    if face.degree != 4:
        raise PatternMismatch(f"面 {face_index} 的度数为 {face.degree}, spider 移动需要四边形面",
                              face=face_index)
    face_edges = [e for e, _ in face.darts]
    if len(set(face_edges)) != 4:
        raise PatternMismatch(f"面 {face_index} 的边界重复经过同一条边", face=face_index)
    corners = G.face_vertices(face)

    rotations = {u: list(r) for u, r in G.rotations.items()}
    taken: Set[str] = set()
    fresh = [_fresh_name(G, f"{name}*", taken) for name, _ in corners]
    colors = [G.is_white(name) for name, _ in corners]

    # 新边: 辐边 0..3, 内四边形边 (i, i+1) 0..3
    base = len(G.edges) - 4
    spoke = [base + i for i in range(4)]
    inner = [base + 4 + i for i in range(4)]
    new_edges: List[Edge] = []
    for (name, _), n, is_white in zip(corners, fresh, colors):
        new_edges.append(Edge(name, n, (0, 0)) if is_white else Edge(n, name, (0, 0)))
    for i in range(4):
        j = (i + 1) % 4
        # 新顶点 i 的颜色与角点 i 相反
        li, lj = corners[i][1], corners[j][1]
        if colors[i]:
            new_edges.append(Edge(fresh[j], fresh[i], (li[0] - lj[0], li[1] - lj[1])))
        else:
            new_edges.append(Edge(fresh[i], fresh[j], (lj[0] - li[0], lj[1] - li[1])))

    for i, (name, _) in enumerate(corners):
        q, p = face_edges[i], face_edges[(i - 1) % 4]
        rot = rotations[name]
        k = rot.index(q)
        if rot[(k + 1) % len(rot)] != p:
            raise PatternMismatch(f"角点 {name} 处面边不相邻", face=face_index)
        rot[k] = ("spoke", i)
        rot.remove(p)
        if len(rot) < 2:
            raise PatternMismatch(f"角点 {name} 在 spider 移动后度数 < 2", face=face_index)
    for i, n in enumerate(fresh):
        rotations[n] = [("spoke", i), ("inner", i), ("inner", (i - 1) % 4)]

    edge_map: Dict[int, int] = {}
    edges: List[Edge] = []
    for k, edge in enumerate(G.edges):
        if k in face_edges:
            continue
        edge_map[k] = len(edges)
        edges.append(edge)
    edges += new_edges
    index = {("spoke", i): spoke[i] for i in range(4)}
    index.update({("inner", i): inner[i] for i in range(4)})
    rotations = {
        u: [index[e] if isinstance(e, tuple) else edge_map[e] for e in rot]
        for u, rot in rotations.items()
    }
    whites = G.whites + [n for n, c in zip(fresh, colors) if not c]
    blacks = G.blacks + [n for n, c in zip(fresh, colors) if c]
    graph = PeriodicBipartiteGraph(whites, blacks, edges, rotations)
    return MoveResult(graph, edge_map, {name for name, _ in corners})


def rewrite_graph(G: PeriodicBipartiteGraph, spec: MoveSpec) -> MoveResult:
    """
    只改写组合结构, 不涉及权重

    Raises:
        PatternMismatch: 局部构型不满足移动的前提
    """
    if spec.kind == "shrink":
        return _shrink(G, spec.vertex)
    if spec.kind == "expand":
        return _expand(G, spec.vertex, spec.split)
    return _spider(G, int(spec.face))


# ============= 角度与 Abel 映射的迁移 =============

def transport_angles(old: PeriodicBipartiteGraph, rewrite: MoveResult,
                     angles: AngleMap) -> AngleMap:
    """
    经由保留边上的状态把新图的 track 对应到旧图的 track

    Raises:
        PatternMismatch: 某条新 track 不经过任何保留边
        Inconsistent: 对应不是双射或同调类改变
    """
    new = rewrite.graph
    mapping: Dict[int, int] = {}
    for (e, role), idx in old.track_of_state.items():
        ne = rewrite.edge_map.get(e)
        if ne is None:
            continue
        target = new.track_of_state[(ne, role)]
        if mapping.setdefault(target, idx) != idx:
            raise Inconsistent(f"新 track {new.tracks[target].id} 对应到多条旧 track")
    if len(mapping) != len(new.tracks):
        raise PatternMismatch("有 track 完全落在移动区域内, 无法对应")
    if sorted(mapping.values()) != list(range(len(old.tracks))):
        raise Inconsistent("track 对应不是双射")
    s, lifts = {}, {}
    for n_idx, o_idx in mapping.items():
        n_track, o_track = new.tracks[n_idx], old.tracks[o_idx]
        if n_track.homology != o_track.homology:
            raise Inconsistent(f"track {o_track.id} 的同调类在移动后改变: "
                               f"{o_track.homology} -> {n_track.homology}")
        s[n_track.id] = angles.s[o_track.id]
        lifts[n_track.id] = np.asarray(angles.lifts[o_track.id], dtype=float)
    return AngleMap(s=s, lifts=lifts)


def _aligned_abel(model: FockModel, graph: PeriodicBipartiteGraph, angles: AngleMap) -> AbelMap:
    abel = discrete_abel_map(graph, angles)
    for kind, old_names, new_names in (("white", model.graph.whites, graph.whites),
                                       ("black", model.graph.blacks, graph.blacks)):
        common = [v for v in new_names if v in set(old_names)]
        if common:
            v = common[0]
            return abel.shifted(model.abel.at(kind, v) - abel.at(kind, v))
    raise PatternMismatch("移动前后没有公共顶点, 无法对齐离散 Abel 映射")


# ============= 移动 =============

def _apply(model: FockModel, rewrite: MoveResult) -> FockModel:
    angles = transport_angles(model.graph, rewrite, model.angles)
    abel = _aligned_abel(model, rewrite.graph, angles)
    gauge = {v: c for v, c in model.gauge.items() if v in rewrite.graph.rotations}
    return FockModel(rewrite.graph, model.curve, angles, model.t, validate=True, abel=abel,
                     gauge=gauge, scale=model.scale)


def apply_move(model: FockModel, spec: MoveSpec) -> FockModel:
    """
    在改写后的图上用同一组 track、角度与 t̃ 重新计算 Fock 权重

    Raises:
        PatternMismatch: 局部构型不匹配
        SchemaError: 结果不是极小图
    """
    rewrite = rewrite_graph(model.graph, spec)
    new = _apply(model, rewrite)
    logger.info(f"✅ {spec.kind} 移动: {len(model.graph.edges)} -> {len(new.graph.edges)} 条边")
    return new


def shrink_two_valent(model: FockModel, vertex: str) -> FockModel:
    return apply_move(model, MoveSpec("shrink", vertex=vertex))


def expand_two_valent(model: FockModel, vertex: str, split: Sequence[int]) -> FockModel:
    return apply_move(model, MoveSpec("expand", vertex=vertex, split=tuple(split)))


def spider_move(model: FockModel, face: int) -> FockModel:
    return apply_move(model, MoveSpec("spider", face=face))


# ============= 不变量检查 =============

def _untouched_face_deviation(old: FockModel, new: FockModel, rewrite: MoveResult) -> float:
    new_faces = {frozenset(f.darts): f for f in new.graph.faces}
    worst = 0.0
    for face in old.graph.faces:
        if any(e not in rewrite.edge_map for e, _ in face.darts):
            continue
        key = frozenset((rewrite.edge_map[e], d) for e, d in face.darts)
        match = new_faces.get(key)
        if match is None:
            continue
        a, b = face_weight(old, face), face_weight(new, match)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    return worst


def two_valent_residual(model: FockModel, v: str) -> float:
    """2 价顶点处 |K_{x₁,v} + K_{x₂,v}| / |K_{x₁,v}| (同一个 v 副本周围)"""
    G = model.graph
    e1, e2 = G.rotations[v]
    bare = model.replace(gauge={})
    if G.is_white(v):
        cell = (0, 0)
    else:
        o1, o2 = G.edges[e1].offset, G.edges[e2].offset
        cell = (o1[0] - o2[0], o1[1] - o2[1])
    k1 = fock_entry(bare, e1)
    k2 = fock_entry(bare, e2, cell)
    return abs(k1 + k2) / max(abs(k1), 1e-300)


def fay_fock_residual(model: FockModel, face: int) -> float:
    """
    面 F 周围四条 track (按 s 排序为 a, b, c, d) 上

        F(a,b)F(c,d) + F(a,d)F(b,c) + F(a,c)F(d,b) = 0,  F(x,y) = θ(x̃ + ỹ − t̃ − d̃(F)) E(x,y)
    """
    G = model.graph
    tracks = sorted({k for e, _ in G.faces[face].darts for k in G.alpha_beta(e)},
                    key=lambda k: model.angles.s[G.tracks[k].id])
    if len(tracks) != 4:
        raise PatternMismatch(f"面 {face} 周围有 {len(tracks)} 条 track (应为 4)")
    a, b, c, d = (model.track_lifts[k] for k in tracks)
    shift = model.t + model.abel.at("face", face)

    def F(x, y):
        return (complex(theta(x + y - shift, model.period, model.cfg))
                * complex(theta_char(model.odd, y - x, model.period, model.cfg)))

    return _rel([F(a, b) * F(c, d), F(a, d) * F(b, c), F(a, c) * F(d, b)])


def _aligned_coeffs(poly: CharPoly) -> Dict[Offset, complex]:
    lo = min(poly.coeffs)
    return {(i - lo[0], j - lo[1]): c for (i, j), c in poly.coeffs.items()}


def proportionality_deviation(p: CharPoly, q: CharPoly) -> float:
    """q ∝ z^a w^b p 时为 0: 对齐最小指数后系数比的最大相对离差"""
    a, b = _aligned_coeffs(p), _aligned_coeffs(q)
    if set(a) != set(b):
        return float("inf")
    ratios = np.array([b[k] / a[k] for k in a])
    mean = np.mean(ratios)
    return float(np.max(np.abs(ratios - mean)) / max(abs(mean), 1e-300))


def _distant_edges(old: FockModel, rewrite: MoveResult) -> List[int]:
    G = old.graph
    return [e for e in rewrite.edge_map
            if G.edges[e].white not in rewrite.support and G.edges[e].black not in rewrite.support]


def check_move_invariance(model: FockModel, spec: MoveSpec, tol: float = 1e-8,
                          prob_tol: float = 1e-6, sample_point: Optional[OvalPoint] = None) -> MoveReport:
    """
    移动前后的不变量

        untouched_faces   未受影响面的面权重
        two_valent        2 价顶点的两条边权重互为相反数
        fay_fock          spider 面周围四个角度上的 FayFock 残差
        char_poly         特征多项式成比例 (相差单项式因子)
        torus_ratio       2×2 环面配分函数比值 (报告, 不判定)
        probabilities     远离移动区域的单边概率 (气相探测点)
    """
    rewrite = rewrite_graph(model.graph, spec)
    new = _apply(model, rewrite)
    report = MoveReport(kind=spec.kind, passed=True,
                        tolerances={"weights": tol, "probabilities": prob_tol})

    def record(name: str, value: Optional[float], limit: Optional[float]):
        report.checks[name] = value
        if value is not None and limit is not None and not value < limit:
            report.passed = False
            logger.warning(f"⚠️ 移动不变量 {name} = {value:.2e} 超过容差 {limit:.0e}")

    record("untouched_faces", _untouched_face_deviation(model, new, rewrite), tol)
    if spec.kind == "shrink":
        record("two_valent", two_valent_residual(model, spec.vertex), tol)
    elif spec.kind == "expand":
        record("two_valent", two_valent_residual(new, rewrite.two_valent), tol)
    else:
        record("fay_fock", fay_fock_residual(model, int(spec.face)), tol)

    periodic, _ = is_operator_periodic(model.graph, model.angles)
    if periodic:
        try:
            record("char_poly", proportionality_deviation(char_poly(model), char_poly(new)), tol)
            ratio = torus_partition_function(new, 2) / torus_partition_function(model, 2)
            record("torus_ratio", float(ratio), None)
        except PeriodicityRequired as e:
            report.skipped.append(f"char_poly: {e}")
    else:
        report.skipped.append("char_poly: Kasteleyn 算子不是周期的")

    if model.g >= 1:
        sample_point = sample_point or OvalPoint(1, 0.37)
        worst = 0.0
        for e in _distant_edges(model, rewrite):
            p_old = edge_probability_local(model, e, sample_point)
            p_new = edge_probability_local(new, rewrite.edge_map[e], sample_point)
            worst = max(worst, abs(p_old - p_new))
        record("probabilities", worst, prob_tol)

    status = "✅" if report.passed else "❌"
    logger.info(f"{status} {spec.kind} 移动不变量: "
                f"{', '.join(f'{k}={v:.1e}' for k, v in report.checks.items() if v is not None)}")
    return report


# ============= 脚本 =============

def load_script(source: Union[str, Path, list]) -> List[MoveSpec]:
    """JSON 数组 (或其文件路径) -> MoveSpec 列表"""
    if isinstance(source, (str, Path)):
        data = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        data = source
    if not isinstance(data, list):
        raise SchemaError("移动脚本必须是 JSON 数组")
    return [MoveSpec.from_json(item) for item in data]


def run_script(model: FockModel, script: Union[str, Path, list], check: bool = True,
               progress: bool = False, **check_kwargs) -> Tuple[FockModel, List[MoveReport]]:
    """
    依次执行移动; check=True 时每一步都做不变量检查

    Returns:
        (最终模型, 每一步的报告)
    """
    specs = load_script(script)
    reports: List[MoveReport] = []
    for spec in tqdm(specs, desc="局部移动", disable=not progress):
        if check:
            reports.append(check_move_invariance(model, spec, **check_kwargs))
        model = apply_move(model, spec)
    return model, reports
