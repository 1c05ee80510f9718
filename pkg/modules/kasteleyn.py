"""
Fock 的 Kasteleyn 算子 (约化纯 theta 规范)

    K_e = θ[δ](β̃ − α̃) / (θ(t̃ + d̃(F_L)) · θ(t̃ + d̃(F_R)))

其中 δ 为非退化奇特征, 素形式 E(x, y) 处处替换为 E_red(x, y) = θ[δ](ỹ − x̃)。
面权重、Fay 恒等式与谱曲线 (相差常数缩放) 在此规范下与原始定义一致。

核函数 g_{x,y} 沿 quad 图路径逐段相乘:

    g_{f,w}(ũ) = θ(t̃ + ũ + d̃(w)) / θ[δ](ũ − (d̃(f) − d̃(w)))
    g_{b,f}(ũ) = θ(−t̃ + ũ − d̃(b)) / θ[δ](ũ − (d̃(b) − d̃(f)))

反向步取倒数。
"""

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy.optimize import least_squares

from .errors import (
    AnglePole,
    CalibrationFailure,
    DegenerateAngles,
    Inconsistent,
    NonGenericT,
    PeriodicityRequired,
    PolePoint,
    SchemaError,
    ZeroEdge,
)
from .graph import (
    AbelMap,
    AngleMap,
    Face,
    PeriodicBipartiteGraph,
    check_minimal,
    discrete_abel_map,
    graph_to_json,
    is_operator_periodic,
    newton_polygon,
    normalize_polygon,
    validate_angle_map,
)
from .lattices import coset_representatives, lift_angles_to_cover, superlattice
from .surface import MCurve, OvalPoint, PointLift
from .theta import (
    grad_log_theta,
    grad_log_theta_char,
    grad_theta_char,
    pick_odd_characteristic,
    theta,
    theta_char,
)

logger = logging.getLogger(__name__)

Offset = Tuple[int, int]
QuadVertex = Tuple[str, object, Offset]


# ============= 模型 =============

class FockModel:
    """
    周期极小图上的 Fock 二聚体模型

    Args:
        graph: 周期二部图
        curve: M-curve 后端
        angles: 角度映射 (每条 track 的 A₀ 参数与提升)
        t: 实向量 t̃ ∈ R^g
        validate: 是否校验极小性与 X_G 条件 (打乱角度的反例需要关闭)
        abel: 预先给定的离散 Abel 映射 (覆盖图与局部移动使用)
        gauge: 顶点 -> 规范因子, 缺省为 1
        scale: 谱参数化的 (λ, μ)

    Raises:
        SchemaError: 图不是极小图
        DegenerateAngles: 角度映射不在 X_G 中, 或同一条边两侧提升重合
    """

    def __init__(self, graph: PeriodicBipartiteGraph, curve: MCurve, angles: AngleMap, t,
                 validate: bool = True, abel: Optional[AbelMap] = None,
                 gauge: Optional[Dict[str, complex]] = None,
                 scale: Tuple[complex, complex] = (1.0, 1.0)):
        self.graph = graph
        self.curve = curve
        self.angles = angles
        self.t = np.real(np.asarray(t, dtype=float)).reshape(-1)
        if self.t.shape != (curve.g,):
            raise SchemaError(f"t 的维数 {self.t.shape} 与亏格 {curve.g} 不一致")
        self.validated = bool(validate)
        self.gauge = dict(gauge or {})
        self.scale = (complex(scale[0]), complex(scale[1]))
        if validate:
            report = check_minimal(graph)
            if not report.minimal:
                raise SchemaError(f"图不是极小图: {report.to_json()}", report=report.to_json())
            ok, problems = validate_angle_map(graph, angles)
            if not ok:
                raise DegenerateAngles(f"角度映射不在 X_G 中: {problems}", problems=problems)
        self.abel = abel if abel is not None else discrete_abel_map(graph, angles)
        self.white_index = {w: i for i, w in enumerate(graph.whites)}
        self.black_index = {b: i for i, b in enumerate(graph.blacks)}
        self._cache: dict = {}

    def __repr__(self) -> str:
        return (f"FockModel({len(self.graph.whites)}W/{len(self.graph.blacks)}B, "
                f"{len(self.graph.edges)} edges, {self.curve!r})")

    # ---------- 基本量 ----------

    @property
    def g(self) -> int:
        return self.curve.g

    @property
    def period(self):
        return self.curve.period

    @property
    def cfg(self):
        return self.curve.cfg

    @cached_property
    def odd(self):
        return pick_odd_characteristic(self.period, self.cfg)

    def track_lift(self, idx: int) -> np.ndarray:
        return np.asarray(self.angles.lift_of(self.graph, idx), dtype=float)

    @cached_property
    def track_lifts(self) -> np.ndarray:
        return np.array([self.track_lift(i) for i in range(len(self.graph.tracks))])

    def vertex_gauge(self, v: str) -> complex:
        return complex(self.gauge.get(v, 1.0))

    @cached_property
    def entries(self) -> np.ndarray:
        """全部基本域边的 Kasteleyn 系数 (含规范因子)"""
        return np.array([fock_entry(self, e) for e in range(len(self.graph.edges))])

    def content_key(self) -> dict:
        return {
            "graph": graph_to_json(self.graph),
            "curve": self.curve.descriptor(),
            "angles": self.angles.content_key(),
            "t": np.round(self.t, 14).tolist(),
            "gauge": {k: [complex(v).real, complex(v).imag] for k, v in sorted(self.gauge.items())},
        }

    def replace(self, **changes) -> "FockModel":
        """复制模型并替换部分字段 (不重复校验)"""
        kwargs = dict(graph=self.graph, curve=self.curve, angles=self.angles, t=self.t,
                      validate=False, abel=self.abel, gauge=self.gauge, scale=self.scale)
        kwargs.update(changes)
        model = FockModel(**kwargs)
        model.validated = self.validated
        return model


# ============= 权重 =============

def fock_entry(model: FockModel, e: int, cell: Offset = (0, 0)) -> complex:
    """
    单条边的 Kasteleyn 系数 (白点位于格 cell; 非周期模型的权重随格变化)

    Raises:
        DegenerateAngles: 两条 track 的提升重合, 分子 θ[δ](0) = 0
    """
    G = model.graph
    edge = G.edges[e]
    ta, tb = G.alpha_beta(e)
    alpha, beta = model.track_lift(ta), model.track_lift(tb)
    num = complex(theta_char(model.odd, beta - alpha, model.period, model.cfg))
    if abs(num) < model.cfg.zero_floor:
        raise DegenerateAngles(f"边 {e} 的两条 track 提升重合", edge=e)
    fl, a_l, fr, a_r = G.edge_faces[e]
    zl = model.t + model.abel.at("face", fl, (a_l[0] + cell[0], a_l[1] + cell[1]))
    zr = model.t + model.abel.at("face", fr, (a_r[0] + cell[0], a_r[1] + cell[1]))
    den = complex(theta(zl, model.period, model.cfg)) * complex(theta(zr, model.period, model.cfg))
    if den.real <= 0:
        logger.warning(f"⚠️ 边 {e} 的分母 θθ = {den:.3e} 不是正实数")
    return num / den * model.vertex_gauge(edge.white) * model.vertex_gauge(edge.black)


def face_weight(model: FockModel, face: Face) -> complex:
    """
    交错乘积 Π K(wb-dart) / Π K(bw-dart)

    Raises:
        ZeroEdge: 分母中有零权重
    """
    K = model.entries
    num, den = 1.0 + 0j, 1.0 + 0j
    for e, direction in face.darts:
        if direction == "wb":
            num *= K[e]
        else:
            if abs(K[e]) == 0.0:
                raise ZeroEdge(f"面 {face.index} 的边 {e} 权重为 0", face=face.index, edge=e)
            den *= K[e]
    return num / den


@dataclass
class KasteleynReport:
    passed: bool
    faces: List[dict] = field(default_factory=list)

    @property
    def failed_faces(self) -> List[int]:
        return [f["face"] for f in self.faces if not f["ok"]]

    def to_json(self) -> dict:
        return {"passed": self.passed, "faces": self.faces, "failed_faces": self.failed_faces}


def check_kasteleyn_condition(model: FockModel, tol: float = 1e-8) -> KasteleynReport:
    """每个 2m 度面的权重相位应为 (−1)^{m+1}"""
    report = KasteleynReport(passed=True)
    for face in model.graph.faces:
        m = face.degree // 2
        weight = face_weight(model, face)
        phase = weight / abs(weight)
        expected = (-1.0) ** (m + 1)
        deviation = float(abs(phase - expected))
        ok = deviation < tol
        report.faces.append({
            "face": face.index, "degree": face.degree,
            "phase": float(np.angle(phase)), "expected": expected,
            "deviation": deviation, "ok": ok,
        })
        report.passed &= ok
    if not report.passed:
        logger.warning(f"⚠️ Kasteleyn 条件在面 {report.failed_faces} 上不成立")
    return report


def gauge_transform(model: FockModel, scales: Dict[str, complex]) -> FockModel:
    """顶点规范变换: 每条边乘以两端点的因子"""
    gauge = dict(model.gauge)
    for v, c in scales.items():
        if v not in model.white_index and v not in model.black_index:
            raise SchemaError(f"未知顶点: {v}")
        gauge[v] = complex(gauge.get(v, 1.0)) * complex(c)
    return model.replace(gauge=gauge)


# ============= K(z, w) 与特征多项式 =============

def build_K(model: FockModel, z: complex, w: complex) -> np.ndarray:
    """(K(z,w))_{w,b} = Σ_e K_e z^m w^n, (m, n) 为黑点所在格"""
    return _K_grid(model, np.array([z], dtype=complex), np.array([w], dtype=complex))[0]


def _K_grid(model: FockModel, Z: np.ndarray, W: np.ndarray) -> np.ndarray:
    G = model.graph
    Z, W = np.asarray(Z, dtype=complex).ravel(), np.asarray(W, dtype=complex).ravel()
    out = np.zeros((Z.size, len(G.whites), len(G.blacks)), dtype=complex)
    K = model.entries
    for e, edge in enumerate(G.edges):
        m, n = edge.offset
        out[:, model.white_index[edge.white], model.black_index[edge.black]] += \
            K[e] * Z ** m * W ** n
    return out


def adjugate(M: np.ndarray) -> np.ndarray:
    """伴随矩阵 adj(M), 对奇异矩阵同样成立 (余子式展开)"""
    M = np.asarray(M, dtype=complex)
    n = M.shape[-1]
    if n == 1:
        return np.ones_like(M)
    out = np.empty(M.shape, dtype=complex)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(M, i, axis=-2), j, axis=-1)
            out[..., j, i] = (-1) ** (i + j) * np.linalg.det(minor)
    return out


@dataclass
class CharPoly:
    """P(z, w) = Σ c_{ij} z^i w^j"""
    coeffs: Dict[Offset, complex]

    @property
    def support(self) -> List[Offset]:
        return sorted(self.coeffs)

    @property
    def norm(self) -> float:
        return max(abs(c) for c in self.coeffs.values())

    def evaluate(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        out = np.zeros(np.broadcast(z, w).shape, dtype=complex)
        for (i, j), c in self.coeffs.items():
            out = out + c * z ** i * w ** j
        return out[()] if out.ndim == 0 else out

    def term_scale(self, z, w):
        """Σ |c_{ij}| |z|^i |w|^j, 用于相对残差"""
        az = np.abs(np.asarray(z, dtype=complex))
        aw = np.abs(np.asarray(w, dtype=complex))
        out = np.zeros(np.broadcast(az, aw).shape)
        for (i, j), c in self.coeffs.items():
            out = out + abs(c) * az ** i * aw ** j
        return out[()] if out.ndim == 0 else out

    def dz(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        out = np.zeros(np.broadcast(z, w).shape, dtype=complex)
        for (i, j), c in self.coeffs.items():
            if i:
                out = out + i * c * z ** (i - 1) * w ** j
        return out[()] if out.ndim == 0 else out

    def z_polynomial(self, w: complex) -> Tuple[int, np.ndarray]:
        """固定 w 时 z^{−i_lo} P 的降幂系数"""
        lo = min(i for i, _ in self.coeffs)
        hi = max(i for i, _ in self.coeffs)
        poly = np.zeros(hi - lo + 1, dtype=complex)
        for (i, j), c in self.coeffs.items():
            poly[hi - i] += c * w ** j
        return lo, poly

    def w_polynomial(self, z: complex) -> Tuple[int, np.ndarray]:
        lo = min(j for _, j in self.coeffs)
        hi = max(j for _, j in self.coeffs)
        poly = np.zeros(hi - lo + 1, dtype=complex)
        for (i, j), c in self.coeffs.items():
            poly[hi - j] += c * z ** i
        return lo, poly

    def roots_z(self, w: complex) -> np.ndarray:
        _, poly = self.z_polynomial(w)
        return np.roots(_trim_leading(poly))

    def roots_w(self, z: complex) -> np.ndarray:
        _, poly = self.w_polynomial(z)
        return np.roots(_trim_leading(poly))

    def newton_vertices(self) -> List[Offset]:
        return normalize_polygon(self.support)

    def scaled(self, lam: complex, mu: complex) -> "CharPoly":
        """P(λz, μw)"""
        return CharPoly({(i, j): c * lam ** i * mu ** j for (i, j), c in self.coeffs.items()})

    def to_json(self) -> dict:
        return {
            "coefficients": {f"{i},{j}": [float(c.real), float(c.imag)]
                             for (i, j), c in sorted(self.coeffs.items())},
            "newton_polygon": [list(p) for p in self.newton_vertices()],
        }


def _trim_leading(poly: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(poly)) or 1.0
    k = 0
    while k < len(poly) - 1 and abs(poly[k]) < 1e-14 * scale:
        k += 1
    return poly[k:]


def _exponent_box(model: FockModel) -> Tuple[Offset, Offset]:
    """行列式指数的包围盒: 每行贡献该行边偏移的 [min, max]"""
    G = model.graph
    lo, hi = np.zeros(2, dtype=int), np.zeros(2, dtype=int)
    for w in G.whites:
        offs = np.array([G.edges[e].offset for e in G.rotations[w]])
        lo += offs.min(axis=0)
        hi += offs.max(axis=0)
    return (int(lo[0]), int(lo[1])), (int(hi[0]), int(hi[1]))


def det_K(model: FockModel, Z, W) -> np.ndarray:
    return np.linalg.det(_K_grid(model, Z, W))


def char_poly(model: FockModel, require_periodic: bool = True, rel_drop: float = 1e-12) -> CharPoly:
    """
    det K(z, w) 的 Laurent 系数: 单位根网格上求值并做二维逆 DFT

    Raises:
        PeriodicityRequired: φ(α) 不在 (Z²)^g 中
    """
    if require_periodic:
        periodic, nearest = is_operator_periodic(model.graph, model.angles)
        if not periodic:
            raise PeriodicityRequired(f"Kasteleyn 算子不是周期的: φ 最近整点 {nearest}")
    cached = model._cache.get("char_poly")
    if cached is not None:
        return cached
    (lx, ly), (hx, hy) = _exponent_box(model)
    nx_, ny_ = hx - lx + 1, hy - ly + 1
    zs = np.exp(2j * np.pi * np.arange(nx_) / nx_)
    ws = np.exp(2j * np.pi * np.arange(ny_) / ny_)
    Zg, Wg = np.meshgrid(zs, ws, indexing="ij")
    D = det_K(model, Zg, Wg).reshape(nx_, ny_)
    D = D * Zg ** (-lx) * Wg ** (-ly)
    C = np.fft.fft2(D) / (nx_ * ny_)
    cmax = np.max(np.abs(C))
    coeffs = {(a + lx, b + ly): complex(C[a, b])
              for a in range(nx_) for b in range(ny_) if abs(C[a, b]) > rel_drop * cmax}
    poly = CharPoly(coeffs)
    if poly.newton_vertices() != normalize_polygon(newton_polygon(model.graph)):
        logger.warning(f"⚠️ N(P) = {poly.newton_vertices()} 与 N(G) 不一致")
    model._cache["char_poly"] = poly
    logger.info(f"✅ 特征多项式: {len(coeffs)} 个系数, 指数盒 [{lx},{hx}]×[{ly},{hy}]")
    return poly


# ============= 谱参数化 =============

def as_lift(model: FockModel, p) -> np.ndarray:
    """PointLift / OvalPoint / 图坐标 / 原始提升数组 -> 提升 (..., g)"""
    if isinstance(p, np.ndarray) and p.dtype.kind in "fc" and p.shape[-1:] == (model.g,):
        return p.astype(complex)
    if isinstance(p, (list, tuple)) and len(p) == model.g and not isinstance(p, OvalPoint):
        return np.asarray(p, dtype=complex)
    return np.asarray(model.curve.abel_jacobi(p).lift, dtype=complex)


def _prime_values(model: FockModel, lifts: np.ndarray) -> np.ndarray:
    """θ[δ](ũ − α̃_T), 形状 (..., r)"""
    A = model.track_lifts
    diff = lifts[..., None, :] - A
    return theta_char(model.odd, diff, model.period, model.cfg)


def spectral_point(model: FockModel, p) -> Tuple[complex, complex]:
    """
    z(ũ) = λ Π θ[δ](ũ − α̃_T)^{−v_T},  w(ũ) = μ Π θ[δ](ũ − α̃_T)^{h_T}

    Raises:
        AnglePole: p 与某个角度重合
    """
    lifts = as_lift(model, p)
    vals = np.atleast_1d(_prime_values(model, lifts))
    if np.any(np.abs(vals) < model.cfg.zero_floor):
        raise AnglePole("谱参数化在角度点处无定义")
    H = np.array([t.homology for t in model.graph.tracks], dtype=float)
    logv = np.log(vals)
    z = model.scale[0] * np.exp(logv @ (-H[:, 1]))
    w = model.scale[1] * np.exp(logv @ H[:, 0])
    if lifts.ndim == 1:
        return complex(z), complex(w)
    return z, w


def _calibration_points(model: FockModel) -> List[OvalPoint]:
    s = sorted(model.angles.s.values())
    mids = [(a + b) / 2 for a, b in zip(s, s[1:] + [s[0] + 1.0]) if b - a > 1e-9]
    points = [OvalPoint(0, m) for m in mids[:4]]
    for k in range(1, model.g + 1):
        points.append(OvalPoint(k, 0.3 + 0.1 * k))
    return points


def calibrate_scale(model: FockModel, poly: Optional[CharPoly] = None,
                    tol: float = 1e-7) -> Tuple[complex, complex, float]:
    """
    标定谱参数化的常数 (λ, μ), 使 P(z(u), w(u)) = 0

    周期约化规范下通常 λ = μ = 1; 否则在若干探针上做最小二乘。

    Returns:
        (λ, μ, 相对残差)
    """
    poly = poly or char_poly(model)
    base = model.replace(scale=(1.0, 1.0))
    pts = [spectral_point(base, p) for p in _calibration_points(model)]
    zs = np.array([p[0] for p in pts])
    ws = np.array([p[1] for p in pts])

    def residual(lam, mu):
        vals = poly.evaluate(lam * zs, mu * ws)
        return vals / poly.term_scale(lam * zs, mu * ws)

    r0 = float(np.max(np.abs(residual(1.0, 1.0))))
    if r0 < tol:
        return 1.0 + 0j, 1.0 + 0j, r0

    def fun(x):
        lam = np.exp(x[0] + 1j * x[1])
        mu = np.exp(x[2] + 1j * x[3])
        r = residual(lam, mu)
        return np.concatenate([r.real, r.imag])

    best = None
    for x0 in itertools.product([0.0], [0.0, np.pi], [0.0], [0.0, np.pi]):
        res = least_squares(fun, np.array(x0, dtype=float), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if best is None or res.cost < best.cost:
            best = res
    lam = np.exp(best.x[0] + 1j * best.x[1])
    mu = np.exp(best.x[2] + 1j * best.x[3])
    r = float(np.max(np.abs(residual(lam, mu))))
    if r > tol:
        raise CalibrationFailure(f"谱参数化缩放标定失败: 残差 {r:.2e}", residual=r)
    logger.info(f"✅ 谱缩放标定: λ = {lam:.6g}, μ = {mu:.6g}, 残差 {r:.1e}")
    return complex(lam), complex(mu), r


# ============= quad 图与核函数 =============

def _quad_graph(model: FockModel, radius: int) -> nx.Graph:
    key = ("quad", radius)
    if key in model._cache:
        return model._cache[key]
    G = model.graph
    Q = nx.Graph()
    cells = list(itertools.product(range(-radius, radius + 1), repeat=2))
    for face in G.faces:
        for (v, loc) in G.face_vertices(face):
            kind = "white" if G.is_white(v) else "black"
            for c in cells:
                target = (c[0] + loc[0], c[1] + loc[1])
                if max(abs(target[0]), abs(target[1])) > radius:
                    continue
                Q.add_edge(("face", face.index, c), (kind, v, target))
    model._cache[key] = Q
    return Q


def quad_path(model: FockModel, x: QuadVertex, y: QuadVertex) -> List[QuadVertex]:
    """quad 图上的最短路径 (核函数与路径无关)"""
    x, y = _normalize_vertex(x), _normalize_vertex(y)
    radius = max(abs(c) for c in (*x[2], *y[2])) + 2
    return nx.shortest_path(_quad_graph(model, radius), x, y)


def _normalize_vertex(x) -> QuadVertex:
    kind, key = x[0], x[1]
    cell = tuple(int(c) for c in (x[2] if len(x) > 2 else (0, 0)))
    if kind in ("w", "b", "f"):
        kind = {"w": "white", "b": "black", "f": "face"}[kind]
    if kind == "face":
        key = int(key)
    return kind, key, cell


@dataclass
class KernelProduct:
    """
    g_{x,y}(ũ) = Π θ(ũ + c)^{e} · Π θ[δ](ũ − α̃_T)^{n_T}

    thetas: 常数 c 的键 -> (c, 指数); primes: track 索引 -> 净指数
    """
    thetas: Dict[tuple, Tuple[np.ndarray, int]]
    primes: Dict[int, int]

    @property
    def poles(self) -> List[int]:
        return sorted(k for k, n in self.primes.items() if n < 0)

    @property
    def zeros(self) -> List[int]:
        return sorted(k for k, n in self.primes.items() if n > 0)


def _theta_key(c: np.ndarray) -> tuple:
    return tuple(np.round(np.real(c), 10))


def _track_for_shift(model: FockModel, gamma: np.ndarray) -> int:
    d = np.max(np.abs(model.track_lifts - np.real(gamma)[None, :]), axis=1)
    k = int(np.argmin(d))
    if d[k] > 1e-8:
        raise Inconsistent(f"quad 边的位移 {gamma} 不等于任何 track 提升", distance=float(d[k]))
    return k


def kernel_product(model: FockModel, x: QuadVertex, y: QuadVertex) -> KernelProduct:
    key = ("kernel", _normalize_vertex(x), _normalize_vertex(y))
    if key in model._cache:
        return model._cache[key]
    path = quad_path(model, x, y)
    thetas: Dict[tuple, List] = {}
    primes: Counter = Counter()
    ab, t = model.abel, model.t

    def add_theta(c, e):
        k = _theta_key(c)
        if k in thetas:
            thetas[k][1] += e
        else:
            thetas[k] = [np.real(c), e]

    for p, q in zip(path[:-1], path[1:]):
        sign = 1
        if p[0] == "face":
            p, q, sign = q, p, -1
        # 此时 q 为面, p 为顶点; 基本步为 f→w 或 b→f
        vp = ab.at(p[0], p[1], p[2])
        vf = ab.at("face", q[1], q[2])
        if p[0] == "white":
            # 基本步 f→w, 原方向 w→f 取倒数
            e = -sign
            add_theta(t + vp, e)
            primes[_track_for_shift(model, vf - vp)] -= e
        else:
            e = sign
            add_theta(-t - vp, e)
            primes[_track_for_shift(model, vp - vf)] -= e
    product = KernelProduct(
        thetas={k: (v[0], v[1]) for k, v in thetas.items() if v[1] != 0},
        primes={k: n for k, n in primes.items() if n != 0},
    )
    model._cache[key] = product
    return product


def _evaluate_product(model: FockModel, prod: KernelProduct, lifts: np.ndarray,
                      skip_track: Optional[int] = None) -> np.ndarray:
    lifts = np.asarray(lifts, dtype=complex)
    value = np.ones(lifts.shape[:-1], dtype=complex)
    for c, e in prod.thetas.values():
        th = theta(lifts + c, model.period, model.cfg)
        if e < 0 and np.any(np.abs(th) < model.cfg.zero_floor):
            raise PolePoint("核函数的 theta 分母为零")
        value = value * th ** e
    for k, n in prod.primes.items():
        if k == skip_track:
            n += 1
            if n == 0:
                continue
        pv = theta_char(model.odd, lifts - model.track_lifts[k], model.period, model.cfg)
        if n < 0 and np.any(np.abs(pv) < model.cfg.zero_floor):
            raise PolePoint(f"核函数在角度 {model.graph.tracks[k].id} 处有极点")
        value = value * pv ** n
    return value[()] if value.ndim == 0 else value


def kernel_g(model: FockModel, x: QuadVertex, y: QuadVertex, p) -> complex:
    """
    g_{x,y}(ũ): quad 图最短路径上的逐段乘积

    Args:
        x, y: quad 顶点 (kind, key, cell), kind ∈ {white, black, face}
        p: PointLift / OvalPoint / 图坐标 / 提升数组

    Raises:
        PolePoint: p 位于极点
    """
    if _normalize_vertex(x) == _normalize_vertex(y):
        return 1.0 + 0j
    return _evaluate_product(model, kernel_product(model, x, y), as_lift(model, p))


def zeta_coefficients(model: FockModel) -> np.ndarray:
    """ζ 形式在提升坐标下的系数 ∇θ[δ](0)"""
    return grad_theta_char(model.odd, np.zeros(model.g), model.period, model.cfg)


def kernel_form(model: FockModel, x: QuadVertex, y: QuadVertex, p) -> complex:
    """1-形式 g_{x,y}·ζ 在后端局部坐标下的系数"""
    return kernel_g(model, x, y, p) * model.curve.zeta_at(p, model.odd)


def kernel_residual(model: FockModel, w: str, x: QuadVertex, p) -> complex:
    """Σ_b K_{w,b} g_{b,x}(ũ), 应为 0"""
    lifts = as_lift(model, p)
    total = 0.0 + 0j
    scale = 0.0
    for e in model.graph.rotations[w]:
        edge = model.graph.edges[e]
        term = model.entries[e] * kernel_g(model, ("black", edge.black, edge.offset), x, lifts)
        total += term
        scale = max(scale, abs(term))
    return total / (scale or 1.0)


def residue_at(model: FockModel, prod: KernelProduct, track: int) -> complex:
    """
    1-形式 g·ζ 在简单极点 α_T 处的留数

    Raises:
        PolePoint: 极点阶数 ≥ 2
    """
    n = prod.primes.get(track, 0)
    if n >= 0:
        return 0.0 + 0j
    if n < -1:
        raise PolePoint(f"角度 {model.graph.tracks[track].id} 处的极点阶数为 {-n}", order=-n)
    return complex(_evaluate_product(model, prod, model.track_lifts[track].astype(complex),
                                     skip_track=track))


def faydiff_residual(model: FockModel, points: Sequence) -> float:
    """
    K_e g_{b,w}(u) ζ(u) = ω_{β−α}(u) + Σ_j c_j ω_j(u),
    c = ∇logθ(t̃ + d̃(F_L)) − ∇logθ(t̃ + d̃(F_R))

    Returns:
        全部边与采样点上的最大相对残差
    """
    G = model.graph
    bare = model.replace(gauge={}).entries
    worst = 0.0
    for p in points:
        lift = as_lift(model, p)
        zeta = model.curve.zeta_at(p, model.odd)
        forms = model.curve.holomorphic_forms_at(p)
        for e, edge in enumerate(G.edges):
            ta, tb = G.alpha_beta(e)
            alpha, beta = model.track_lifts[ta], model.track_lifts[tb]
            fl, a_l, fr, a_r = G.edge_faces[e]
            c = (grad_log_theta(model.t + model.abel.at("face", fl, a_l), model.period, model.cfg)
                 - grad_log_theta(model.t + model.abel.at("face", fr, a_r), model.period, model.cfg))
            g = kernel_g(model, ("black", edge.black, edge.offset), ("white", edge.white, (0, 0)), lift)
            lhs = bare[e] * g * zeta
            dlog = (grad_log_theta_char(model.odd, alpha - lift, model.period, model.cfg)
                    - grad_log_theta_char(model.odd, beta - lift, model.period, model.cfg))
            rhs = complex(dlog @ forms) + complex(c @ forms)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return worst


# ============= Fay 恒等式 =============

def sample_lifts(curve: MCurve, rng: np.random.Generator, n: int) -> np.ndarray:
    """真实曲线点的提升: 实分量上的点与内部点混合"""
    n_int = max(1, n // 3)
    ovals = curve.random_oval_points(rng, n - n_int)
    lifts = [curve.abel_jacobi(p).lift for p in ovals]
    lifts += [curve.abel_jacobi(complex(x)).lift for x in curve.random_interior_coords(rng, n_int)]
    return np.array(lifts, dtype=complex)


def _rel(terms: Sequence[complex], rhs: complex = 0.0) -> float:
    scale = max(max(abs(t) for t in terms), abs(rhs), 1e-300)
    return abs(sum(terms) - rhs) / scale


def check_fay(model_or_curve: Union[FockModel, MCurve], samples: int = 200,
              rng: Optional[np.random.Generator] = None) -> Dict[str, float]:
    """
    约化形式下的三种 Fay 恒等式的最大相对残差

        fay:          三项形式 (s, u, α, β, γ)
        fay_fock:     F_t(a,b)F_t(c,d) + F_t(a,d)F_t(b,c) + F_t(a,c)F_t(d,b) = 0
        fay_mumford:  四点三割线形式
    """
    curve = model_or_curve.curve if isinstance(model_or_curve, FockModel) else model_or_curve
    rng = rng or np.random.default_rng(0)
    P, cfg = curve.period, curve.cfg
    odd = pick_odd_characteristic(P, cfg)
    pool = sample_lifts(curve, rng, min(max(samples // 8, 8), 24))
    g = curve.g

    def th(z):
        return complex(theta(z, P, cfg))

    def E(x, y):
        return complex(theta_char(odd, y - x, P, cfg))

    worst = {"fay": 0.0, "fay_fock": 0.0, "fay_mumford": 0.0}
    for _ in range(samples):
        a, b, c, d, u = pool[rng.choice(len(pool), size=5, replace=False)]
        s = rng.random(g) + 0.1j * rng.standard_normal(g)
        t = rng.random(g) + 0.1j * rng.standard_normal(g)
        z = rng.random(g) + 0.1j * rng.standard_normal(g)

        al, be, ga = a, b, c
        terms = [
            th(s + u - al - be) * E(al, be) / (E(al, u) * E(be, u) * th(s - al) * th(s - be)),
            th(s + u - be - ga) * E(be, ga) / (E(be, u) * E(ga, u) * th(s - be) * th(s - ga)),
            th(s + u - ga - al) * E(ga, al) / (E(al, u) * E(ga, u) * th(s - al) * th(s - ga)),
        ]
        worst["fay"] = max(worst["fay"], _rel(terms))

        def F(x, y):
            return th(x + y - t) * E(x, y)

        terms = [F(a, b) * F(c, d), F(a, d) * F(b, c), F(a, c) * F(d, b)]
        worst["fay_fock"] = max(worst["fay_fock"], _rel(terms))

        lhs = [th(z + c - a) * th(z + d - b) * E(c, b) * E(a, d),
               th(z + c - b) * th(z + d - a) * E(c, a) * E(d, b)]
        rhs = th(z + c + d - a - b) * th(z) * E(c, d) * E(a, b)
        worst["fay_mumford"] = max(worst["fay_mumford"], _rel(lhs, rhs))
    logger.info(f"Fay 残差: {', '.join(f'{k}={v:.1e}' for k, v in worst.items())}")
    return worst


# ============= 顶点除子 =============

def divisor_of_vertex(model: FockModel, w: str, cell: Offset = (0, 0)) -> List[OvalPoint]:
    """
    u ↦ θ(t̃ + ũ + d̃(w)) 在每个 A_j (j ≥ 1) 上的唯一零点

    Raises:
        NonGenericT: 某个 A_j 上没有恰好一次变号
    """
    e = model.t + model.abel.at("white", w, cell)
    points = []
    for j in range(1, model.g + 1):
        try:
            s = model.curve.theta_zero_on_oval(e, j)
        except CalibrationFailure as err:
            raise NonGenericT(f"白点 {w} 的除子在 A_{j} 上不唯一: {err}", oval=j) from err
        points.append(OvalPoint(j, s))
    return points


def check_divisor(model: FockModel, w: str) -> dict:
    """
    验证 Σ ũ(p_j) + d̃(w) + t̃ ≡ Δ (mod Λ), 并报告伴随列在除子点处的大小
    """
    points = divisor_of_vertex(model, w)
    total = model.t + model.abel.at("white", w)
    for p in points:
        total = total + model.curve.oval_lift(p.oval, p.s)
    delta = model.curve.riemann_constant()
    residual = model.curve.lattice_distance(total, delta)
    report = {"white": w, "points": [[p.oval, p.s] for p in points], "residual": residual}
    try:
        poly_ok, _ = is_operator_periodic(model.graph, model.angles)
        if poly_ok:
            col = []
            for p in points:
                z, wv = spectral_point(model, p)
                Q = adjugate(build_K(model, z, wv))
                norm = np.max(np.abs(Q)) or 1.0
                col.append(float(np.max(np.abs(Q[:, model.white_index[w]])) / norm))
            report["adjugate_column"] = col
    except AnglePole:
        pass
    return report


# ============= 覆盖 =============

def blowup(model: FockModel, n: Union[int, Sequence[Sequence[int]]]) -> Tuple[FockModel, List[int]]:
    """
    n×n 环面覆盖 (或一般超格 S) 上的同一模型, 权重与基图逐边相同

    Returns:
        (覆盖模型, 边投影)
    """
    S = np.array([[n, 0], [0, n]]) if np.isscalar(n) else np.asarray(n, dtype=int)
    base = model.graph
    cover, proj = superlattice(base, S)
    angles = lift_angles_to_cover(base, cover, proj, model.angles)
    abel = discrete_abel_map(cover, angles)
    rep0 = coset_representatives(S)[0]
    w0 = base.whites[0]
    abel = abel.shifted(model.abel.at("white", w0, rep0) - abel.whites[f"{w0}_0"])
    gauge = {}
    for v, c in model.gauge.items():
        for i in range(len(coset_representatives(S))):
            gauge[f"{v}_{i}"] = c
    cover_model = FockModel(cover, model.curve, angles, model.t, validate=False,
                            abel=abel, gauge=gauge, scale=model.scale)
    cover_model.validated = model.validated
    return cover_model, proj
