"""
Gibbs 测度: 局部边概率、逆算子与柱集概率

两条互相校验的路线:
    局部路线  u₀ ∈ Σ⁺ ∪ A 上的围道积分 (固相 / 气相 / 液相)
    Fourier 路线  磁场 B 下 K(z,w)⁻¹ 在环面 |z| = e^{B_y}, |w| = e^{−B_x} 上的积分
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad_vec
from scipy.optimize import brentq
from tqdm import tqdm

from .errors import (
    AnglePole,
    CalibrationFailure,
    CalibrationNeeded,
    NearSingular,
    PathAmbiguous,
    PathCrossesAngles,
    PeriodicityRequired,
    SectorBlocked,
)
from .graph import edge_height_crossings, hull_vertices, is_operator_periodic
from .kasteleyn import (
    FockModel,
    _K_grid,
    _evaluate_product,
    _exponent_box,
    adjugate,
    blowup,
    build_K,
    char_poly,
    fock_entry,
    kernel_product,
    residue_at,
    spectral_point,
    zeta_coefficients,
)
from .surface import OvalPoint, PointLift
from .theta import grad_log_theta, theta_char
from .utils import config_value

logger = logging.getLogger(__name__)

Offset = Tuple[int, int]
VertexRef = Tuple[str, Offset]


# ============= 相与磁场 =============

@dataclass(frozen=True)
class MagneticField:
    bx: float = 0.0
    by: float = 0.0

    @property
    def radii(self) -> Tuple[float, float]:
        """(|z|, |w|) = (e^{B_y}, e^{−B_x})"""
        return math.exp(self.by), math.exp(-self.bx)

    def to_json(self) -> dict:
        return {"B": [self.bx, self.by]}


@dataclass
class PhasePoint:
    """u₀ 及其相: solid (A₀), gaseous (A_k, k ≥ 1), liquid (Σ⁺ 内部)"""
    point: PointLift
    kind: str
    oval: Optional[int] = None

    @property
    def s(self) -> Optional[float]:
        return self.point.s

    def to_json(self) -> dict:
        return {"phase": self.kind, "oval": self.oval, "point": self.point.to_json()}


Phase = Union[MagneticField, PhasePoint]


@dataclass
class InverseEntry:
    value: complex
    provenance: str  # Fourier | Contour | ClosedForm


@dataclass
class ProbabilityResult:
    value: float
    imag: float
    provenance: str

    def to_json(self) -> dict:
        return {"value": self.value, "imag": self.imag, "provenance": self.provenance}


def classify_phase(model: FockModel, u0) -> PhasePoint:
    """
    Args:
        u0: OvalPoint、图坐标 (复数) 或 PointLift

    Raises:
        PathAmbiguous: 内部点不在 Σ⁺ 一侧
    """
    if isinstance(u0, PhasePoint):
        return u0
    p = model.curve.abel_jacobi(u0)
    if p.kind == "oval":
        kind = "solid" if p.oval == 0 else "gaseous"
        return PhasePoint(point=p, kind=kind, oval=p.oval)
    if p.sheet != 1:
        raise PathAmbiguous("液相点需要位于 Σ⁺ 一侧", point=str(p.coord))
    return PhasePoint(point=p, kind="liquid")


# ============= A₀ 上的弧 =============

def arc_contains(a: float, b: float, x: float) -> bool:
    """x 是否在从 a 正向到 b 的开弧上"""
    span = (b - a) % 1.0
    pos = (x - a) % 1.0
    return 0.0 < pos < span


def _track_s(model: FockModel, idx: int) -> float:
    return float(model.angles.s[model.graph.tracks[idx].id])


def edge_crossing(model: FockModel, e: int) -> float:
    """边 e 的围道穿越点: 弧 β→α 的中点 (避开扇区 α→β)"""
    ta, tb = model.graph.alpha_beta(e)
    sa, sb = _track_s(model, ta), _track_s(model, tb)
    return sb + ((sa - sb) % 1.0) / 2.0


def reference_point(model: FockModel) -> OvalPoint:
    """参考点 u₁: 窗口首尾之间 (跨越 s_max → s_min + 1) 的弧中点"""
    s = sorted(model.angles.s.values())
    return OvalPoint(0, float(s[-1] + (s[0] + 1.0 - s[-1]) / 2.0))


def _edge_geometry(model: FockModel, e: int, cell: Offset = (0, 0)):
    G = model.graph
    ta, tb = G.alpha_beta(e)
    fl, a_l, fr, a_r = G.edge_faces[e]
    zl = model.t + model.abel.at("face", fl, (a_l[0] + cell[0], a_l[1] + cell[1]))
    zr = model.t + model.abel.at("face", fr, (a_r[0] + cell[0], a_r[1] + cell[1]))
    c = grad_log_theta(zl, model.period, model.cfg) - grad_log_theta(zr, model.period, model.cfg)
    return (_track_s(model, ta), _track_s(model, tb),
            model.track_lifts[ta], model.track_lifts[tb], np.asarray(c))


# ============= 局部边概率 =============

def edge_probability_local(model: FockModel, e: int, u0, cell: Offset = (0, 0)) -> float:
    """
    P^{u₀}(e) 的闭式表达

        solid:   u₀ 在正向弧 α→β 上时为 1, 否则为 0
        gaseous: (β̃ − α̃)_k + (1/2π) Σ_j Y_{jk} c_j
        liquid:  Δarg θ[δ](β̃−ũ)/θ[δ](α̃−ũ) / π + c·Im ũ₀ / π + Σ n_k·(气相值)_k

    c = ∇logθ(t̃ + d̃(F_L)) − ∇logθ(t̃ + d̃(F_R))

    Raises:
        AnglePole: u₀ 恰为 α 或 β
        CalibrationNeeded: 液相格点修正无法确定, 或修正后参考白点的概率和不为 1
    """
    phase = classify_phase(model, u0)
    s_a, s_b, alpha, beta, c = _edge_geometry(model, e, cell)
    if phase.kind == "solid":
        s_u = float(phase.s) % 1.0
        if min(abs((s_u - s_a + 0.5) % 1.0 - 0.5), abs((s_u - s_b + 0.5) % 1.0 - 0.5)) < 1e-14:
            raise AnglePole(f"u₀ 与边 {e} 的角度重合")
        return 1.0 if arc_contains(s_a, s_b, s_u) else 0.0
    if phase.kind == "gaseous":
        return _gaseous_value(model, e, phase.oval, cell)
    lattice = liquid_lattice(model, phase)
    _check_liquid_normalization(model, phase, lattice)
    return _liquid_probability(model, e, phase, cell, lattice)


def _gaseous_value(model: FockModel, e: int, oval: int, cell: Offset = (0, 0)) -> float:
    s_a, s_b, alpha, beta, c = _edge_geometry(model, e, cell)
    k = oval - 1
    arc = beta - alpha + (1.0 if s_b < s_a else 0.0)
    Y = model.period.omega.imag
    return float(arc[k] + float(np.real(c @ Y)[k]) / (2.0 * math.pi))


def _liquid_probability(model: FockModel, e: int, phase: PhasePoint, cell: Offset,
                        lattice: Optional[np.ndarray] = None) -> float:
    s_a, s_b, alpha, beta, c = _edge_geometry(model, e, cell)
    s_c = edge_crossing(model, e)
    path = model.curve.path_from_A0(s_c, phase.point.coord)

    def ratio(lifts):
        num = theta_char(model.odd, beta - lifts, model.period, model.cfg)
        den = theta_char(model.odd, alpha - lifts, model.period, model.cfg)
        return num / den

    darg = _arg_change(ratio, path)
    im_u = np.imag(path.end_lift)
    value = darg / math.pi + float(np.real(c @ im_u)) / math.pi
    if lattice is not None and np.any(lattice):
        value += sum(int(n) * _gaseous_value(model, e, k + 1, cell) for k, n in enumerate(lattice))
    return float(value)


def _arg_change(func, path, n_points: Optional[int] = None, max_doublings: int = 4) -> float:
    """沿路径连续追踪 arg func(ũ) 的总变化, 相邻采样点相位差超过 0.5 时加密"""
    n = int(n_points or config_value("gibbs", "path_points", 4001))
    for _ in range(max_doublings + 1):
        t = np.linspace(0.0, float(path.n_segments), n)
        values = np.asarray(func(path.lift(t)))
        phases = np.unwrap(np.angle(values))
        steps = np.abs(np.diff(phases))
        if steps.max() < 0.5:
            return float(phases[-1] - phases[0])
        n = 2 * n - 1
    logger.warning(f"⚠️ 相位追踪未收敛: 最大步长 {steps.max():.3f}")
    return float(phases[-1] - phases[0])


# ============= 液相格点修正 =============

def calibrate_liquid_lattice(model: FockModel, u0, tol: float = 1e-6) -> np.ndarray:
    """
    液相路径同伦类的格点修正 n ∈ Z^g

    路径多绕一圈 B_k 时局部公式整体加上 A_k 上的气相概率 G_k(e), 因此
    P(e) = P₀(e) + Σ_k n_k G_k(e)。每个白点处 Σ G_k = 1, 白点求和给出 Σ n_k;
    g = 1 时这已确定 n, g ≥ 2 时与匹配磁场下的 Fourier 概率做最小二乘后取整。

    Raises:
        CalibrationNeeded: 取整残差或白点求和超出 tol, 或 g ≥ 2 的非周期模型
    """
    phase = classify_phase(model, u0)
    if phase.kind != "liquid":
        raise PathAmbiguous("格点修正需要液相点", kind=phase.kind)
    n_e = len(model.graph.edges)
    raw = np.array([_liquid_probability(model, e, phase, (0, 0)) for e in range(n_e)])
    gas = np.array([[_gaseous_value(model, e, k) for k in range(1, model.g + 1)] for e in range(n_e)])
    w0 = model.graph.whites[0]
    deficit = 1.0 - float(sum(raw[e] for e in model.graph.rotations[w0]))
    if model.g == 1:
        lattice = np.array([int(round(deficit))])
        misfit = abs(deficit - lattice[0])
    else:
        try:
            _require_periodic(model)
        except PeriodicityRequired as err:
            raise CalibrationNeeded("g ≥ 2 的液相格点修正需要周期模型 (Fourier 对照)") from err
        target = edge_probabilities(model, matched_field(model, phase))
        solution, *_ = np.linalg.lstsq(gas, target - raw, rcond=None)
        lattice = np.round(solution).astype(int)
        misfit = float(np.max(np.abs(raw + gas @ lattice - target)))
    if misfit > max(tol, 1e-4):
        raise CalibrationNeeded(f"液相格点修正无法取整: 残差 {misfit:.2e}", misfit=misfit)
    corrected = raw + gas @ lattice
    sums = [sum(corrected[e] for e in model.graph.rotations[w]) for w in model.graph.whites]
    worst = float(np.max(np.abs(np.array(sums) - 1.0)))
    if worst > tol:
        raise CalibrationNeeded(f"修正后白点概率和偏离 1: {worst:.2e}", lattice=lattice.tolist())
    logger.info(f"✅ 液相格点修正 n = {lattice.tolist()} (白点和偏差 {worst:.1e})")
    return lattice


def liquid_lattice(model: FockModel, u0) -> np.ndarray:
    """缓存的格点修正; 首次在液相点 u₀ 处标定"""
    if "liquid_lattice" not in model._cache:
        model._cache["liquid_lattice"] = calibrate_liquid_lattice(model, u0)
    return model._cache["liquid_lattice"]


def _check_liquid_normalization(model: FockModel, phase: PhasePoint, lattice: np.ndarray,
                                tol: float = 1e-6):
    key = ("liquid_norm", complex(phase.point.coord))
    if key in model._cache:
        return
    w = model.graph.whites[0]
    total = sum(_liquid_probability(model, e, phase, (0, 0), lattice) for e in model.graph.rotations[w])
    if abs(total - 1.0) > tol:
        raise CalibrationNeeded(
            f"液相概率在白点 {w} 处求和为 {total:.8f}, 格点修正 {lattice.tolist()} 需要重新标定",
            white=w, total=total,
        )
    model._cache[key] = True


def edge_probabilities(model: FockModel, phase: Phase, order: Optional[int] = None) -> np.ndarray:
    """全部基本域边的单边概率 (order 只作用于 Fourier 路线)"""
    n_e = len(model.graph.edges)
    if isinstance(phase, MagneticField):
        out = np.empty(n_e)
        for e, edge in enumerate(model.graph.edges):
            A = inverse_fourier(model, phase, (edge.black, edge.offset), (edge.white, (0, 0)), order=order)
            out[e] = float(np.real(model.entries[e] * A.value))
        return out
    phase = classify_phase(model, phase)
    return np.array([edge_probability_local(model, e, phase) for e in range(n_e)])


def white_sums(model: FockModel, probs: Sequence[float]) -> Dict[str, float]:
    """每个白点处入射边概率之和 (应为 1)"""
    return {w: float(sum(probs[e] for e in model.graph.rotations[w])) for w in model.graph.whites}


def frozen_configuration(model: FockModel, u1=None) -> List[int]:
    """固相点 u₁ 处概率为 1 的边"""
    phase = classify_phase(model, u1 if u1 is not None else reference_point(model))
    if phase.kind != "solid":
        raise PathAmbiguous("冻结构型需要 A₀ 上的点")
    return [e for e in range(len(model.graph.edges)) if edge_probability_local(model, e, phase) == 1.0]


# ============= 围道逆 =============

def _neighbor_edge(model: FockModel, b: VertexRef, w: VertexRef) -> Optional[int]:
    rel = (b[1][0] - w[1][0], b[1][1] - w[1][1])
    for e in model.graph.rotations[w[0]]:
        edge = model.graph.edges[e]
        if edge.black == b[0] and edge.offset == rel:
            return e
    return None


def contour_crossing(model: FockModel, b: VertexRef, w: VertexRef) -> float:
    """
    A_{b,w} 的围道穿越点

    相邻点取弧 β→α 的中点; 远距离点取极点连续段之后的第一个间隙。

    Raises:
        SectorBlocked: 极点不构成连续段, 或没有零点可供定位扇区
    """
    e = _neighbor_edge(model, b, w)
    if e is not None:
        return edge_crossing(model, e)
    prod = kernel_product(model, ("black", b[0], b[1]), ("white", w[0], w[1]))
    marks = sorted(((_track_s(model, k) % 1.0, "pole" if n < 0 else "zero")
                    for k, n in prod.primes.items()), key=lambda m: m[0])
    labels = [m[1] for m in marks]
    if "zero" not in labels:
        raise SectorBlocked(f"({b}, {w}) 没有零点, 无法定位扇区")
    n = len(marks)
    ends = [i for i in range(n) if labels[i] == "pole" and labels[(i + 1) % n] == "zero"]
    starts = [i for i in range(n) if labels[i] == "pole" and labels[i - 1] == "zero"]
    if len(ends) != 1 or len(starts) != 1:
        raise SectorBlocked(f"({b}, {w}) 的极点不构成连续段: {labels}")
    i = ends[0]
    s0, s1 = marks[i][0], marks[(i + 1) % n][0]
    return s0 + ((s1 - s0) % 1.0) / 2.0


def inverse_contour(model: FockModel, u0, b: VertexRef, w: VertexRef) -> InverseEntry:
    """
    A^{u₀}_{b,w} = (1/2πi) ∫_{C_{b,w}} g_{b,w} ζ

    固相: 正向弧 u₀→x_c 内的留数和 (任意后端)
    气相: 闭合 B_k 型回路 (亏格 1)
    液相: C = σ(γ)⁻¹ ∘ γ, γ 为 Σ⁺ 内从穿越点到 u₀ 的路径

    Raises:
        PathAmbiguous: 超椭圆后端的气相点 (改用 inverse_fourier)
        PolePoint: 被包围的极点阶数 ≥ 2
    """
    phase = classify_phase(model, u0)
    prod = kernel_product(model, ("black", b[0], b[1]), ("white", w[0], w[1]))
    s_c = contour_crossing(model, b, w)
    if phase.kind == "solid":
        s_u = float(phase.s) % 1.0
        value = 0.0 + 0j
        for k in prod.poles:
            if arc_contains(s_u, s_c, _track_s(model, k)):
                value += residue_at(model, prod, k)
        return InverseEntry(value, "ClosedForm")
    if phase.kind == "gaseous":
        if model.g != 1:
            raise PathAmbiguous("超椭圆后端的气相围道需要 inverse_fourier")
        target = complex(model.curve.oval_coord(phase.oval, phase.s))
    else:
        target = complex(phase.point.coord)
    path = model.curve.path_from_A0(s_c, target)
    zeta0 = zeta_coefficients(model)

    def integrand(t):
        lift = path.lift(np.array([t]))[0]
        dl = path.dlift(np.array([t]))[0]
        both = np.array([lift, np.conj(lift)])
        g = _evaluate_product(model, prod, both)
        h_plus = g[0] * (zeta0 @ dl)
        h_minus = g[1] * (zeta0 @ np.conj(dl))
        return np.array([h_plus.real, h_plus.imag, h_minus.real, h_minus.imag])

    epsabs = float(config_value("gibbs", "quad_epsabs", 1e-12))
    limit = int(config_value("gibbs", "quad_limit", 400))
    total = np.zeros(4)
    for k in range(path.n_segments):
        part, _ = quad_vec(integrand, float(k), float(k + 1), epsabs=epsabs, epsrel=1e-10, limit=limit)
        total += part
    integral = complex(total[0] - total[2], total[1] - total[3])
    return InverseEntry(integral / (2j * math.pi), "Contour")


# ============= Fourier 逆 =============

def _require_periodic(model: FockModel):
    key = "periodic"
    if key not in model._cache:
        model._cache[key] = is_operator_periodic(model.graph, model.angles)[0]
    if not model._cache[key]:
        raise PeriodicityRequired("Fourier 路线要求周期 Kasteleyn 算子")


def _fourier_grid(model: FockModel, B: MagneticField, order: int):
    key = ("fourier", B.bx, B.by, order)
    if key in model._cache:
        return model._cache[key]
    rz, rw = B.radii
    roots = np.exp(2j * np.pi * np.arange(order) / order)
    Z, W = np.meshgrid(rz * roots, rw * roots, indexing="ij")
    Ks = _K_grid(model, Z, W)
    dets = np.abs(np.linalg.det(Ks))
    floor = float(config_value("gibbs", "near_singular_floor", 1e-10))
    rel = float(dets.min() / (dets.max() or 1.0))
    if rel < floor:
        raise NearSingular(f"磁场 {B} 下 det K 在网格上接近 0 (相对 {rel:.1e}), B 可能在 amoeba 内",
                           min_det=rel)
    inv = np.linalg.inv(Ks)  # (N², nB, nW)
    grid = (inv, Z.ravel(), W.ravel())
    model._cache[key] = grid
    return grid


def _inside_amoeba(model: FockModel, B: MagneticField) -> bool:
    key = ("amoeba", B.bx, B.by)
    if key not in model._cache:
        model._cache[key] = amoeba_sample(model, B).inside
    return model._cache[key]


def inverse_fourier(model: FockModel, B: MagneticField, b: VertexRef, w: VertexRef,
                    order: Optional[int] = None, method: str = "auto") -> InverseEntry:
    """
    A^B_{b+(m,n),w} = ∬ K(z,w)⁻¹_{b,w} z^m w^n dz/(2πiz) dw/(2πiw)

    amoeba 内被积函数在环面上有可积奇点, N×N 梯形只有 O(1/N) 精度, 因此 auto
    在 amoeba 内直接用留数求积, 在 amoeba 外用梯形 (指数收敛)。

    Args:
        method: trapezoid (N×N 梯形), residue (内层留数 + 外层自适应), auto (按 amoeba 归属选择)

    Raises:
        NearSingular: 梯形网格上 det K 接近 0 且 method = trapezoid
    """
    _require_periodic(model)
    order = int(order or config_value("gibbs", "fourier_order", 64))
    m, n = b[1][0] - w[1][0], b[1][1] - w[1][1]
    bi, wi = model.black_index[b[0]], model.white_index[w[0]]
    if method == "auto" and _inside_amoeba(model, B):
        logger.debug(f"B = ({B.bx:.4g}, {B.by:.4g}) 在 amoeba 内, 使用留数求积")
        method = "residue"
    if method in ("trapezoid", "auto"):
        try:
            inv, Z, W = _fourier_grid(model, B, order)
            value = np.mean(inv[:, bi, wi] * Z ** m * W ** n)
            return InverseEntry(complex(value), "Fourier")
        except NearSingular:
            if method == "trapezoid":
                raise
            logger.info(f"📝 B = ({B.bx:.4g}, {B.by:.4g}) 贴近 amoeba 边界, 改用留数求积")
    return InverseEntry(_inverse_residue(model, B, bi, wi, (m, n), order), "Fourier")


def _z_roots(poly, w: complex) -> np.ndarray:
    _, coeffs = poly.z_polynomial(w)
    scale = np.max(np.abs(coeffs)) or 1.0
    k = 0
    while k < len(coeffs) - 1 and abs(coeffs[k]) < 1e-14 * scale:
        k += 1
    coeffs = coeffs[k:]
    while len(coeffs) > 1 and abs(coeffs[-1]) < 1e-14 * scale:
        coeffs = coeffs[:-1]
    return np.roots(coeffs)


def _inverse_residue(model: FockModel, B: MagneticField, bi: int, wi: int,
                     shift: Offset, order: int) -> complex:
    """
    内层 z 积分: 小圆上的梯形 + 小圆与 |z| = e^{B_y} 之间根的留数;
    外层 w 积分: 在根穿越圆周处分段的自适应求积
    """
    poly = char_poly(model)
    m, n = shift
    R, Wr = B.radii
    nodes = np.exp(2j * np.pi * np.arange(order) / order)

    def inner(wv: complex) -> complex:
        roots = _z_roots(poly, wv)
        small = 0.5 * np.min(np.abs(roots)) if roots.size else 0.5 * R
        Zs = small * nodes
        inv = np.linalg.inv(_K_grid(model, Zs, np.full(order, wv)))
        value = np.mean(inv[:, bi, wi] * Zs ** m)
        for zr in roots:
            if small < abs(zr) < R:
                Q = adjugate(build_K(model, zr, wv))[bi, wi]
                value += Q * zr ** (m - 1) / poly.dz(zr, wv)
        return complex(value)

    def count(psi: float) -> int:
        return int(np.sum(np.abs(_z_roots(poly, Wr * np.exp(1j * psi))) < R))

    def crossing(psi: float, k: int) -> float:
        mods = np.sort(np.abs(_z_roots(poly, Wr * np.exp(1j * psi))))
        return float(np.log(mods[k]) - np.log(R))

    grid = np.linspace(0.0, 2 * math.pi, 4 * order + 1)
    counts = [count(p) for p in grid]
    breaks = [0.0]
    for a, b_, ca, cb in zip(grid[:-1], grid[1:], counts[:-1], counts[1:]):
        if ca != cb:
            k = min(ca, cb)
            try:
                breaks.append(brentq(crossing, a, b_, args=(k,), xtol=1e-13))
            except ValueError:
                breaks.append(0.5 * (a + b_))
    breaks.append(2 * math.pi)

    def outer(psi):
        wv = Wr * np.exp(1j * psi)
        val = inner(wv) * wv ** n
        return np.array([val.real, val.imag])

    epsabs = float(config_value("gibbs", "quad_epsabs", 1e-12))
    limit = int(config_value("gibbs", "quad_limit", 400))
    total = np.zeros(2)
    for a, b_ in zip(breaks[:-1], breaks[1:]):
        if b_ - a > 1e-14:
            part, _ = quad_vec(outer, a, b_, epsabs=epsabs, epsrel=1e-10, limit=limit)
            total += part
    return complex(total[0], total[1]) / (2 * math.pi)


# ============= 柱集概率 =============

def _inverse_entry(model: FockModel, phase: Phase, b: VertexRef, w: VertexRef) -> InverseEntry:
    if isinstance(phase, MagneticField):
        return inverse_fourier(model, phase, b, w)
    if phase.kind == "gaseous" and model.g != 1:
        return inverse_fourier(model, matched_field(model, phase), b, w)
    return inverse_contour(model, phase, b, w)


def _as_edge_ref(item) -> Tuple[int, Offset]:
    if isinstance(item, (int, np.integer)):
        return int(item), (0, 0)
    e, cell = item
    return int(e), (int(cell[0]), int(cell[1]))


def cylinder_probability(model: FockModel, phase: Phase, edges: Sequence) -> ProbabilityResult:
    """
    P(e₁,…,e_k) = Π K_{e_i} · det(A_{b_i, w_j})

    Args:
        edges: 边索引或 (边索引, 白点所在格)

    Returns:
        截断到 [0, 1] 的实值及残余虚部
    """
    refs = [_as_edge_ref(x) for x in edges]
    if not isinstance(phase, MagneticField):
        phase = classify_phase(model, phase)
        if len(refs) == 1:
            e, cell = refs[0]
            value = edge_probability_local(model, e, phase, cell)
            return ProbabilityResult(min(max(value, 0.0), 1.0), 0.0, "ClosedForm")
    G = model.graph
    blacks, whites, weights = [], [], []
    for e, cell in refs:
        edge = G.edges[e]
        blacks.append((edge.black, (cell[0] + edge.offset[0], cell[1] + edge.offset[1])))
        whites.append((edge.white, cell))
        weights.append(fock_entry(model, e, cell))
    if len(set(blacks)) < len(blacks) or len(set(whites)) < len(whites):
        return ProbabilityResult(0.0, 0.0, "ClosedForm")
    k = len(refs)
    A = np.empty((k, k), dtype=complex)
    provenance = set()
    for i, j in itertools.product(range(k), repeat=2):
        entry = _inverse_entry(model, phase, blacks[i], whites[j])
        A[i, j] = entry.value
        provenance.add(entry.provenance)
    value = complex(np.prod(weights) * np.linalg.det(A))
    if abs(value.imag) > 1e-8:
        logger.warning(f"⚠️ 柱集概率的虚部 {value.imag:.2e} 超过容差")
    label = provenance.pop() if len(provenance) == 1 else "Contour"
    return ProbabilityResult(min(max(value.real, 0.0), 1.0), float(value.imag), label)


# ============= 磁场匹配与 amoeba =============

@dataclass
class AmoebaSample:
    inside: bool
    counts: List[int] = field(default_factory=list)
    min_gap: float = float("inf")

    def to_json(self) -> dict:
        return {"inside": self.inside, "counts": self.counts, "min_gap": self.min_gap}


def amoeba_sample(model: FockModel, B: MagneticField, n_samples: int = 256,
                  tol: float = 1e-9) -> AmoebaSample:
    """
    B 在 amoeba 内 ⇔ 沿 |z| = e^{B_y} 时 |w| < e^{−B_x} 的根数不恒定或有根落在圆周上
    """
    poly = char_poly(model)
    R, Wr = B.radii
    counts, gap = set(), float("inf")
    for z in R * np.exp(2j * np.pi * np.arange(n_samples) / n_samples):
        _, coeffs = poly.w_polynomial(z)
        roots = np.roots(coeffs[np.argmax(np.abs(coeffs) > 1e-14 * np.max(np.abs(coeffs))):])
        mods = np.abs(roots[np.abs(roots) > 0])
        counts.add(int(np.sum(mods < Wr)))
        if mods.size:
            gap = min(gap, float(np.min(np.abs(np.log(mods) - np.log(Wr)))))
    inside = len(counts) > 1 or gap < tol
    return AmoebaSample(inside=inside, counts=sorted(counts), min_gap=gap)


def _field_of(z: complex, w: complex) -> MagneticField:
    return MagneticField(bx=-math.log(abs(w)), by=math.log(abs(z)))


def matched_field(model: FockModel, u0) -> MagneticField:
    """
    与 u₀ 对应的磁场

        liquid:  B = (−log|w(u₀)|, log|z(u₀)|)
        gaseous: A_k 像 (amoeba 的第 k 个有界补分支边界) 的重心
        solid:   Newton 多边形顶点法锥方向的远处, 冻结构型与 u₀ 匹配

    Raises:
        CalibrationFailure: 固相点找不到匹配的顶点
    """
    phase = classify_phase(model, u0)
    coord = None if phase.point.coord is None else complex(phase.point.coord)
    key = ("matched", phase.kind, phase.oval, phase.s, coord)
    if key not in model._cache:
        model._cache[key] = _matched_field(model, phase)
    return model._cache[key]


def _matched_field(model: FockModel, phase: PhasePoint) -> MagneticField:
    if phase.kind == "liquid":
        return _field_of(*spectral_point(model, phase.point))
    if phase.kind == "gaseous":
        s = np.linspace(0.0, 1.0, 64, endpoint=False)
        fields = [_field_of(*spectral_point(model, OvalPoint(phase.oval, float(x)))) for x in s]
        return MagneticField(bx=float(np.mean([f.bx for f in fields])),
                             by=float(np.mean([f.by for f in fields])))
    target = set(frozen_configuration(model, phase))
    poly = char_poly(model)
    hull = hull_vertices(poly.support)
    n = len(hull)
    for k in range(n):
        prev_, cur, nxt = hull[k - 1], hull[k], hull[(k + 1) % n]
        normals = []
        for p, q in ((prev_, cur), (cur, nxt)):
            d = np.array([q[0] - p[0], q[1] - p[1]], dtype=float)
            normals.append(np.array([d[1], -d[0]]) / np.linalg.norm(d))
        direction = normals[0] + normals[1]
        for L in (4.0, 8.0, 16.0, 32.0):
            B = MagneticField(bx=-L * direction[0], by=L * direction[1])
            if amoeba_sample(model, B, n_samples=64).inside:
                continue
            probs = edge_probabilities(model, B)
            config = {e for e, p in enumerate(probs) if p > 0.5}
            if np.all(np.minimum(np.abs(probs), np.abs(1 - probs)) < 1e-6) and config == target:
                return B
            break
    raise CalibrationFailure("找不到与固相点冻结构型匹配的磁场", frozen=sorted(target))


# ============= 斜率 =============

def slope(model: FockModel, u0, u1=None) -> Tuple[float, float]:
    """
    (s, t) = Σ_e (e∧γ_x, e∧γ_y) (P^{u₀}(e) − 1_{M₁}(e)), 即 (−H_y, H_x), H = Σ off(e)(…)
    """
    phase = classify_phase(model, u0)
    probs = edge_probabilities(model, phase)
    frozen = set(frozen_configuration(model, u1))
    st = np.zeros(2)
    for e, edge in enumerate(model.graph.edges):
        st += np.asarray(edge_height_crossings(edge), dtype=float) * (probs[e] - (1.0 if e in frozen else 0.0))
    return float(st[0]), float(st[1])


def slope_from_spectral(model: FockModel, u0, u1=None) -> Tuple[float, float]:
    """
    谱参数化给出的斜率: s = −Δarg z / π, t = −Δarg w / π, 路径从 u₁ 到 u₀

    Raises:
        PathCrossesAngles: 固相点 (路径沿 A₀ 穿过角度)
    """
    phase = classify_phase(model, u0)
    ref = u1 if u1 is not None else reference_point(model)
    if phase.kind == "solid":
        raise PathCrossesAngles("固相点的谱斜率需要沿 A₀ 穿过角度")
    if phase.kind == "gaseous":
        if model.g != 1:
            raise PathAmbiguous("超椭圆后端的气相谱斜率需要实分量路径")
        target = complex(model.curve.oval_coord(phase.oval, phase.s))
    else:
        target = complex(phase.point.coord)
    path = model.curve.path_from_A0(float(ref.s), target)
    H = np.array([t.homology for t in model.graph.tracks], dtype=float)
    deltas = []
    for k in range(len(model.graph.tracks)):
        lift_k = model.track_lifts[k]
        deltas.append(_arg_change(
            lambda lifts, a=lift_k: theta_char(model.odd, lifts - a, model.period, model.cfg), path))
    deltas = np.array(deltas)
    darg_z = float(deltas @ (-H[:, 1]))
    darg_w = float(deltas @ H[:, 0])
    return -darg_z / math.pi, -darg_w / math.pi


# ============= 有限环面 =============

def brute_force_matchings(graph) -> List[Tuple[int, ...]]:
    """环面图的全部完美匹配 (边索引元组)"""
    whites = list(graph.whites)
    out: List[Tuple[int, ...]] = []

    def extend(i: int, used: set, chosen: List[int]):
        if i == len(whites):
            out.append(tuple(chosen))
            return
        for e in graph.rotations[whites[i]]:
            b = graph.edges[e].black
            if b not in used:
                used.add(b)
                chosen.append(e)
                extend(i + 1, used, chosen)
                chosen.pop()
                used.remove(b)

    extend(0, set(), [])
    return out


def _magnetic(offset: Offset, B: Optional[MagneticField]) -> float:
    if B is None:
        return 1.0
    return math.exp(B.by * offset[0] - B.bx * offset[1])


def brute_force_partition(model: FockModel, B: Optional[MagneticField] = None) -> Tuple[float, np.ndarray]:
    """
    Z = Σ_M Π_{e∈M} |K_e| · e^{B_y m − B_x n}, 以及各边的匹配频率
    """
    weights = np.abs(model.entries)
    G = model.graph
    Z = 0.0
    freq = np.zeros(len(G.edges))
    for M in brute_force_matchings(G):
        off = np.sum([G.edges[e].offset for e in M], axis=0)
        wgt = float(np.prod(weights[list(M)])) * _magnetic((int(off[0]), int(off[1])), B)
        Z += wgt
        freq[list(M)] += wgt
    return Z, freq / Z


def _coefficient_grid(model: FockModel):
    (lx, ly), (hx, hy) = _exponent_box(model)
    nx_, ny_ = hx - lx + 1, hy - ly + 1
    zs = np.exp(2j * np.pi * np.arange(nx_) / nx_)
    ws = np.exp(2j * np.pi * np.arange(ny_) / ny_)
    Zg, Wg = np.meshgrid(zs, ws, indexing="ij")
    return (lx, ly), (nx_, ny_), Zg, Wg


def torus_partition_function(model: FockModel, n: int, B: Optional[MagneticField] = None) -> float:
    """
    n×n 环面的配分函数

    每个高度变化类 (i, j) 内全部匹配的 Kasteleyn 相位相同, 因此
    Z = Σ_{ij} |c_{ij}| e^{B_y i − B_x j}, c 为 n×n 覆盖的特征多项式系数。
    """
    cover, _ = blowup(model, n)
    poly = char_poly(cover)
    return float(sum(abs(c) * _magnetic(ij, B) for ij, c in poly.coeffs.items()))


def torus_edge_frequencies(model: FockModel, n: int, B: Optional[MagneticField] = None,
                           progress: bool = False) -> Tuple[np.ndarray, List[int]]:
    """
    n×n 环面上各边的匹配频率: K_e ∂Z/∂K_e / Z, 逐高度类用特征多项式系数的相位定号

    Returns:
        (覆盖图各边的频率, 覆盖边 -> 基本边 投影)
    """
    cover, proj = blowup(model, n)
    poly = char_poly(cover)
    (lx, ly), (nx_, ny_), Zg, Wg = _coefficient_grid(cover)
    Ks = _K_grid(cover, Zg, Wg)
    dets = np.linalg.det(Ks)
    scale = np.max(np.abs(dets)) or 1.0
    adj = np.empty(Ks.shape, dtype=complex)
    for idx in range(Ks.shape[0]):
        if abs(dets[idx]) > 1e-10 * scale:
            adj[idx] = dets[idx] * np.linalg.inv(Ks[idx])
        else:
            adj[idx] = adjugate(Ks[idx])
    Z = sum(abs(c) * _magnetic(ij, B) for ij, c in poly.coeffs.items())
    phases = {ij: c / abs(c) for ij, c in poly.coeffs.items()}
    G = cover.graph
    freq = np.zeros(len(G.edges))
    edges = tqdm(range(len(G.edges)), desc="环面边频率", disable=not progress)
    for e in edges:
        edge = G.edges[e]
        m, k = edge.offset
        vals = cover.entries[e] * Zg.ravel() ** m * Wg.ravel() ** k * \
            adj[:, cover.black_index[edge.black], cover.white_index[edge.white]]
        D = vals.reshape(nx_, ny_) * Zg ** (-lx) * Wg ** (-ly)
        C = np.fft.fft2(D) / (nx_ * ny_)
        total = 0.0
        for a, b in itertools.product(range(nx_), range(ny_)):
            ij = (a + lx, b + ly)
            if ij in phases:
                total += float(np.real(C[a, b] / phases[ij])) * _magnetic(ij, B)
        freq[e] = total / Z
    return freq, proj
