"""
M-curve 后端:显式亏格 1 环面和实超椭圆曲线

提供周期矩阵、Abel–Jacobi 提升、椭圆分量 (oval) 参数化、反全纯对合、
规范化全纯微分、ζ 形式以及数值标定的 Riemann 常数。

约定:
    - OvalPoint(oval=0, s) 位于 A₀,基点 x₀ 为 A₀ 上 s=0 的点,提升为 0。
    - A_j (j ≥ 1) 的参数 s 沿 A_j 的定向增加,绕一圈提升增加 e_j。
    - 内部点用图坐标表示:亏格 1 为 u (0 < Im u < τ/2),超椭圆为 Σ⁺ 上的 x。
    - 超椭圆曲线 y² = −Π(x−λ_i),实分量位于 [λ_{2j−1}, λ_{2j}] 之上,
      A₀ 为最右侧区间 [λ_{2g+1}, λ_{2g+2}] 上的分量。
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import (
    BranchPoint,
    CalibrationFailure,
    PathAmbiguous,
    QuadratureFailure,
    SchemaError,
)
from .theta import (
    DEFAULT_CONFIG,
    PeriodMatrix,
    ThetaChar,
    ThetaConfig,
    grad_theta_char,
    reduced_real_theta,
)
from .utils import cache_calibration, config_value

logger = logging.getLogger(__name__)


# ============= 点与提升 =============

@dataclass(frozen=True)
class OvalPoint:
    """实分量 A_oval 上的点, s 为循环参数"""
    oval: int
    s: float


@dataclass(frozen=True, eq=False)
class PointLift:
    """
    Abel–Jacobi 提升 ũ 及其后端坐标

    kind 为 'oval' 时 oval/s 有效;为 'interior' 时 coord 为图坐标,
    sheet = +1 表示 Σ⁺, −1 表示 σ(Σ⁺); path_class = (A₀ 穿越参数, 绕数)。
    """
    lift: np.ndarray
    kind: str
    oval: Optional[int] = None
    s: Optional[float] = None
    coord: Optional[complex] = None
    sheet: int = 1
    path_class: Optional[tuple] = None

    @property
    def is_real(self) -> bool:
        return self.kind == "oval"

    def to_json(self) -> dict:
        if self.kind == "oval":
            return {"oval": self.oval, "s": float(self.s)}
        return {"coord": [float(np.real(self.coord)), float(np.imag(self.coord))],
                "sheet": self.sheet}


PointLike = Union[OvalPoint, PointLift, complex]


# ============= 提升路径 =============

def _chebyshev_antiderivative(func, a: float = 0.0, b: float = 1.0,
                              start: int = 32, max_degree: int = 1024):
    """
    对 [a, b] 上光滑的向量值函数构造 Chebyshev 原函数 F(t) = ∫_a^t f

    Returns:
        (coeffs, total): 原函数的 Chebyshev 系数 (形状 (n+1, g)) 和 ∫_a^b f
    """
    n = start
    while True:
        x = cheb.chebpts1(n)
        t = a + (b - a) * (x + 1.0) / 2.0
        values = np.asarray(func(t))
        coeffs = np.linalg.solve(cheb.chebvander(x, n - 1), values)
        scale = np.max(np.abs(coeffs)) or 1.0
        tail = np.max(np.abs(coeffs[-4:]))
        if tail < 1e-14 * scale or n >= max_degree:
            if tail >= 1e-14 * scale:
                logger.warning(f"⚠️ 路径积分 Chebyshev 展开未完全收敛: tail/scale = {tail / scale:.2e}")
            break
        n *= 2
    integ = cheb.chebint(coeffs, lbnd=-1, scl=(b - a) / 2.0, axis=0)
    total = cheb.chebval(1.0, integ)
    return integ, np.asarray(total)


class LiftedPath:
    """
    Σ⁺ 图坐标中的折线路径,带连续的 Abel–Jacobi 提升

    参数 t ∈ [0, n_segments],第 k 段对应 t ∈ [k, k+1]。
    """

    def __init__(self, curve: "MCurve", vertices: Sequence[complex], start_lift):
        self.curve = curve
        self.vertices = np.asarray(vertices, dtype=complex)
        self.n_segments = len(self.vertices) - 1
        if self.n_segments < 1:
            raise ValueError("路径至少需要两个顶点")
        self._pieces = []
        lift = np.asarray(start_lift, dtype=complex).copy()
        for p, q in zip(self.vertices[:-1], self.vertices[1:]):
            if curve.is_affine_chart:
                integ, total = None, np.full(curve.g, q - p, dtype=complex)
            else:
                integ, total = _chebyshev_antiderivative(
                    lambda t, p=p, q=q: curve.forms_chart(p + (q - p) * t) * (q - p)
                )
            self._pieces.append((p, q, lift.copy(), integ))
            lift = lift + total
        self.start_lift = np.asarray(start_lift, dtype=complex)
        self.end_lift = lift

    def _locate(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.floor(t).astype(int), 0, self.n_segments - 1)
        return t, k, t - k

    def point(self, t) -> np.ndarray:
        t, k, local = self._locate(t)
        p = self.vertices[k]
        q = self.vertices[k + 1]
        return p + (q - p) * local

    def lift(self, t) -> np.ndarray:
        t, k, local = self._locate(t)
        flat_k, flat_local = k.reshape(-1), local.reshape(-1)
        out = np.empty((flat_k.size, self.curve.g), dtype=complex)
        for idx in np.unique(flat_k):
            mask = flat_k == idx
            p, q, base, integ = self._pieces[idx]
            if integ is None:
                out[mask] = base[None, :] + ((q - p) * flat_local[mask])[:, None]
            else:
                x = 2.0 * flat_local[mask] - 1.0
                out[mask] = base[None, :] + cheb.chebval(x, integ).T
        return out.reshape(t.shape + (self.curve.g,))

    def dlift(self, t) -> np.ndarray:
        t, k, local = self._locate(t)
        p = self.vertices[k]
        q = self.vertices[k + 1]
        z = p + (q - p) * local
        return self.curve.forms_chart(z) * (q - p)[..., None]


# ============= 曲线基类 =============

class MCurve(ABC):
    """M-curve 数值后端的公共接口"""

    kind: str = ""
    is_affine_chart: bool = False

    def __init__(self, cfg: ThetaConfig = DEFAULT_CONFIG):
        self.cfg = cfg

    # ---------- 抽象接口 ----------

    @property
    @abstractmethod
    def g(self) -> int:
        ...

    @abstractmethod
    def period_matrix(self) -> PeriodMatrix:
        ...

    @abstractmethod
    def oval_lift(self, oval: int, s) -> np.ndarray:
        """A_oval 上参数 s (可为数组, 可超出 [0,1)) 的提升, 形状 (..., g)"""

    @abstractmethod
    def oval_forms(self, oval: int, s) -> np.ndarray:
        """ω 关于 A_oval 参数 s 的值 (实数), 形状 (..., g)"""

    @abstractmethod
    def oval_coord(self, oval: int, s) -> np.ndarray:
        """A_oval 上点的图坐标"""

    @abstractmethod
    def forms_chart(self, x) -> np.ndarray:
        """Σ⁺ 上 ω 关于图坐标的值, 形状 (..., g)"""

    @abstractmethod
    def path_from_A0(self, s_c: float, target: complex) -> LiftedPath:
        """从 A₀ 上参数 s_c 的点进入 Σ⁺ 到 target 的规范路径"""

    @abstractmethod
    def interior_crossing(self, target: complex) -> float:
        """内部点默认的 A₀ 穿越参数"""

    @abstractmethod
    def is_interior(self, x: complex) -> bool:
        ...

    @abstractmethod
    def descriptor(self) -> dict:
        ...

    @abstractmethod
    def random_interior_coords(self, rng: np.random.Generator, n: int) -> np.ndarray:
        ...

    # ---------- 通用实现 ----------

    @cached_property
    def period(self) -> PeriodMatrix:
        return self.period_matrix()

    def content_key(self) -> dict:
        return {"descriptor": self.descriptor(), "tol": self.cfg.tol}

    def abel_jacobi(self, point: PointLike, path_class: Optional[tuple] = None) -> PointLift:
        """
        Abel–Jacobi 提升 (基点为 A₀ 上 s=0 的点)

        Args:
            point: OvalPoint 或图坐标 (复数)
            path_class: 内部点的 (A₀ 穿越参数, 绕数);省略时使用规范穿越

        Raises:
            PathAmbiguous: 坐标落在实轴上但不在任何实分量内
        """
        if isinstance(point, PointLift):
            return point
        if isinstance(point, OvalPoint):
            if not 0 <= point.oval <= self.g:
                raise ValueError(f"oval 索引 {point.oval} 超出 [0, {self.g}]")
            lift = self.oval_lift(point.oval, point.s)
            return PointLift(lift=np.asarray(lift, dtype=complex), kind="oval",
                             oval=point.oval, s=float(point.s),
                             coord=complex(self.oval_coord(point.oval, point.s)))
        return self.interior_lift(complex(point), path_class)

    def interior_lift(self, x: complex, path_class: Optional[tuple] = None) -> PointLift:
        if not self.is_interior(x):
            raise PathAmbiguous(f"点 {x} 不在 Σ⁺ 内部, 无法确定路径类", point=x)
        s_c = self.interior_crossing(x) if path_class is None else float(path_class[0])
        winding = 0 if path_class is None else int(path_class[1])
        path = self.path_from_A0(s_c, x)
        lift = path.end_lift + winding * np.ones(self.g)
        return PointLift(lift=lift, kind="interior", coord=complex(x), sheet=1,
                         path_class=(s_c, winding))

    def path_lifts(self, points: Sequence[complex], start_lift=None) -> LiftedPath:
        """
        Σ⁺ 内折线上的连续提升

        Args:
            points: 折线顶点 (图坐标)
            start_lift: 起点提升, 缺省为起点的规范内部提升

        Raises:
            PathAmbiguous: 起点不在 Σ⁺ 内部且未给出起点提升
        """
        points = [complex(p) for p in points]
        if start_lift is None:
            start_lift = self.interior_lift(points[0]).lift
        return LiftedPath(self, points, start_lift)

    def involution(self, p: PointLift) -> PointLift:
        """σ(p): 提升取共轭,实分量上的点逐点固定 (模格)"""
        if p.kind == "oval":
            return PointLift(lift=np.conj(p.lift), kind="oval", oval=p.oval, s=p.s,
                             coord=p.coord, sheet=1, path_class=p.path_class)
        return PointLift(lift=np.conj(p.lift), kind="interior",
                         coord=np.conj(p.coord), sheet=-p.sheet, path_class=p.path_class)

    def holomorphic_forms_at(self, p: PointLike) -> np.ndarray:
        """
        (ω₁,…,ω_g) 在 p 处关于后端规范局部坐标的值

        实分量上的点关于 A_j 参数 s;内部点关于图坐标 (σ 像取共轭)。
        """
        p = self.abel_jacobi(p)
        if p.kind == "oval":
            return np.asarray(self.oval_forms(p.oval, p.s), dtype=complex)
        if p.sheet == 1:
            return np.asarray(self.forms_chart(p.coord), dtype=complex)
        return np.conj(np.asarray(self.forms_chart(np.conj(p.coord)), dtype=complex))

    def zeta_at(self, p: PointLike, odd: ThetaChar) -> complex:
        """ζ(p) = Σ_i ∂θ[δ](0)/∂z_i · ω_i(p)"""
        grad0 = grad_theta_char(odd, np.zeros(self.g), self.period, self.cfg)
        return complex(grad0 @ self.holomorphic_forms_at(p))

    def a0_lift(self, s) -> np.ndarray:
        return self.oval_lift(0, s)

    def reduce_mod_lattice(self, v) -> np.ndarray:
        """把向量约化到 Re ∈ [0,1)^g, Im 落在 Im Ω 的基本区域"""
        P = self.period
        v = np.asarray(v, dtype=complex)
        n = np.floor(v.imag @ P.Yinv.T + 1e-9)
        v = v - n @ P.omega.T
        return np.mod(v.real, 1.0) + 1j * v.imag

    def lattice_distance(self, a, b) -> float:
        """|a − b| 模 Λ = Z^g + ΩZ^g 的距离"""
        P = self.period
        d = np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex)
        n = np.round(d.imag @ P.Yinv.T)
        d = d - n @ P.omega.T
        d = d - np.round(d.real)
        return float(np.max(np.abs(d)))

    def random_oval_points(self, rng: np.random.Generator, n: int,
                           ovals: Optional[Sequence[int]] = None) -> List[OvalPoint]:
        choices = list(range(self.g + 1)) if ovals is None else list(ovals)
        idx = rng.integers(0, len(choices), size=n)
        return [OvalPoint(choices[i], float(s)) for i, s in zip(idx, rng.random(n))]

    # ---------- Riemann 常数 ----------

    def theta_zero_on_oval(self, e, oval: int, n_scan: Optional[int] = None) -> float:
        """
        在 A_oval (oval ≥ 1) 上定位 s ↦ θ(e + ũ(s)) 的唯一零点

        函数沿 A_oval 反周期,因此至少有一次变号。

        Raises:
            CalibrationFailure: 变号次数不是 1
        """
        n_scan = int(n_scan or config_value("surface", "zero_scan", 400))
        e = np.asarray(e, dtype=complex)
        P = self.period

        def f(s):
            return reduced_real_theta(e + self.oval_lift(oval, s), P, self.cfg)

        grid = np.linspace(0.0, 1.0, n_scan + 1)
        values = f(grid)
        roots = []
        for k in range(n_scan):
            lo, hi = values[k], values[k + 1]
            if lo == 0.0:
                roots.append(grid[k])
            elif lo * hi < 0:
                roots.append(brentq(lambda s: float(f(np.array([s]))[0]), grid[k], grid[k + 1],
                                    xtol=1e-15, rtol=1e-15))
        if len(roots) != 1:
            raise CalibrationFailure(
                f"A_{oval} 上 θ(e+ũ) 变号 {len(roots)} 次 (期望 1)", oval=oval, roots=roots
            )
        return float(roots[0])

    def _delta_from_shift(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=complex)
        total = e.copy()
        for j in range(1, self.g + 1):
            s_j = self.theta_zero_on_oval(e, j)
            total = total + self.oval_lift(j, s_j)
        return self.normalize_delta(total)

    def normalize_delta(self, delta) -> np.ndarray:
        P = self.period
        half = P.omega @ (0.5 * np.ones(self.g))
        d = np.asarray(delta, dtype=complex) - half
        n = np.round(d.imag @ P.Yinv.T)
        d = d - n @ P.omega.T
        if np.max(np.abs(d.imag)) > 1e-6:
            raise CalibrationFailure(
                f"Δ 的虚部不在 Im(Ω)·½𝟙 + Im(Ω)Z^g 中: 残差 {np.max(np.abs(d.imag)):.2e}"
            )
        return np.mod(d.real, 1.0) + half

    def riemann_constant(self) -> np.ndarray:
        """
        数值标定的 Riemann 常数 Δ: 对实探针 e, θ(ũ + e) 的零点之和为 Δ − e

        Raises:
            CalibrationFailure: 两个探针给出的 Δ 模 Λ 不一致
        """
        return _riemann_constant_cached(self)

    def calibration_report(self) -> dict:
        """周期矩阵与 A-规范化的自检结果"""
        P = self.period
        report = {
            "genus": self.g,
            "symmetry": float(np.max(np.abs(P.omega - P.omega.T))),
            "real_part": float(np.max(np.abs(P.X))),
            "min_eigenvalue": P.lambda_min,
        }
        a_periods = np.array([self.oval_lift(j, 1.0) - self.oval_lift(j, 0.0)
                              for j in range(1, self.g + 1)])
        report["a_normalization"] = float(np.max(np.abs(a_periods - np.eye(self.g))))
        report["a0_homology"] = float(np.max(np.abs(self.a0_lift(1.0) - self.a0_lift(0.0) - 1.0)))
        return report


@cache_calibration("riemann_constant")
def _riemann_constant_cached(curve: MCurve) -> np.ndarray:
    g = curve.g
    shift_a = 0.1237 + 0.0731 * np.arange(g)
    shift_b = 0.4119 + 0.1573 * np.arange(g)
    delta_a = curve._delta_from_shift(shift_a)
    delta_b = curve._delta_from_shift(shift_b)
    mismatch = curve.lattice_distance(delta_a, delta_b)
    if mismatch > 1e-6:
        raise CalibrationFailure(f"Riemann 常数探针不一致: {mismatch:.2e}", mismatch=mismatch)
    logger.info(f"✅ Riemann 常数标定完成 (探针差 {mismatch:.1e})")
    return delta_a


# ============= 亏格 1 =============

class Genus1Curve(MCurve):
    """
    亏格 1 的 M-curve: C/(Z + τZ), τ = i·tau_im, σ(u) = ū

    A₀ = {Im u = 0}, A₁ = {Im u = tau_im/2}, Σ⁺ = {0 < Im u < tau_im/2}
    """

    kind = "genus1"
    is_affine_chart = True

    def __init__(self, tau_im: float, cfg: ThetaConfig = DEFAULT_CONFIG):
        super().__init__(cfg)
        if not tau_im > 0:
            raise SchemaError(f"tau_im 必须为正数, 实际 {tau_im}")
        self.tau_im = float(tau_im)

    def __repr__(self) -> str:
        return f"Genus1Curve(tau_im={self.tau_im!r})"

    @property
    def g(self) -> int:
        return 1

    @property
    def tau(self) -> complex:
        return 1j * self.tau_im

    def period_matrix(self) -> PeriodMatrix:
        return PeriodMatrix([[self.tau]])

    def oval_lift(self, oval: int, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return (s + (0.5j * self.tau_im if oval == 1 else 0.0))[..., None].astype(complex)

    def oval_forms(self, oval: int, s) -> np.ndarray:
        return np.ones(np.shape(s) + (1,))

    def oval_coord(self, oval: int, s) -> np.ndarray:
        return np.asarray(s, dtype=float) + (0.5j * self.tau_im if oval == 1 else 0.0)

    def forms_chart(self, x) -> np.ndarray:
        return np.ones(np.shape(x) + (1,), dtype=complex)

    def is_interior(self, x: complex) -> bool:
        return 0.0 < np.imag(x) < self.tau_im / 2.0

    def interior_crossing(self, target: complex) -> float:
        return float(np.real(target))

    def path_from_A0(self, s_c: float, target: complex) -> LiftedPath:
        if not 0.0 <= np.imag(target) <= self.tau_im / 2.0 + 1e-14:
            raise PathAmbiguous(f"目标点 {target} 不在 Σ⁺ 的闭包内")
        return LiftedPath(self, [complex(s_c), complex(target)], [complex(s_c)])

    def descriptor(self) -> dict:
        return {"type": "genus1", "tau_im": self.tau_im}

    def random_interior_coords(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.random(n) + 1j * self.tau_im / 2.0 * (0.05 + 0.9 * rng.random(n))


# ============= 超椭圆 =============

class _PeriodicAntiderivative:
    """光滑周期向量函数 f(s) 的谱原函数 ∫_0^s f"""

    def __init__(self, samples: np.ndarray):
        N = samples.shape[0]
        coeffs = np.fft.fft(samples, axis=0) / N
        freqs = np.fft.fftfreq(N, d=1.0 / N)
        self.mean = coeffs[0].real
        self.total = self.mean.copy()
        scale = np.max(np.abs(coeffs)) or 1.0
        keep = (freqs != 0) & (np.max(np.abs(coeffs), axis=1) > 1e-17 * scale)
        self.k = freqs[keep]
        self.c = coeffs[keep]

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        flat = s.reshape(-1)
        out = np.empty((flat.size, self.mean.size))
        for start in range(0, flat.size, 512):
            chunk = flat[start:start + 512]
            phase = np.exp(2j * np.pi * np.outer(chunk, self.k)) - 1.0
            osc = (phase / (2j * np.pi * self.k)[None, :]) @ self.c
            out[start:start + 512] = chunk[:, None] * self.mean[None, :] + osc.real
        return out.reshape(s.shape + (self.mean.size,))


class HyperellipticCurve(MCurve):
    """
    实超椭圆 M-curve y² = −Π(x − λ_i), λ₁ < … < λ_{2g+2}

    Σ⁺ 为割去 g+1 条实区间 [a_j, b_j] = [λ_{2j−1}, λ_{2j}] 后的平面, 分支
    Y(x) = −i Π_j (x − b_j)·sqrt((x − a_j)/(x − b_j)), 满足 Y(x̄) = −conj Y(x)。
    A₀ 对应最右侧区间, A_j = c_j·O_j, c_j = (−1)^{g−j}。
    B_j 由上半平面中连接两区间中点的半圆 γ_j 与其 σ 像组成。
    """

    kind = "hyperelliptic"

    def __init__(self, branch_points: Sequence[float], cfg: ThetaConfig = DEFAULT_CONFIG,
                 rel_gap: Optional[float] = None):
        super().__init__(cfg)
        lam = np.asarray(branch_points, dtype=float)
        if lam.ndim != 1 or len(lam) < 4 or len(lam) % 2:
            raise SchemaError(f"分支点数目必须为 2g+2 (g ≥ 1), 实际 {len(lam)}")
        if np.any(np.diff(lam) <= 0):
            raise SchemaError("分支点必须严格递增")
        rel_gap = float(rel_gap if rel_gap is not None else config_value("surface", "rel_gap", 1e-3))
        span = lam[-1] - lam[0]
        if np.min(np.diff(lam)) < rel_gap * span:
            raise SchemaError(f"分支点间距小于 rel_gap·span = {rel_gap * span:.3e}")
        self.branch_points = lam
        self.a = lam[0::2].copy()
        self.b = lam[1::2].copy()
        self._genus = len(lam) // 2 - 1
        self.signs = np.array([(-1.0) ** (self._genus - j) for j in range(1, self._genus + 1)])
        self._oval_nodes = int(config_value("surface", "oval_nodes", 256))
        self._oval_max_nodes = int(config_value("surface", "oval_max_nodes", 16384))
        self._quad_epsabs = float(config_value("surface", "quad_epsabs", 1e-13))
        self._quad_limit = int(config_value("surface", "quad_limit", 200))

    def __repr__(self) -> str:
        return f"HyperellipticCurve(branch_points={self.branch_points.tolist()!r})"

    @property
    def g(self) -> int:
        return self._genus

    # ---------- 分支与微分 ----------

    def _slit_index(self, oval: int) -> int:
        return self.g if oval == 0 else oval - 1

    def Y(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        out = -1j * np.ones_like(x)
        for a, b in zip(self.a, self.b):
            out = out * (x - b) * np.sqrt((x - a) / (x - b))
        return out

    def _monomials(self, x) -> np.ndarray:
        x = np.asarray(x)
        return np.stack([x ** k for k in range(self.g)], axis=-1)

    def _oval_x(self, slit: int, s_o) -> np.ndarray:
        a, b = self.a[slit], self.b[slit]
        return 0.5 * (a + b) - 0.5 * (b - a) * np.cos(2.0 * np.pi * np.asarray(s_o, dtype=float))

    def _oval_integrand(self, slit: int, s_o) -> np.ndarray:
        """η_k 关于 O_slit 自身参数的值: 2π x^{k−1} / sqrt(Π_{i≠slit}(x − a_i)(x − b_i))"""
        x = self._oval_x(slit, s_o)
        rest = np.ones_like(x)
        for i, (a, b) in enumerate(zip(self.a, self.b)):
            if i != slit:
                rest = rest * (x - a) * (x - b)
        return 2.0 * np.pi * self._monomials(x) / np.sqrt(rest)[..., None]

    def _upper_side_param(self, slit: int) -> float:
        """上侧中点在 O_slit 参数下的值"""
        return 0.25 if (self.g - slit) % 2 == 0 else 0.75

    @cached_property
    def _antiderivatives(self) -> List[_PeriodicAntiderivative]:
        out = []
        for slit in range(self.g + 1):
            N = self._oval_nodes + 1
            previous = None
            while True:
                samples = self._oval_integrand(slit, np.arange(N) / N)
                anti = _PeriodicAntiderivative(samples)
                if previous is not None and np.max(np.abs(anti.total - previous)) < \
                        1e-13 * max(1.0, np.max(np.abs(anti.total))):
                    break
                if N > self._oval_max_nodes:
                    raise QuadratureFailure(
                        f"椭圆分量 {slit} 的周期积分未收敛 (N={N})", slit=slit
                    )
                previous = anti.total
                N = 2 * N - 1
            out.append(anti)
        return out

    @cached_property
    def normalization(self) -> np.ndarray:
        """N = M⁻¹, M[j, i] = ∫_{A_i} η_j"""
        R = np.array([anti.total for anti in self._antiderivatives])   # (g+1, g)
        M = (self.signs[:, None] * R[:self.g]).T
        relation = R[self.g] - self.signs @ R[:self.g]
        if np.max(np.abs(relation)) > 1e-8 * np.max(np.abs(R)):
            raise CalibrationFailure(
                f"A₀ 周期与 Σc_j A_j 不一致: 残差 {np.max(np.abs(relation)):.2e}"
            )
        return np.linalg.inv(M)

    def forms_chart(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        y = self.Y(x)
        if np.any(np.abs(y) < 1e-12):
            raise BranchPoint(f"局部坐标在分支点附近退化: min|y| = {np.min(np.abs(y)):.2e}")
        return (self._monomials(x) / y[..., None]) @ self.normalization.T

    # ---------- 周期矩阵 ----------

    def _semicircle_integral(self, slit: int) -> np.ndarray:
        """∫_{γ} η 沿上半平面半圆, 从 A₀ 区间中点到第 slit 个区间中点"""
        m0 = 0.5 * (self.a[self.g] + self.b[self.g])
        mj = 0.5 * (self.a[slit] + self.b[slit])
        center, radius = 0.5 * (m0 + mj), 0.5 * (m0 - mj)
        out = np.empty(self.g, dtype=complex)
        for k in range(self.g):
            def integrand(theta, k=k):
                x = center + radius * np.exp(1j * theta)
                return x ** k / self.Y(x) * 1j * radius * np.exp(1j * theta)
            re, err_re = quad(lambda th: integrand(th).real, 0.0, np.pi,
                              epsabs=self._quad_epsabs, limit=self._quad_limit)
            im, err_im = quad(lambda th: integrand(th).imag, 0.0, np.pi,
                              epsabs=self._quad_epsabs, limit=self._quad_limit)
            if max(err_re, err_im) > 1e-9:
                raise QuadratureFailure(f"B 周期积分误差过大: {max(err_re, err_im):.2e}")
            out[k] = re + 1j * im
        return self.normalization @ out

    @cached_property
    def _b_data(self):
        columns, bases = [], []
        upper0 = self._upper_side_param(self.g)
        start = self.normalization @ self._antiderivatives[self.g](upper0)
        for j in range(1, self.g + 1):
            v = self._semicircle_integral(j - 1)
            column = 2j * v.imag
            if column[j - 1].imag < 0:
                column = -column
            columns.append(column)
            bases.append(start + v)
        omega = np.array(columns).T
        return omega, bases

    def period_matrix(self) -> PeriodMatrix:
        omega, _ = self._b_data
        try:
            return PeriodMatrix(omega, tol_sym=1e-8)
        except Exception as e:
            logger.error(f"❌ 超椭圆周期矩阵标定失败: {e}")
            raise CalibrationFailure(f"周期矩阵不满足 Riemann 双线性关系: {e}") from e

    # ---------- 实分量 ----------

    def _own_param(self, oval: int, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return s if oval == 0 else self.signs[oval - 1] * s

    def oval_lift(self, oval: int, s) -> np.ndarray:
        slit = self._slit_index(oval)
        N = self.normalization
        s_o = self._own_param(oval, s)
        values = self._antiderivatives[slit](s_o) @ N.T
        if oval == 0:
            return values.astype(complex)
        _, bases = self._b_data
        s_star = self._upper_side_param(slit)
        anchor = N @ self._antiderivatives[slit](s_star)
        return (bases[oval - 1] - anchor) + values

    def oval_forms(self, oval: int, s) -> np.ndarray:
        slit = self._slit_index(oval)
        sign = 1.0 if oval == 0 else self.signs[oval - 1]
        eta = self._oval_integrand(slit, self._own_param(oval, s))
        return sign * eta @ self.normalization.T

    def oval_coord(self, oval: int, s) -> np.ndarray:
        return self._oval_x(self._slit_index(oval), self._own_param(oval, s)).astype(complex)

    def is_interior(self, x: complex) -> bool:
        return abs(np.imag(x)) > 0.0

    def interior_crossing(self, target: complex) -> float:
        return 0.25 if np.imag(target) > 0 else 0.75

    def path_from_A0(self, s_c: float, target: complex) -> LiftedPath:
        """
        从 A₀ 上 s_c 处进入 Σ⁺: 同侧时为直线段, 异侧时绕过 A₀ 区间右端
        (在 (b_{g+1}, ∞) 的间隙中穿过实轴)
        """
        if np.imag(target) == 0.0:
            raise PathAmbiguous(f"目标点 {target} 在实轴上, 路径类不确定")
        phase = float(np.mod(s_c, 1.0))
        if phase in (0.0, 0.5):
            raise PathAmbiguous("穿越点位于分支点上")
        upper = phase < 0.5
        start = complex(self._oval_x(self.g, phase))
        start_lift = self.oval_lift(0, s_c)
        if upper == (np.imag(target) > 0):
            return LiftedPath(self, [start, complex(target)], start_lift)
        h = 0.5 * (self.b[self.g] - self.a[self.g])
        side = 1.0 if upper else -1.0
        right = self.b[self.g] + h
        vertices = [start, start + 1j * side * h, right + 1j * side * h,
                    right - 1j * side * h, complex(target)]
        return LiftedPath(self, vertices, start_lift)

    def descriptor(self) -> dict:
        return {"type": "hyperelliptic", "branch_points": self.branch_points.tolist()}

    def random_interior_coords(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lo, hi = self.branch_points[0] - 0.5, self.branch_points[-1] + 0.5
        return lo + (hi - lo) * rng.random(n) + 1j * (0.2 + 1.3 * rng.random(n))

    def calibration_report(self) -> dict:
        report = super().calibration_report()
        R = np.array([anti.total for anti in self._antiderivatives])
        report["a0_relation"] = float(np.max(np.abs(R[self.g] - self.signs @ R[:self.g])))
        return report


# ============= 构造 =============

def backend_from_descriptor(desc: dict, cfg: ThetaConfig = DEFAULT_CONFIG) -> MCurve:
    """
    从模型文件的 backend 描述构造曲线

    {"type": "genus1", "tau_im": 1.3} 或 {"type": "hyperelliptic", "branch_points": [...]}
    """
    if not isinstance(desc, dict) or "type" not in desc:
        raise SchemaError("backend 描述缺少 type 字段")
    kind = desc["type"]
    if kind == "genus1":
        if "tau_im" not in desc:
            raise SchemaError("genus1 backend 缺少 tau_im")
        return Genus1Curve(float(desc["tau_im"]), cfg)
    if kind == "hyperelliptic":
        if "branch_points" not in desc:
            raise SchemaError("hyperelliptic backend 缺少 branch_points")
        return HyperellipticCurve(desc["branch_points"], cfg, desc.get("rel_gap"))
    raise SchemaError(f"未知 backend 类型: {kind}")

