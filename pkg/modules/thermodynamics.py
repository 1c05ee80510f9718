"""
热力学量: 表面张力、自由能与 Ronkin 函数

路径从参考固相点 u₁ ∈ A₀ 进入 Σ⁺ 到 u₀, 沿路径

    k_T = log|θ[δ](ũ − α̃_T)|,   ℓ_T = arg θ[δ](ũ − α̃_T) (连续, ℓ_T(u₁) = 0)

    τ(u₀) = −Σ_{M₁} log|K| + (1/π) Σ_e ∫ (k_β dℓ_α − k_α dℓ_β)
    F(u₀) =  Σ_{M₁} log|K| + (1/π) Σ_e ∫ (ℓ_α dk_β − ℓ_β dk_α)

两者满足 F = s B_x + t B_y − τ。
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import quad, quad_vec
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from .errors import PathAmbiguous, PathCrossesAngles, SingularGrid
from .gibbs import (
    MagneticField,
    classify_phase,
    frozen_configuration,
    reference_point,
    slope,
)
from .kasteleyn import FockModel, char_poly, spectral_point
from .surface import OvalPoint
from .theta import grad_log_theta_char, theta_char
from .utils import config_value

logger = logging.getLogger(__name__)


# ============= 谱磁场 =============

def spectral_field(model: FockModel, u0) -> MagneticField:
    """B(u₀) = (−log|w(u₀)|, log|z(u₀)|)"""
    phase = classify_phase(model, u0)
    z, w = spectral_point(model, phase.point)
    return MagneticField(bx=-math.log(abs(w)), by=math.log(abs(z)))


# ============= 路径积分 =============

def _same_point(model: FockModel, u0, u1) -> bool:
    if not isinstance(u0, OvalPoint) or not isinstance(u1, OvalPoint):
        return False
    return u0.oval == u1.oval and abs((u0.s - u1.s + 0.5) % 1.0 - 0.5) < 1e-15


def _path_to(model: FockModel, u0, u1: OvalPoint):
    phase = classify_phase(model, u0)
    if phase.kind == "solid":
        raise PathCrossesAngles("固相点之间的路径需要沿 A₀ 穿过角度")
    if phase.kind == "gaseous":
        if model.g != 1:
            raise PathAmbiguous("超椭圆后端的气相点需要实分量路径")
        target = complex(model.curve.oval_coord(phase.oval, phase.s))
    else:
        target = complex(phase.point.coord)
    return model.curve.path_from_A0(float(u1.s), target)


class _TrackLogs:
    """沿路径的 k_T, ℓ_T 及其导数; ℓ 用稠密展开表选定分支"""

    def __init__(self, model: FockModel, path, n_table: int):
        self.model = model
        self.path = path
        self.lifts = model.track_lifts
        self.t_table = np.linspace(0.0, float(path.n_segments), n_table)
        values = self._theta(path.lift(self.t_table))
        phases = np.unwrap(np.angle(values), axis=0)
        self.l_table = phases - phases[0]
        self.l0 = phases[0]

    def _theta(self, lifts):
        diff = lifts[..., None, :] - self.lifts
        return theta_char(self.model.odd, diff, self.model.period, self.model.cfg)

    def at(self, t: float):
        lift = self.path.lift(np.array([t]))[0]
        dl = self.path.dlift(np.array([t]))[0]
        vals = self._theta(lift)
        k = np.log(np.abs(vals))
        guess = np.array([np.interp(t, self.t_table, col) for col in self.l_table.T])
        raw = np.angle(vals) - self.l0
        ell = raw + 2 * math.pi * np.round((guess - raw) / (2 * math.pi))
        diff = lift[None, :] - self.lifts
        dlog = grad_log_theta_char(self.model.odd, diff, self.model.period, self.model.cfg) @ dl
        return k, ell, np.real(dlog), np.imag(dlog)


def _edge_pairs(model: FockModel) -> np.ndarray:
    return np.array([model.graph.alpha_beta(e) for e in range(len(model.graph.edges))])


def _path_integrals(model: FockModel, u0, u1: OvalPoint) -> Tuple[float, float, dict]:
    """
    Returns:
        (Σ_e ∫ k_β dℓ_α − k_α dℓ_β, Σ_e ∫ ℓ_α dk_β − ℓ_β dk_α, 端点的 k, ℓ)
    """
    path = _path_to(model, u0, u1)
    n_table = int(config_value("thermodynamics", "path_points", 4001))
    logs = _TrackLogs(model, path, n_table)
    pairs = _edge_pairs(model)
    a, b = pairs[:, 0], pairs[:, 1]

    def integrand(t):
        k, ell, dk, dell = logs.at(t)
        tau_part = np.sum(k[b] * dell[a] - k[a] * dell[b])
        free_part = np.sum(ell[a] * dk[b] - ell[b] * dk[a])
        return np.array([tau_part, free_part])

    epsabs = float(config_value("gibbs", "quad_epsabs", 1e-12))
    limit = int(config_value("gibbs", "quad_limit", 400))
    total = np.zeros(2)
    for seg in range(path.n_segments):
        part, _ = quad_vec(integrand, float(seg), float(seg + 1), epsabs=epsabs, epsrel=1e-10,
                           limit=limit)
        total += part
    k_end, l_end, _, _ = logs.at(float(path.n_segments))
    return float(total[0]), float(total[1]), {"k": k_end, "ell": l_end}


def _frozen_log_weight(model: FockModel, u1: OvalPoint) -> float:
    return float(sum(math.log(abs(model.entries[e])) for e in frozen_configuration(model, u1)))


def surface_tension(model: FockModel, u0, u1: Optional[OvalPoint] = None) -> float:
    """
    τ(u₀) = −Σ_{M₁} log|K| + (1/π) Σ_e ∫_{u₁}^{u₀} (k_β dℓ_α − k_α dℓ_β)

    Raises:
        PathCrossesAngles: u₀ 为不同于 u₁ 的固相点
    """
    u1 = u1 or reference_point(model)
    base = -_frozen_log_weight(model, u1)
    if _same_point(model, u0, u1):
        return base
    tau_int, _, _ = _path_integrals(model, u0, u1)
    return base + tau_int / math.pi


def free_energy(model: FockModel, u0, u1: Optional[OvalPoint] = None) -> float:
    """F(u₀) = Σ_{M₁} log|K| + (1/π) Σ_e ∫_{u₁}^{u₀} (ℓ_α dk_β − ℓ_β dk_α)"""
    u1 = u1 or reference_point(model)
    base = _frozen_log_weight(model, u1)
    if _same_point(model, u0, u1):
        return base
    _, free_int, _ = _path_integrals(model, u0, u1)
    return base + free_int / math.pi


def legendre_residual(model: FockModel, u0, u1: Optional[OvalPoint] = None) -> float:
    """F(u₀) − (s B_x + t B_y − τ(u₀)), (s, t) 取自边概率, B 取自谱参数化"""
    u1 = u1 or reference_point(model)
    s, t = slope(model, u0, u1)
    B = spectral_field(model, u0)
    tau = surface_tension(model, u0, u1)
    F = free_energy(model, u0, u1)
    residual = F - (s * B.bx + t * B.by - tau)
    logger.debug(f"Legendre 残差 {residual:.2e} (s={s:.6f}, t={t:.6f}, B=({B.bx:.6f}, {B.by:.6f}))")
    return float(residual)


# ============= Ronkin 函数 =============

def ronkin(model: FockModel, B: MagneticField, order: Optional[int] = None,
           seed: Optional[int] = None) -> float:
    """
    R(B) = ∬_{T_B} log|P(z, w)| dz/(2πiz) dw/(2πiw)

    Args:
        order: 0 表示内层 Jensen 公式 + 外层自适应积分; > 0 表示 order×order 梯形
        seed: 梯形网格抖动的种子, 相同种子给出相同结果

    Raises:
        SingularGrid: 梯形节点落在 P 的零点上 (重新抖动一次后仍然如此)
    """
    order = int(config_value("thermodynamics", "ronkin_order", 0) if order is None else order)
    if order > 0:
        if seed is None:
            seed = int(config_value("runtime", "seed", 0) or 0)
        return _ronkin_grid(model, B, order, np.random.default_rng(seed))
    return _ronkin_jensen(model, B)


def _ronkin_jensen(model: FockModel, B: MagneticField) -> float:
    poly = char_poly(model)
    R, Wr = B.radii
    log_r = math.log(R)

    def inner(psi: float) -> float:
        wv = Wr * np.exp(1j * psi)
        lo, coeffs = poly.z_polynomial(wv)
        scale = np.max(np.abs(coeffs))
        k = 0
        while k < len(coeffs) - 1 and abs(coeffs[k]) < 1e-14 * scale:
            k += 1
        coeffs = coeffs[k:]
        # 有效最低次 lo, 最高次 lo + len - 1
        while len(coeffs) > 1 and abs(coeffs[-1]) < 1e-14 * scale:
            coeffs = coeffs[:-1]
            lo += 1
        roots = np.roots(coeffs)
        return (lo * log_r + math.log(abs(coeffs[0]))
                + float(np.sum(np.log(np.maximum(R, np.abs(roots))))))

    limit = int(config_value("gibbs", "quad_limit", 400))
    value, _ = quad(inner, 0.0, 2 * math.pi, limit=limit, epsabs=1e-12, epsrel=1e-11)
    return value / (2 * math.pi)


@retry(
    stop=stop_after_attempt(2),
    retry=retry_if_exception_type(SingularGrid),
    reraise=True,
)
def _ronkin_grid(model: FockModel, B: MagneticField, order: int, rng: np.random.Generator) -> float:
    poly = char_poly(model)
    R, Wr = B.radii
    # 重试时 rng 已前进, 抖动随之改变
    jitter = rng.random(2) / order
    angles = 2 * np.pi * (np.arange(order) / order)
    Z, W = np.meshgrid(R * np.exp(1j * (angles + 2 * np.pi * jitter[0])),
                       Wr * np.exp(1j * (angles + 2 * np.pi * jitter[1])), indexing="ij")
    values = np.abs(poly.evaluate(Z, W))
    if np.any(values < 1e-300):
        logger.warning("⚠️ Ronkin 网格节点落在 P 的零点上, 重新抖动")
        raise SingularGrid("Ronkin 网格节点落在 P 的零点上")
    return float(np.mean(np.log(values)))
