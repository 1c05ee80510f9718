"""
Riemann theta 函数:带特征的 theta 函数、梯度、截断半径保证

θ(z|Ω) = Σ_{n∈Z^g} exp(iπ(n·Ωn + 2n·z))

数值约定:
    - 以 c = −(Im Ω)⁻¹ Im z 为中心求和,提取因子 exp(π Im z·(Im Ω)⁻¹ Im z),
      内部以 (mantissa, log_scale) 形式返回;公开接口返回普通复数,溢出时报错。
    - 截断半径 R 由 Gauss 尾部界 (g/2)(2/ρ)^g Γ(g/2, (R−ρ/2)²) < tol 确定,
      ρ 为 Cholesky 因子 T (πY = TᵀT) 下的最短格向量长度。
    - 特征以半整数的分子 (2δ′, 2δ″) 存储,奇偶性精确计算。
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma, gammaincc

from .errors import (
    DegenerateCharacteristic,
    NonPositiveDefinite,
    ThetaOverflow,
    ThetaZero,
)
from .utils import config_value

logger = logging.getLogger(__name__)

# exp(700) 接近 double 上限
LOG_OVERFLOW = 700.0
_BATCH = 2048


# ============= 数据类型 =============

@dataclass(frozen=True)
class ThetaConfig:
    """截断配置, radius 由 PeriodMatrix.radius(tol) 派生"""
    tol: float = 1e-13
    zero_floor: float = 1e-10

    @classmethod
    def from_config(cls) -> "ThetaConfig":
        return cls(
            tol=float(config_value("theta", "tol", 1e-13)),
            zero_floor=float(config_value("theta", "zero_floor", 1e-10)),
        )


DEFAULT_CONFIG = ThetaConfig()


class PeriodMatrix:
    """
    周期矩阵 Ω (g×g 对称, Im Ω 正定)

    构造时缓存 Y = Im Ω, Y⁻¹, πY 的 Cholesky 因子以及各 tol 对应的格点偏移集合。

    Args:
        omega: g×g 复矩阵
        tol_sym: 对称性容差

    Raises:
        NonPositiveDefinite: Ω 不对称或 Im Ω 非正定
    """

    def __init__(self, omega, tol_sym: float = 1e-8):
        omega = np.atleast_2d(np.asarray(omega, dtype=complex))
        if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
            raise ValueError(f"周期矩阵必须是方阵, 实际形状 {omega.shape}")
        scale = max(1.0, float(np.max(np.abs(omega))))
        asym = float(np.max(np.abs(omega - omega.T)))
        if asym > tol_sym * scale:
            raise NonPositiveDefinite(f"周期矩阵不对称: max|Ω−Ωᵀ| = {asym:.3e}", asym=asym)

        self.omega = 0.5 * (omega + omega.T)
        self.g = omega.shape[0]
        self.X = self.omega.real.copy()
        self.Y = self.omega.imag.copy()

        eigvals = np.linalg.eigvalsh(self.Y)
        if eigvals.min() <= 0:
            raise NonPositiveDefinite(
                f"Im Ω 非正定, 最小特征值 {eigvals.min():.3e}", eigenvalues=eigvals
            )
        self.lambda_min = float(eigvals.min())
        self.Yinv = np.linalg.inv(self.Y)
        # πY = TᵀT
        self.T = np.linalg.cholesky(np.pi * self.Y).T
        self.rho = self._shortest_vector()
        self._offset_cache = {}

    def _shortest_vector(self) -> float:
        bound = int(np.ceil(np.sqrt(np.max(np.diag(self.Yinv)) * np.max(np.diag(self.Y))))) + 1
        best = np.inf
        for n in itertools.product(range(-bound, bound + 1), repeat=self.g):
            if any(n):
                best = min(best, float(np.linalg.norm(self.T @ np.asarray(n, dtype=float))))
        return best

    @property
    def is_purely_imaginary(self) -> bool:
        return bool(np.max(np.abs(self.X)) < 1e-10)

    def content_key(self) -> list:
        return np.round(self.omega, 14).tolist().__repr__()

    def radius(self, tol: float) -> float:
        """满足尾部界 < tol 的求和半径"""
        g, rho = self.g, self.rho

        def log_bound(R: float) -> float:
            x = (R - rho / 2.0) ** 2
            tail = gammaincc(g / 2.0, x) * gamma(g / 2.0)
            return np.log(g / 2.0) + g * np.log(2.0 / rho) + np.log(max(tail, 1e-320)) - np.log(tol)

        lo = max(rho / 2.0 + np.sqrt(g) / 2.0, 1e-3)
        hi = lo + 60.0
        if log_bound(lo) <= 0:
            return lo
        return float(brentq(log_bound, lo, hi))

    def offsets(self, tol: float) -> np.ndarray:
        """以 0 为中心的格点偏移集合 (整数数组, 形状 (M, g))"""
        cached = self._offset_cache.get(tol)
        if cached is not None:
            return cached
        # 额外余量覆盖梯度项的多项式增长和中心取整误差
        R = self.radius(tol * 1e-3) + 1.0
        half = [int(np.ceil(R * np.sqrt(self.Yinv[i, i] / np.pi))) + 1 for i in range(self.g)]
        grids = np.meshgrid(*[np.arange(-h, h + 1) for h in half], indexing="ij")
        pts = np.stack([grid.ravel() for grid in grids], axis=-1)
        slack = 0.5 * np.sqrt(self.g) * np.linalg.norm(self.T, 2)
        norms = np.linalg.norm(pts @ self.T.T, axis=-1)
        pts = pts[norms <= R + slack]
        self._offset_cache[tol] = pts
        logger.debug(f"theta 求和半径 R={R:.3f}, 格点数 {len(pts)}")
        return pts


OmegaLike = Union[PeriodMatrix, np.ndarray, list]


def as_period_matrix(omega: OmegaLike) -> PeriodMatrix:
    return omega if isinstance(omega, PeriodMatrix) else PeriodMatrix(omega)


@dataclass(frozen=True)
class ThetaChar:
    """
    theta 特征 [δ′; δ″],以分子存储: δ′ = num_p / 2, δ″ = num_pp / 2
    """
    num_p: Tuple[int, ...]
    num_pp: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "num_p", tuple(int(v) for v in self.num_p))
        object.__setattr__(self, "num_pp", tuple(int(v) for v in self.num_pp))
        if len(self.num_p) != len(self.num_pp):
            raise ValueError("δ′ 与 δ″ 维数不一致")

    @classmethod
    def from_halves(cls, delta_p, delta_pp) -> "ThetaChar":
        num_p = np.asarray(delta_p, dtype=float) * 2
        num_pp = np.asarray(delta_pp, dtype=float) * 2
        if np.max(np.abs(num_p - np.round(num_p)), initial=0) > 1e-12 or \
                np.max(np.abs(num_pp - np.round(num_pp)), initial=0) > 1e-12:
            raise ValueError("特征分量必须是 ½ 的整数倍")
        return cls(tuple(np.round(num_p).astype(int)), tuple(np.round(num_pp).astype(int)))

    @classmethod
    def zero(cls, g: int) -> "ThetaChar":
        return cls((0,) * g, (0,) * g)

    @property
    def g(self) -> int:
        return len(self.num_p)

    @property
    def delta_p(self) -> np.ndarray:
        return np.asarray(self.num_p, dtype=float) / 2.0

    @property
    def delta_pp(self) -> np.ndarray:
        return np.asarray(self.num_pp, dtype=float) / 2.0

    @property
    def parity(self) -> int:
        """0 为偶, 1 为奇 (4δ′·δ″ mod 2)"""
        return sum(a * b for a, b in zip(self.num_p, self.num_pp)) % 2

    @property
    def is_odd(self) -> bool:
        return self.parity == 1

    def reduced(self) -> "ThetaChar":
        return ThetaChar(tuple(v % 2 for v in self.num_p), tuple(v % 2 for v in self.num_pp))

    def to_json(self) -> dict:
        return {"delta_p": self.delta_p.tolist(), "delta_pp": self.delta_pp.tolist()}


def all_characteristics(g: int) -> Iterator[ThetaChar]:
    """全部 2^{2g} 个模 1 约化的半整数特征"""
    for bits in itertools.product((0, 1), repeat=2 * g):
        yield ThetaChar(bits[:g], bits[g:])


# ============= 核心求和 =============

def _as_points(z, g: int) -> Tuple[np.ndarray, tuple]:
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        z = z.reshape(1)
    if z.shape[-1] != g:
        raise ValueError(f"z 的最后一维必须为 g={g}, 实际 {z.shape}")
    lead = z.shape[:-1]
    return z.reshape(-1, g), lead


def _theta_sum(z: np.ndarray, P: PeriodMatrix, tol: float, with_grad: bool):
    """
    对一批点 z (N, g) 计算 (mantissa, grad_mantissa, log_scale)

    θ(z) = exp(log_scale) · mantissa, ∇θ(z) = exp(log_scale) · grad_mantissa
    """
    offsets = P.offsets(tol).astype(float)
    N = z.shape[0]
    mant = np.empty(N, dtype=complex)
    grad = np.empty((N, P.g), dtype=complex) if with_grad else None
    log_scale = np.empty(N)

    for start in range(0, N, _BATCH):
        zb = z[start:start + _BATCH]
        x, y = zb.real, zb.imag
        c = -(y @ P.Yinv.T)
        k = np.round(c)
        n = k[:, None, :] + offsets[None, :, :]                       # (B, M, g)
        d = n - c[:, None, :]
        gauss = -np.pi * np.einsum("bmi,ij,bmj->bm", d, P.Y, d)
        phase = np.pi * (np.einsum("bmi,ij,bmj->bm", n, P.X, n)
                         + 2.0 * np.einsum("bmi,bi->bm", n, x))
        terms = np.exp(gauss + 1j * phase)
        mant[start:start + _BATCH] = terms.sum(axis=1)
        if with_grad:
            grad[start:start + _BATCH] = 2j * np.pi * np.einsum("bm,bmi->bi", terms, n)
        log_scale[start:start + _BATCH] = np.pi * np.einsum("bi,ij,bj->b", y, P.Yinv, y)

    return mant, grad, log_scale


def _char_sum(ch: Optional[ThetaChar], z: np.ndarray, P: PeriodMatrix, tol: float, with_grad: bool):
    if ch is None or (not any(ch.num_p) and not any(ch.num_pp)):
        return _theta_sum(z, P, tol, with_grad)
    dp, dpp = ch.delta_p, ch.delta_pp
    shifted = z + (P.omega @ dp)[None, :] + dpp[None, :]
    mant, grad, log_scale = _theta_sum(shifted, P, tol, with_grad)
    pre = 1j * np.pi * (dp @ P.omega @ dp + 2.0 * (z + dpp[None, :]) @ dp)
    log_scale = log_scale + pre.real
    rot = np.exp(1j * pre.imag)
    if with_grad:
        grad = rot[:, None] * (grad + 2j * np.pi * dp[None, :] * mant[:, None])
    mant = rot * mant
    return mant, grad, log_scale


def _finish(values: np.ndarray, log_scale: np.ndarray, lead: tuple):
    if np.any(log_scale > LOG_OVERFLOW):
        raise ThetaOverflow(
            f"theta 值溢出: log-scale 最大值 {log_scale.max():.1f} > {LOG_OVERFLOW}",
            log_scale=float(log_scale.max()),
        )
    out = (values * np.exp(log_scale)).reshape(lead)
    return out[()] if out.ndim == 0 else out


# ============= 公开接口 =============

def theta_scaled(z, omega: OmegaLike, cfg: ThetaConfig = DEFAULT_CONFIG,
                 ch: Optional[ThetaChar] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    返回 (mantissa, log_scale),θ[ch](z) = mantissa · exp(log_scale)

    用于大 |Im z| 的比值计算 (例如围道积分中的核函数)。
    """
    P = as_period_matrix(omega)
    pts, lead = _as_points(z, P.g)
    mant, _, log_scale = _char_sum(ch, pts, P, cfg.tol, False)
    return mant.reshape(lead), log_scale.reshape(lead)


def theta(z, omega: OmegaLike, cfg: ThetaConfig = DEFAULT_CONFIG):
    """
    Riemann theta 函数 θ(z|Ω)

    Args:
        z: 形状 (g,) 或 (..., g) 的复数组
        omega: 周期矩阵
        cfg: 截断配置

    Returns:
        标量或形状 (...) 的复数组

    Raises:
        NonPositiveDefinite: Im Ω 非正定
        ThetaOverflow: 重新平衡后仍然溢出

    使用示例:
        theta([0.0], [[1j]])  # 1.0864348112133...
    """
    P = as_period_matrix(omega)
    pts, lead = _as_points(z, P.g)
    mant, _, log_scale = _theta_sum(pts, P, cfg.tol, False)
    return _finish(mant, log_scale, lead)


def theta_char(ch: ThetaChar, z, omega: OmegaLike, cfg: ThetaConfig = DEFAULT_CONFIG):
    """带特征的 theta 函数,通过平移公式化为普通 theta (不做第二次格求和)"""
    P = as_period_matrix(omega)
    pts, lead = _as_points(z, P.g)
    mant, _, log_scale = _char_sum(ch, pts, P, cfg.tol, False)
    return _finish(mant, log_scale, lead)


def grad_theta(z, omega: OmegaLike, cfg: ThetaConfig = DEFAULT_CONFIG):
    """逐项求导的 ∇θ(z), 形状 (..., g)"""
    return grad_theta_char(None, z, omega, cfg)


def grad_theta_char(ch: Optional[ThetaChar], z, omega: OmegaLike, cfg: ThetaConfig = DEFAULT_CONFIG):
    P = as_period_matrix(omega)
    pts, lead = _as_points(z, P.g)
    _, grad, log_scale = _char_sum(ch, pts, P, cfg.tol, True)
    if np.any(log_scale > LOG_OVERFLOW):
        raise ThetaOverflow(f"theta 梯度溢出: log-scale {log_scale.max():.1f}")
    out = grad * np.exp(log_scale)[:, None]
    return out.reshape(lead + (P.g,))


def grad_log_theta_char(ch: Optional[ThetaChar], z, omega: OmegaLike,
                        cfg: ThetaConfig = DEFAULT_CONFIG):
    """
    ∇ log θ[ch](z) = ∇θ / θ,比值在 mantissa 层面计算,不受溢出影响

    Raises:
        ThetaZero: |θ| 的 mantissa 低于 cfg.zero_floor
    """
    P = as_period_matrix(omega)
    pts, lead = _as_points(z, P.g)
    mant, grad, _ = _char_sum(ch, pts, P, cfg.tol, True)
    small = np.abs(mant) < cfg.zero_floor
    if np.any(small):
        raise ThetaZero(
            f"grad_log_theta: θ 在 {int(small.sum())} 个点处为零 (|θ| < {cfg.zero_floor:g})",
            points=pts[small][:3],
        )
    return (grad / mant[:, None]).reshape(lead + (P.g,))


def grad_log_theta(z, omega: OmegaLike, cfg: ThetaConfig = DEFAULT_CONFIG):
    return grad_log_theta_char(None, z, omega, cfg)


def pick_odd_characteristic(omega: OmegaLike, cfg: ThetaConfig = DEFAULT_CONFIG) -> ThetaChar:
    """
    在全部奇特征中选取 ‖∇θ[δ](0)‖ 最大者 (非退化奇特征)

    Raises:
        DegenerateCharacteristic: 所有奇特征的梯度范数都低于 cfg.tol
    """
    P = as_period_matrix(omega)
    best, best_norm = None, -1.0
    zero = np.zeros(P.g)
    for ch in all_characteristics(P.g):
        if not ch.is_odd:
            continue
        norm = float(np.linalg.norm(grad_theta_char(ch, zero, P, cfg)))
        if norm > best_norm * (1.0 + 1e-12):
            best, best_norm = ch, norm
    if best is None or best_norm < cfg.tol:
        raise DegenerateCharacteristic(
            f"所有奇特征在 0 处梯度都退化 (max ‖∇θ‖ = {best_norm:.3e})"
        )
    logger.debug(f"选取奇特征 {best.to_json()}, ‖∇θ[δ](0)‖ = {best_norm:.6f}")
    return best


def real_shift(z, omega: OmegaLike) -> np.ndarray:
    """
    对 Im z ∈ Im(Ω)·(½Z)^g 的点返回半整数 δ′ = round(2 Y⁻¹ Im z) / 2
    """
    P = as_period_matrix(omega)
    z = np.asarray(z, dtype=complex)
    return np.round(2.0 * (z.imag @ P.Yinv.T)) / 2.0


def reduced_real_theta(z, omega: OmegaLike, cfg: ThetaConfig = DEFAULT_CONFIG):
    """
    实化的 theta: 对 z = x + Ωδ′ (δ′ ∈ (½Z)^g, x 实) 返回 θ[δ′;0](x) (实数)

    与 θ(z) 只差一个非零因子,零点和变号位置相同,用于在实分量上定位零点。
    """
    P = as_period_matrix(omega)
    pts, lead = _as_points(z, P.g)
    dp = real_shift(pts, P)
    x = pts.real
    out = np.empty(len(pts))
    # 按 δ′ 分组,每组一次批量求值
    keys = [tuple(row) for row in np.round(2 * dp).astype(int)]
    for key in sorted(set(keys)):
        mask = np.array([k == key for k in keys])
        ch = ThetaChar(key, (0,) * P.g)
        mant, _, log_scale = _char_sum(ch, x[mask].astype(complex), P, cfg.tol, False)
        out[mask] = (mant * np.exp(log_scale)).real
    return out.reshape(lead) if lead else out[0]


def shift_characteristic(ch: ThetaChar, gamma_p, gamma_pp, z, omega: OmegaLike,
                         cfg: ThetaConfig = DEFAULT_CONFIG):
    """
    用特征平移公式计算 θ[δ′;δ″](z + Ωγ′ + γ″),用于验证平移恒等式

    θ[δ](z + Ωγ′ + γ″) = exp(−iπ(γ′·Ωγ′ + 2γ′·(z + δ″ + γ″))) · θ[δ′+γ′; δ″+γ″](z)
    """
    P = as_period_matrix(omega)
    gp = np.asarray(gamma_p, dtype=float)
    gpp = np.asarray(gamma_pp, dtype=float)
    z = np.asarray(z, dtype=complex)
    shifted = ThetaChar.from_halves(ch.delta_p + gp, ch.delta_pp + gpp)
    factor = np.exp(-1j * np.pi * (gp @ P.omega @ gp + 2.0 * (z + ch.delta_pp + gpp) @ gp))
    return factor * theta_char(shifted, z, P, cfg)
