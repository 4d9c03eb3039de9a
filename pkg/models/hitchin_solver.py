"""
固定点 Hitchin 方程式 ∂_z̄∂_z u + |Φ₁|² e^{−2u} = 0 の残差評価と減衰付き Newton 法。
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from logger.custom_logger import CustomLogger
from models.grid_calculus import (ComplexField, boundary_mask, dzbar_dz, d_zbar, interior_mask,
                                  laplace_quarter_array, sup_norm, wirtinger_operators)
from utils.errors import FieldValidationError, GateError, HitchinDivergenceError

logger = CustomLogger()

REAL_TOLERANCE = 1e-12
MAX_HALVINGS = 10
NONDECREASE_LIMIT = 5


def holomorphy_gate(phi1: ComplexField) -> float:
    """Φ₁ の正則性ゲートの既定値 1e-6·max(1, sup|Φ₁|)。"""
    return 1e-6 * max(1.0, phi1.sup())


def require_real(u: ComplexField, name: str = "u") -> np.ndarray:
    imag = np.abs(u.values.imag)
    if imag.size and float(imag.max()) > REAL_TOLERANCE:
        raise FieldValidationError(f"{name} は実数値である必要があります (max|Im| = {float(imag.max()):.3e})",
                                   kind="non_real")
    return u.values.real.copy()


@dataclass
class HitchinProblem:
    phi1: ComplexField
    boundary_u: ComplexField
    gate: float | None = None

    def __post_init__(self) -> None:
        self.phi1.require_domain(self.boundary_u, "boundary_u")
        if self.phi1.mask is not None or self.boundary_u.mask is not None:
            raise FieldValidationError("HitchinProblem はマスク付きの場を受け付けません")
        bmask = boundary_mask(self.domain)
        if not np.isfinite(self.boundary_u.values[bmask]).all():
            raise FieldValidationError("境界データが有限ではありません")
        require_real(self.boundary_u, "boundary_u")
        if self.gate is None:
            self.gate = holomorphy_gate(self.phi1)
        holo = d_zbar(self.phi1).sup(interior_mask(self.domain))
        if holo > self.gate:
            raise GateError(f"Φ₁ が正則ではありません: sup|∂_z̄Φ₁| = {holo:.3e} > {self.gate:.3e}",
                            kind="holomorphy", residual=holo, gate=self.gate)

    @property
    def domain(self):
        return self.phi1.domain


@dataclass
class HitchinSolution:
    u: ComplexField
    residual_history: list[float] = field(default_factory=list)
    iterations: int = 0
    initial_residual: float = 0.0

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else self.initial_residual


def hitchin_residual(u: ComplexField, phi1: ComplexField) -> ComplexField:
    """点ごとの ∂_z̄∂_z u + |Φ₁|² e^{−2u}。"""
    u.require_domain(phi1, "phi1")
    real_u = u.with_values(require_real(u))
    return ComplexField(u.domain, dzbar_dz(real_u).values + np.abs(phi1.values) ** 2 * np.exp(-2.0 * real_u.values.real))


def _residual_array(u: np.ndarray, weight: np.ndarray, domain) -> np.ndarray:
    return laplace_quarter_array(u, domain).real + weight * np.exp(-2.0 * u)


def solve_hitchin(problem: HitchinProblem, tol: float = 1e-10, max_iter: int = 50) -> ComplexField:
    return solve_hitchin_with_report(problem, tol, max_iter).u


def solve_hitchin_with_report(problem: HitchinProblem, tol: float = 1e-10, max_iter: int = 50,
                              initial_u: ComplexField | None = None) -> HitchinSolution:
    """
    内部点を未知数とする Newton 法。線形化 (¼Δ − 2|Φ₁|²e^{−2u}) δ = −N(u) を疎 LU で解きます。
    残差が減らない場合はステップを最大 10 回半減し、5 回連続で減少しなければ早期に発散とみなします。
    """
    if not tol > 0:
        raise FieldValidationError("tol は正である必要があります", kind="tolerance")
    domain = problem.domain
    bmask = boundary_mask(domain).reshape(-1)
    inner = np.flatnonzero(~bmask)
    bnodes = np.flatnonzero(bmask)
    gate_region = interior_mask(domain).reshape(-1)
    weight = (np.abs(problem.phi1.values) ** 2).reshape(-1)
    lap = wirtinger_operators(domain)["laplace_quarter"].real.tocsr()
    lap_ii = lap[inner][:, inner].tocsc()
    lap_ib = lap[inner][:, bnodes]

    u = np.zeros(domain.size)
    u[bnodes] = problem.boundary_u.values.real.reshape(-1)[bnodes]
    if initial_u is not None:
        problem.phi1.require_domain(initial_u, "initial_u")
        u[inner] = require_real(initial_u, "initial_u").reshape(-1)[inner]
        logger.log("初期値: 指定された u", level="DEBUG")
    elif np.any(weight):
        # 境界データの調和拡張
        u[inner] = spla.spsolve(lap_ii, -(lap_ib @ u[bnodes]))
        logger.log("初期値: 境界データの調和拡張", level="DEBUG")
    else:
        logger.log("Φ₁ ≡ 0 のため初期値は内部 0", level="DEBUG")

    def residual_sup(values: np.ndarray) -> tuple[np.ndarray, float]:
        res = _residual_array(values.reshape(domain.shape), weight.reshape(domain.shape), domain).reshape(-1)
        return res, float(np.max(np.abs(res[gate_region]))) if gate_region.any() else 0.0

    res, current = residual_sup(u)
    initial = current
    history: list[float] = []
    logger.log(f"Hitchin Newton 開始: 初期残差 {current:.3e}, tol={tol:.1e}, max_iter={max_iter}", level="DEBUG")
    if current <= tol:
        return HitchinSolution(ComplexField(domain, u.reshape(domain.shape)), history, 0, initial)

    nondecrease = 0
    for iteration in range(1, max_iter + 1):
        jac = (lap_ii - sp.diags(2.0 * weight[inner] * np.exp(-2.0 * u[inner]))).tocsc()
        step = np.zeros_like(u)
        step[inner] = spla.splu(jac).solve(-res[inner])

        alpha = 1.0
        accepted = False
        for halving in range(MAX_HALVINGS + 1):
            trial = u + alpha * step
            trial_res, trial_sup = residual_sup(trial)
            if np.isfinite(trial_sup) and trial_sup < current:
                accepted = True
                break
            if halving < MAX_HALVINGS:
                alpha *= 0.5
        if not accepted and not np.isfinite(trial_sup):
            raise HitchinDivergenceError("Newton 反復で残差が非有限になりました", history + [float("inf")])

        if accepted:
            nondecrease = 0
            u, res, current = trial, trial_res, trial_sup
            logger.log(f"  Newton {iteration}: 残差 {current:.3e} (alpha={alpha:g})", level="DEBUG")
        else:
            # 半減しても減少しないステップは棄却し、直前の反復を保持
            nondecrease += 1
            logger.log(f"  Newton {iteration}: ステップ棄却 (残差 {current:.3e} のまま)", level="WARNING")
        history.append(current)
        if current <= tol:
            logger.log(f"Hitchin 方程式が収束しました: {iteration} 反復, 残差 {current:.3e}", level="INFO")
            return HitchinSolution(ComplexField(domain, u.reshape(domain.shape)), history, iteration, initial)
        if nondecrease >= NONDECREASE_LIMIT:
            raise HitchinDivergenceError(
                f"残差が {NONDECREASE_LIMIT} 回連続で減少しませんでした (残差 {current:.3e})", history, early=True)

    raise HitchinDivergenceError(
        f"max_iter={max_iter} 回で tol={tol:.1e} に到達しませんでした (残差 {current:.3e})", history)


def curvature_sign_violation(u: ComplexField, region: np.ndarray | None = None) -> float:
    """max(∂_z̄∂_z u, 0) の sup。解では許容誤差程度になります。"""
    lap = dzbar_dz(u.with_values(require_real(u))).values.real
    return sup_norm(np.maximum(lap, 0.0), region)
