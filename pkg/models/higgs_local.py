"""
局所フレームにおける固定点データと BB スライスデータ。

固定点:   Φ₀ = [[0, 0], [Φ₁, 0]] dz,  H = diag(e^u, e^{−u})
スライス: Φ = [[Φ₂, Φ₃], [Φ₁, −Φ₂]] dz,  B = [[0, b], [0, 0]] dz̄

残差
    r₁ = ∂_z̄Φ₁
    r₂ = ∂_z̄Φ₂ + b·Φ₁
    r₃ = ∂_z̄Φ₃ − 2·b·Φ₂
    r₄ = ∂_z b + 2·b·∂_z u − 2σ·conj(Φ₁)·Φ₂·e^{−2u}     (σ = dprime_sign)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from logger.custom_logger import CustomLogger
from models.grid_calculus import (ComplexField, GridDomain, MatrixField, boundary_mask, d_z, d_zbar,
                                  dz_array, dzbar_array, interior_mask, sup_norm, wirtinger_operators)
from models.hitchin_solver import hitchin_residual, require_real
from utils.errors import (DegeneracyError, DomainError, FieldValidationError, NilpotencyGateError,
                          SliceGateError, SliceSynthesisError)

logger = CustomLogger()

U_CLAMP = 30.0
PHI3_MODES = ("dbar", "nilpotent")


def default_gate(domain: GridDomain, scale: float = 1.0) -> float:
    """ゲートの既定値 max(1e-6, 10·h²·scale)。"""
    return max(1e-6, 10.0 * domain.h ** 2 * max(scale, 0.0))


def _check_sign(sign: int) -> int:
    if sign not in (1, -1):
        raise FieldValidationError(f"dprime_sign は +1 か -1 です (指定値 {sign})", kind="dprime_sign")
    return int(sign)


@dataclass
class FixedPointData:
    phi1: ComplexField
    u: ComplexField
    gate: float

    @property
    def domain(self) -> GridDomain:
        return self.phi1.domain

    def u_real(self) -> np.ndarray:
        return self.u.values.real

    def metric_weight(self) -> np.ndarray:
        """e^{−2u}。"""
        return np.exp(-2.0 * self.u_real())


def make_fixed_point(phi1: ComplexField, u: ComplexField, gate: float | None = None) -> FixedPointData:
    """正則性ゲートと Hitchin ゲートを検証して固定点データを作ります。"""
    phi1.require_domain(u, "u")
    domain = phi1.domain
    real_u = require_real(u)
    if np.abs(real_u).max() > U_CLAMP:
        logger.log(f"|u| が {U_CLAMP} を超えたためクランプします (max|u| = {np.abs(real_u).max():.3e})", level="WARNING")
        real_u = np.clip(real_u, -U_CLAMP, U_CLAMP)
    u = ComplexField(domain, real_u)
    gate = default_gate(domain, max(1.0, phi1.sup())) if gate is None else float(gate)
    region = interior_mask(domain)
    holo = d_zbar(phi1).sup(region)
    if holo > gate:
        raise SliceGateError(f"r1 (∂_z̄Φ₁) がゲートを超えました: {holo:.3e} > {gate:.3e}", gate_name="r1", residual=holo)
    hitchin = hitchin_residual(u, phi1).sup(region)
    if hitchin > gate:
        raise SliceGateError(f"Hitchin 残差がゲートを超えました: {hitchin:.3e} > {gate:.3e}",
                             gate_name="hitchin", residual=hitchin)
    logger.log(f"固定点データ: sup|r1| = {holo:.3e}, sup|Hitchin| = {hitchin:.3e}, gate = {gate:.3e}", level="DEBUG")
    return FixedPointData(phi1, u, gate)


@dataclass
class BBSliceData:
    base: FixedPointData
    phi2: ComplexField
    phi3: ComplexField
    b: ComplexField
    dprime_sign: int = 1
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("phi2", "phi3", "b"):
            self.base.phi1.require_domain(getattr(self, name), name)
        self.dprime_sign = _check_sign(self.dprime_sign)

    @property
    def domain(self) -> GridDomain:
        return self.base.domain

    @property
    def phi1(self) -> ComplexField:
        return self.base.phi1

    @property
    def u(self) -> ComplexField:
        return self.base.u

    def higgs_matrix(self) -> MatrixField:
        """Φ_z = [[Φ₂, Φ₃], [Φ₁, −Φ₂]]。"""
        arr = np.empty(self.domain.shape + (2, 2), dtype=np.complex128)
        arr[..., 0, 0] = self.phi2.values
        arr[..., 0, 1] = self.phi3.values
        arr[..., 1, 0] = self.phi1.values
        arr[..., 1, 1] = -self.phi2.values
        return MatrixField(self.domain, arr, form="dz", trace_free=True)

    def dbar_matrix(self) -> MatrixField:
        """B = [[0, b], [0, 0]]。"""
        arr = np.zeros(self.domain.shape + (2, 2), dtype=np.complex128)
        arr[..., 0, 1] = self.b.values
        return MatrixField(self.domain, arr, form="dzbar", trace_free=True)

    def with_b(self, b: np.ndarray) -> 'BBSliceData':
        return BBSliceData(self.base, self.phi2, self.phi3, ComplexField(self.domain, b), self.dprime_sign,
                           dict(self.provenance))


def fixed_point_slice(base: FixedPointData, dprime_sign: int = 1) -> BBSliceData:
    zero = ComplexField.zeros(base.domain)
    return BBSliceData(base, zero, ComplexField.zeros(base.domain), ComplexField.zeros(base.domain),
                       dprime_sign, {"kind": "fixed_point"})


def holomorphicity_residuals(slice_: BBSliceData) -> tuple[ComplexField, ComplexField, ComplexField]:
    """(r₁, r₂, r₃)。"""
    domain = slice_.domain
    phi1, phi2, phi3, b = slice_.phi1.values, slice_.phi2.values, slice_.phi3.values, slice_.b.values
    r1 = dzbar_array(phi1, domain)
    r2 = dzbar_array(phi2, domain) + b * phi1
    r3 = dzbar_array(phi3, domain) - 2.0 * b * phi2
    return ComplexField(domain, r1), ComplexField(domain, r2), ComplexField(domain, r3)


def dprime_residual(slice_: BBSliceData) -> ComplexField:
    """r₄ = ∂_z b + 2b∂_z u − 2σ·conj(Φ₁)Φ₂e^{−2u}。"""
    domain = slice_.domain
    u = slice_.base.u_real()
    b = slice_.b.values
    u_z = dz_array(u, domain)
    r4 = (dz_array(b, domain) + 2.0 * b * u_z
          - 2.0 * slice_.dprime_sign * np.conj(slice_.phi1.values) * slice_.phi2.values * np.exp(-2.0 * u))
    return ComplexField(domain, r4)


def matrix_frame_residual(slice_: BBSliceData) -> MatrixField:
    """∂_z̄Φ_z + [B, Φ_z] を成分ごとに評価します。(2,1), (1,1), (1,2) 成分が r₁, r₂, r₃ に対応します。"""
    domain = slice_.domain
    phi = slice_.higgs_matrix().array
    bmat = slice_.dbar_matrix().array
    dbar_phi = dzbar_array(phi, domain)
    comm = np.einsum("...ij,...jk->...ik", bmat, phi) - np.einsum("...ij,...jk->...ik", phi, bmat)
    return MatrixField(domain, dbar_phi + comm, form="dzdzbar")


@dataclass
class SliceGateReport:
    r1: float
    r2: float
    r3: float
    r4: float
    gate: float
    hitchin: float = 0.0

    @property
    def passed(self) -> bool:
        return max(self.r1, self.r2, self.r3, self.r4) <= self.gate

    def failing(self) -> list[str]:
        return [name for name in ("r1", "r2", "r3", "r4") if getattr(self, name) > self.gate]

    def as_dict(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "r3": self.r3, "r4": self.r4,
                "hitchin": self.hitchin, "gate": self.gate, "passed": self.passed}


def slice_scale(slice_: BBSliceData) -> float:
    return max(1.0, slice_.phi1.sup(), slice_.phi2.sup(), slice_.phi3.sup(), slice_.b.sup())


def check_slice_gates(slice_: BBSliceData, gate: float | None = None) -> SliceGateReport:
    domain = slice_.domain
    gate = default_gate(domain, slice_scale(slice_)) if gate is None else float(gate)
    region = interior_mask(domain)
    r1, r2, r3 = holomorphicity_residuals(slice_)
    r4 = dprime_residual(slice_)
    hitchin = hitchin_residual(slice_.u, slice_.phi1).sup(region)
    return SliceGateReport(r1.sup(region), r2.sup(region), r3.sup(region), r4.sup(region), gate, hitchin)


def require_slice_gates(slice_: BBSliceData, gate: float | None = None) -> SliceGateReport:
    report = check_slice_gates(slice_, gate)
    if not report.passed:
        names = report.failing()
        raise SliceGateError(
            f"スライスの残差ゲート {', '.join(names)} を満たしません (gate = {report.gate:.3e}): "
            + ", ".join(f"{n}={getattr(report, n):.3e}" for n in names),
            gate_name=names[0], **report.as_dict())
    return report


def _clamped_u(base: FixedPointData) -> np.ndarray:
    u = base.u_real()
    if np.abs(u).max() > U_CLAMP:
        logger.log(f"e^(-2u) の桁あふれを避けるため |u| <= {U_CLAMP} にクランプします", level="WARNING")
        u = np.clip(u, -U_CLAMP, U_CLAMP)
    return u


def _dbar_correction(domain: GridDomain, rhs: np.ndarray) -> np.ndarray:
    """
    ∂_z̄ψ = rhs を内部点で満たす ψ = ∂_z χ を返します。
    χ は (∂_z̄∂_z)χ = rhs (内部点, 境界行 χ = 0) の解で、作用素は差分行列の積そのものです。
    """
    ops = wirtinger_operators(domain)
    composite = (ops["dzbar"] @ ops["dz"]).tocsr()
    bnodes = boundary_mask(domain).reshape(-1)
    inner = np.flatnonzero(~bnodes)
    chi = np.zeros(domain.size, dtype=np.complex128)
    if np.any(rhs):
        chi[inner] = spla.spsolve(composite[inner][:, inner].tocsc(), rhs.reshape(-1)[inner])
    return (ops["dz"] @ chi).reshape(domain.shape)


def synthesize_slice(base: FixedPointData, seed: ComplexField, delta_gate: float = 1e-6,
                     dprime_sign: int = 1, phi3_mode: str = "dbar",
                     phi3_holomorphic: ComplexField | None = None, sweeps: int = 3,
                     refine_tol: float = 1e-12) -> BBSliceData:
    """
    seed の Dirichlet 行の値を Φ₂ の境界データとしてスライスを合成します。

    b = −∂_z̄Φ₂/Φ₁ により r₂ を消去し、残る (D1) を Φ₂ の線形 2 階方程式
        M Φ₂ = 0,   M = (∂_z + 2u_z)·(−diag(1/Φ₁)·∂_z̄) − 2σ·diag(conj(Φ₁)e^{−2u})
    として内部点で解きます (疎 LU + 反復改良)。停止判定は sup|seed| に相対なので
    seed の 2 倍は (Φ₂, b) を正確に 2 倍にします。
    """
    dprime_sign = _check_sign(dprime_sign)
    if phi3_mode not in PHI3_MODES:
        raise FieldValidationError(f"phi3_mode は {PHI3_MODES} のいずれかです", kind="phi3_mode")
    domain = base.domain
    base.phi1.require_domain(seed, "seed")
    if not domain.periodic:
        raise DomainError("スライス合成には x 周期領域が必要です", field="x_period")
    phi1 = base.phi1.values
    if np.min(np.abs(phi1)) == 0.0:
        raise DegeneracyError("Φ₁ が零点を持つため b = −∂_z̄Φ₂/Φ₁ を定義できません")

    u = _clamped_u(base)
    ops = wirtinger_operators(domain)
    u_z = dz_array(u, domain).reshape(-1)
    weight = (np.conj(phi1) * np.exp(-2.0 * u)).reshape(-1)
    elim = (sp.diags(-1.0 / phi1.reshape(-1)) @ ops["dzbar"]).tocsr()
    system = ((ops["dz"] + sp.diags(2.0 * u_z)) @ elim - sp.diags(2.0 * dprime_sign * weight)).tocsr()

    bnodes = np.flatnonzero(boundary_mask(domain).reshape(-1))
    inner = np.flatnonzero(~boundary_mask(domain).reshape(-1))
    seed_flat = seed.values.reshape(-1)
    seed_scale = float(np.max(np.abs(seed_flat[bnodes]))) if bnodes.size else 0.0

    phi2 = np.zeros(domain.size, dtype=np.complex128)
    phi2[bnodes] = seed_flat[bnodes]
    history: list[float] = []
    if seed_scale > 0.0:
        m_ii = system[inner][:, inner].tocsc()
        m_ib = system[inner][:, bnodes]
        rhs = -(m_ib @ phi2[bnodes])
        lu = spla.splu(m_ii)
        phi2[inner] = lu.solve(rhs)
        for sweep in range(max(0, int(sweeps))):
            defect = rhs - m_ii @ phi2[inner]
            size = float(np.max(np.abs(defect))) if defect.size else 0.0
            history.append(size)
            logger.log(f"  スライス反復改良 {sweep + 1}: 欠損 {size:.3e}", level="DEBUG")
            if size <= refine_tol * seed_scale:
                break
            phi2[inner] += lu.solve(defect)
    else:
        logger.log("seed が 0 のため固定点スライスを返します", level="DEBUG")

    b = (elim @ phi2).reshape(domain.shape)
    phi2 = phi2.reshape(domain.shape)

    nilpotent_part = -(phi2 * phi2) / phi1
    if phi3_mode == "nilpotent":
        phi3 = nilpotent_part
    else:
        correction = _dbar_correction(domain, 2.0 * b * phi2 - dzbar_array(nilpotent_part, domain))
        if np.any(correction):
            correction = correction - correction.mean()
        phi3 = nilpotent_part + correction
    if phi3_holomorphic is not None:
        base.phi1.require_domain(phi3_holomorphic, "phi3_holomorphic")
        phi3 = phi3 + phi3_holomorphic.values

    slice_ = BBSliceData(base, ComplexField(domain, phi2), ComplexField(domain, phi3), ComplexField(domain, b),
                         dprime_sign,
                         {"kind": "synthesized", "phi3_mode": phi3_mode, "seed_scale": seed_scale,
                          "refinement_history": history})
    report = check_slice_gates(slice_, delta_gate)
    joint = max(report.r1, report.r2, report.r3, report.r4)
    logger.log(f"スライス合成: r1={report.r1:.3e} r2={report.r2:.3e} r3={report.r3:.3e} r4={report.r4:.3e} "
               f"(delta_gate={delta_gate:.1e}, σ={dprime_sign:+d}, Φ₃={phi3_mode})", level="INFO")
    if joint > delta_gate:
        raise SliceSynthesisError(
            f"スライス合成の残差 {joint:.3e} が delta_gate {delta_gate:.1e} を下回りませんでした",
            history + [joint])
    return slice_


def kernel_section(slice_: BBSliceData, gate: float | None = None) -> tuple[ComplexField, ComplexField]:
    """s = (Φ₂, Φ₁)。冪零ゲート sup|Φ₂² + Φ₃Φ₁| <= gate を要求します。"""
    domain = slice_.domain
    gate = default_gate(domain, slice_scale(slice_) ** 2) if gate is None else float(gate)
    det_defect = slice_.phi2.values ** 2 + slice_.phi3.values * slice_.phi1.values
    defect = sup_norm(det_defect, interior_mask(domain))
    if defect > gate:
        raise NilpotencyGateError(
            f"Higgs field not nilpotent; kernel line undefined (sup|Φ₂² + Φ₃Φ₁| = {defect:.3e} > {gate:.3e})",
            residual=defect, gate=gate)
    return slice_.phi2, slice_.phi1


def section_norm_sq(slice_: BBSliceData) -> np.ndarray:
    """|s|²_H = e^u|Φ₂|² + e^{−u}|Φ₁|²。"""
    u = slice_.base.u_real()
    return np.exp(u) * np.abs(slice_.phi2.values) ** 2 + np.exp(-u) * np.abs(slice_.phi1.values) ** 2


if __name__ == '__main__':
    from models.grid_calculus import make_domain
    from models.hitchin_solver import HitchinProblem, solve_hitchin

    domain = make_domain(32, 33, 1.0, 0.5, 1.5)
    phi1 = ComplexField.constant(domain, 1.0)
    boundary = ComplexField.from_function(domain, lambda x, y: np.log(2.0 * y))
    u = solve_hitchin(HitchinProblem(phi1, boundary))
    fp = make_fixed_point(phi1, u)
    seed = ComplexField.from_function(domain, lambda x, y: 0.01 * (y + 0.3j * np.cos(2 * np.pi * x)))
    s = synthesize_slice(fp, seed, dprime_sign=-1)
    logger.log(f"ゲート: {check_slice_gates(s, 1e-6).as_dict()}", level="INFO")
