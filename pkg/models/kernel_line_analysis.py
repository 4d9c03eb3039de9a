"""
核直線 L₁ = span(s), s = (Φ₂, Φ₁) に関する恒等式の連鎖を数値的に再現します。

    wedge = Φ₂(∂_z − ∂_z u)Φ₁ − Φ₁(∂_z + ∂_z u)Φ₂
    f = Φ₁/Φ₂,  eq1 = ∂_z f − 2f∂_z u,  eq2 = ∂_z̄ f − b f²
    f1 = 2∂_z̄∂_z u / (∂_z b + 2b∂_z u)

Hitchin 方程式と (D1) の下では f1 = −f が成り立ちます。
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from logger.custom_logger import CustomLogger
from models.grid_calculus import ComplexField, d_z, d_zbar, dz_array, dzbar_dz, interior_mask, sup_norm
from models.higgs_local import BBSliceData, check_slice_gates, kernel_section, section_norm_sq
from utils.errors import DegeneracyError, SliceGateError

logger = CustomLogger()

DEFAULT_MASK_THRESHOLD = 1e-3
DENOMINATOR_FLOOR = 1e-8
DEGENERATE_PHI2 = 1e-12


def wedge_with_dH(slice_: BBSliceData, gate: float | None = None) -> ComplexField:
    """s ∧ ∂₀^H s の密度。"""
    phi2, phi1 = kernel_section(slice_, gate)
    u_z = dz_array(slice_.base.u_real(), slice_.domain)
    wedge = (phi2.values * (d_z(phi1).values - u_z * phi1.values)
             - phi1.values * (d_z(phi2).values + u_z * phi2.values))
    return ComplexField(slice_.domain, wedge)


def phi2_mask(slice_: BBSliceData, mask_threshold: float = DEFAULT_MASK_THRESHOLD) -> tuple[np.ndarray, float]:
    """|Φ₂| < threshold·sup|Φ₂| の点 (True がマスク) と sup|Φ₂|。"""
    mags = np.abs(slice_.phi2.values)
    top = float(mags[interior_mask(slice_.domain)].max()) if interior_mask(slice_.domain).any() else 0.0
    if top <= DEGENERATE_PHI2:
        return np.ones(slice_.domain.shape, dtype=bool), top
    return mags < mask_threshold * top, top


@dataclass
class IdentityReport:
    f: ComplexField
    wedge: ComplexField
    f1_value: ComplexField
    eq1_res: ComplexField
    eq2_res: ComplexField
    contradiction_sup: float
    contradiction_relative: float = 0.0
    identity_sup: float = 0.0
    degenerate: bool = False
    joint_count: int = 0
    gates: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"contradiction_sup": self.contradiction_sup, "contradiction_relative": self.contradiction_relative,
                "identity_sup": self.identity_sup, "degenerate": self.degenerate, "joint_nodes": self.joint_count,
                "eq1_sup": self.eq1_res.sup(), "eq2_sup": self.eq2_res.sup(), **{f"gate_{k}": v for k, v in self.gates.items()}}


def identity_chain(slice_: BBSliceData, mask_threshold: float = DEFAULT_MASK_THRESHOLD, require_gates: bool = True,
                   gate: float | None = None) -> IdentityReport:
    domain = slice_.domain
    report = check_slice_gates(slice_, gate)
    gates = report.as_dict()
    if require_gates and (report.hitchin > report.gate or report.r4 > report.gate):
        failing = "hitchin" if report.hitchin > report.gate else "r4"
        raise SliceGateError(f"恒等式の前提 ({failing}) がゲート {report.gate:.3e} を満たしません",
                             gate_name=failing, **gates)
    wedge = wedge_with_dH(slice_)
    region = interior_mask(domain)
    u = slice_.base.u_real()
    mask, phi2_sup = phi2_mask(slice_, mask_threshold)

    phi2 = slice_.phi2.values
    f_values = np.where(mask, 0.0, slice_.phi1.values / np.where(mask, 1.0, phi2))
    f = ComplexField(domain, f_values, mask)
    u_z = dz_array(u, domain)
    df = d_z(f)
    eq1 = ComplexField(domain, df.values - 2.0 * f.masked_values() * u_z, df.mask)
    dbar_f = d_zbar(f)
    eq2 = ComplexField(domain, dbar_f.values - slice_.b.values * f.masked_values() ** 2, dbar_f.mask)

    b = slice_.b.values
    den = dz_array(b, domain) + 2.0 * b * u_z
    den_floor = DENOMINATOR_FLOOR * max(sup_norm(den, region), np.finfo(float).tiny)
    den_mask = np.abs(den) < den_floor
    lap_u = dzbar_dz(ComplexField(domain, u)).values.real
    f1_values = np.where(den_mask, 0.0, 2.0 * lap_u / np.where(den_mask, 1.0, den))
    f1 = ComplexField(domain, f1_values, den_mask)

    joint = region & ~mask & ~den_mask
    joint_count = int(joint.sum())
    degenerate = phi2_sup <= DEGENERATE_PHI2 or joint_count == 0
    if degenerate:
        logger.log("Φ₂ ≡ 0 のため全点がマスクされました (固定点)", level="INFO")
        return IdentityReport(f, wedge, f1, eq1, eq2, 0.0, 0.0, 0.0, True, 0, gates)

    contradiction = sup_norm(f1_values + f_values, joint)
    identity = sup_norm(f1_values - f_values, joint)
    relative = contradiction / max(sup_norm(f_values, joint), np.finfo(float).tiny)
    logger.log(f"恒等式の連鎖: sup|f1 + f| = {contradiction:.3e} (相対 {relative:.3e}), sup|f1 − f| = {identity:.3e}, "
               f"{joint_count} 点", level="INFO")
    return IdentityReport(f, wedge, f1, eq1, eq2, contradiction, relative, identity, False, joint_count, gates)


def perturb_b(slice_: BBSliceData, factor: float) -> BBSliceData:
    perturbed = slice_.with_b(float(factor) * slice_.b.values)
    perturbed.provenance["b_factor"] = float(factor)
    return perturbed


def preserved_kernel_probe(slice_: BBSliceData, normalized: bool = True,
                           mask_threshold: float = DEFAULT_MASK_THRESHOLD) -> float:
    """min |wedge| / |s|²_H (非マスク内部点)。正の値は ∂₀^H が L₁ を保たないことの数値的証拠です。"""
    mask, phi2_sup = phi2_mask(slice_, mask_threshold)
    region = interior_mask(slice_.domain) & ~mask
    if phi2_sup <= DEGENERATE_PHI2 or not region.any():
        raise DegeneracyError("Φ₂ ≡ 0 (固定点) では核直線の保存は自明です; preserved_kernel_probe は定義されません")
    wedge = np.abs(wedge_with_dH(slice_).values)
    if normalized:
        wedge = wedge / section_norm_sq(slice_)
    value = float(wedge[region].min())
    logger.log(f"核直線の保存量: {value:.6e} (normalized={normalized})", level="DEBUG")
    return value
