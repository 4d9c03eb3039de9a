"""
Laurent 接続族 ∇ᵣ = Σ rᵏ (A_k dz + B_k dz̄) とその二次展開。

    ∇ᵣ = r·ħ⁻¹Φ dz + (∂̄_E + ∂₀^H) + r⁻¹·ħΦ₀^{†_H} dz̄
    ∂₀^H = diag(∂_z + ∂_z u, ∂_z − ∂_z u),   Φ₀^{†_H} = H⁻¹Φ₀*H = [[0, conj(Φ₁)e^{−2u}], [0, 0]]

冪の範囲は [−3, 2] です。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from logger.custom_logger import CustomLogger
from models.grid_calculus import (ComplexField, GridDomain, MatrixField, dz_array, dzbar_array, interior_mask,
                                  sup_norm)
from models.higgs_local import BBSliceData, FixedPointData, default_gate, require_slice_gates
from utils.errors import ConfigError, FieldValidationError, NilpotencyGateError, PowerOverflowError

logger = CustomLogger()

POWER_RANGE = (-3, 2)
FORMS = ("dz", "dzbar")
CURVATURE_MARGIN = 2
DEFAULT_R_VALUES = (10.0, 10.0 ** 1.5, 100.0, 10.0 ** 2.5, 1000.0)
ADJOINT_CONVENTION = "Phi0^dagger = H^-1 Phi0^* H = [[0, conj(phi1) exp(-2u)], [0, 0]] dzbar"


def _check_power(k: int, what: str = "係数") -> int:
    if not POWER_RANGE[0] <= k <= POWER_RANGE[1]:
        raise PowerOverflowError(f"{what}の冪 {k} が範囲 {list(POWER_RANGE)} の外です", power=int(k))
    return int(k)


def _check_radius(r: float) -> float:
    r = float(r)
    if not (np.isfinite(r) and r > 0):
        raise ConfigError(f"r は正の有限値である必要があります (r = {r})", kind="radius")
    return r


class LaurentConnectionFamily:
    """冪 k ごとに (dz 係数, dz̄ 係数) の MatrixField を保持します。"""

    def __init__(self, domain: GridDomain, coefficients: dict[int, tuple[MatrixField, MatrixField]] | None = None,
                 hbar: float = 1.0, synthetic: bool = False, metadata: dict | None = None) -> None:
        self.domain = domain
        self.hbar = float(hbar)
        self.synthetic = synthetic
        self.metadata = dict(metadata or {})
        self.coefficients: dict[int, tuple[MatrixField, MatrixField]] = {}
        for k, pair in (coefficients or {}).items():
            self.set_coefficient(k, *pair)

    def set_coefficient(self, k: int, mz: MatrixField | None, mzbar: MatrixField | None) -> None:
        k = _check_power(k)
        mz = MatrixField.zeros(self.domain, "dz") if mz is None else mz
        mzbar = MatrixField.zeros(self.domain, "dzbar") if mzbar is None else mzbar
        for m, form in ((mz, "dz"), (mzbar, "dzbar")):
            if m.domain != self.domain:
                raise FieldValidationError(f"冪 {k} の {form} 係数の領域が一致しません", kind="domain_mismatch")
            if m.form != form:
                raise FieldValidationError(f"冪 {k} の係数の形式タグ '{m.form}' は '{form}' ではありません", kind="form")
            m.check_trace_free()
        self.coefficients[k] = (mz, mzbar)

    @property
    def powers(self) -> list[int]:
        return sorted(self.coefficients)

    def coefficient_array(self, k: int, form: str) -> np.ndarray:
        """存在しない冪には 0 を返します。"""
        pair = self.coefficients.get(k)
        if pair is None:
            return np.zeros(self.domain.shape + (2, 2), dtype=np.complex128)
        return pair[FORMS.index(form)].array

    def evaluate(self, r: float) -> tuple[np.ndarray, np.ndarray]:
        """(A_z(r), A_z̄(r)) = Σ rᵏ (dz 係数, dz̄ 係数)。"""
        r = _check_radius(r)
        az = np.zeros(self.domain.shape + (2, 2), dtype=np.complex128)
        azbar = np.zeros_like(az)
        for k in self.powers:
            mz, mzbar = self.coefficients[k]
            weight = r ** k
            az += weight * mz.array
            azbar += weight * mzbar.array
        return az, azbar

    def iter_entries(self) -> Iterator[tuple[int, str, tuple[int, int], ComplexField]]:
        """シリアライズ用に (冪, 形式, 成分, 場) を列挙します。"""
        for k in self.powers:
            for form, m in zip(FORMS, self.coefficients[k]):
                for i in range(2):
                    for j in range(2):
                        yield k, form, (i, j), m.entry(i, j)

    def copy(self) -> 'LaurentConnectionFamily':
        return LaurentConnectionFamily(self.domain, {k: (a.copy(), b.copy()) for k, (a, b) in self.coefficients.items()},
                                       self.hbar, self.synthetic, self.metadata)

    def describe(self) -> dict:
        return {"powers": self.powers, "hbar": self.hbar, "synthetic": self.synthetic,
                "adjoint_convention": ADJOINT_CONVENTION, **self.metadata}


def _matrix(domain: GridDomain, entries: dict[tuple[int, int], np.ndarray], form: str) -> MatrixField:
    arr = np.zeros(domain.shape + (2, 2), dtype=np.complex128)
    for (i, j), values in entries.items():
        arr[..., i, j] = values
    return MatrixField(domain, arr, form=form, trace_free=True)


def family_from_arrays(domain: GridDomain, arrays: dict[int, tuple[np.ndarray, np.ndarray]], hbar: float = 1.0,
                       synthetic: bool = False, metadata: dict | None = None) -> LaurentConnectionFamily:
    coefficients = {k: (MatrixField(domain, az, "dz"), MatrixField(domain, azbar, "dzbar"))
                    for k, (az, azbar) in arrays.items()}
    return LaurentConnectionFamily(domain, coefficients, hbar, synthetic, metadata)


def build_family(slice_: BBSliceData, hbar: float = 1.0, gate: float | None = None,
                 require_gates: bool = True) -> LaurentConnectionFamily:
    """スライスデータから冪 {−1, 0, +1} の族を作ります。"""
    hbar = float(hbar)
    if not np.isfinite(hbar) or hbar == 0.0:
        raise ConfigError(f"hbar は 0 でない実数です (hbar = {hbar})", kind="hbar")
    if require_gates:
        require_slice_gates(slice_, gate)
    domain = slice_.domain
    u = slice_.base.u_real()
    u_z = dz_array(u, domain)
    adjoint = np.conj(slice_.phi1.values) * np.exp(-2.0 * u)

    higgs = slice_.higgs_matrix()
    coefficients = {
        1: (MatrixField(domain, higgs.array / hbar, "dz", trace_free=True), None),
        0: (_matrix(domain, {(0, 0): u_z, (1, 1): -u_z}, "dz"), _matrix(domain, {(0, 1): slice_.b.values}, "dzbar")),
        -1: (None, _matrix(domain, {(0, 1): hbar * adjoint}, "dzbar")),
    }
    family = LaurentConnectionFamily(domain, coefficients, hbar,
                                     metadata={"dprime_sign": slice_.dprime_sign, "source": slice_.provenance.get("kind")})
    logger.log(f"Laurent 族を構築しました: 冪 {family.powers}, ħ = {hbar:g}", level="DEBUG")
    return family


def _commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def _curvature_array(domain: GridDomain, az: np.ndarray, azbar: np.ndarray) -> np.ndarray:
    return dz_array(azbar, domain) - dzbar_array(az, domain) + _commutator(az, azbar)


def curvature_residual(family: LaurentConnectionFamily, r: float) -> MatrixField:
    """F = ∂_z A_z̄ − ∂_z̄ A_z + [A_z, A_z̄] (dz∧dz̄ 係数)。"""
    az, azbar = family.evaluate(r)
    return MatrixField(family.domain, _curvature_array(family.domain, az, azbar), form="dzdzbar")


def curvature_by_power(family: LaurentConnectionFamily) -> dict[int, MatrixField]:
    """曲率の Laurent 係数 F_k = ∂_z B_k − ∂_z̄ A_k + Σ_{i+j=k} [A_i, B_j]。"""
    domain = family.domain
    out: dict[int, np.ndarray] = {}
    for k in family.powers:
        mz, mzbar = family.coefficients[k]
        linear = dz_array(mzbar.array, domain) - dzbar_array(mz.array, domain)
        out[k] = out.get(k, 0) + linear
    for i in family.powers:
        a = family.coefficient_array(i, "dz")
        if not np.any(a):
            continue
        for j in family.powers:
            b = family.coefficient_array(j, "dzbar")
            if np.any(b):
                out[i + j] = out.get(i + j, 0) + _commutator(a, b)
    return {k: MatrixField(domain, np.broadcast_to(v, domain.shape + (2, 2)).astype(np.complex128), form="dzdzbar")
            for k, v in sorted(out.items())}


def max_curvature(family: LaurentConnectionFamily, margin: int = CURVATURE_MARGIN) -> float:
    region = interior_mask(family.domain, margin)
    by_power = curvature_by_power(family)
    return max((m.sup(region) for m in by_power.values()), default=0.0)


def gauge_transform(family: LaurentConnectionFamily, p: float) -> LaurentConnectionFamily:
    """
    定数ゲージ g(r) = diag(r^p, r^{−p}) による共役。(1,2) 成分の冪は +2p、(2,1) 成分は −2p だけ動きます。
    恒等的に 0 の成分は動かさず、範囲検査の対象にもしません。
    """
    twice = 2.0 * float(p)
    if not np.isfinite(twice) or twice != round(twice):
        raise ConfigError(f"ゲージ指数 p は半整数である必要があります (p = {p})", kind="gauge_exponent")
    shift = int(round(twice))
    if shift == 0:
        return family.copy()
    moves = {(0, 0): 0, (1, 1): 0, (0, 1): shift, (1, 0): -shift}
    arrays: dict[int, list[np.ndarray]] = {}
    for k in family.powers:
        for f_index, m in enumerate(family.coefficients[k]):
            for (i, j), move in moves.items():
                values = m.array[..., i, j]
                if not np.any(values):
                    continue
                target = _check_power(k + move, f"ゲージ変換後の ({i + 1},{j + 1}) 成分")
                pair = arrays.setdefault(target, [np.zeros(family.domain.shape + (2, 2), dtype=np.complex128)
                                                  for _ in FORMS])
                pair[f_index][..., i, j] = values
    result = family_from_arrays(family.domain, {k: (v[0], v[1]) for k, v in arrays.items()}, family.hbar,
                                family.synthetic, family.metadata)
    logger.log(f"ゲージ変換 p = {p:g}: 冪 {family.powers} -> {result.powers}", level="DEBUG")
    return result


def substitute_square(family: LaurentConnectionFamily) -> LaurentConnectionFamily:
    """r → r² (冪 k → 2k)。"""
    arrays = {}
    for k in family.powers:
        target = _check_power(2 * k, "r → r² 後の係数")
        arrays[target] = tuple(m.array.copy() for m in family.coefficients[k])
    return family_from_arrays(family.domain, arrays, family.hbar, family.synthetic, family.metadata)


def det_higgs(phi: MatrixField) -> ComplexField:
    """トレースフリー 2×2 の行列式 e11·e22 − e12·e21。"""
    if phi.form != "dz":
        raise FieldValidationError(f"det_higgs には dz 形式の場が必要です (form = '{phi.form}')", kind="form")
    phi.check_trace_free()
    a = phi.array
    return ComplexField(phi.domain, a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0], phi.mask)


@dataclass
class SecondaryHiggsData:
    phi_tilde: ComplexField
    a_minus1: ComplexField
    dprime: tuple[MatrixField, MatrixField]
    det_field: ComplexField
    family: LaurentConnectionFamily
    leakage: float = 0.0
    trace_removed: float = 0.0
    gate: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def domain(self) -> GridDomain:
        return self.phi_tilde.domain

    @property
    def dprime_diag(self) -> tuple[ComplexField, ComplexField]:
        """D′ の対角係数 (dz 部分, dz̄ 部分) の (1,1) 成分。"""
        return self.dprime[0].entry(0, 0), self.dprime[1].entry(0, 0)

    @property
    def phi_prime(self) -> MatrixField:
        """Φ′ = [[0, Φ̃], [A₋₁, 0]]。"""
        arr = np.zeros(self.domain.shape + (2, 2), dtype=np.complex128)
        arr[..., 0, 1] = self.phi_tilde.values
        arr[..., 1, 0] = self.a_minus1.values
        return MatrixField(self.domain, arr, form="dz", trace_free=True)

    @property
    def tail_powers(self) -> list[int]:
        return [k for k in self.family.powers if k < 0]

    def det_min(self, margin: int = 1) -> float:
        region = interior_mask(self.domain, margin)
        mags = np.abs(self.det_field.values[region])
        return float(mags.min()) if mags.size else 0.0


def _unitary_frame(s1: np.ndarray, s2: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    G = [s/|s|_H, (−e^{−u}conj(s₂), e^{u}conj(s₁))/|s|_H] とその逆行列。det G = 1。
    """
    norm = np.sqrt(np.exp(u) * np.abs(s1) ** 2 + np.exp(-u) * np.abs(s2) ** 2)
    g = np.empty(s1.shape + (2, 2), dtype=np.complex128)
    g[..., 0, 0] = s1 / norm
    g[..., 1, 0] = s2 / norm
    g[..., 0, 1] = -np.exp(-u) * np.conj(s2) / norm
    g[..., 1, 1] = np.exp(u) * np.conj(s1) / norm
    g_inv = np.empty_like(g)
    g_inv[..., 0, 0] = g[..., 1, 1]
    g_inv[..., 0, 1] = -g[..., 0, 1]
    g_inv[..., 1, 0] = -g[..., 1, 0]
    g_inv[..., 1, 1] = g[..., 0, 0]
    return g, g_inv


def secondary_expansion(family: LaurentConnectionFamily, splitting_metric: FixedPointData,
                        gate: float | None = None) -> SecondaryHiggsData:
    """
    L₁ = span(s/|s|_H) (s は冪 +1 の Higgs 係数の核) に沿って枠を回転し、r → r² と
    p = −1/2 のゲージ変換を施して Φ′ (冪 +1) と D′ (冪 0) を読み取ります。
    """
    domain = family.domain
    if splitting_metric.domain != domain:
        raise FieldValidationError("分解計量の領域が族と一致しません", kind="domain_mismatch")
    if 1 not in family.coefficients:
        raise FieldValidationError("族に冪 +1 の Higgs 係数がありません", kind="missing_higgs")
    higgs = family.coefficients[1][0]
    scale = max(1.0, higgs.sup())
    gate = default_gate(domain, scale ** 2) if gate is None else float(gate)
    region = interior_mask(domain)
    nil_defect = det_higgs(higgs).sup(region)
    if nil_defect > gate:
        raise NilpotencyGateError(
            f"Higgs field already non-nilpotent; use the wkb module (sup|det Φ| = {nil_defect:.3e} > {gate:.3e})",
            residual=nil_defect, gate=gate)

    s1 = higgs.array[..., 0, 0]
    s2 = higgs.array[..., 1, 0]
    if np.min(np.abs(s1) + np.abs(s2)) == 0.0:
        raise NilpotencyGateError("核の切断 s が零点を持ちます", kind="degenerate_kernel")
    u = splitting_metric.u_real()
    g, g_inv = _unitary_frame(s1, s2, u)

    rotated: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for k in family.powers:
        az, azbar = (m.array for m in family.coefficients[k])
        rotated[k] = (g_inv @ az @ g, g_inv @ azbar @ g)
    dg_z = g_inv @ dz_array(g, domain)
    dg_zbar = g_inv @ dzbar_array(g, domain)
    # det G = 1 なので G⁻¹dG はトレースフリー (差分では O(h²) のずれ)
    trace_removed = 0.0
    for correction in (dg_z, dg_zbar):
        half_trace = 0.5 * (correction[..., 0, 0] + correction[..., 1, 1])
        trace_removed = max(trace_removed, 2.0 * sup_norm(half_trace, region))
        correction[..., 0, 0] -= half_trace
        correction[..., 1, 1] -= half_trace
    az0, azbar0 = rotated.get(0, (np.zeros_like(g), np.zeros_like(g)))
    rotated[0] = (az0 + dg_z, azbar0 + dg_zbar)

    top = rotated[1][0]
    off_shape = max(sup_norm(top[..., 0, 0], region), sup_norm(top[..., 1, 0], region),
                    sup_norm(top[..., 1, 1], region))
    if off_shape > gate * scale:
        raise NilpotencyGateError(
            f"回転後の Higgs 係数が上三角冪零になりません (sup = {off_shape:.3e})", residual=off_shape, gate=gate)
    top = top.copy()
    top[..., 0, 0] = 0.0
    top[..., 1, 0] = 0.0
    top[..., 1, 1] = 0.0
    rotated[1] = (top, rotated[1][1])

    frame_family = family_from_arrays(domain, rotated, family.hbar, family.synthetic,
                                      {**family.metadata, "frame": "kernel_line"})
    rescaled = gauge_transform(substitute_square(frame_family), -0.5)

    phi_tilde = ComplexField(domain, rescaled.coefficient_array(1, "dz")[..., 0, 1].copy())
    a_minus1 = ComplexField(domain, rescaled.coefficient_array(1, "dz")[..., 1, 0].copy())
    det_field = ComplexField(domain, -(phi_tilde.values * a_minus1.values))
    leakage = sup_norm(rescaled.coefficient_array(1, "dzbar"), region)
    dprime = (MatrixField(domain, rescaled.coefficient_array(0, "dz"), "dz"),
              MatrixField(domain, rescaled.coefficient_array(0, "dzbar"), "dzbar"))
    data = SecondaryHiggsData(phi_tilde, a_minus1, dprime, det_field, rescaled, leakage, trace_removed, gate,
                              {"nilpotency_defect": nil_defect, "rotation_defect": off_shape})
    logger.log(f"二次展開: min|det Φ′| = {data.det_min():.3e}, dz̄ 漏れ = {leakage:.3e}, "
               f"除去トレース = {trace_removed:.3e}", level="INFO")
    return data


def tail_residual(data: SecondaryHiggsData, r: float) -> float:
    """
    sup‖∇′ᵣ − (r·(冪 +1 係数) + D′)‖ を内部点で評価します。負冪の和を直接計算するので打ち消し誤差を含みません。
    """
    r = _check_radius(r)
    family = data.family
    region = interior_mask(family.domain)
    az = np.zeros(family.domain.shape + (2, 2), dtype=np.complex128)
    azbar = np.zeros_like(az)
    for k in data.tail_powers:
        az += r ** k * family.coefficient_array(k, "dz")
        azbar += r ** k * family.coefficient_array(k, "dzbar")
    return max(sup_norm(az, region), sup_norm(azbar, region))


def secondary_sweep(data: SecondaryHiggsData, r_values=DEFAULT_R_VALUES) -> list[dict]:
    """(r, residual_sup, det_min) の行。residual_sup は r 倍したテール残差です。"""
    det_min = data.det_min()
    rows = []
    for r in r_values:
        scaled = float(r) * tail_residual(data, r)
        rows.append({"r": float(r), "residual_sup": scaled, "det_min": det_min})
        logger.log(f"  r = {float(r):.4g}: r·tail = {scaled:.3e}", level="DEBUG")
    return rows


def family_curvature_sweep(family: LaurentConnectionFamily, r_values, margin: int = CURVATURE_MARGIN) -> list[dict]:
    region = interior_mask(family.domain, margin)
    return [{"r": float(r), "residual_sup": curvature_residual(family, r).sup(region)} for r in r_values]
