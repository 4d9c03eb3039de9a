"""
閉曲線への引き戻し、Higgs 固有値の分枝、中心電荷、経路順序指数関数と WKB 極限の検証。

ホロノミーの規約: Y′(t) = C(t)·Y(t), Y(0) = I の解 Y(1) を Hol とします。
"""
from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numba import jit

from logger.custom_logger import CustomLogger
from models.conformal_limit import LaurentConnectionFamily, det_higgs, max_curvature
from models.grid_calculus import GridDomain, MatrixField, interior_mask
from utils.errors import (ConfigError, CurvatureGateError, DegeneracyError, DomainError, LoopError,
                          WKBLoopNotFoundError, WKBRefusalError)

logger = CustomLogger()

DEGENERACY_FACTOR = 1e-8
RENORMALIZE_THRESHOLD = 1e50
STEP_NORM_FACTOR = 20.0
DEFAULT_SUBSTEPS = 4096
DEFAULT_CURVATURE_GATE = 5e-2
DEFAULT_MARGIN_GATE = 1e-3
DEFAULT_AMPLITUDES = (0.05, 0.1)
CLOSURE_TOL = 1e-12


# --- 閉曲線 ---

@dataclass
class LoopPath:
    """t_k = k/nt (nt 点), z は nt + 1 点 (z[nt] は z[0] と x 周期を法に一致), dzdt は nt 点。"""
    t: np.ndarray
    z: np.ndarray
    dzdt: np.ndarray
    period: float = 0.0
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.complex128)
        self.dzdt = np.asarray(self.dzdt, dtype=np.complex128)
        nt = self.t.size
        if nt < 2 or self.z.size != nt + 1 or self.dzdt.size != nt:
            raise LoopError(f"閉曲線の標本数が不整合です (t: {nt}, z: {self.z.size}, dzdt: {self.dzdt.size})")
        gap = self.z[-1] - self.z[0]
        if self.period > 0:
            gap = gap - self.period * round(gap.real / self.period)
        scale = max(1.0, float(np.max(np.abs(self.z))))
        if abs(gap) > CLOSURE_TOL * scale:
            raise LoopError(f"曲線が閉じていません (|z(1) − z(0)| = {abs(gap):.3e} mod 周期)", t=1.0)

    @property
    def nt(self) -> int:
        return self.t.size

    @property
    def points(self) -> np.ndarray:
        """標本点 z(t_k), k = 0..nt−1。"""
        return self.z[:-1]

    def reversed(self) -> 'LoopPath':
        nt = self.nt
        idx = (nt - np.arange(nt)) % nt
        return LoopPath(self.t.copy(), self.z[::-1].copy(), -self.dzdt[idx], self.period, self.kind,
                        {**self.params, "orientation": -self.params.get("orientation", 1)})

    def table(self) -> list[dict]:
        return [{"t": float(t), "x": float(z.real), "y": float(z.imag)} for t, z in zip(self.t, self.points)]


def _loop_times(nt: int) -> np.ndarray:
    if int(nt) < 2:
        raise ConfigError(f"nt は 2 以上です (nt = {nt})", kind="loop_nt")
    return np.arange(int(nt)) / int(nt)


def horizontal_loop(y0: float, nt: int = 256, x0: float = 0.0, period: float = 1.0, orientation: int = 1) -> LoopPath:
    """z(t) = x0 + orientation·period·t + i·y0。"""
    if orientation not in (1, -1):
        raise ConfigError("orientation は +1 か -1 です", kind="orientation")
    t = _loop_times(nt)
    t_closed = np.append(t, 1.0)
    z = x0 + orientation * period * t_closed + 1j * y0
    dzdt = np.full(t.size, orientation * period, dtype=np.complex128)
    return LoopPath(t, z, dzdt, period, "horizontal", {"y0": float(y0), "orientation": orientation})


def sinusoidal_loop(y0: float, amplitude: float, nt: int = 256, x0: float = 0.0, period: float = 1.0,
                    orientation: int = 1) -> LoopPath:
    """z(t) = x0 + orientation·period·t + i·(y0 + a·sin 2πt)。"""
    if orientation not in (1, -1):
        raise ConfigError("orientation は +1 か -1 です", kind="orientation")
    t = _loop_times(nt)
    t_closed = np.append(t, 1.0)
    z = x0 + orientation * period * t_closed + 1j * (y0 + amplitude * np.sin(2.0 * np.pi * t_closed))
    z[-1] = z[0] + orientation * period
    dzdt = orientation * period + 1j * amplitude * 2.0 * np.pi * np.cos(2.0 * np.pi * t)
    return LoopPath(t, z, dzdt, period, "sinusoidal",
                    {"y0": float(y0), "amplitude": float(amplitude), "orientation": orientation})


# --- 標本化 ---

@jit(nopython=True, cache=True, nogil=True)
def _bilinear_sample_jit(values, x_min, hx, y_min, hy, periodic, xq, yq):
    ny, nx, m = values.shape
    out = np.empty((xq.size, m), dtype=np.complex128)
    for q in range(xq.size):
        fx = (xq[q] - x_min) / hx
        fy = (yq[q] - y_min) / hy
        if periodic:
            fx = fx % nx
            i0 = int(math.floor(fx))
            if i0 >= nx:
                i0 = nx - 1
            i1 = (i0 + 1) % nx
        else:
            i0 = min(max(int(math.floor(fx)), 0), nx - 2)
            i1 = i0 + 1
        j0 = min(max(int(math.floor(fy)), 0), ny - 2)
        wx = fx - i0
        wy = fy - j0
        for c in range(m):
            out[q, c] = ((1.0 - wx) * (1.0 - wy) * values[j0, i0, c] + wx * (1.0 - wy) * values[j0, i1, c]
                         + (1.0 - wx) * wy * values[j0 + 1, i0, c] + wx * wy * values[j0 + 1, i1, c])
    return out


def _require_inside(domain: GridDomain, path: LoopPath) -> None:
    pts = path.points
    tol = CLOSURE_TOL * max(1.0, abs(domain.y_max))
    outside = (pts.imag < domain.y_min - tol) | (pts.imag > domain.y_max + tol)
    if not domain.periodic:
        outside |= (pts.real < domain.x_min - tol) | (pts.real > domain.x_max + tol)
    if outside.any():
        k = int(np.flatnonzero(outside)[0])
        raise LoopError(f"曲線が領域外に出ます (t = {path.t[k]:.6g}, z = {pts[k]:.6g})", t=float(path.t[k]))


def sample_matrix_array(domain: GridDomain, array: np.ndarray, path: LoopPath) -> np.ndarray:
    """(ny, nx, 2, 2) 配列を曲線上で双線形補間し (nt, 2, 2) を返します。"""
    _require_inside(domain, path)
    pts = path.points
    flat = np.ascontiguousarray(array.reshape(domain.ny, domain.nx, 4))
    out = _bilinear_sample_jit(flat, float(domain.x_min), float(domain.hx), float(domain.y_min), float(domain.hy),
                               bool(domain.periodic), np.ascontiguousarray(pts.real), np.ascontiguousarray(pts.imag))
    return out.reshape(path.nt, 2, 2)


@dataclass
class LoopSamples:
    path: LoopPath
    coefficient: np.ndarray
    higgs: np.ndarray | None = None
    r: float | None = None

    @property
    def nt(self) -> int:
        return self.path.nt

    @property
    def z(self) -> np.ndarray:
        return self.path.points


def pullback_arrays(domain: GridDomain, az: np.ndarray, azbar: np.ndarray | None, path: LoopPath) -> np.ndarray:
    """γ*(M_z dz + M_z̄ dz̄) = (M_z·ż + M_z̄·conj(ż)) dt。"""
    coeff = sample_matrix_array(domain, az, path) * path.dzdt[:, None, None]
    if azbar is not None and np.any(azbar):
        coeff = coeff + sample_matrix_array(domain, azbar, path) * np.conj(path.dzdt)[:, None, None]
    return coeff


def pullback_higgs(higgs: MatrixField, path: LoopPath) -> np.ndarray:
    return pullback_arrays(higgs.domain, higgs.array, None, path)


def pullback_loop(family: LaurentConnectionFamily, path: LoopPath, r: float) -> LoopSamples:
    az, azbar = family.evaluate(r)
    coeff = pullback_arrays(family.domain, az, azbar, path)
    higgs = None
    if 1 in family.coefficients:
        higgs = pullback_arrays(family.domain, family.coefficient_array(1, "dz"), family.coefficient_array(1, "dzbar"),
                                path)
    return LoopSamples(path, coeff, higgs, float(r))


# --- 固有値の分枝 ---

@dataclass
class EigenBranch:
    mu: np.ndarray
    monodromy: bool
    root_min: float

    @property
    def margin(self) -> float:
        return float(np.min(self.mu.real))


def _det2(m: np.ndarray) -> np.ndarray:
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def higgs_eigen_branch(samples, jump_gate: float | None = None) -> EigenBranch:
    """
    ±√(−det) の連続な分枝。μ(0) は Re ≥ 0 (同値なら Im ≥ 0) で選び、以後は直前の値に近い符号を取ります。
    一周して −μ(0) に戻る場合はモノドロミーとして記録します。
    """
    if isinstance(samples, LoopSamples):
        higgs = samples.higgs if samples.higgs is not None else samples.coefficient
    else:
        higgs = np.asarray(samples, dtype=np.complex128)
    det = _det2(higgs)
    scale = max(1.0, float(np.max(np.abs(higgs))))
    det_min = float(np.min(np.abs(det)))
    if det_min < DEGENERACY_FACTOR * scale ** 2:
        raise DegeneracyError(f"Higgs 場が曲線上で退化しています (min|det| = {det_min:.3e})",
                              det_min=det_min, gate=DEGENERACY_FACTOR * scale ** 2)
    root = np.sqrt(-det)
    gate = 0.5 * float(np.min(np.abs(root))) if jump_gate is None else float(jump_gate)
    mu = np.empty_like(root)
    first = root[0]
    if first.real < 0 or (first.real == 0 and first.imag < 0):
        first = -first
    mu[0] = first
    for k in range(1, root.size):
        candidate = root[k] if abs(root[k] - mu[k - 1]) <= abs(root[k] + mu[k - 1]) else -root[k]
        if abs(candidate - mu[k - 1]) >= gate:
            raise DegeneracyError(f"固有値の分枝が跳びました (k = {k}, |Δμ| = {abs(candidate - mu[k - 1]):.3e})",
                                  kind="branch_jump", index=k)
        mu[k] = candidate
    monodromy = abs(mu[-1] + mu[0]) < abs(mu[-1] - mu[0])
    return EigenBranch(mu, bool(monodromy), float(np.min(np.abs(root))))


def is_wkb(branch) -> bool:
    """Re μ(t) > 0 が全点で成り立ち、モノドロミーがないこと。"""
    if isinstance(branch, EigenBranch):
        return (not branch.monodromy) and bool(np.all(branch.mu.real > 0))
    return bool(np.all(np.asarray(branch).real > 0))


def central_charge(branch) -> complex:
    """Z = ∫₀¹ μ dt (周期格子の台形則 = 平均)。"""
    mu = branch.mu if isinstance(branch, EigenBranch) else np.asarray(branch)
    return complex(np.mean(mu))


# --- 経路順序指数関数 ---

@jit(nopython=True, cache=True, nogil=True)
def _expm2_jit(m):
    """2×2 の閉形式指数関数 e^τ(cosh δ·I + sinh(δ)/δ·N), N = M − τI, δ² = −det N。"""
    tau = 0.5 * (m[0, 0] + m[1, 1])
    a = m[0, 0] - tau
    delta = cmath.sqrt(a * a + m[0, 1] * m[1, 0])
    if abs(delta) > 1e-6:
        sinhc = cmath.sinh(delta) / delta
    else:
        d2 = delta * delta
        sinhc = 1.0 + d2 / 6.0 + d2 * d2 / 120.0
    ch = cmath.cosh(delta)
    et = cmath.exp(tau)
    out = np.empty((2, 2), dtype=np.complex128)
    out[0, 0] = et * (ch + sinhc * a)
    out[0, 1] = et * sinhc * m[0, 1]
    out[1, 0] = et * sinhc * m[1, 0]
    out[1, 1] = et * (ch - sinhc * a)
    return out


@jit(nopython=True, cache=True, nogil=True)
def _path_ordered_exp_jit(coeff, steps, threshold):
    nt = coeff.shape[0]
    y = np.zeros((2, 2), dtype=np.complex128)
    y[0, 0] = 1.0
    y[1, 1] = 1.0
    log_scale = 0.0
    h = 1.0 / (nt * steps)
    root3 = math.sqrt(3.0)
    c1 = 0.5 - root3 / 6.0
    c2 = 0.5 + root3 / 6.0
    rescaled = False
    for i in range(nt):
        a_left = coeff[i]
        a_right = coeff[(i + 1) % nt]
        for s in range(steps):
            ta = (s + c1) / steps
            tb = (s + c2) / steps
            g1 = (1.0 - ta) * a_left + ta * a_right
            g2 = (1.0 - tb) * a_left + tb * a_right
            omega = 0.5 * h * (g1 + g2) + (root3 / 12.0) * h * h * (g2 @ g1 - g1 @ g2)
            y = _expm2_jit(omega) @ y
            big = 0.0
            for p in range(2):
                for q in range(2):
                    v = abs(y[p, q])
                    if v > big:
                        big = v
            if big > threshold:
                y = y / big
                log_scale += math.log(big)
                rescaled = True
    return y, log_scale, rescaled


@dataclass
class HolonomyResult:
    """Hol = matrix·exp(log_scale)。"""
    matrix: np.ndarray
    log_scale: float = 0.0
    rescaled: bool = False
    steps: int = 0

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix)) * math.exp(self.log_scale)

    @property
    def log_abs_trace(self) -> float:
        """log|Tr|。トレースが 0 のときは -inf。"""
        magnitude = abs(complex(np.trace(self.matrix)))
        if magnitude == 0.0:
            return float("-inf")
        return math.log(magnitude) + self.log_scale

    @property
    def det(self) -> complex:
        return complex(np.linalg.det(self.matrix)) * math.exp(2.0 * self.log_scale)

    def full_matrix(self) -> np.ndarray:
        return self.matrix * math.exp(self.log_scale)


def steps_per_interval(coeff: np.ndarray, substeps: int) -> int:
    nt = coeff.shape[0]
    sup_c = float(np.max(np.linalg.norm(coeff, ord=2, axis=(1, 2)))) if nt else 0.0
    return max(1, math.ceil(substeps / nt), math.ceil(STEP_NORM_FACTOR * sup_c / nt))


def path_ordered_exp(coeff, substeps: int = DEFAULT_SUBSTEPS) -> HolonomyResult:
    """
    Y′ = C(t)Y, Y(0) = I を標本の線形補間に対する 4 次 Magnus 法 (2 点 Gauss) で積分します。
    各刻みで h·sup‖C‖ ≤ 0.05。行列の成分が 1e50 を超えると正規化して log_scale に蓄積します。
    """
    if isinstance(coeff, LoopSamples):
        coeff = coeff.coefficient
    coeff = np.ascontiguousarray(coeff, dtype=np.complex128)
    if coeff.ndim != 3 or coeff.shape[1:] != (2, 2) or coeff.shape[0] < 1:
        raise ConfigError(f"係数の形状 {coeff.shape} は (nt, 2, 2) ではありません", kind="holonomy_shape")
    if not np.isfinite(coeff).all():
        raise ConfigError("係数に非有限値が含まれています", kind="holonomy_non_finite")
    if substeps < coeff.shape[0]:
        raise ConfigError(f"substeps ({substeps}) は nt ({coeff.shape[0]}) 以上である必要があります", kind="substeps")
    steps = steps_per_interval(coeff, substeps)
    matrix, log_scale, rescaled = _path_ordered_exp_jit(coeff, steps, RENORMALIZE_THRESHOLD)
    logger.log(f"  経路順序指数: nt = {coeff.shape[0]}, 区間あたり {steps} 刻み, log_scale = {log_scale:.6g}",
               level="DEBUG")
    return HolonomyResult(matrix, float(log_scale), bool(rescaled), steps * coeff.shape[0])


# --- 固有枠での分解と可換ホロノミー ---

def _eigenvectors(higgs: np.ndarray, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """H v = μ v, w H = μ w を満たす右・左固有ベクトル (各点でノルムの大きい方の式を採用)。"""
    a = higgs[:, 0, 0]
    b = higgs[:, 0, 1]
    c = higgs[:, 1, 0]
    v1 = np.stack([b, mu - a], axis=-1)
    v2 = np.stack([mu + a, c], axis=-1)
    v = np.where((np.linalg.norm(v1, axis=-1) >= np.linalg.norm(v2, axis=-1))[:, None], v1, v2)
    w1 = np.stack([c, mu - a], axis=-1)
    w2 = np.stack([mu + a, b], axis=-1)
    w = np.where((np.linalg.norm(w1, axis=-1) >= np.linalg.norm(w2, axis=-1))[:, None], w1, w2)
    return v, w


@dataclass
class ConnectionDecomposition:
    a_plus: np.ndarray
    a_minus: np.ndarray
    a_off: np.ndarray


def decompose_connection(higgs: np.ndarray, connection: np.ndarray, branch: EigenBranch) -> ConnectionDecomposition:
    """μ 固有枠 L₊ ⊕ L₋ での A = A₊ + A₋ + A₀。A_± = (w·Av − w·v̇)/(w·v) (v̇ は周期中心差分)。"""
    nt = higgs.shape[0]
    out = {}
    for sign, key in ((1, "plus"), (-1, "minus")):
        mu = sign * branch.mu
        v, w = _eigenvectors(higgs, mu)
        v_dot = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) * (nt / 2.0)
        wv = np.einsum("ti,ti->t", w, v)
        out[key] = (np.einsum("ti,tij,tj->t", w, connection, v) - np.einsum("ti,ti->t", w, v_dot)) / wv
        out[key + "_vw"] = (v, w)
    v_p, _ = out["plus_vw"]
    v_m, w_m = out["minus_vw"]
    # A v₊ = A₊ v₊ + A₀ v₋
    off = np.einsum("ti,tij,tj->t", w_m, connection, v_p) / np.einsum("ti,ti->t", w_m, v_m)
    return ConnectionDecomposition(out["plus"], out["minus"], off)


def abelian_holonomy(higgs: np.ndarray, connection: np.ndarray, branch: EigenBranch) -> complex:
    """
    L₊ 上の誘導接続のホロノミー Hol(A₊) = ∏ (w_{i+1}·exp(A_mid Δt)·v_i)/(w_{i+1}·v_{i+1})。
    v, w の規格化の取り方に依存しません。
    """
    if branch.monodromy:
        raise WKBRefusalError("固有直線にモノドロミーがあるため L₊ のホロノミーは定義されません")
    nt = higgs.shape[0]
    v, w = _eigenvectors(higgs, branch.mu)
    dt = 1.0 / nt
    log_hol = 0.0 + 0.0j
    for i in range(nt):
        j = (i + 1) % nt
        step = scipy.linalg.expm(0.5 * (connection[i] + connection[j]) * dt)
        factor = (w[j] @ step @ v[i]) / (w[j] @ v[j])
        log_hol += cmath.log(factor)
    return cmath.exp(log_hol)


# --- WKB 掃引 ---

@dataclass
class WKBSweepRow:
    eps: float
    q: complex
    abs_dev: float
    log_abs_trace: float
    growth: float
    rescaled: bool = False

    def as_record(self) -> dict:
        return {"eps": self.eps, "re_q": self.q.real, "im_q": self.q.imag, "abs_dev": self.abs_dev,
                "log_abs_trace": self.log_abs_trace}


@dataclass
class WKBSweepReport:
    rows: list[WKBSweepRow]
    central_charge: complex
    abelian_holonomy: complex
    limit: complex | None
    margin: float
    curvature: float | None = None

    @property
    def re_z(self) -> float:
        return self.central_charge.real

    @property
    def deviations(self) -> list[float]:
        return [row.abs_dev for row in self.rows]

    @property
    def growth_rate(self) -> float:
        return self.rows[-1].growth if self.rows else float("nan")

    def deviation_ratios(self) -> list[float]:
        devs = self.deviations
        return [devs[k] / devs[k + 1] if devs[k + 1] > 0 else float("inf") for k in range(len(devs) - 1)]

    def summary(self) -> dict:
        return {
            "re_Z": self.re_z, "im_Z": self.central_charge.imag,
            "re_hol_aplus": self.abelian_holonomy.real, "im_hol_aplus": self.abelian_holonomy.imag,
            "re_q_limit": None if self.limit is None else self.limit.real,
            "im_q_limit": None if self.limit is None else self.limit.imag,
            "margin": self.margin, "growth_rate": self.growth_rate,
            "curvature_max": self.curvature,
        }


def _check_eps_list(eps_list) -> list[float]:
    eps = [float(e) for e in eps_list]
    if not eps:
        raise ConfigError("eps_values が空です", kind="eps_values")
    if any(not (np.isfinite(e) and e > 0) for e in eps):
        raise ConfigError("eps_values は正の有限値です", kind="eps_values")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps_values は狭義単調減少である必要があります", kind="eps_values")
    return eps


def richardson_limit(eps1: float, q1: complex, eps2: float, q2: complex) -> complex:
    """q(ε) = q₀ + c·ε を仮定した ε → 0 の外挿。"""
    return (eps1 * q2 - eps2 * q1) / (eps1 - eps2)


def wkb_sweep(family: LaurentConnectionFamily, path: LoopPath, eps_list, substeps: int = DEFAULT_SUBSTEPS,
              curvature_gate: float = DEFAULT_CURVATURE_GATE, threads: int = 1,
              jump_gate: float | None = None) -> WKBSweepReport:
    """
    各 ε で r = 1/ε の族を曲線に引き戻し、q(ε) = Tr(Hol)·exp(−Z/ε) を Hol(A₊) と比較します。
    """
    eps = _check_eps_list(eps_list)
    if 1 not in family.coefficients:
        raise WKBRefusalError("族に冪 +1 の Higgs 係数がありません", kind="missing_higgs")
    curvature = None
    if not family.synthetic:
        curvature = max_curvature(family)
        if curvature > curvature_gate:
            raise CurvatureGateError(f"族の曲率 {curvature:.3e} がゲート {curvature_gate:.1e} を超えています",
                                     residual=curvature, gate=curvature_gate)
    domain = family.domain
    higgs = pullback_arrays(domain, family.coefficient_array(1, "dz"), family.coefficient_array(1, "dzbar"), path)
    branch = higgs_eigen_branch(higgs, jump_gate)
    if not is_wkb(branch):
        raise WKBRefusalError(
            f"curve is not WKB: Re μ(t) > 0 が必要です (min Re μ = {branch.margin:.3e}, monodromy = {branch.monodromy})",
            margin=branch.margin, monodromy=branch.monodromy)
    z_gamma = central_charge(branch)
    connection = pullback_arrays(domain, family.coefficient_array(0, "dz"), family.coefficient_array(0, "dzbar"), path)
    hol_plus = abelian_holonomy(higgs, connection, branch)
    logger.log(f"WKB 掃引: Z = {z_gamma:.6g}, Hol(A₊) = {hol_plus:.6g}, margin = {branch.margin:.3e}", level="INFO")

    def evaluate(e: float) -> WKBSweepRow:
        samples = pullback_loop(family, path, 1.0 / e)
        hol = path_ordered_exp(samples.coefficient, substeps)
        q = complex(np.trace(hol.matrix)) * cmath.exp(hol.log_scale - z_gamma / e)
        row = WKBSweepRow(e, q, abs(q / hol_plus - 1.0), hol.log_abs_trace, e * hol.log_abs_trace, hol.rescaled)
        logger.log(f"  ε = {e:.4g}: q = {q:.10g}, |q/Hol(A₊) − 1| = {row.abs_dev:.3e}", level="DEBUG")
        return row

    if threads > 1 and len(eps) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            rows = list(pool.map(evaluate, eps))
    else:
        rows = [evaluate(e) for e in eps]
    limit = richardson_limit(rows[-2].eps, rows[-2].q, rows[-1].eps, rows[-1].q) if len(rows) >= 2 else None
    return WKBSweepReport(rows, z_gamma, hol_plus, limit, branch.margin, curvature)


# --- WKB 曲線の探索 ---

@dataclass
class WKBLoop:
    path: LoopPath
    margin: float
    orientation: int
    kind: str
    central_charge: complex = 0j


def _candidate_loops(domain: GridDomain, nt: int, amplitudes, rows: np.ndarray):
    y = domain.y
    for j in rows:
        for orientation in (1, -1):
            yield horizontal_loop(float(y[j]), nt, domain.x_min, domain.x_period, orientation)
    for amplitude in amplitudes:
        for j in rows:
            y0 = float(y[j])
            if y0 - amplitude < domain.y_min or y0 + amplitude > domain.y_max:
                continue
            for orientation in (1, -1):
                yield sinusoidal_loop(y0, float(amplitude), nt, domain.x_min, domain.x_period, orientation)


def find_wkb_loop(higgs: MatrixField, margin_gate: float = DEFAULT_MARGIN_GATE, nt: int = 256,
                  amplitudes=DEFAULT_AMPLITUDES, seed: int | None = None) -> WKBLoop:
    """
    水平な円 y = 一定 (両向き) を内部行について走査し、次に正弦波状の曲線を試します。
    min Re μ ≥ margin_gate を満たす最初の候補を返します。網羅的な探索ではありません。
    """
    domain = higgs.domain
    if not domain.periodic:
        raise DomainError("WKB 曲線の探索には x 周期領域が必要です", field="x_period")
    region = interior_mask(domain)
    scale = max(1.0, higgs.sup(region))
    det_max = det_higgs(higgs).sup(region)
    if det_max <= DEGENERACY_FACTOR * scale ** 2:
        raise DegeneracyError(f"Higgs 場が冪零です (max|det| = {det_max:.3e}); WKB 曲線は存在しません",
                              det_max=det_max)
    rows = np.arange(1, domain.ny - 1)
    if seed is not None:
        rows = np.random.default_rng(seed).permutation(rows)
    best = float("-inf")
    tried = 0
    for path in _candidate_loops(domain, nt, amplitudes, rows):
        tried += 1
        try:
            branch = higgs_eigen_branch(pullback_higgs(higgs, path))
        except DegeneracyError:
            continue
        margin = branch.margin if not branch.monodromy else float("-inf")
        best = max(best, margin)
        if is_wkb(branch) and margin >= margin_gate:
            logger.log(f"WKB 曲線を発見: {path.kind} {path.params}, margin = {margin:.3e} ({tried} 候補目)",
                       level="INFO")
            return WKBLoop(path, margin, path.params["orientation"], path.kind, central_charge(branch))
    raise WKBLoopNotFoundError(f"{tried} 個の候補で WKB 曲線が見つかりませんでした (最良 margin = {best:.3e})",
                               best_margin=best)


# --- 合成族 ---

def synthetic_family(domain: GridDomain, higgs, connection, connection_dzbar=None) -> LaurentConnectionFamily:
    """冪 +1 に定数 Higgs 係数、冪 0 に定数接続係数を持つ族 (曲率ゲートの対象外)。"""
    one = (MatrixField.constant(domain, higgs, "dz", trace_free=True), None)
    zero_bar = None if connection_dzbar is None else MatrixField.constant(domain, connection_dzbar, "dzbar", trace_free=True)
    zero = (MatrixField.constant(domain, connection, "dz", trace_free=True), zero_bar)
    return LaurentConnectionFamily(domain, {1: one, 0: zero}, synthetic=True, metadata={"source": "synthetic"})


def diagonal_model_family(domain: GridDomain) -> LaurentConnectionFamily:
    """μ = 1, A₊ = iπ の対角模型。q(ε) = −(1 + e^{−2/ε})。"""
    return synthetic_family(domain, np.diag([1.0, -1.0]), 1j * np.pi * np.diag([1.0, -1.0]))


def off_diagonal_model_family(domain: GridDomain, a: float = 0.3, c: float = 0.5, d: float = 0.2) -> LaurentConnectionFamily:
    """冪 0 が [[a, c], [d, −a]] の非対角模型。Hol(A₊) = e^{a}、偏差は O(ε)。"""
    return synthetic_family(domain, np.diag([1.0, -1.0]), np.array([[a, c], [d, -a]]))


if __name__ == '__main__':
    from models.grid_calculus import make_domain

    domain = make_domain(16, 9, 1.0, 0.5, 1.5)
    family = off_diagonal_model_family(domain)
    loop = find_wkb_loop(family.coefficients[1][0])
    report = wkb_sweep(family, loop.path, [0.1, 0.05, 0.025, 0.0125])
    for row in report.rows:
        logger.log(f"ε = {row.eps:g}: |q/Hol − 1| = {row.abs_dev:.3e}", level="INFO")
