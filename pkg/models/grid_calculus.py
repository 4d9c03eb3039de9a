"""
格子上の離散複素解析。

領域 (GridDomain)、複素スカラー場 (ComplexField)、2×2 行列値場 (MatrixField) と
Wirtinger 微分 ∂_z = ½(∂_x − i∂_y), ∂_z̄ = ½(∂_x + i∂_y), ∂_z̄∂_z = ¼Δ の差分作用素を提供します。

配列は形状 (ny, nx) で x が最速 (行優先)。平坦化インデックスは k = j·nx + i です。
x 方向は x_period > 0 のとき周期的、それ以外は両端に境界を持ちます。y 方向は常に境界付きです。
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from utils.errors import DomainError, FieldValidationError

MATRIX_FORMS = ("dz", "dzbar", "dzdzbar", "scalar")


@dataclass(frozen=True)
class GridDomain:
    nx: int
    ny: int
    x_period: float
    y_min: float
    y_max: float
    x_min: float = 0.0
    x_max: float | None = None
    half_plane: bool = True

    def __post_init__(self) -> None:
        if not isinstance(self.nx, (int, np.integer)) or self.nx < 4:
            raise DomainError("nx too small (nx >= 4 が必要です)", field="nx")
        if not isinstance(self.ny, (int, np.integer)) or self.ny < 4:
            raise DomainError("ny too small (ny >= 4 が必要です)", field="ny")
        for name in ("x_period", "y_min", "y_max", "x_min"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} が有限ではありません", field=name)
        if self.x_period < 0:
            raise DomainError("x_period は 0 以上である必要があります", field="x_period")
        if not self.y_min < self.y_max:
            raise DomainError("y bounds inverted (y_min < y_max が必要です)", field="y_min")
        if self.half_plane and self.y_min <= 0:
            raise DomainError("half-plane model requires y_min > 0", field="y_min")
        if self.x_period == 0:
            if self.x_max is None or not math.isfinite(self.x_max):
                raise DomainError("非周期領域には x_max が必要です", field="x_max")
            if not self.x_min < self.x_max:
                raise DomainError("x bounds inverted (x_min < x_max が必要です)", field="x_min")
        hx, hy = self.hx, self.hy
        if not (hx > 0 and hy > 0 and math.isfinite(hx) and math.isfinite(hy)):
            raise DomainError("格子間隔が正の有限値ではありません", field="spacing")

    @property
    def periodic(self) -> bool:
        return self.x_period > 0

    @property
    def hx(self) -> float:
        if self.periodic:
            return self.x_period / self.nx
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def h(self) -> float:
        """ゲートの尺度に使う代表格子間隔 max(hx, hy)。"""
        return max(self.hx, self.hy)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y_min + self.hy * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) を形状 (ny, nx) で返します。"""
        return np.meshgrid(self.x, self.y, indexing="xy")

    @property
    def z(self) -> np.ndarray:
        X, Y = self.mesh()
        return X + 1j * Y

    def describe(self) -> dict:
        return {
            "nx": int(self.nx), "ny": int(self.ny), "x_period": float(self.x_period),
            "x_min": float(self.x_min), "x_max": None if self.x_max is None else float(self.x_max),
            "y_min": float(self.y_min), "y_max": float(self.y_max), "half_plane": bool(self.half_plane),
            "hx": self.hx, "hy": self.hy,
        }


def make_domain(nx: int, ny: int, x_period: float, y_min: float, y_max: float,
                x_min: float = 0.0, x_max: float | None = None, half_plane: bool = True) -> GridDomain:
    return GridDomain(nx=int(nx), ny=int(ny), x_period=float(x_period), y_min=float(y_min), y_max=float(y_max),
                      x_min=float(x_min), x_max=None if x_max is None else float(x_max), half_plane=bool(half_plane))


# --- 1 次元ステンシル ---

def _first_derivative_1d(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    c = 1.0 / (2.0 * h)
    for k in range(n):
        if periodic:
            rows += [k, k]
            cols += [(k + 1) % n, (k - 1) % n]
            vals += [c, -c]
        elif k == 0:
            rows += [k, k, k]
            cols += [0, 1, 2]
            vals += [-3.0 * c, 4.0 * c, -1.0 * c]
        elif k == n - 1:
            rows += [k, k, k]
            cols += [n - 1, n - 2, n - 3]
            vals += [3.0 * c, -4.0 * c, 1.0 * c]
        else:
            rows += [k, k]
            cols += [k + 1, k - 1]
            vals += [c, -c]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _second_derivative_1d(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    c = 1.0 / (h * h)
    for k in range(n):
        if periodic:
            rows += [k, k, k]
            cols += [(k - 1) % n, k, (k + 1) % n]
            vals += [c, -2.0 * c, c]
        elif k == 0:
            rows += [k] * 4
            cols += [0, 1, 2, 3]
            vals += [2.0 * c, -5.0 * c, 4.0 * c, -1.0 * c]
        elif k == n - 1:
            rows += [k] * 4
            cols += [n - 1, n - 2, n - 3, n - 4]
            vals += [2.0 * c, -5.0 * c, 4.0 * c, -1.0 * c]
        else:
            rows += [k, k, k]
            cols += [k - 1, k, k + 1]
            vals += [c, -2.0 * c, c]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# --- 2 次元作用素 (領域ごとにキャッシュ) ---

@lru_cache(maxsize=32)
def _partial_operators(domain: GridDomain) -> dict[str, sp.csr_matrix]:
    eye_x = sp.identity(domain.nx, format="csr")
    eye_y = sp.identity(domain.ny, format="csr")
    dx1 = _first_derivative_1d(domain.nx, domain.hx, domain.periodic)
    dy1 = _first_derivative_1d(domain.ny, domain.hy, False)
    dxx1 = _second_derivative_1d(domain.nx, domain.hx, domain.periodic)
    dyy1 = _second_derivative_1d(domain.ny, domain.hy, False)
    return {
        "dx": sp.kron(eye_y, dx1, format="csr"),
        "dy": sp.kron(dy1, eye_x, format="csr"),
        "dxx": sp.kron(eye_y, dxx1, format="csr"),
        "dyy": sp.kron(dyy1, eye_x, format="csr"),
    }


@lru_cache(maxsize=32)
def wirtinger_operators(domain: GridDomain) -> dict[str, sp.csr_matrix]:
    """
    "dz", "dzbar", "laplace_quarter" の疎行列を返します。
    "laplace_quarter" は合成ではなく直接の 5 点 ¼Δ (境界行は片側 2 次) です。
    """
    ops = _partial_operators(domain)
    dz = (0.5 * ops["dx"] - 0.5j * ops["dy"]).tocsr()
    dzbar = (0.5 * ops["dx"] + 0.5j * ops["dy"]).tocsr()
    lap = (0.25 * (ops["dxx"] + ops["dyy"])).tocsr()
    return {"dz": dz, "dzbar": dzbar, "laplace_quarter": lap}


def apply_operator(op: sp.spmatrix, values: np.ndarray, domain: GridDomain) -> np.ndarray:
    """
    作用素を (ny, nx) 配列、または (ny, nx, ...) の成分ごとに適用します。
    """
    values = np.asarray(values)
    if values.shape[:2] != domain.shape:
        raise FieldValidationError(f"配列形状 {values.shape} が領域 {domain.shape} と一致しません")
    flat = values.reshape(domain.size, -1)
    out = op @ flat
    return np.asarray(out).reshape(values.shape)


def dz_array(values: np.ndarray, domain: GridDomain) -> np.ndarray:
    return apply_operator(wirtinger_operators(domain)["dz"], values, domain)


def dzbar_array(values: np.ndarray, domain: GridDomain) -> np.ndarray:
    return apply_operator(wirtinger_operators(domain)["dzbar"], values, domain)


def laplace_quarter_array(values: np.ndarray, domain: GridDomain) -> np.ndarray:
    return apply_operator(wirtinger_operators(domain)["laplace_quarter"], values, domain)


def propagate_mask(op: sp.spmatrix, mask: np.ndarray | None, domain: GridDomain) -> np.ndarray | None:
    """ステンシルがマスク点に触れる点をマスクします。"""
    if mask is None or not mask.any():
        return None
    touched = abs(op) @ mask.reshape(-1).astype(np.float64)
    return (np.asarray(touched) > 0).reshape(domain.shape)


# --- 点集合 ---

def boundary_mask(domain: GridDomain) -> np.ndarray:
    """Dirichlet 点 (y の端の行と、非周期なら x の端の列)。"""
    m = np.zeros(domain.shape, dtype=bool)
    m[0, :] = True
    m[-1, :] = True
    if not domain.periodic:
        m[:, 0] = True
        m[:, -1] = True
    return m


def interior_mask(domain: GridDomain, margin: int = 1) -> np.ndarray:
    """Dirichlet 点から margin 行(列)以上離れた点。"""
    m = np.zeros(domain.shape, dtype=bool)
    if domain.ny - 2 * margin <= 0:
        return m
    if domain.periodic:
        m[margin:domain.ny - margin, :] = True
    elif domain.nx - 2 * margin > 0:
        m[margin:domain.ny - margin, margin:domain.nx - margin] = True
    return m


def sup_norm(values: np.ndarray, region: np.ndarray | None = None) -> float:
    """region (True の点) 上の sup|values|。末尾軸は全成分の最大を取ります。"""
    mags = np.abs(np.asarray(values))
    while mags.ndim > 2:
        mags = mags.max(axis=-1)
    if region is not None:
        mags = mags[region]
    return float(mags.max()) if mags.size else 0.0


# --- 場の型 ---

@dataclass
class ComplexField:
    domain: GridDomain
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.domain.shape:
            raise FieldValidationError(
                f"ComplexField の形状 {self.values.shape} が領域 {self.domain.shape} と一致しません")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.domain.shape:
                raise FieldValidationError("マスクの形状が領域と一致しません")
            if not self.mask.any():
                self.mask = None
        finite = np.isfinite(self.values)
        if self.mask is not None:
            finite |= self.mask
        if not finite.all():
            raise FieldValidationError("ComplexField に非有限値 (NaN/Inf) が含まれています", kind="non_finite")

    @classmethod
    def zeros(cls, domain: GridDomain) -> 'ComplexField':
        return cls(domain, np.zeros(domain.shape, dtype=np.complex128))

    @classmethod
    def constant(cls, domain: GridDomain, value: complex) -> 'ComplexField':
        return cls(domain, np.full(domain.shape, complex(value), dtype=np.complex128))

    @classmethod
    def from_function(cls, domain: GridDomain, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> 'ComplexField':
        """fn(X, Y) を格子点で評価します。スカラーを返す関数は全点にブロードキャストします。"""
        X, Y = domain.mesh()
        values = np.broadcast_to(np.asarray(fn(X, Y), dtype=np.complex128), domain.shape).copy()
        return cls(domain, values)

    def with_values(self, values: np.ndarray, mask: np.ndarray | None = None) -> 'ComplexField':
        return ComplexField(self.domain, values, self.mask if mask is None else mask)

    def masked_values(self) -> np.ndarray:
        """マスク点を 0 にした値。"""
        if self.mask is None:
            return self.values
        return np.where(self.mask, 0.0, self.values)

    def sup(self, region: np.ndarray | None = None) -> float:
        valid = region if region is not None else np.ones(self.domain.shape, dtype=bool)
        if self.mask is not None:
            valid = valid & ~self.mask
        return sup_norm(self.values, valid)

    def require_domain(self, other: 'ComplexField', what: str = "field") -> None:
        if other.domain != self.domain:
            raise FieldValidationError(f"{what} の領域が一致しません", kind="domain_mismatch")


def _apply_to_field(name: str, f: ComplexField) -> ComplexField:
    op = wirtinger_operators(f.domain)[name]
    out = apply_operator(op, f.masked_values(), f.domain)
    mask = propagate_mask(op, f.mask, f.domain)
    if mask is not None:
        out = np.where(mask, 0.0, out)
    return ComplexField(f.domain, out, mask)


def d_z(f: ComplexField) -> ComplexField:
    """∂_z = ½(∂_x − i∂_y) の 2 次中心差分 (x 周期, y 境界は片側 2 次)。"""
    return _apply_to_field("dz", f)


def d_zbar(f: ComplexField) -> ComplexField:
    """∂_z̄ = ½(∂_x + i∂_y)。"""
    return _apply_to_field("dzbar", f)


def dzbar_dz(f: ComplexField) -> ComplexField:
    """∂_z̄∂_z = ¼Δ (5 点ステンシル)。"""
    return _apply_to_field("laplace_quarter", f)


class MatrixField:
    """
    2×2 行列値場。内部では形状 (ny, nx, 2, 2) の配列を持ち、成分は ComplexField として取り出せます。
    form は "dz" / "dzbar" / "dzdzbar" / "scalar" のいずれかです。
    """

    def __init__(self, domain: GridDomain, array: np.ndarray, form: str = "scalar",
                 trace_free: bool = False, mask: np.ndarray | None = None, trace_tol: float = 1e-9) -> None:
        if form not in MATRIX_FORMS:
            raise FieldValidationError(f"未知の形式タグ '{form}'", kind="form")
        array = np.asarray(array, dtype=np.complex128)
        if array.shape != domain.shape + (2, 2):
            raise FieldValidationError(f"MatrixField の形状 {array.shape} が {domain.shape + (2, 2)} ではありません")
        self.domain = domain
        self.array = array
        self.form = form
        self.mask = None if mask is None or not np.asarray(mask).any() else np.asarray(mask, dtype=bool)
        self.trace_free = trace_free
        if trace_free:
            self.check_trace_free(trace_tol)

    @classmethod
    def from_entries(cls, e11: ComplexField, e12: ComplexField, e21: ComplexField, e22: ComplexField,
                     form: str = "scalar", trace_free: bool = False) -> 'MatrixField':
        for e in (e12, e21, e22):
            e11.require_domain(e, "MatrixField 成分")
        array = np.empty(e11.domain.shape + (2, 2), dtype=np.complex128)
        array[..., 0, 0] = e11.values
        array[..., 0, 1] = e12.values
        array[..., 1, 0] = e21.values
        array[..., 1, 1] = e22.values
        masks = [e.mask for e in (e11, e12, e21, e22) if e.mask is not None]
        mask = np.logical_or.reduce(masks) if masks else None
        return cls(e11.domain, array, form=form, trace_free=trace_free, mask=mask)

    @classmethod
    def zeros(cls, domain: GridDomain, form: str = "scalar") -> 'MatrixField':
        return cls(domain, np.zeros(domain.shape + (2, 2), dtype=np.complex128), form=form)

    @classmethod
    def constant(cls, domain: GridDomain, matrix, form: str = "scalar", trace_free: bool = False) -> 'MatrixField':
        m = np.asarray(matrix, dtype=np.complex128).reshape(2, 2)
        return cls(domain, np.broadcast_to(m, domain.shape + (2, 2)).copy(), form=form, trace_free=trace_free)

    def entry(self, i: int, j: int) -> ComplexField:
        return ComplexField(self.domain, self.array[..., i, j].copy(), self.mask)

    @property
    def e11(self) -> ComplexField:
        return self.entry(0, 0)

    @property
    def e12(self) -> ComplexField:
        return self.entry(0, 1)

    @property
    def e21(self) -> ComplexField:
        return self.entry(1, 0)

    @property
    def e22(self) -> ComplexField:
        return self.entry(1, 1)

    def trace(self) -> np.ndarray:
        return self.array[..., 0, 0] + self.array[..., 1, 1]

    def check_trace_free(self, tol: float = 1e-9) -> None:
        scale = max(1.0, sup_norm(self.array))
        valid = None if self.mask is None else ~self.mask
        if sup_norm(self.trace(), valid) > tol * scale:
            raise FieldValidationError("トレースフリー条件 e11 + e22 = 0 を満たしていません", kind="trace_free")

    def is_zero(self) -> bool:
        return not np.any(self.array)

    def copy(self) -> 'MatrixField':
        return MatrixField(self.domain, self.array.copy(), self.form, False, self.mask)

    def sup(self, region: np.ndarray | None = None) -> float:
        return sup_norm(self.array, region)
