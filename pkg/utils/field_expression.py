"""
設定ファイル内の場の式 (例: "log(2*y)", "0.01*(z - zbar)") を sympy で解析し numpy 関数に変換します。

使える名前は x, y, z, zbar, conj, re, im, abs, exp, log, sqrt, sin, cos, I, pi のみです。
べき乗は ^ と ** の両方を受け付けます。
"""
from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np
import sympy
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from models.grid_calculus import ComplexField, GridDomain
from utils.errors import ConfigError

_X, _Y = sympy.symbols("x y", real=True)
_Z, _ZBAR = sympy.symbols("z zbar")

ALLOWED_NAMES = {
    "x": _X, "y": _Y, "z": _Z, "zbar": _ZBAR,
    "conj": sympy.conjugate, "re": sympy.re, "im": sympy.im, "abs": sympy.Abs,
    "exp": sympy.exp, "log": sympy.log, "sqrt": sympy.sqrt, "sin": sympy.sin, "cos": sympy.cos,
    "I": sympy.I, "pi": sympy.pi,
}
# parse_expr の変換が生成するコンストラクタ以外は何も公開しない
_GLOBALS = {"__builtins__": {}, "Integer": sympy.Integer, "Float": sympy.Float, "Rational": sympy.Rational,
            "Symbol": sympy.Symbol, "Function": sympy.Function}
_TRANSFORMATIONS = standard_transformations + (convert_xor,)


def parse_field_expression(text: str) -> sympy.Expr:
    """式を解析し、z と zbar を x ± i·y に置き換えた sympy 式を返します。"""
    if not isinstance(text, str) or not text.strip():
        raise ConfigError(f"場の式が空です: {text!r}", kind="expression", expression=str(text))
    try:
        expr = parse_expr(text, local_dict=dict(ALLOWED_NAMES), global_dict=dict(_GLOBALS),
                          transformations=_TRANSFORMATIONS, evaluate=True)
    except Exception as e:
        raise ConfigError(f"場の式 '{text}' を解析できません: {e}", kind="expression", expression=text) from e
    if not isinstance(expr, sympy.Basic):
        expr = sympy.sympify(expr)
    unknown_functions = sorted({str(f.func) for f in expr.atoms(AppliedUndef)})
    if unknown_functions:
        raise ConfigError(f"場の式 '{text}' に未知の関数があります: {', '.join(unknown_functions)}",
                          kind="expression", expression=text)
    unknown = sorted(str(s) for s in expr.free_symbols - {_X, _Y, _Z, _ZBAR})
    if unknown:
        raise ConfigError(f"場の式 '{text}' に未知の名前があります: {', '.join(unknown)}",
                          kind="expression", expression=text)
    return expr.subs({_Z: _X + sympy.I * _Y, _ZBAR: _X - sympy.I * _Y})


@lru_cache(maxsize=64)
def compile_field_expression(text: str) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """fn(X, Y) を返します。入力は複素配列として評価されるので log や sqrt は負の実数でも複素値を返します。"""
    expr = parse_field_expression(text)
    fn = sympy.lambdify((_X, _Y), expr, modules="numpy")

    def evaluate(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            return np.asarray(fn(np.asarray(X, dtype=np.complex128), np.asarray(Y, dtype=np.complex128)))

    return evaluate


def field_from_expression(domain: GridDomain, text: str) -> ComplexField:
    fn = compile_field_expression(text)
    values = np.broadcast_to(np.asarray(fn(*domain.mesh()), dtype=np.complex128), domain.shape).copy()
    if not np.isfinite(values).all():
        raise ConfigError(f"場の式 '{text}' が格子上で非有限値になります", kind="expression", expression=text)
    return ComplexField(domain, values)
