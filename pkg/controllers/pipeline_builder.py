"""
各コマンドが共有する処理段 (場の読込、固定点、スライス、族、閉曲線) を設定から組み立てます。
"""
from __future__ import annotations

import numpy as np

from export.field_image_exporter import export_field_image
from export.field_io import FIELD_HEADER, field_rows, read_field_table
from export.report_exporter import ReportExporter
from logger.custom_logger import CustomLogger
from models.conformal_limit import LaurentConnectionFamily, SecondaryHiggsData, build_family, secondary_expansion
from models.grid_calculus import ComplexField, MatrixField
from models.higgs_local import (BBSliceData, FixedPointData, default_gate, fixed_point_slice, make_fixed_point,
                                synthesize_slice)
from models.hitchin_solver import HitchinProblem, HitchinSolution, solve_hitchin_with_report
from models.wkb_holonomy import (LoopPath, WKBLoop, WKBSweepRow, find_wkb_loop, horizontal_loop,
                                 sinusoidal_loop, synthetic_family)
from utils.errors import ConfigError
from utils.field_expression import field_from_expression

logger = CustomLogger()

HISTORY_HEADER = ("iteration", "residual")
LOOP_HEADER = ("t", "x", "y")
WKB_HEADER = ("eps", "re_q", "im_q", "abs_dev", "log_abs_trace")
SECONDARY_HEADER = ("r", "residual_sup", "det_min")


class PipelineBuilder:
    def __init__(self, config, exporter: ReportExporter) -> None:
        self.config = config
        self.exporter = exporter
        self.domain = config.domain
        self.hitchin: HitchinSolution | None = None

    # --- 場 ---

    def has_field(self, name: str) -> bool:
        return name in self.config.field_sources

    def load_field(self, name: str, default: str | None = None) -> ComplexField:
        source = self.config.field_sources.get(name, default)
        if source is None:
            raise ConfigError(f"必須の場 'fields.{name}' がありません", kind="missing_key")
        if isinstance(source, str):
            return field_from_expression(self.domain, source)
        return read_field_table(source, self.domain)

    def write_field(self, name: str, field: ComplexField, image_kinds=("abs",)) -> None:
        self.exporter.write_table(f"fields/{name}.csv", FIELD_HEADER, field_rows(field))
        if self.config.images:
            for kind in image_kinds:
                export_field_image(self.exporter, name, field, kind)

    # --- 固定点 ---

    def solve_hitchin(self) -> tuple[ComplexField, HitchinSolution]:
        phi1 = self.load_field("phi1", "1")
        problem = HitchinProblem(phi1, self.load_field("boundary_u"), self.config.get("gates.holomorphy"))
        initial = self.load_field("u") if self.has_field("u") else None
        solution = solve_hitchin_with_report(problem, float(self.config.get("solver.tol", 1e-10)),
                                             int(self.config.get("solver.max_iter", 50)), initial)
        self.exporter.write_table("hitchin_history.csv", HISTORY_HEADER,
                                  [(k + 1, r) for k, r in enumerate(solution.residual_history)])
        for k, r in enumerate(solution.residual_history):
            self.exporter.add_record("newton", iteration=k + 1, residual=r)
        self.hitchin = solution
        return phi1, solution

    def fixed_point(self) -> FixedPointData:
        """fields.boundary_u があれば Hitchin 方程式を解き、無ければ fields.u をそのまま検証して使います。"""
        if self.has_field("boundary_u"):
            phi1, solution = self.solve_hitchin()
            u = solution.u
        else:
            phi1 = self.load_field("phi1", "1")
            u = self.load_field("u")
        return make_fixed_point(phi1, u, self.config.get("gates.hitchin"))

    # --- スライス ---

    def slice_gate(self) -> float | None:
        return self.config.get("slice.delta_gate")

    def make_slice(self, base: FixedPointData | None = None) -> BBSliceData:
        base = base or self.fixed_point()
        sign = int(self.config.get("slice.dprime_sign", 1))
        if not self.has_field("seed"):
            logger.log("fields.seed が無いため固定点スライスを使います", level="INFO")
            return fixed_point_slice(base, sign)
        seed = self.load_field("seed")
        delta_gate = self.slice_gate()
        if delta_gate is None:
            delta_gate = default_gate(self.domain, max(1.0, seed.sup()))
        holomorphic = self.load_field("phi3_holomorphic") if self.has_field("phi3_holomorphic") else None
        return synthesize_slice(base, seed, float(delta_gate), sign, self.config.get("slice.phi3_mode", "dbar"),
                                holomorphic, int(self.config.get("slice.sweeps", 3)))

    def write_slice(self, slice_: BBSliceData) -> None:
        for name in ("phi1", "u", "phi2", "phi3", "b"):
            self.write_field(name, getattr(slice_, name))

    # --- 族 ---

    def family(self, slice_: BBSliceData | None = None) -> LaurentConnectionFamily:
        slice_ = slice_ or self.make_slice()
        return build_family(slice_, float(self.config.get("family.hbar", 1.0)), self.slice_gate())

    def wkb_family(self) -> LaurentConnectionFamily:
        """wkb.source に従って "slice" (既定)、"synthetic"、"secondary" の族を返します。"""
        source = self.config.get("wkb.source", "slice")
        if source == "synthetic":
            higgs = self.config.get("wkb.higgs", [[1.0, 0.0], [0.0, -1.0]])
            connection = self.config.get("wkb.connection", [[0.0, 0.0], [0.0, 0.0]])
            return synthetic_family(self.domain, parse_matrix(higgs, "wkb.higgs"), parse_matrix(connection, "wkb.connection"))
        if source == "slice":
            return self.family()
        if source == "secondary":
            return self.secondary()[0].family
        raise ConfigError(f"wkb.source '{source}' は未対応です ('slice' / 'synthetic' / 'secondary')", kind="choice")

    def secondary(self) -> tuple[SecondaryHiggsData, BBSliceData]:
        """スライス → 族 → 二次展開。分解計量には固定点の u を使います。"""
        base = self.fixed_point()
        slice_ = self.make_slice(base)
        data = secondary_expansion(self.family(slice_), base, self.config.get("secondary.gate"))
        return data, slice_

    # --- 閉曲線 ---

    def loop(self, higgs: MatrixField) -> WKBLoop | LoopPath:
        kind = self.config.get("loop.kind", "auto")
        nt = int(self.config.get("loop.nt", 256))
        orientation = int(self.config.get("loop.orientation", 1))
        period = self.domain.x_period if self.domain.periodic else 1.0
        if kind == "auto":
            seed = self.config.seed if self.config.get("loop.shuffle", False) else None
            found = find_wkb_loop(higgs, float(self.config.get("loop.margin_gate", 1e-3)), nt,
                                  tuple(self.config.get("loop.amplitudes", (0.05, 0.1))), seed)
            self.write_loop(found.path)
            return found
        y0 = self.config.get("loop.y0")
        if y0 is None:
            raise ConfigError("loop.kind が 'auto' 以外のときは loop.y0 が必要です", kind="missing_key")
        if kind == "horizontal":
            path = horizontal_loop(float(y0), nt, self.domain.x_min, period, orientation)
        elif kind == "sinusoidal":
            path = sinusoidal_loop(float(y0), float(self.config.get("loop.amplitude", 0.05)), nt, self.domain.x_min,
                                   period, orientation)
        else:
            raise ConfigError(f"loop.kind '{kind}' は未対応です", kind="choice")
        self.write_loop(path)
        return path

    def write_loop(self, path: LoopPath) -> None:
        self.exporter.write_table("loop.csv", LOOP_HEADER, path.table())

    def write_secondary_sweep(self, rows: list[dict]) -> None:
        self.exporter.write_table("secondary_sweep.csv", SECONDARY_HEADER, rows)
        for row in rows:
            self.exporter.add_record("secondary", **row)

    def write_wkb_sweep(self, rows: list[WKBSweepRow]) -> None:
        self.exporter.write_table("wkb_sweep.csv", WKB_HEADER, [row.as_record() for row in rows])
        for row in rows:
            self.exporter.add_record("wkb", **row.as_record(), growth=row.growth, rescaled=row.rescaled)


def parse_matrix(value, key: str) -> np.ndarray:
    """[[a, b], [c, d]] または複素数を {"re": .., "im": ..} で書いた 2×2 行列。"""
    def to_complex(v):
        if isinstance(v, dict):
            return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
        if isinstance(v, str):
            return complex(v.replace("i", "j").replace(" ", ""))
        return complex(v)

    try:
        matrix = np.array([[to_complex(v) for v in row] for row in value], dtype=np.complex128)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"'{key}' を 2×2 行列として解釈できません: {e}", kind="matrix") from e
    if matrix.shape != (2, 2):
        raise ConfigError(f"'{key}' は 2×2 行列です (形状 {matrix.shape})", kind="matrix")
    return matrix
