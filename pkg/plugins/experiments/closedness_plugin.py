from logger.custom_logger import CustomLogger
from models.conformal_limit import secondary_sweep
from models.kernel_line_analysis import preserved_kernel_probe
from models.wkb_holonomy import WKBLoop, wkb_sweep
from plugins.base_experiment_plugin import (LOOP_PARAMETERS, SLICE_PARAMETERS, WKB_PARAMETERS, ExperimentContext,
                                            ExperimentPlugin, ExperimentResult)

logger = CustomLogger()


class ClosednessPlugin(ExperimentPlugin):
    """
    スライス合成 → 族 → 二次展開 → WKB 曲線の探索 → ε 掃引 を通して実行し、
    ε·log|Tr Hol| の増大率を Re Z と比較します。
    """

    @property
    def name(self) -> str:
        return "closedness"

    def get_parameters_definition(self) -> list:
        return [
            {'name': 'secondary.gate', 'type': 'float', 'default': None, 'range': (0.0, None)},
            {'name': 'secondary.r_values', 'type': 'list', 'default': [10.0, 100.0, 1000.0]},
            {'name': 'family.hbar', 'type': 'float', 'default': 1.0},
            *WKB_PARAMETERS,
            *LOOP_PARAMETERS,
            *SLICE_PARAMETERS,
        ]

    def run(self, context: ExperimentContext) -> ExperimentResult:
        pipeline = context.pipeline
        config = context.config
        data, slice_ = pipeline.secondary()
        kernel_min = preserved_kernel_probe(slice_)
        rows = secondary_sweep(data, config.get("secondary.r_values"))
        pipeline.write_secondary_sweep(rows)

        found = pipeline.loop(data.phi_prime)
        path = found.path if isinstance(found, WKBLoop) else found
        report = wkb_sweep(data.family, path, config.get("wkb.eps_values"), int(config.get("wkb.substeps")),
                           float(config.get("wkb.curvature_gate")), context.threads)
        pipeline.write_wkb_sweep(report.rows)

        relative = abs(report.growth_rate - report.re_z) / abs(report.re_z) if report.re_z else float("inf")
        logger.log(f"閉性: ε·log|Tr Hol| = {report.growth_rate:.6g}, Re Z = {report.re_z:.6g} "
                   f"(相対差 {relative:.3e})", level="INFO")
        summary = {
            **report.summary(),
            "growth_relative_error": relative,
            "det_min": data.det_min(),
            "kernel_min": kernel_min,
            "loop_kind": path.kind,
            "loop_y0": path.params.get("y0"),
        }
        gates = {"nilpotency_gate": data.gate, "wkb_margin": report.margin, "curvature": report.curvature,
                 "curvature_gate": config.get("wkb.curvature_gate")}
        return ExperimentResult(summary, gates)
