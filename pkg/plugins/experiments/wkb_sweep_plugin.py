from models.wkb_holonomy import WKBLoop, wkb_sweep
from plugins.base_experiment_plugin import (LOOP_PARAMETERS, SLICE_PARAMETERS, WKB_PARAMETERS, ExperimentContext,
                                            ExperimentPlugin, ExperimentResult)


class WKBSweepPlugin(ExperimentPlugin):
    """WKB 曲線に沿って q(ε) = Tr Hol(∇_{1/ε})·e^{−Z/ε} を掃引し、Hol(A₊) との偏差を報告します。"""

    @property
    def name(self) -> str:
        return "wkb-sweep"

    def get_parameters_definition(self) -> list:
        return [
            {'name': 'wkb.source', 'type': 'choice', 'default': 'synthetic', 'choices': ('slice', 'synthetic', 'secondary')},
            *WKB_PARAMETERS,
            *LOOP_PARAMETERS,
            *SLICE_PARAMETERS,
        ]

    def run(self, context: ExperimentContext) -> ExperimentResult:
        pipeline = context.pipeline
        config = context.config
        family = pipeline.wkb_family()
        found = pipeline.loop(family.coefficients[1][0])
        path = found.path if isinstance(found, WKBLoop) else found
        report = wkb_sweep(family, path, config.get("wkb.eps_values"), int(config.get("wkb.substeps")),
                           float(config.get("wkb.curvature_gate")), context.threads)
        pipeline.write_wkb_sweep(report.rows)

        summary = {**report.summary(), "loop_kind": path.kind, "deviation_ratios": report.deviation_ratios()}
        gates = {"wkb_margin": report.margin, "curvature_gate": config.get("wkb.curvature_gate"),
                 "curvature": report.curvature}
        return ExperimentResult(summary, gates)
