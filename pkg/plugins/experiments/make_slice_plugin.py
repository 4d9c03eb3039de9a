from models.higgs_local import check_slice_gates, section_norm_sq
from plugins.base_experiment_plugin import SLICE_PARAMETERS, ExperimentContext, ExperimentPlugin, ExperimentResult


class MakeSlicePlugin(ExperimentPlugin):
    """seed から BB スライス上の点 (Φ₂, Φ₃, b) を合成し、残差 r₁〜r₄ を報告します。"""

    @property
    def name(self) -> str:
        return "make-slice"

    def get_parameters_definition(self) -> list:
        return SLICE_PARAMETERS

    def run(self, context: ExperimentContext) -> ExperimentResult:
        pipeline = context.pipeline
        slice_ = pipeline.make_slice()
        report = check_slice_gates(slice_, pipeline.slice_gate())
        pipeline.write_slice(slice_)
        for sweep, defect in enumerate(slice_.provenance.get("refinement_history", [])):
            context.exporter.add_record("refinement", sweep=sweep + 1, defect=defect)

        summary = {
            **{k: v for k, v in report.as_dict().items() if k != "passed"},
            "phi2_sup": slice_.phi2.sup(),
            "phi3_sup": slice_.phi3.sup(),
            "b_sup": slice_.b.sup(),
            "section_norm_min": float(section_norm_sq(slice_).min()),
            "slice_kind": slice_.provenance.get("kind"),
        }
        status = "ok" if report.passed else "gate_warning"
        return ExperimentResult(summary, report.as_dict(), status=status)
