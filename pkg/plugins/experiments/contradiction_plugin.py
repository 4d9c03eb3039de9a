from logger.custom_logger import CustomLogger
from models.kernel_line_analysis import DEFAULT_MASK_THRESHOLD, identity_chain, perturb_b, preserved_kernel_probe
from plugins.base_experiment_plugin import SLICE_PARAMETERS, ExperimentContext, ExperimentPlugin, ExperimentResult
from utils.errors import DegeneracyError

logger = CustomLogger()


class ContradictionPlugin(ExperimentPlugin):
    """
    f = Φ₁/Φ₂ に対する恒等式の連鎖 (f1 = −f) を評価し、b を摂動したときの破れと核直線の保存量を報告します。
    """

    @property
    def name(self) -> str:
        return "contradiction"

    def get_parameters_definition(self) -> list:
        return [
            {'name': 'contradiction.mask_threshold', 'type': 'float', 'default': DEFAULT_MASK_THRESHOLD,
             'range': (0.0, 1.0)},
            {'name': 'contradiction.b_factor', 'type': 'float', 'default': 1.1, 'range': (0.0, None)},
            *SLICE_PARAMETERS,
        ]

    def run(self, context: ExperimentContext) -> ExperimentResult:
        pipeline = context.pipeline
        config = context.config
        threshold = float(config.get("contradiction.mask_threshold"))
        factor = float(config.get("contradiction.b_factor"))
        gate = pipeline.slice_gate()
        slice_ = pipeline.make_slice()

        report = identity_chain(slice_, threshold, True, gate)
        perturbed = identity_chain(perturb_b(slice_, factor), threshold, False, gate)
        try:
            kernel_min = preserved_kernel_probe(slice_, True, threshold)
        except DegeneracyError as e:
            logger.log(f"核直線の保存量は定義されません: {e}", level="INFO")
            kernel_min = None

        pipeline.write_field("f", report.f)
        pipeline.write_field("f1", report.f1_value)
        pipeline.write_field("wedge", report.wedge)
        amplification = (perturbed.contradiction_sup / report.contradiction_sup
                         if report.contradiction_sup > 0 else float("inf"))
        summary = {
            **report.summary(),
            "perturbed_contradiction_sup": perturbed.contradiction_sup,
            "b_factor": factor,
            "amplification": None if report.degenerate else amplification,
            "kernel_min": kernel_min,
        }
        return ExperimentResult(summary, report.gates)
