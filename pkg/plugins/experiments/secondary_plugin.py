from models.conformal_limit import DEFAULT_R_VALUES, secondary_sweep
from plugins.base_experiment_plugin import SLICE_PARAMETERS, ExperimentContext, ExperimentPlugin, ExperimentResult


class SecondaryPlugin(ExperimentPlugin):
    """
    冪零スライスの族を核直線 L₁ の枠に回転し、r → r² と定数ゲージで二次 Higgs 場 Φ′ を取り出します。
    r·(負冪のテール) が r によらず有界であることと min|det Φ′| を報告します。
    """

    @property
    def name(self) -> str:
        return "secondary"

    def get_parameters_definition(self) -> list:
        return [
            {'name': 'secondary.r_values', 'type': 'list', 'default': [10.0, 100.0, 1000.0]},
            {'name': 'secondary.gate', 'type': 'float', 'default': None, 'range': (0.0, None)},
            {'name': 'family.hbar', 'type': 'float', 'default': 1.0},
            *SLICE_PARAMETERS,
        ]

    def run(self, context: ExperimentContext) -> ExperimentResult:
        pipeline = context.pipeline
        data, slice_ = pipeline.secondary()
        rows = secondary_sweep(data, context.config.get("secondary.r_values") or DEFAULT_R_VALUES)
        pipeline.write_secondary_sweep(rows)
        pipeline.write_field("phi_tilde", data.phi_tilde)
        pipeline.write_field("a_minus1", data.a_minus1)
        pipeline.write_field("det_phi_prime", data.det_field)
        d_z, d_zbar = data.dprime_diag
        pipeline.write_field("dprime_z", d_z)
        pipeline.write_field("dprime_zbar", d_zbar)

        scaled = [row["residual_sup"] for row in rows]
        spread = (max(scaled) - min(scaled)) / max(max(scaled), 1e-300)
        summary = {
            "det_min": data.det_min(), "det_sup": data.det_field.sup(),
            "leakage": data.leakage, "trace_removed": data.trace_removed, "tail_powers": data.tail_powers,
            "tail_spread": spread, **data.diagnostics,
        }
        gates = {"nilpotency_gate": data.gate, "slice_kind": slice_.provenance.get("kind")}
        return ExperimentResult(summary, gates)
