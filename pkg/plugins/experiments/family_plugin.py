from export.field_io import write_family
from models.conformal_limit import curvature_by_power, family_curvature_sweep, gauge_transform
from models.grid_calculus import interior_mask
from plugins.base_experiment_plugin import SLICE_PARAMETERS, ExperimentContext, ExperimentPlugin, ExperimentResult

CURVATURE_HEADER = ("r", "residual_sup")


class FamilyPlugin(ExperimentPlugin):
    """
    スライスから共形極限の族 ħ⁻¹Φ + ∂̄ + ∂₀ + ħΦ₀† を作り、係数と r ごとの曲率を書き出します。
    family.gauge_exponent を与えると定数ゲージ変換後の族も書き出します。
    """

    @property
    def name(self) -> str:
        return "family"

    def get_parameters_definition(self) -> list:
        return [
            {'name': 'family.hbar', 'type': 'float', 'default': 1.0},
            {'name': 'family.r_values', 'type': 'list', 'default': [1.0, 10.0]},
            {'name': 'family.gauge_exponent', 'type': 'float', 'default': None},
            *SLICE_PARAMETERS,
        ]

    def run(self, context: ExperimentContext) -> ExperimentResult:
        pipeline = context.pipeline
        family = pipeline.family()
        write_family(context.exporter, family)
        rows = family_curvature_sweep(family, context.config.get("family.r_values"))
        context.exporter.write_table("curvature.csv", CURVATURE_HEADER, rows)
        for row in rows:
            context.exporter.add_record("curvature", **row)

        region = interior_mask(family.domain, 2)
        by_power = {f"curvature_power_{k}": m.sup(region) for k, m in curvature_by_power(family).items()}
        summary = {"powers": family.powers, "hbar": family.hbar, "curvature_max": max(r["residual_sup"] for r in rows),
                   **by_power}

        p = context.config.get("family.gauge_exponent")
        if p is not None:
            transformed = gauge_transform(family, p)
            write_family(context.exporter, transformed, "family_gauged")
            gauged_rows = family_curvature_sweep(transformed, context.config.get("family.r_values"))
            context.exporter.write_table("curvature_gauged.csv", CURVATURE_HEADER, gauged_rows)
            summary["gauged_powers"] = transformed.powers
        return ExperimentResult(summary, {"curvature_max": summary["curvature_max"]},
                                {"family": "hbar^-1 Phi dz + (d0 + b dzbar) + hbar Phi0^dagger"})
