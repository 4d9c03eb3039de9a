import numpy as np

from logger.custom_logger import CustomLogger
from models.grid_calculus import interior_mask, sup_norm
from models.hitchin_solver import curvature_sign_violation
from plugins.base_experiment_plugin import ExperimentContext, ExperimentPlugin, ExperimentResult
from utils.field_expression import field_from_expression

logger = CustomLogger()


class SolveHitchinPlugin(ExperimentPlugin):
    """Dirichlet 境界値で対角 Hitchin 方程式を解き、残差履歴を書き出します。"""

    @property
    def name(self) -> str:
        return "solve-hitchin"

    @property
    def description(self) -> str:
        return "∂_z̄∂_z u + |Φ₁|² e^{−2u} = 0 の Newton 法"

    def get_parameters_definition(self) -> list:
        return [
            {'name': 'solver.tol', 'type': 'float', 'default': 1e-10, 'range': (0.0, None)},
            {'name': 'solver.max_iter', 'type': 'int', 'default': 50, 'range': (1, 10000)},
        ]

    def run(self, context: ExperimentContext) -> ExperimentResult:
        pipeline = context.pipeline
        phi1, solution = pipeline.solve_hitchin()
        domain = pipeline.domain
        pipeline.write_field("u", solution.u, ("re",))

        summary = {
            "iterations": solution.iterations,
            "initial_residual": solution.initial_residual,
            "final_residual": solution.final_residual,
            "h": domain.h,
            "curvature_sign_violation": curvature_sign_violation(solution.u, interior_mask(domain)),
        }
        # 厳密解との比較 (Liouville 解など)
        exact = context.config.get("solver.exact_u")
        if exact is not None:
            reference = field_from_expression(domain, str(exact))
            error = sup_norm(solution.u.values.real - reference.values.real)
            summary["sup_error"] = error
            summary["sup_error_over_h2"] = error / domain.h ** 2
            logger.log(f"厳密解との sup 誤差: {error:.3e} (h = {domain.h:.4g})", level="INFO")
        summary["u_min"] = float(np.min(solution.u.values.real))
        summary["u_max"] = float(np.max(solution.u.values.real))
        gates = {"tol": context.config.get("solver.tol"), "final_residual": solution.final_residual}
        return ExperimentResult(summary, gates)
