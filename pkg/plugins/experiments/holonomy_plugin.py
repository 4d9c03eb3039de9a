import math

import numpy as np

from logger.custom_logger import CustomLogger
from models.wkb_holonomy import (WKBLoop, decompose_connection, higgs_eigen_branch, path_ordered_exp, pullback_arrays,
                                 pullback_loop)
from plugins.base_experiment_plugin import (LOOP_PARAMETERS, SLICE_PARAMETERS, ExperimentContext, ExperimentPlugin,
                                            ExperimentResult)
from utils.errors import DegeneracyError

logger = CustomLogger()

HOLONOMY_HEADER = ("entry", "re", "im")
SPLIT_HEADER = ("t", "re_a_plus", "im_a_plus", "re_a_minus", "im_a_minus", "abs_a_off")


class HolonomyPlugin(ExperimentPlugin):
    """固定した r で族を閉曲線に引き戻し、ホロノミーとその逆向きの積を報告します。"""

    @property
    def name(self) -> str:
        return "holonomy"

    def get_parameters_definition(self) -> list:
        return [
            {'name': 'wkb.r', 'type': 'float', 'default': 1.0, 'range': (0.0, None)},
            {'name': 'wkb.substeps', 'type': 'int', 'default': 4096, 'range': (1, None)},
            {'name': 'wkb.source', 'type': 'choice', 'default': 'slice', 'choices': ('slice', 'synthetic', 'secondary')},
            *LOOP_PARAMETERS,
            *SLICE_PARAMETERS,
        ]

    def run(self, context: ExperimentContext) -> ExperimentResult:
        pipeline = context.pipeline
        config = context.config
        family = pipeline.wkb_family()
        found = pipeline.loop(family.coefficients[1][0])
        path = found.path if isinstance(found, WKBLoop) else found
        r = float(config.get("wkb.r"))
        substeps = int(config.get("wkb.substeps"))

        hol = path_ordered_exp(pullback_loop(family, path, r), substeps)
        back = path_ordered_exp(pullback_loop(family, path.reversed(), r), substeps)
        product = hol.matrix @ back.matrix * math.exp(hol.log_scale + back.log_scale)
        reversal_defect = float(np.max(np.abs(product - np.eye(2))))
        det_defect = abs(complex(np.linalg.det(hol.matrix)) * math.exp(2.0 * hol.log_scale) - 1.0)

        rows = [(f"{i + 1}{j + 1}", hol.matrix[i, j].real, hol.matrix[i, j].imag) for i in range(2) for j in range(2)]
        context.exporter.write_table("holonomy.csv", HOLONOMY_HEADER, rows)
        trace = complex(np.trace(hol.matrix))
        summary = {
            "r": r, "loop_kind": path.kind, "log_scale": hol.log_scale, "rescaled": hol.rescaled, "steps": hol.steps,
            "re_trace_scaled": trace.real, "im_trace_scaled": trace.imag, "log_abs_trace": hol.log_abs_trace,
            "det_defect": det_defect, "reversal_defect": reversal_defect,
        }
        if isinstance(found, WKBLoop):
            summary["loop_margin"] = found.margin
        summary.update(self.write_split(context, family, path))
        logger.log(f"ホロノミー: log|Tr| = {hol.log_abs_trace:.6g}, |det − 1| = {det_defect:.3e}, "
                   f"逆向き積の欠損 = {reversal_defect:.3e}", level="INFO")
        return ExperimentResult(summary, {"det_defect": det_defect, "reversal_defect": reversal_defect})

    @staticmethod
    def write_split(context: ExperimentContext, family, path) -> dict:
        """Higgs の固有枠で冪 0 の接続を対角部分と非対角部分に分けて書き出します。退化していれば省略します。"""
        domain = family.domain
        higgs = pullback_arrays(domain, family.coefficient_array(1, "dz"), family.coefficient_array(1, "dzbar"), path)
        try:
            branch = higgs_eigen_branch(higgs)
        except DegeneracyError as e:
            logger.log(f"固有枠での分解を省略します: {e.message}", level="INFO")
            return {}
        connection = pullback_arrays(domain, family.coefficient_array(0, "dz"), family.coefficient_array(0, "dzbar"),
                                     path)
        split = decompose_connection(higgs, connection, branch)
        rows = [(t, p.real, p.imag, m.real, m.imag, abs(o))
                for t, p, m, o in zip(path.t, split.a_plus, split.a_minus, split.a_off)]
        context.exporter.write_table("connection_split.csv", SPLIT_HEADER, rows)
        return {"monodromy": branch.monodromy, "a_off_max": float(np.max(np.abs(split.a_off)))}
